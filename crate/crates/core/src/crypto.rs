//! Hashing, signatures, the verifiable random function and the per-epoch
//! RANDAO seed.
//!
//! # Canonical encoding
//!
//! Every structure that is hashed or signed is first written with
//! [`Encoder`]. The layout is fixed so that golden values stay stable:
//!
//! | field kind      | bytes                                          |
//! |-----------------|------------------------------------------------|
//! | `u8`            | 1 byte                                         |
//! | `u32`           | 4 bytes, big-endian                            |
//! | `u64`           | 8 bytes, big-endian                            |
//! | byte string     | `u32` length, big-endian, then the raw bytes   |
//! | [`Digest`]      | 32 raw bytes, no length prefix                 |
//! | list            | `u32` element count, then each element in turn |
//! | domain tag      | encoded as a byte string                       |
//!
//! Hashes and signatures always start with a domain tag (`ic/...`) so that
//! an encoding for one purpose can never be replayed as another.
//!
//! # Signatures
//!
//! Signing goes through the [`SignatureScheme`] trait. [`ActiveScheme`] names
//! the scheme used by the rest of the crate; the default [`KeyedHashScheme`]
//! is deterministic and fast, and suits simulation. It binds a signature to
//! the signer's public key but is not unforgeable against a party that knows
//! that public key, so it must not be used outside the simulator.
//!
//! # VRF
//!
//! `vrf_eval(seed, x)` is `H("ic/vrf" ‖ seed ‖ x)` with the proof being the
//! canonical encoding of `x`. Unpredictability comes from the seed, which the
//! epoch machinery only releases once its RANDAO round has completed.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const KEY_LEN: usize = 32;

/// Identity of a network node (watcher, junior, client or executor).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node-{}", self.0)
    }
}

/// A 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let raw = hex::decode(s).map_err(|_| CryptoError::MalformedDigest)?;
        let bytes: [u8; DIGEST_LEN] = raw.try_into().map_err(|_| CryptoError::MalformedDigest)?;
        Ok(Digest(bytes))
    }

    /// Reduces the digest, read as a big-endian integer, modulo `m`.
    pub fn mod_u64(&self, m: u64) -> u64 {
        assert!(m > 0, "modulus must be positive");
        let m = m as u128;
        self.0
            .iter()
            .fold(0u128, |acc, &b| (acc * 256 + b as u128) % m) as u64
    }

    /// Leading 8 bytes as a big-endian integer.
    pub fn prefix_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[..8].try_into().expect("digest has 32 bytes"))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed key: expected {KEY_LEN} bytes, got {0}")]
    MalformedKey(usize),
    #[error("malformed digest")]
    MalformedDigest,
    #[error("truncated or malformed canonical encoding")]
    Decode,
}

/// Hashes arbitrary bytes.
pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Digest of the empty byte string; the `prev` of every genesis message.
pub fn empty_digest() -> Digest {
    hash(&[])
}

/// Writer for the canonical encoding described in the module docs.
#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tagged(tag: &str) -> Self {
        let mut enc = Self::new();
        enc.bytes(tag.as_bytes());
        enc
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        let len = u32::try_from(v.len()).expect("field longer than u32::MAX bytes");
        self.u32(len);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.buf.extend_from_slice(&d.0);
        self
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        self.u32(u32::try_from(n).expect("list longer than u32::MAX"))
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn hash(&self) -> Digest {
        hash(&self.buf)
    }
}

/// Reader for the canonical encoding.
#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CryptoError> {
        if self.buf.len() < n {
            return Err(CryptoError::Decode);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, CryptoError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CryptoError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CryptoError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CryptoError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn digest(&mut self) -> Result<Digest, CryptoError> {
        Ok(Digest(self.take(DIGEST_LEN)?.try_into().unwrap()))
    }

    pub fn expect_tag(&mut self, tag: &str) -> Result<(), CryptoError> {
        if self.bytes()? == tag.as_bytes() {
            Ok(())
        } else {
            Err(CryptoError::Decode)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Result<(), CryptoError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(CryptoError::Decode)
        }
    }
}

macro_rules! opaque_bytes {
    ($name:ident) => {
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(#[serde(with = "hex")] pub Vec<u8>);

        impl $name {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let hex = hex::encode(&self.0);
                write!(f, "{}({})", stringify!($name), &hex[..hex.len().min(16)])
            }
        }
    };
}

opaque_bytes!(PublicKey);
opaque_bytes!(SecretKey);
opaque_bytes!(Signature);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PublicKey,
}

impl KeyPair {
    /// Deterministic key derivation from arbitrary seed material.
    pub fn from_seed(seed: &[u8]) -> Self {
        ActiveScheme::keypair_from_seed(seed)
    }

    /// Convenience for simulations: one keypair per node id.
    pub fn for_node(node: NodeId, run_seed: u64) -> Self {
        let mut enc = Encoder::tagged("ic/node-key");
        enc.u64(run_seed).u64(node.0);
        Self::from_seed(enc.as_slice())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        sign(&self.secret, msg).expect("keypair secrets are well-formed")
    }
}

/// A pluggable signature scheme. Callers go through [`sign`] and [`verify`],
/// which dispatch to [`ActiveScheme`].
pub trait SignatureScheme {
    fn keypair_from_seed(seed: &[u8]) -> KeyPair;
    fn sign(secret: &SecretKey, msg: &[u8]) -> Result<Signature, CryptoError>;
    fn verify(public: &PublicKey, msg: &[u8], sig: &Signature) -> Result<bool, CryptoError>;
}

/// Deterministic keyed-hash scheme used by the simulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeyedHashScheme;

impl KeyedHashScheme {
    fn public_of(secret: &[u8]) -> PublicKey {
        let mut enc = Encoder::tagged("ic/pk");
        enc.bytes(secret);
        PublicKey(enc.hash().0.to_vec())
    }

    fn tag(public: &[u8], msg: &[u8]) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/sig");
        enc.bytes(public).bytes(msg);
        enc.hash().0.to_vec()
    }
}

impl SignatureScheme for KeyedHashScheme {
    fn keypair_from_seed(seed: &[u8]) -> KeyPair {
        let mut enc = Encoder::tagged("ic/sk");
        enc.bytes(seed);
        let secret = enc.hash().0.to_vec();
        let public = Self::public_of(&secret);
        KeyPair {
            secret: SecretKey(secret),
            public,
        }
    }

    fn sign(secret: &SecretKey, msg: &[u8]) -> Result<Signature, CryptoError> {
        if secret.0.len() != KEY_LEN {
            return Err(CryptoError::MalformedKey(secret.0.len()));
        }
        let public = Self::public_of(&secret.0);
        Ok(Signature(Self::tag(&public.0, msg)))
    }

    fn verify(public: &PublicKey, msg: &[u8], sig: &Signature) -> Result<bool, CryptoError> {
        if public.0.len() != KEY_LEN {
            return Err(CryptoError::MalformedKey(public.0.len()));
        }
        Ok(sig.0 == Self::tag(&public.0, msg))
    }
}

/// The scheme every caller in this crate signs and verifies with.
pub type ActiveScheme = KeyedHashScheme;

pub fn sign(secret: &SecretKey, msg: &[u8]) -> Result<Signature, CryptoError> {
    ActiveScheme::sign(secret, msg)
}

pub fn verify(public: &PublicKey, msg: &[u8], sig: &Signature) -> Result<bool, CryptoError> {
    ActiveScheme::verify(public, msg, sig)
}

/// Lookup from node identity to public key.
pub trait KeyDirectory {
    fn public_key(&self, node: NodeId) -> Option<&PublicKey>;
}

impl KeyDirectory for BTreeMap<NodeId, PublicKey> {
    fn public_key(&self, node: NodeId) -> Option<&PublicKey> {
        self.get(&node)
    }
}

impl KeyDirectory for BTreeMap<NodeId, KeyPair> {
    fn public_key(&self, node: NodeId) -> Option<&PublicKey> {
        self.get(&node).map(|kp| &kp.public)
    }
}

/// A directory holding exactly one key, as used by standalone proof checks.
#[derive(Debug, Clone)]
pub struct SingleKey(pub NodeId, pub PublicKey);

impl KeyDirectory for SingleKey {
    fn public_key(&self, node: NodeId) -> Option<&PublicKey> {
        (node == self.0).then_some(&self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrfOutput {
    pub value: Digest,
    #[serde(with = "hex")]
    pub proof: Vec<u8>,
}

fn vrf_value(seed: &Digest, input: &[u8]) -> Digest {
    let mut enc = Encoder::tagged("ic/vrf");
    enc.digest(seed).bytes(input);
    enc.hash()
}

fn vrf_proof(input: &[u8]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.bytes(input);
    enc.finish()
}

pub fn vrf_eval(seed: &Digest, input: &[u8]) -> VrfOutput {
    VrfOutput {
        value: vrf_value(seed, input),
        proof: vrf_proof(input),
    }
}

pub fn vrf_verify(seed: &Digest, input: &[u8], out: &VrfOutput) -> bool {
    out.proof == vrf_proof(input) && out.value == vrf_value(seed, input)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSeed {
    pub epoch: u64,
    pub seed: Digest,
}

/// One node's commit/reveal pair for a RANDAO round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub node: NodeId,
    pub commit: Digest,
    #[serde(with = "hex")]
    pub reveal: Vec<u8>,
}

impl Contribution {
    pub fn honest(node: NodeId, reveal: Vec<u8>) -> Self {
        Self {
            node,
            commit: hash(&reveal),
            reveal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RandaoFault {
    RevealMismatch,
    DuplicateContribution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Misbehaviour {
    pub node: NodeId,
    pub fault: RandaoFault,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandaoOutcome {
    pub seed: EpochSeed,
    pub accepted: Vec<NodeId>,
    pub misbehaviour: Vec<Misbehaviour>,
}

/// Aggregates the reveals of one round into the epoch seed.
///
/// The seed is the hash of the list of valid reveals ordered by node id, so
/// arrival order is irrelevant. A reveal that does not hash to its commit is
/// dropped and recorded; so are all contributions from a node that
/// contributed more than once.
pub fn randao_round(epoch: u64, contributions: &[Contribution]) -> RandaoOutcome {
    let mut by_node: BTreeMap<NodeId, Vec<&Contribution>> = BTreeMap::new();
    for c in contributions {
        by_node.entry(c.node).or_default().push(c);
    }
    let mut accepted = Vec::new();
    let mut reveals = Vec::new();
    let mut misbehaviour = Vec::new();
    for (node, cs) in by_node {
        if cs.len() > 1 {
            misbehaviour.push(Misbehaviour {
                node,
                fault: RandaoFault::DuplicateContribution,
            });
            continue;
        }
        let c = cs[0];
        if hash(&c.reveal) != c.commit {
            misbehaviour.push(Misbehaviour {
                node,
                fault: RandaoFault::RevealMismatch,
            });
            continue;
        }
        accepted.push(node);
        reveals.push(c.reveal.as_slice());
    }
    RandaoOutcome {
        seed: EpochSeed {
            epoch,
            seed: hash(&encode_reveals(&reveals)),
        },
        accepted,
        misbehaviour,
    }
}

/// Canonical list encoding of reveals: count, then each as a byte string.
pub fn encode_reveals(reveals: &[&[u8]]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.count(reveals.len());
    for r in reveals {
        enc.bytes(r);
    }
    enc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn empty_digest_golden() {
        assert_eq!(
            empty_digest().to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn hash_is_deterministic() {
        assert_eq!(hash(b"stream"), hash(b"stream"));
    }

    #[test]
    fn no_collisions_in_random_corpus() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut inputs = HashSet::new();
        let mut digests = HashSet::new();
        while inputs.len() < 100_000 {
            let len = rng.gen_range(0..24);
            let v: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            if inputs.insert(v.clone()) {
                assert!(digests.insert(hash(&v)), "collision on {v:?}");
            }
        }
    }

    #[test]
    fn encoding_layout_is_bit_exact() {
        let mut enc = Encoder::new();
        enc.u64(1).bytes(b"ab").u32(2);
        assert_eq!(
            enc.finish(),
            vec![0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 2, b'a', b'b', 0, 0, 0, 2]
        );
    }

    #[test]
    fn sign_verify_round_trip() {
        let kp = KeyPair::from_seed(b"alice");
        let sig = kp.sign(b"hello");
        assert!(verify(&kp.public, b"hello", &sig).unwrap());
    }

    #[test]
    fn flipped_message_fails() {
        let kp = KeyPair::from_seed(b"alice");
        let sig = kp.sign(b"hello");
        assert!(!verify(&kp.public, b"hellp", &sig).unwrap());
    }

    #[test]
    fn foreign_key_fails() {
        let a = KeyPair::from_seed(b"alice");
        let b = KeyPair::from_seed(b"bob");
        let sig = a.sign(b"hello");
        assert!(!verify(&b.public, b"hello", &sig).unwrap());
    }

    #[test]
    fn malformed_key_is_an_error() {
        let sig = KeyPair::from_seed(b"x").sign(b"m");
        assert_eq!(
            verify(&PublicKey(vec![1, 2, 3]), b"m", &sig),
            Err(CryptoError::MalformedKey(3))
        );
        assert_eq!(
            sign(&SecretKey(vec![0; 5]), b"m"),
            Err(CryptoError::MalformedKey(5))
        );
    }

    #[test]
    fn distinct_messages_give_distinct_signatures() {
        let kp = KeyPair::from_seed(b"k");
        assert_ne!(kp.sign(b"a"), kp.sign(b"b"));
    }

    #[test]
    fn vrf_basics() {
        let s = hash(b"seed");
        assert_eq!(vrf_eval(&s, b"x"), vrf_eval(&s, b"x"));
        assert!(vrf_verify(&s, b"x", &vrf_eval(&s, b"x")));
        assert!(!vrf_verify(&s, b"x", &vrf_eval(&s, b"y")));
        assert!(!vrf_verify(&hash(b"other"), b"x", &vrf_eval(&s, b"x")));
    }

    proptest! {
        #[test]
        fn vrf_rejects_bit_flips(
            seed in any::<[u8; 32]>(),
            input in proptest::collection::vec(any::<u8>(), 0..40),
            flip_value in any::<bool>(),
            bit in 0usize..256,
        ) {
            let seed = Digest(seed);
            let mut out = vrf_eval(&seed, &input);
            if flip_value {
                out.value.0[bit / 8] ^= 1 << (bit % 8);
            } else {
                let idx = (bit / 8) % out.proof.len();
                out.proof[idx] ^= 1 << (bit % 8);
            }
            prop_assert!(!vrf_verify(&seed, &input, &out));
        }

        #[test]
        fn randao_is_order_invariant(
            reveals in proptest::collection::btree_map(any::<u64>(), proptest::collection::vec(any::<u8>(), 1..16), 1..12),
            rot in 0usize..12,
        ) {
            let mut cs: Vec<_> = reveals
                .into_iter()
                .map(|(n, r)| Contribution::honest(NodeId(n), r))
                .collect();
            let a = randao_round(3, &cs);
            let k = rot % cs.len();
            cs.rotate_left(k);
            cs.reverse();
            prop_assert_eq!(a, randao_round(3, &cs));
        }
    }

    #[test]
    fn randao_single_contribution() {
        let r = b"reveal".to_vec();
        let out = randao_round(0, &[Contribution::honest(NodeId(9), r.clone())]);
        let mut enc = Encoder::new();
        enc.u32(1).u32(6).raw(b"reveal");
        assert_eq!(out.seed.seed, hash(&enc.finish()));
        assert_eq!(out.accepted, vec![NodeId(9)]);
    }

    #[test]
    fn randao_rejects_mismatched_reveal() {
        let mut cs: Vec<_> = (0..5u64)
            .map(|i| Contribution::honest(NodeId(i), vec![i as u8; 4]))
            .collect();
        cs[2].reveal = b"lie".to_vec();
        let out = randao_round(1, &cs);
        // hand-built: count 4, then each 4-byte reveal of nodes 0,1,3,4
        let mut expected = vec![0, 0, 0, 4];
        for i in [0u8, 1, 3, 4] {
            expected.extend_from_slice(&[0, 0, 0, 4, i, i, i, i]);
        }
        assert_eq!(out.seed.seed, hash(&expected));
        assert_eq!(
            out.misbehaviour,
            vec![Misbehaviour {
                node: NodeId(2),
                fault: RandaoFault::RevealMismatch
            }]
        );
    }

    #[test]
    fn digest_mod_matches_bigint() {
        use num_bigint::BigUint;
        let d = hash(b"mod");
        let big = BigUint::from_bytes_be(&d.0);
        for m in [1u64, 5, 7, 1_000_003, u64::MAX] {
            let expect: BigUint = &big % m;
            assert_eq!(BigUint::from(d.mod_u64(m)), expect);
        }
    }
}
