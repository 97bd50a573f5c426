//! Protocol kernel for hash-watched streams and a deterministic simulator
//! that exercises it.
//!
//! - [`stream`]: signed append-only logs, relations and transfers.
//! - [`consensus`]: attestations, finality certificates, colours and
//!   Proofs of Corruption.
//! - [`epoch`]: RANDAO seeds, VRF swarm assignment and swarm sizing.
//! - [`ripple`]: fee-bounded flooding with seen-tables.
//! - [`economy`]: the ledger, local currencies, slashing and the PoC lottery.
//! - [`simnet`]: configs, worlds, scenarios and reports.
//!
//! ```
//! use intercloud::simnet::{run_scenario, Scenario, SimConfig};
//! use intercloud::simnet::config::DoubleSpendParams;
//!
//! let cfg = SimConfig::new(1, Scenario::DoubleSpend(DoubleSpendParams::default()));
//! assert!(run_scenario(&cfg).unwrap().passed());
//! ```

pub mod crypto;
pub mod stream;
pub mod units;
pub mod consensus;
pub mod epoch;
pub mod ripple;
pub mod topology;
pub mod economy;
pub mod simnet;

// The book's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/streams.md")]
    mod streams {}
    #[doc = include_str!("../../../book/src/consensus.md")]
    mod consensus {}
    #[doc = include_str!("../../../book/src/epochs.md")]
    mod epochs {}
    #[doc = include_str!("../../../book/src/ripples.md")]
    mod ripples {}
    #[doc = include_str!("../../../book/src/economy.md")]
    mod economy {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
