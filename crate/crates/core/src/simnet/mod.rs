//! Deterministic discrete-event simulation of watched streams.
//!
//! [`run_scenario`] dispatches a validated [`SimConfig`] to one of the
//! scenario drivers and returns a [`RunReport`]. Worlds are single-threaded;
//! independent worlds of one run may execute on separate threads through
//! [`batch`], with results combined in index order.

pub mod config;
pub mod gossip;
pub mod report;
pub mod scenarios;
pub mod world;

use thiserror::Error;

use crate::economy::EconomyError;
use crate::epoch::EpochError;

pub use config::{ConfigError, Scenario, SimConfig};
pub use report::RunReport;
pub use scenarios::{build_world, run_scenario};
pub use world::{Attack, SimWorld, Targets, WorldOutcome, WorldSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Epoch(#[from] EpochError),
    #[error(transparent)]
    Economy(#[from] EconomyError),
}

/// Evaluates `f(0..count)` on up to one thread per available core and
/// returns the results in index order.
pub fn batch<T: Send>(count: u64, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(count as usize)
        .max(1);
    if threads == 1 {
        return (0..count).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let workers: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    (t as u64..count)
                        .step_by(threads)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for w in workers {
            for (i, v) in w.join().expect("simulation worker panicked") {
                slots[i as usize] = Some(v);
            }
        }
    });
    slots.into_iter().map(|v| v.expect("every index ran")).collect()
}
