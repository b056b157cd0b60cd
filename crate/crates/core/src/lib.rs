//! Motion mapping between articulated agents.
//!
//! The crate trains dual-autoencoder (SyDa) mappings between pairs of agents,
//! composes trained pairs into mapping chains, and ranks candidate chains with
//! a directional transferability score built from workspace manipulability.
//!
//! Modules, bottom up:
//! - [`kinematics`]: agents, forward kinematics, Jacobians, manipulability, workspace grids
//! - [`datagen`]: paired motion datasets produced by keypoint mimicry
//! - [`neuralnet`]: dense networks, L1 loss, backprop and Adam
//! - [`syda`]: dual-autoencoder and direct baselines, chains, evaluation
//! - [`transferability`]: the transferability metric, fleet graphs and chain planning
//! - [`experiment`]: the three-agent chain experiment on synthetic agents

pub mod datagen;
pub mod error;
pub mod experiment;
pub mod fixture;
pub mod kinematics;
pub mod neuralnet;
pub mod syda;
mod textio;
pub mod transferability;

pub use error::{Error, Result};

/// Independent seed for sub-task `stream` of a run seeded with `seed`
/// (SplitMix64 finalizer over the pair).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
