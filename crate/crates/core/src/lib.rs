//! Structure-aware VarOpt sampling.
//!
//! Builds fixed-size, variance-optimal weighted samples whose placement of
//! sampled keys respects the structure of the key domain (order, hierarchy,
//! or multi-dimensional product), so that range-sum queries answered with
//! Horvitz-Thompson estimates have small, bounded discrepancy.
//!
//! The crate is organised bottom-up:
//!
//! - [`ipps`], [`sample`], [`tail`]: thresholds, inclusion probabilities,
//!   HT estimation and Chernoff tail bounds.
//! - [`aggregate`]: the pair-aggregation primitive, policy drivers and an
//!   exact enumeration oracle for small inputs.
//! - [`structures`]: disjoint-range, hierarchy and order summarizers.
//! - [`product`]: kd-hierarchies for d-dimensional keys.
//! - [`twopass`]: two sequential passes with memory independent of input size.
//! - [`query`]: range estimates, discrepancy, baselines.
//! - [`data`], [`queries`], [`summary_file`], [`experiment`]: ingestion,
//!   query batteries, persisted summaries and the evaluation harness.

pub mod aggregate;
pub mod data;
pub mod experiment;
pub mod hierarchy;
pub mod ipps;
pub mod prob;
pub mod product;
pub mod queries;
pub mod query;
pub mod sample;
pub mod state;
pub mod structures;
pub mod summary_file;
pub mod tail;
pub mod twopass;

mod error;

pub use error::{Error, Result};
pub use ipps::{compute_threshold, ipps_probabilities, Threshold, WeightedKey};
pub use prob::{Coin, Prob, RngCoin, EPS_NUM};
pub use sample::{SampledKey, Sample};
pub use state::SummaryState;

/// Seedable generator used by every sampling entry point.
pub type SampleRng = rand_chacha::ChaCha8Rng;

/// Convenience constructor for a reproducible generator.
pub fn seeded_rng(seed: u64) -> SampleRng {
    use rand::SeedableRng;
    SampleRng::seed_from_u64(seed)
}
