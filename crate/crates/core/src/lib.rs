//! Nonnegative matrix factorization with stochastic variance-reduced
//! multiplicative updates (SVRMU), plus the batch, stochastic, accelerated
//! and outlier-robust baselines it is compared against.
//!
//! All solvers minimize the averaged Frobenius cost
//! `(1/N) Σₙ ½‖vₙ − W hₙ‖²` over nonnegative `W` (F×K) and `H` (K×N).

pub mod acceleration;
pub mod batch_solvers;
pub mod datagen_io;
pub mod error;
pub mod factor_model;
pub mod harness_metrics;
pub mod robust;
pub mod stochastic_solvers;

use rand::SeedableRng;

pub use acceleration::{compute_budget_l, repeat_h_update, AccelConfig};
pub use batch_solvers::{hals_solve, mu_batch_solve, mu_batch_step, BatchConfig};
pub use error::{NmfError, Result};
pub use factor_model::{
    elementwise_mul_div, frobenius_cost, robust_cost, FactorPair, NonnegativeMatrix, OutlierModel,
    Snapshot, DIV_GUARD,
};
pub use harness_metrics::{ConvergenceTrace, ExperimentConfig, SolverKind, TraceRecord};
pub use robust::{robust_update_h, robust_update_r, rsvrmu_solve, RobustSnapshot};
pub use stochastic_solvers::{
    smu_solve, smu_update_h, smu_update_w, svrmu_inner_step, svrmu_minibatch_inner_step,
    svrmu_solve, InnerGradientParts, StochasticConfig,
};

/// The generator behind every random draw in this crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}
