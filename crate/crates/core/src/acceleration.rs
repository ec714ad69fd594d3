//! Accelerated variants: refresh the sampled coefficient column several
//! times per basis update.
//!
//! Refreshing `h_k` costs `3FK + 2K` once `WᵀW` and `Wᵀv_k` are known, while a
//! basis update costs `3FK + 2FN`. The ratio of the two, scaled by `β`, bounds
//! how many coefficient refreshes fit in the time of one basis update.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};

use crate::error::{check_dim, NmfError, Result};
use crate::factor_model::{FactorPair, NonnegativeMatrix};
use crate::harness_metrics::trace::ConvergenceTrace;
use crate::seeded_rng;
use crate::stochastic_solvers::{
    check_nonneg_vec, init_and_rng, mu_h_kernel, stochastic_solve, HRule, StochasticConfig, Variant,
};

pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelConfig {
    beta: f64,
    epsilon: f64,
}

impl Default for AccelConfig {
    fn default() -> Self {
        AccelConfig {
            beta: DEFAULT_BETA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl AccelConfig {
    pub fn new(beta: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(NmfError::config(format!("beta must lie in [0, 1], got {beta}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(NmfError::config(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(AccelConfig { beta, epsilon })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub(crate) fn rule(&self, f: usize, n: usize, k: usize) -> HRule {
        HRule::Repeated {
            budget: compute_budget_l(f, n, k, self.beta),
            epsilon: self.epsilon,
        }
    }
}

/// `L = max(⌊β (3FK + 2FN) / (3FK + 2K)⌋, 1)`.
pub fn compute_budget_l(f: usize, n: usize, k: usize, beta: f64) -> usize {
    let (f, n, k) = (f as u128, n as u128, k as u128);
    let num = 3 * f * k + 2 * f * n;
    let den = 3 * f * k + 2 * k;
    if den == 0 {
        return 1;
    }
    let l = if beta == 1.0 {
        (num / den) as f64
    } else {
        (beta * num as f64 / den as f64).floor()
    };
    (l as usize).max(1)
}

fn distance(a: &ArrayViewMut1<'_, f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Repeat the coefficient refresh up to `budget` times, stopping once the
/// last change drops below `epsilon` times the total change, or as soon as
/// an iterate repeats exactly. Returns the number of refreshes applied.
pub(crate) fn repeat_h_in_place(
    h: &mut ArrayViewMut1<'_, f64>,
    wtv: ArrayView1<'_, f64>,
    wtw: &Array2<f64>,
    wtr: Option<ArrayView1<'_, f64>>,
    budget: usize,
    epsilon: f64,
) -> usize {
    let h0 = h.to_owned();
    let mut prev = h0.clone();
    for l in 1..=budget {
        mu_h_kernel(h, wtv, wtw, wtr);
        if h.iter().zip(&prev).all(|(a, b)| a == b) {
            return l;
        }
        if distance(h, &prev) < epsilon * distance(h, &h0) {
            return l;
        }
        prev.assign(&*h);
    }
    budget
}

/// Repeated coefficient update for one sample, given the precomputed
/// products `Wᵀv_k` and `WᵀW`. Returns the final iterate and the number of
/// refreshes performed.
pub fn repeat_h_update(
    h_k: ArrayView1<'_, f64>,
    wt_v: ArrayView1<'_, f64>,
    wtw: &Array2<f64>,
    budget: usize,
    epsilon: f64,
) -> Result<(Array1<f64>, usize)> {
    let k = h_k.len();
    check_dim("repeat_h_update", "length of Wᵀv (K)", k, wt_v.len())?;
    check_dim("repeat_h_update", "rows of WᵀW (K)", k, wtw.nrows())?;
    check_dim("repeat_h_update", "columns of WᵀW (K)", k, wtw.ncols())?;
    check_nonneg_vec(h_k)?;
    if budget == 0 {
        return Err(NmfError::config("iteration budget L must be at least 1"));
    }
    if !(epsilon >= 0.0) {
        return Err(NmfError::config(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut h = h_k.to_owned();
    let used = repeat_h_in_place(&mut h.view_mut(), wt_v, wtw, None, budget, epsilon);
    Ok((h, used))
}

pub fn smu_acc_solve(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &StochasticConfig,
    accel: &AccelConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let (init, mut rng) = init_and_rng(v, rank, config.seed())?;
    let rule = accel.rule(v.rows(), v.cols(), rank);
    stochastic_solve(v, init, config, &mut rng, Variant::Smu, rule)
}

pub fn svrmu_acc_solve(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &StochasticConfig,
    accel: &AccelConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let (init, mut rng) = init_and_rng(v, rank, config.seed())?;
    let rule = accel.rule(v.rows(), v.cols(), rank);
    stochastic_solve(v, init, config, &mut rng, Variant::Svrmu, rule)
}

pub fn svrmu_acc_solve_from(
    v: &NonnegativeMatrix,
    init: FactorPair,
    config: &StochasticConfig,
    accel: &AccelConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let mut rng = seeded_rng(config.seed());
    let rule = accel.rule(v.rows(), v.cols(), init.rank());
    stochastic_solve(v, init, config, &mut rng, Variant::Svrmu, rule)
}
