//! Outlier-aware SVRMU: `V ≈ WH + R` with a nonnegative, ℓ1-penalised
//! outlier matrix `R`.
//!
//! Per inner iteration the sampled `h_k` is refreshed first, then `r_k`,
//! then `W`. The ℓ1 weight enters the `r` update as a constant `λ` added to
//! every denominator entry. With `R = R̃ = 0` every operation here reduces
//! exactly to its plain counterpart.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::Rng;

use crate::acceleration::{repeat_h_in_place, AccelConfig};
use crate::error::{check_dim, NmfError, Result};
use crate::factor_model::{
    guard, robust_cost, FactorPair, NonnegativeMatrix, OutlierModel, Snapshot,
};
use crate::harness_metrics::trace::{ConvergenceTrace, GradEvent, TraceRecorder};
use crate::stochastic_solvers::{
    apply_vr_step, check_alpha, check_nonneg_vec, check_sample_set, init_and_rng, mu_h_kernel,
    qp_kernel, sample_batch, stepsize_ratio, HRule, SampleTerms, StochasticConfig,
};
use crate::SeededRng;

pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Snapshot extended with the frozen outliers `R̃` and `(W̃H̃ + R̃)H̃ᵀ/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustSnapshot {
    base: Snapshot,
    r_tilde: NonnegativeMatrix,
    grad_part_a_robust: Array2<f64>,
}

impl RobustSnapshot {
    pub fn new(v: &NonnegativeMatrix, factors: &FactorPair, outliers: &OutlierModel) -> Result<Self> {
        check_dim("robust snapshot", "outlier rows (F)", v.rows(), outliers.r().rows())?;
        check_dim("robust snapshot", "outlier columns (N)", v.cols(), outliers.r().cols())?;
        let base = Snapshot::new(v, factors)?;
        let grad_part_a_robust =
            Self::robust_part(&base, outliers.r(), v.cols());
        Ok(RobustSnapshot {
            base,
            r_tilde: outliers.r().clone(),
            grad_part_a_robust,
        })
    }

    /// `W̃H̃H̃ᵀ/N + R̃H̃ᵀ/N`; adds an exact zero when `R̃ = 0`.
    pub fn robust_part(base: &Snapshot, r_tilde: &NonnegativeMatrix, n: usize) -> Array2<f64> {
        let rht = r_tilde.as_array().dot(&base.h_tilde().as_array().t()) / n as f64;
        base.grad_part_a() + &rht
    }

    pub fn base(&self) -> &Snapshot {
        &self.base
    }

    pub fn r_tilde(&self) -> &NonnegativeMatrix {
        &self.r_tilde
    }

    pub fn grad_part_a_robust(&self) -> &Array2<f64> {
        &self.grad_part_a_robust
    }
}

/// `h ← h ⊙ Wᵀv / (WᵀW h + Wᵀr)`.
pub fn robust_update_h(
    w: &NonnegativeMatrix,
    v_k: ArrayView1<'_, f64>,
    h_k: ArrayView1<'_, f64>,
    r_k: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    check_dim("robust_update_h", "length of v_k (F)", w.rows(), v_k.len())?;
    check_dim("robust_update_h", "length of h_k (K)", w.cols(), h_k.len())?;
    check_dim("robust_update_h", "length of r_k (F)", w.rows(), r_k.len())?;
    for x in [v_k, h_k, r_k] {
        check_nonneg_vec(x)?;
    }
    let w = w.as_array();
    let wtw = w.t().dot(w);
    let wtv = w.t().dot(&v_k);
    let wtr = w.t().dot(&r_k);
    let mut h = h_k.to_owned();
    mu_h_kernel(&mut h.view_mut(), wtv.view(), &wtw, Some(wtr.view()));
    Ok(h)
}

fn r_kernel(r: &mut ndarray::ArrayViewMut1<'_, f64>, v: ArrayView1<'_, f64>, wh: &Array1<f64>, lambda: f64) {
    Zip::from(r)
        .and(&v)
        .and(wh)
        .for_each(|x, &vi, &whi| *x *= vi / guard(whi + *x + lambda));
}

/// `r ← r ⊙ v / (W h + r + λ·1)`.
pub fn robust_update_r(
    w: &NonnegativeMatrix,
    v_k: ArrayView1<'_, f64>,
    h_k: ArrayView1<'_, f64>,
    r_k: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    check_dim("robust_update_r", "length of v_k (F)", w.rows(), v_k.len())?;
    check_dim("robust_update_r", "length of h_k (K)", w.cols(), h_k.len())?;
    check_dim("robust_update_r", "length of r_k (F)", w.rows(), r_k.len())?;
    for x in [v_k, h_k, r_k] {
        check_nonneg_vec(x)?;
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(NmfError::config(format!("lambda must be >= 0, got {lambda}")));
    }
    let wh = w.as_array().dot(&h_k);
    let mut r = r_k.to_owned();
    r_kernel(&mut r.view_mut(), v_k, &wh, lambda);
    Ok(r)
}

fn robust_samples<'a>(
    v: ArrayView1<'a, f64>,
    h: ArrayView1<'a, f64>,
    h_tilde: ArrayView1<'a, f64>,
    r: ArrayView1<'a, f64>,
    r_tilde: ArrayView1<'a, f64>,
) -> SampleTerms<'a> {
    SampleTerms {
        v,
        h,
        h_tilde,
        r: Some(r),
        r_tilde: Some(r_tilde),
    }
}

/// Variance-reduced basis update for the outlier model, single sample.
pub fn rsvrmu_w_update(
    w_t: &NonnegativeMatrix,
    rsnap: &RobustSnapshot,
    v: &NonnegativeMatrix,
    h_live: &NonnegativeMatrix,
    r_live: &NonnegativeMatrix,
    k: usize,
    alpha: f64,
) -> Result<NonnegativeMatrix> {
    rsvrmu_minibatch_w_update(w_t, rsnap, v, h_live, r_live, &[k], alpha)
}

pub fn rsvrmu_minibatch_w_update(
    w_t: &NonnegativeMatrix,
    rsnap: &RobustSnapshot,
    v: &NonnegativeMatrix,
    h_live: &NonnegativeMatrix,
    r_live: &NonnegativeMatrix,
    sample_set: &[usize],
    alpha: f64,
) -> Result<NonnegativeMatrix> {
    check_alpha(alpha)?;
    check_dim("rsvrmu_w_update", "rows of W_t (F)", v.rows(), w_t.rows())?;
    check_dim("rsvrmu_w_update", "rows of H (K)", w_t.cols(), h_live.rows())?;
    check_dim("rsvrmu_w_update", "columns of H (N)", v.cols(), h_live.cols())?;
    check_dim("rsvrmu_w_update", "rows of R (F)", v.rows(), r_live.rows())?;
    check_dim("rsvrmu_w_update", "columns of R (N)", v.cols(), r_live.cols())?;
    check_dim("rsvrmu_w_update", "snapshot columns (N)", v.cols(), rsnap.base.samples())?;
    check_dim("rsvrmu_w_update", "snapshot rank (K)", w_t.cols(), rsnap.base.w_tilde().cols())?;
    check_sample_set(sample_set, v.cols())?;
    let samples: Vec<_> = sample_set
        .iter()
        .map(|&k| {
            robust_samples(
                v.column(k),
                h_live.column(k),
                rsnap.base.h_tilde().column(k),
                r_live.column(k),
                rsnap.r_tilde.column(k),
            )
        })
        .collect();
    let parts = qp_kernel(
        w_t.as_array(),
        rsnap.base.w_tilde().as_array(),
        &rsnap.grad_part_a_robust,
        rsnap.base.grad_part_b(),
        &samples,
    );
    let mut out = w_t.as_array().clone();
    apply_vr_step(&mut out, &parts, alpha);
    Ok(NonnegativeMatrix::from_array_unchecked(out))
}

fn rsvrmu_epoch_impl<R: Rng + ?Sized>(
    v: &NonnegativeMatrix,
    factors: &mut FactorPair,
    outliers: &mut OutlierModel,
    config: &StochasticConfig,
    epoch_index: usize,
    rng: &mut R,
    rule: HRule,
) -> Result<()> {
    let n = v.cols();
    let rsnap = RobustSnapshot::new(v, factors, outliers)?;
    let m = config.inner_iters_for(n);
    let lambda = outliers.lambda();
    let varr = v.as_array();
    for t in 0..m {
        let alpha = stepsize_ratio(config, (epoch_index * m + t) as u64);
        let batch = sample_batch(rng, n, config.batch_size());
        let (w, h) = factors.parts_mut();
        let r = outliers.r_mut();
        let wtw = w.t().dot(w as &Array2<f64>);
        for &k in &batch {
            let vk = varr.column(k);
            let wtv = w.t().dot(&vk);
            let wtr = w.t().dot(&r.column(k));
            let mut hk = h.column_mut(k);
            match rule {
                HRule::Single => mu_h_kernel(&mut hk, wtv.view(), &wtw, Some(wtr.view())),
                HRule::Repeated { budget, epsilon } => {
                    repeat_h_in_place(&mut hk, wtv.view(), &wtw, Some(wtr.view()), budget, epsilon);
                }
            }
            let wh = (w as &Array2<f64>).dot(&hk);
            r_kernel(&mut r.column_mut(k), vk, &wh, lambda);
        }
        let samples: Vec<_> = batch
            .iter()
            .map(|&k| {
                robust_samples(
                    varr.column(k),
                    h.column(k),
                    rsnap.base.h_tilde().column(k),
                    r.column(k),
                    rsnap.r_tilde.column(k),
                )
            })
            .collect();
        let parts = qp_kernel(
            w,
            rsnap.base.w_tilde().as_array(),
            &rsnap.grad_part_a_robust,
            rsnap.base.grad_part_b(),
            &samples,
        );
        apply_vr_step(w, &parts, alpha);
    }
    Ok(())
}

/// Outliers start at `mean(V) · U(0, 1]` so the multiplicative rule can move them.
pub(crate) fn init_outliers(v: &NonnegativeMatrix, lambda: f64, rng: &mut SeededRng) -> Result<OutlierModel> {
    let scale = v.mean_entry();
    let r = Array2::from_shape_simple_fn(v.shape(), || (1.0 - rng.random::<f64>()) * scale);
    OutlierModel::new(NonnegativeMatrix::from_array_unchecked(r), lambda)
}

/// One outer R-SVRMU iteration.
pub fn rsvrmu_epoch<R: Rng + ?Sized>(
    v: &NonnegativeMatrix,
    factors: &FactorPair,
    outliers: &OutlierModel,
    config: &StochasticConfig,
    epoch_index: usize,
    rng: &mut R,
) -> Result<(FactorPair, OutlierModel)> {
    factors.check_against(v)?;
    config.validate_for(v.cols())?;
    let mut f = factors.clone();
    let mut o = outliers.clone();
    rsvrmu_epoch_impl(v, &mut f, &mut o, config, epoch_index, rng, HRule::Single)?;
    Ok((f, o))
}

pub fn rsvrmu_solve(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &StochasticConfig,
    lambda: f64,
) -> Result<(FactorPair, OutlierModel, ConvergenceTrace)> {
    rsvrmu_solve_with(v, rank, config, lambda, None)
}

/// R-SVRMU, optionally with repeated coefficient refreshes.
pub fn rsvrmu_solve_with(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &StochasticConfig,
    lambda: f64,
    accel: Option<&AccelConfig>,
) -> Result<(FactorPair, OutlierModel, ConvergenceTrace)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(NmfError::config(format!("lambda must be > 0, got {lambda}")));
    }
    config.validate_for(v.cols())?;
    let (mut factors, mut rng) = init_and_rng(v, rank, config.seed())?;
    let mut outliers = init_outliers(v, lambda, &mut rng)?;
    let rule = accel.map_or(HRule::Single, |a| a.rule(v.rows(), v.cols(), rank));
    let n = v.cols();
    let m = config.inner_iters_for(n);
    let mut rec = TraceRecorder::new();
    rec.record(0, robust_cost(v, &factors, &outliers)?)?;
    for s in 0..config.epochs() {
        rec.resume();
        rsvrmu_epoch_impl(v, &mut factors, &mut outliers, config, s, &mut rng, rule)?;
        rec.pause();
        rec.account(GradEvent::FullPass(n));
        for _ in 0..m {
            rec.account(GradEvent::SampleGradients(config.batch_size()));
        }
        rec.record(s + 1, robust_cost(v, &factors, &outliers)?)?;
    }
    Ok((factors, outliers, rec.finish()))
}
