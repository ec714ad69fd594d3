//! Stochastic multiplicative updates (SMU) and their variance-reduced
//! counterpart (SVRMU), single-sample and mini-batch.
//!
//! SMU reads the multiplicative rule for `W` as a gradient step with the
//! matrix stepsize `S = αW/(W h hᵀ)`. SVRMU swaps the sample gradient for an
//! SVRG-style corrected one and splits it as `Q − P` with both parts
//! nonnegative, so that with `S = αW/Q` the step
//!
//! ```text
//! W ← W − (αW/Q) ⊙ (Q − P) = W ⊙ ((1 − α) + α P/Q)
//! ```
//!
//! stays multiplicative and never leaves the nonnegative orthant.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Zip};
use rand::seq::index;
use rand::Rng;

use crate::acceleration::repeat_h_in_place;
use crate::error::{check_dim, NmfError, Result};
use crate::factor_model::{frobenius_cost, guard, FactorPair, NonnegativeMatrix, Snapshot};
use crate::harness_metrics::trace::{ConvergenceTrace, GradEvent, TraceRecorder};
use crate::{seeded_rng, SeededRng};

pub const DEFAULT_ALPHA0: f64 = 1.0;
pub const DEFAULT_DECAY: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticConfig {
    epochs: usize,
    inner_iters: Option<usize>,
    alpha0: f64,
    decay: f64,
    batch_size: usize,
    seed: u64,
}

impl StochasticConfig {
    pub fn new(epochs: usize, seed: u64) -> Result<Self> {
        if epochs == 0 {
            return Err(NmfError::config("epochs must be at least 1"));
        }
        Ok(StochasticConfig {
            epochs,
            inner_iters: None,
            alpha0: DEFAULT_ALPHA0,
            decay: DEFAULT_DECAY,
            batch_size: 1,
            seed,
        })
    }

    /// Inner iterations per epoch (`m_s`). Unset means `N`.
    pub fn with_inner_iters(mut self, inner_iters: usize) -> Result<Self> {
        if inner_iters == 0 {
            return Err(NmfError::config("inner iterations m_s must be > 0"));
        }
        self.inner_iters = Some(inner_iters);
        Ok(self)
    }

    pub fn with_alpha0(mut self, alpha0: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 <= 1.0) {
            return Err(NmfError::config(format!("alpha0 must lie in (0, 1], got {alpha0}")));
        }
        self.alpha0 = alpha0;
        Ok(self)
    }

    pub fn with_decay(mut self, decay: f64) -> Result<Self> {
        if !(decay >= 0.0 && decay.is_finite()) {
            return Err(NmfError::config(format!("decay must be >= 0, got {decay}")));
        }
        self.decay = decay;
        Ok(self)
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(NmfError::config("batch size must be at least 1"));
        }
        self.batch_size = batch_size;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `m_s`, defaulting to `N` whatever the batch size.
    pub fn inner_iters_for(&self, samples: usize) -> usize {
        self.inner_iters.unwrap_or(samples)
    }

    pub fn validate_for(&self, samples: usize) -> Result<()> {
        if self.batch_size > samples {
            return Err(NmfError::config(format!(
                "batch size {} exceeds sample count {samples}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// `α_j = α₀ / (1 + decay·j)` over the global inner-iteration counter `j`.
pub fn stepsize_ratio(config: &StochasticConfig, global_inner_index: u64) -> f64 {
    config.alpha0 / (1.0 + config.decay * global_inner_index as f64)
}

/// Nonnegative split `Q − P` of the variance-reduced gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerGradientParts {
    pub q: Array2<f64>,
    pub p: Array2<f64>,
}

impl InnerGradientParts {
    pub fn gradient(&self) -> Array2<f64> {
        &self.q - &self.p
    }
}

/// How the sampled `h_k` columns are refreshed before each `W` update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum HRule {
    Single,
    Repeated { budget: usize, epsilon: f64 },
}

/// `h ← h ⊙ Wᵀv / (WᵀW h [+ Wᵀr])` with `WᵀW` and `Wᵀv` precomputed.
pub(crate) fn mu_h_kernel(
    h: &mut ArrayViewMut1<'_, f64>,
    wtv: ArrayView1<'_, f64>,
    wtw: &Array2<f64>,
    wtr: Option<ArrayView1<'_, f64>>,
) {
    let mut den = wtw.dot(&h.view());
    if let Some(wtr) = wtr {
        den += &wtr;
    }
    Zip::from(h)
        .and(&wtv)
        .and(&den)
        .for_each(|x, &num, &d| *x *= num / guard(d));
}

pub(crate) fn refresh_h(
    h: &mut ArrayViewMut1<'_, f64>,
    wtv: ArrayView1<'_, f64>,
    wtw: &Array2<f64>,
    wtr: Option<ArrayView1<'_, f64>>,
    rule: HRule,
) {
    match rule {
        HRule::Single => mu_h_kernel(h, wtv, wtw, wtr),
        HRule::Repeated { budget, epsilon } => {
            repeat_h_in_place(h, wtv, wtw, wtr, budget, epsilon);
        }
    }
}

pub(crate) fn check_nonneg_vec(x: ArrayView1<'_, f64>) -> Result<()> {
    for (i, &value) in x.iter().enumerate() {
        if !value.is_finite() {
            return Err(NmfError::NonFinite { row: i, col: 0, value });
        }
        if value < 0.0 {
            return Err(NmfError::NegativeEntry { row: i, col: 0, value });
        }
    }
    Ok(())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(NmfError::config(format!("stepsize ratio must lie in (0, 1], got {alpha}")))
    }
}

/// Single SMU coefficient update for one sample.
pub fn smu_update_h(
    w: &NonnegativeMatrix,
    v_k: ArrayView1<'_, f64>,
    h_k: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    check_dim("smu_update_h", "length of v_k (F)", w.rows(), v_k.len())?;
    check_dim("smu_update_h", "length of h_k (K)", w.cols(), h_k.len())?;
    check_nonneg_vec(v_k)?;
    check_nonneg_vec(h_k)?;
    let w = w.as_array();
    let wtw = w.t().dot(w);
    let wtv = w.t().dot(&v_k);
    let mut h = h_k.to_owned();
    mu_h_kernel(&mut h.view_mut(), wtv.view(), &wtw, None);
    Ok(h)
}

/// `W ← W − αW/(Σ W h hᵀ) ⊙ (Σ W h hᵀ − Σ v hᵀ)` over the given samples.
pub(crate) fn smu_w_kernel(
    w: &mut Array2<f64>,
    samples: &[(ArrayView1<'_, f64>, ArrayView1<'_, f64>)],
    alpha: f64,
) {
    let vb = stack_columns(samples.iter().map(|s| s.0), w.nrows());
    let hb = stack_columns(samples.iter().map(|s| s.1), w.ncols());
    let pos = w.dot(&hb).dot(&hb.t());
    let neg = vb.dot(&hb.t());
    Zip::from(w)
        .and(&pos)
        .and(&neg)
        .for_each(|x, &q, &p| *x = (*x - alpha * *x / guard(q) * (q - p)).max(0.0));
}

/// Columns side by side as a `rows × len` matrix.
pub(crate) fn stack_columns<'a>(cols: impl ExactSizeIterator<Item = ArrayView1<'a, f64>>, rows: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows, cols.len()));
    for (mut dst, src) in out.columns_mut().into_iter().zip(cols) {
        dst.assign(&src);
    }
    out
}

/// Single SMU basis update in its matrix-stepsize gradient form.
pub fn smu_update_w(
    w: &NonnegativeMatrix,
    v_k: ArrayView1<'_, f64>,
    h_k: ArrayView1<'_, f64>,
    alpha: f64,
) -> Result<NonnegativeMatrix> {
    check_alpha(alpha)?;
    check_dim("smu_update_w", "length of v_k (F)", w.rows(), v_k.len())?;
    check_dim("smu_update_w", "length of h_k (K)", w.cols(), h_k.len())?;
    check_nonneg_vec(v_k)?;
    check_nonneg_vec(h_k)?;
    let mut out = w.as_array().clone();
    smu_w_kernel(&mut out, &[(v_k, h_k)], alpha);
    Ok(NonnegativeMatrix::from_array_unchecked(out))
}

/// Per-sample vectors entering one `Q`/`P` evaluation. `r`/`r_tilde` are
/// only present for the outlier-aware variant.
pub(crate) struct SampleTerms<'a> {
    pub v: ArrayView1<'a, f64>,
    pub h: ArrayView1<'a, f64>,
    pub h_tilde: ArrayView1<'a, f64>,
    pub r: Option<ArrayView1<'a, f64>>,
    pub r_tilde: Option<ArrayView1<'a, f64>>,
}

/// ```text
/// Q = (1/b) Σ [(W_t h + r) hᵀ + v h̃ᵀ] + full_a
/// P = (1/b) Σ [v hᵀ + (W̃ h̃ + r̃) h̃ᵀ] + full_b
/// ```
pub(crate) fn qp_kernel(
    w_t: &Array2<f64>,
    w_tilde: &Array2<f64>,
    full_a: &Array2<f64>,
    full_b: &Array2<f64>,
    samples: &[SampleTerms<'_>],
) -> InnerGradientParts {
    let (f, k) = w_t.dim();
    let vb = stack_columns(samples.iter().map(|s| s.v), f);
    let hb = stack_columns(samples.iter().map(|s| s.h), k);
    let htb = stack_columns(samples.iter().map(|s| s.h_tilde), k);
    let mut live = w_t.dot(&hb);
    let mut anchor = w_tilde.dot(&htb);
    for (j, s) in samples.iter().enumerate() {
        if let Some(r) = s.r {
            live.column_mut(j).zip_mut_with(&r, |a, &b| *a += b);
        }
        if let Some(rt) = s.r_tilde {
            anchor.column_mut(j).zip_mut_with(&rt, |a, &b| *a += b);
        }
    }
    let b = samples.len() as f64;
    let mut q = live.dot(&hb.t()) + vb.dot(&htb.t());
    let mut p = vb.dot(&hb.t()) + anchor.dot(&htb.t());
    q.mapv_inplace(|x| x / b);
    p.mapv_inplace(|x| x / b);
    q += full_a;
    p += full_b;
    InnerGradientParts { q, p }
}

/// `W ← max(0, W − (αW/Q) ⊙ (Q − P))`; the clamp only absorbs rounding.
pub(crate) fn apply_vr_step(w: &mut Array2<f64>, parts: &InnerGradientParts, alpha: f64) {
    Zip::from(w)
        .and(&parts.q)
        .and(&parts.p)
        .for_each(|x, &q, &p| *x = (*x - alpha * *x / guard(q) * (q - p)).max(0.0));
}

pub fn compute_qp(
    w_t: &NonnegativeMatrix,
    snapshot: &Snapshot,
    v_k: ArrayView1<'_, f64>,
    h_k: ArrayView1<'_, f64>,
    h_tilde_k: ArrayView1<'_, f64>,
) -> Result<InnerGradientParts> {
    check_dim("compute_qp", "rows of W_t vs snapshot", snapshot.w_tilde().rows(), w_t.rows())?;
    check_dim("compute_qp", "rank of W_t vs snapshot", snapshot.w_tilde().cols(), w_t.cols())?;
    check_dim("compute_qp", "length of v_k (F)", w_t.rows(), v_k.len())?;
    check_dim("compute_qp", "length of h_k (K)", w_t.cols(), h_k.len())?;
    check_dim("compute_qp", "length of h_tilde_k (K)", w_t.cols(), h_tilde_k.len())?;
    let sample = SampleTerms {
        v: v_k,
        h: h_k,
        h_tilde: h_tilde_k,
        r: None,
        r_tilde: None,
    };
    Ok(qp_kernel(
        w_t.as_array(),
        snapshot.w_tilde().as_array(),
        snapshot.grad_part_a(),
        snapshot.grad_part_b(),
        &[sample],
    ))
}

pub(crate) fn check_sample_set(sample_set: &[usize], n: usize) -> Result<()> {
    if sample_set.is_empty() {
        return Err(NmfError::config("sample set is empty"));
    }
    if sample_set.len() > n {
        return Err(NmfError::config(format!(
            "sample set of size {} exceeds N = {n}",
            sample_set.len()
        )));
    }
    let mut seen = vec![false; n];
    for &k in sample_set {
        if k >= n {
            return Err(NmfError::IndexOutOfRange { index: k, count: n });
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(NmfError::config(format!("duplicate sample index {k}")));
        }
    }
    Ok(())
}

fn check_inner_inputs(
    w_t: &NonnegativeMatrix,
    snapshot: &Snapshot,
    v: &NonnegativeMatrix,
    h_live: &NonnegativeMatrix,
) -> Result<()> {
    check_dim("svrmu inner step", "rows of W_t (F)", v.rows(), w_t.rows())?;
    check_dim("svrmu inner step", "rows of H (K)", w_t.cols(), h_live.rows())?;
    check_dim("svrmu inner step", "columns of H (N)", v.cols(), h_live.cols())?;
    check_dim("svrmu inner step", "snapshot columns (N)", v.cols(), snapshot.samples())?;
    check_dim("svrmu inner step", "snapshot rank (K)", w_t.cols(), snapshot.w_tilde().cols())?;
    check_dim("svrmu inner step", "snapshot rows (F)", v.rows(), snapshot.w_tilde().rows())
}

/// Variance-reduced `W` update for one sample `k`, reading the already
/// refreshed `h_k` from `h_live`.
pub fn svrmu_inner_step(
    w_t: &NonnegativeMatrix,
    snapshot: &Snapshot,
    v: &NonnegativeMatrix,
    h_live: &NonnegativeMatrix,
    k: usize,
    alpha: f64,
) -> Result<NonnegativeMatrix> {
    svrmu_minibatch_inner_step(w_t, snapshot, v, h_live, &[k], alpha)
}

/// Mini-batch variant: sample terms averaged over `b`, snapshot terms at `1/N`.
pub fn svrmu_minibatch_inner_step(
    w_t: &NonnegativeMatrix,
    snapshot: &Snapshot,
    v: &NonnegativeMatrix,
    h_live: &NonnegativeMatrix,
    sample_set: &[usize],
    alpha: f64,
) -> Result<NonnegativeMatrix> {
    check_alpha(alpha)?;
    check_inner_inputs(w_t, snapshot, v, h_live)?;
    check_sample_set(sample_set, v.cols())?;
    let samples: Vec<SampleTerms<'_>> = sample_set
        .iter()
        .map(|&k| SampleTerms {
            v: v.column(k),
            h: h_live.column(k),
            h_tilde: snapshot.h_tilde().column(k),
            r: None,
            r_tilde: None,
        })
        .collect();
    let parts = qp_kernel(
        w_t.as_array(),
        snapshot.w_tilde().as_array(),
        snapshot.grad_part_a(),
        snapshot.grad_part_b(),
        &samples,
    );
    let mut out = w_t.as_array().clone();
    apply_vr_step(&mut out, &parts, alpha);
    Ok(NonnegativeMatrix::from_array_unchecked(out))
}

/// `b = 1` draws one index uniformly (with replacement across draws);
/// larger batches draw `b` distinct indices.
pub(crate) fn sample_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, b: usize) -> Vec<usize> {
    if b == 1 {
        vec![rng.random_range(0..n)]
    } else {
        index::sample(rng, n, b).into_vec()
    }
}

pub(crate) fn svrmu_epoch_impl<R: Rng + ?Sized>(
    v: &NonnegativeMatrix,
    factors: &mut FactorPair,
    config: &StochasticConfig,
    epoch_index: usize,
    rng: &mut R,
    rule: HRule,
) -> Result<()> {
    let n = v.cols();
    let snapshot = Snapshot::new(v, factors)?;
    let m = config.inner_iters_for(n);
    let varr = v.as_array();
    for t in 0..m {
        let alpha = stepsize_ratio(config, (epoch_index * m + t) as u64);
        let batch = sample_batch(rng, n, config.batch_size);
        let (w, h) = factors.parts_mut();
        let wtw = w.t().dot(w as &Array2<f64>);
        for &k in &batch {
            let wtv = w.t().dot(&varr.column(k));
            refresh_h(&mut h.column_mut(k), wtv.view(), &wtw, None, rule);
        }
        let samples: Vec<SampleTerms<'_>> = batch
            .iter()
            .map(|&k| SampleTerms {
                v: varr.column(k),
                h: h.column(k),
                h_tilde: snapshot.h_tilde().column(k),
                r: None,
                r_tilde: None,
            })
            .collect();
        let parts = qp_kernel(
            w,
            snapshot.w_tilde().as_array(),
            snapshot.grad_part_a(),
            snapshot.grad_part_b(),
            &samples,
        );
        apply_vr_step(w, &parts, alpha);
    }
    Ok(())
}

/// One outer SVRMU iteration. Returns the updated factors and the snapshot
/// that anchors the next epoch.
pub fn svrmu_epoch<R: Rng + ?Sized>(
    v: &NonnegativeMatrix,
    factors: &FactorPair,
    config: &StochasticConfig,
    epoch_index: usize,
    rng: &mut R,
) -> Result<(FactorPair, Snapshot)> {
    factors.check_against(v)?;
    config.validate_for(v.cols())?;
    let mut next = factors.clone();
    svrmu_epoch_impl(v, &mut next, config, epoch_index, rng, HRule::Single)?;
    let snapshot = Snapshot::new(v, &next)?;
    Ok((next, snapshot))
}

pub(crate) fn smu_epoch_impl<R: Rng + ?Sized>(
    v: &NonnegativeMatrix,
    factors: &mut FactorPair,
    config: &StochasticConfig,
    epoch_index: usize,
    rng: &mut R,
    rule: HRule,
) -> Result<()> {
    let n = v.cols();
    let m = config.inner_iters_for(n);
    let varr = v.as_array();
    for t in 0..m {
        let alpha = stepsize_ratio(config, (epoch_index * m + t) as u64);
        let batch = sample_batch(rng, n, config.batch_size);
        let (w, h) = factors.parts_mut();
        let wtw = w.t().dot(w as &Array2<f64>);
        for &k in &batch {
            let wtv = w.t().dot(&varr.column(k));
            refresh_h(&mut h.column_mut(k), wtv.view(), &wtw, None, rule);
        }
        let pairs: Vec<_> = batch.iter().map(|&k| (varr.column(k), h.column(k))).collect();
        smu_w_kernel(w, &pairs, alpha);
    }
    Ok(())
}

/// One SMU epoch: `m_s` sampled `h` refreshes each followed by a `W` step.
pub fn smu_epoch<R: Rng + ?Sized>(
    v: &NonnegativeMatrix,
    factors: &FactorPair,
    config: &StochasticConfig,
    epoch_index: usize,
    rng: &mut R,
) -> Result<FactorPair> {
    factors.check_against(v)?;
    config.validate_for(v.cols())?;
    let mut next = factors.clone();
    smu_epoch_impl(v, &mut next, config, epoch_index, rng, HRule::Single)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Variant {
    Smu,
    Svrmu,
}

pub(crate) fn stochastic_solve(
    v: &NonnegativeMatrix,
    mut factors: FactorPair,
    config: &StochasticConfig,
    rng: &mut SeededRng,
    variant: Variant,
    rule: HRule,
) -> Result<(FactorPair, ConvergenceTrace)> {
    factors.check_against(v)?;
    config.validate_for(v.cols())?;
    let n = v.cols();
    let m = config.inner_iters_for(n);
    let mut rec = TraceRecorder::new();
    rec.record(0, frobenius_cost(v, &factors)?)?;
    for s in 0..config.epochs {
        rec.resume();
        match variant {
            Variant::Smu => smu_epoch_impl(v, &mut factors, config, s, rng, rule)?,
            Variant::Svrmu => svrmu_epoch_impl(v, &mut factors, config, s, rng, rule)?,
        }
        rec.pause();
        if variant == Variant::Svrmu {
            rec.account(GradEvent::FullPass(n));
        }
        for _ in 0..m {
            rec.account(GradEvent::SampleGradients(config.batch_size));
        }
        rec.record(s + 1, frobenius_cost(v, &factors)?)?;
    }
    Ok((factors, rec.finish()))
}

pub(crate) fn init_and_rng(v: &NonnegativeMatrix, rank: usize, seed: u64) -> Result<(FactorPair, SeededRng)> {
    let mut rng = seeded_rng(seed);
    let init = FactorPair::random_init(v.rows(), v.cols(), rank, &mut rng)?;
    Ok((init, rng))
}

pub fn smu_solve(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &StochasticConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let (init, mut rng) = init_and_rng(v, rank, config.seed)?;
    stochastic_solve(v, init, config, &mut rng, Variant::Smu, HRule::Single)
}

pub fn smu_solve_from(
    v: &NonnegativeMatrix,
    init: FactorPair,
    config: &StochasticConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let mut rng = seeded_rng(config.seed);
    stochastic_solve(v, init, config, &mut rng, Variant::Smu, HRule::Single)
}

pub fn svrmu_solve(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &StochasticConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let (init, mut rng) = init_and_rng(v, rank, config.seed)?;
    stochastic_solve(v, init, config, &mut rng, Variant::Svrmu, HRule::Single)
}

pub fn svrmu_solve_from(
    v: &NonnegativeMatrix,
    init: FactorPair,
    config: &StochasticConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let mut rng = seeded_rng(config.seed);
    stochastic_solve(v, init, config, &mut rng, Variant::Svrmu, HRule::Single)
}
