//! Full-batch multiplicative updates and the HALS reference solver used to
//! compute the optimality-gap baseline `f*`.

use ndarray::{Array2, Zip};

use crate::error::{NmfError, Result};
use crate::factor_model::{frobenius_cost, guard, FactorPair, NonnegativeMatrix};
use crate::harness_metrics::trace::{ConvergenceTrace, GradEvent, TraceRecorder};
use crate::seeded_rng;

/// Lower bound on HALS entries; keeps columns from collapsing to zero.
pub const HALS_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchConfig {
    max_iters: usize,
    rel_tol: f64,
    seed: u64,
}

impl BatchConfig {
    pub fn new(max_iters: usize, rel_tol: f64, seed: u64) -> Result<Self> {
        if max_iters == 0 {
            return Err(NmfError::config("max_iters must be at least 1"));
        }
        if !(rel_tol >= 0.0) {
            return Err(NmfError::config(format!("rel_tol must be >= 0, got {rel_tol}")));
        }
        Ok(BatchConfig {
            max_iters,
            rel_tol,
            seed,
        })
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn rel_change(prev: f64, cur: f64) -> f64 {
    (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

/// One sweep of `H ← H ⊙ WᵀV/(WᵀWH)` followed by `W ← W ⊙ VHᵀ/(WHHᵀ)`.
pub fn mu_batch_step(v: &NonnegativeMatrix, factors: &FactorPair) -> Result<FactorPair> {
    let mut next = factors.clone();
    mu_batch_step_in_place(v, &mut next)?;
    Ok(next)
}

pub(crate) fn mu_batch_step_in_place(v: &NonnegativeMatrix, factors: &mut FactorPair) -> Result<()> {
    factors.check_against(v)?;
    let v = v.as_array();
    let (w, h) = factors.parts_mut();

    let wtv = w.t().dot(v);
    let wtwh = w.t().dot(w as &Array2<f64>).dot(h as &Array2<f64>);
    Zip::from(&mut *h)
        .and(&wtv)
        .and(&wtwh)
        .for_each(|x, &num, &den| *x *= num / guard(den));

    let vht = v.dot(&h.t());
    let whht = (w as &Array2<f64>).dot(&h.dot(&h.t()));
    Zip::from(&mut *w)
        .and(&vht)
        .and(&whht)
        .for_each(|x, &num, &den| *x *= num / guard(den));
    Ok(())
}

pub fn mu_batch_solve(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &BatchConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let mut rng = seeded_rng(config.seed);
    let init = FactorPair::random_init(v.rows(), v.cols(), rank, &mut rng)?;
    mu_batch_solve_from(v, init, config)
}

/// Batch MU from a caller-supplied starting point. Records one trace entry
/// per iteration.
pub fn mu_batch_solve_from(
    v: &NonnegativeMatrix,
    mut factors: FactorPair,
    config: &BatchConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    factors.check_against(v)?;
    let n = v.cols();
    let mut rec = TraceRecorder::new();
    let mut prev = frobenius_cost(v, &factors)?;
    rec.record(0, prev)?;
    for iter in 1..=config.max_iters {
        rec.resume();
        mu_batch_step_in_place(v, &mut factors)?;
        rec.pause();
        rec.account(GradEvent::BatchIteration(n));
        let cost = frobenius_cost(v, &factors)?;
        rec.record(iter, cost)?;
        if rel_change(prev, cost) < config.rel_tol {
            break;
        }
        prev = cost;
    }
    Ok((factors, rec.finish()))
}

/// Hierarchical alternating least squares. Returns the lowest-cost iterate
/// seen and its cost, which the harness uses as `f*`.
pub fn hals_solve(v: &NonnegativeMatrix, rank: usize, config: &BatchConfig) -> Result<(FactorPair, f64)> {
    let run = hals_loop(v, rank, config, None)?;
    Ok((run.best, run.best_cost))
}

/// HALS with one trace entry per sweep; returns the final iterate.
pub fn hals_solve_traced(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &BatchConfig,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let mut rec = TraceRecorder::new();
    let run = hals_loop(v, rank, config, Some(&mut rec))?;
    Ok((run.last, rec.finish()))
}

pub(crate) struct HalsRun {
    pub best: FactorPair,
    pub best_cost: f64,
    pub last: FactorPair,
    pub sweeps: usize,
}

pub(crate) fn hals_loop(
    v: &NonnegativeMatrix,
    rank: usize,
    config: &BatchConfig,
    mut rec: Option<&mut TraceRecorder>,
) -> Result<HalsRun> {
    let mut rng = seeded_rng(config.seed);
    let mut factors = FactorPair::random_init(v.rows(), v.cols(), rank, &mut rng)?;
    let mut best_cost = frobenius_cost(v, &factors)?;
    let mut best = factors.clone();
    let mut prev = best_cost;
    if let Some(r) = rec.as_deref_mut() {
        r.record(0, best_cost)?;
    }
    let mut sweeps = 0;
    for iter in 1..=config.max_iters {
        if let Some(r) = rec.as_deref_mut() {
            r.resume();
        }
        hals_sweep(v, &mut factors);
        sweeps = iter;
        let cost = frobenius_cost(v, &factors)?;
        if let Some(r) = rec.as_deref_mut() {
            r.pause();
            r.account(GradEvent::BatchIteration(v.cols()));
            r.record(iter, cost)?;
        } else if !cost.is_finite() {
            return Err(NmfError::NumericFailure { epoch: iter });
        }
        if cost < best_cost {
            best_cost = cost;
            best = factors.clone();
        }
        if rel_change(prev, cost) < config.rel_tol {
            break;
        }
        prev = cost;
    }
    Ok(HalsRun {
        best,
        best_cost,
        last: factors,
        sweeps,
    })
}

fn hals_sweep(v: &NonnegativeMatrix, factors: &mut FactorPair) {
    let v = v.as_array();
    let (w, h) = factors.parts_mut();
    let k = w.ncols();

    // rows of H
    let c = w.t().dot(w as &Array2<f64>);
    let d = w.t().dot(v);
    for r in 0..k {
        let ch = c.row(r).dot(h as &Array2<f64>);
        let denom = guard(c[[r, r]]);
        let drow = d.row(r);
        let mut hrow = h.row_mut(r);
        Zip::from(&mut hrow)
            .and(&drow)
            .and(&ch)
            .for_each(|x, &dv, &cv| *x = (*x + (dv - cv) / denom).max(HALS_FLOOR));
    }

    // columns of W
    let a = h.dot(&h.t());
    let b = v.dot(&h.t());
    for col in 0..k {
        let wa = (w as &Array2<f64>).dot(&a.column(col));
        let denom = guard(a[[col, col]]);
        let bcol = b.column(col);
        let mut wcol = w.column_mut(col);
        Zip::from(&mut wcol)
            .and(&bcol)
            .and(&wa)
            .for_each(|x, &bv, &av| *x = (*x + (bv - av) / denom).max(HALS_FLOOR));
    }
}
