use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NmfError, Result};
use crate::factor_model::NonnegativeMatrix;
use crate::{seeded_rng, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(rows: usize, cols: usize, rank: usize, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 || rank == 0 {
            return Err(NmfError::config("synthetic dimensions must be positive"));
        }
        if rank > rows.min(cols) {
            return Err(NmfError::config(format!(
                "ground-truth rank {rank} exceeds min({rows}, {cols})"
            )));
        }
        Ok(SyntheticSpec { rows, cols, rank, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierSpec {
    pub density: f64,
    pub low: f64,
    pub high: f64,
    pub seed: u64,
}

impl OutlierSpec {
    pub fn new(density: f64, low: f64, high: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(NmfError::config(format!("outlier density must lie in [0, 1], got {density}")));
        }
        if !(low >= 0.0 && high >= low && high.is_finite()) {
            return Err(NmfError::config(format!("need 0 <= low <= high, got [{low}, {high}]")));
        }
        Ok(OutlierSpec { density, low, high, seed })
    }
}

/// Signed Gaussian draws with variance `1/√K_o`, before the absolute value.
pub(crate) fn signed_gaussian(rows: usize, cols: usize, rank: usize, rng: &mut SeededRng) -> Array2<f64> {
    let std_dev = (1.0 / (rank as f64).sqrt()).sqrt();
    let normal = Normal::new(0.0, std_dev).expect("finite positive std dev");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

/// Clean synthetic data `V = P(W_o H_o)`.
///
/// Ground-truth entries are `|N(0, 1/√K_o)|`. The returned `W_o` is already
/// divided by the projector's scale, so `W_o H_o` reproduces `V` up to rounding.
pub fn gen_synthetic(
    spec: &SyntheticSpec,
) -> Result<(NonnegativeMatrix, NonnegativeMatrix, NonnegativeMatrix)> {
    let mut rng = seeded_rng(spec.seed);
    let w = signed_gaussian(spec.rows, spec.rank, spec.rank, &mut rng).mapv(f64::abs);
    let h = signed_gaussian(spec.rank, spec.cols, spec.rank, &mut rng).mapv(f64::abs);
    let product = NonnegativeMatrix::new(w.dot(&h))?;
    let scale = product.max_entry();
    let v = normalization_projector(&product)?;
    Ok((
        v,
        NonnegativeMatrix::from_array_unchecked(w / scale),
        NonnegativeMatrix::from_array_unchecked(h),
    ))
}

/// Global max-scaling into `[0, 1]`.
pub fn normalization_projector(m: &NonnegativeMatrix) -> Result<NonnegativeMatrix> {
    let max = m.max_entry();
    if max <= 0.0 {
        return Err(NmfError::AllZero);
    }
    Ok(NonnegativeMatrix::from_array_unchecked(m.as_array() / max))
}

/// Each entry independently, with probability `density`, gets an additive
/// draw from `U[low, high]`. Returns the corrupted matrix and the mask.
pub fn inject_outliers(
    v: &NonnegativeMatrix,
    spec: &OutlierSpec,
) -> Result<(NonnegativeMatrix, Array2<bool>)> {
    let mut rng = seeded_rng(spec.seed);
    let mut out = v.as_array().clone();
    let mut mask = Array2::from_elem(v.shape(), false);
    let width = spec.high - spec.low;
    for (x, m) in out.iter_mut().zip(mask.iter_mut()) {
        if rng.random::<f64>() < spec.density {
            *x += spec.low + width * rng.random::<f64>();
            *m = true;
        }
    }
    Ok((NonnegativeMatrix::from_array_unchecked(out), mask))
}
