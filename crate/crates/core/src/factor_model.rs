//! Dense nonnegative matrices, factor pairs, epoch snapshots and the
//! factorization cost functions shared by every solver.
//!
//! All costs use the per-sample-averaged form
//! `(1/N) Σₙ ½‖vₙ − W hₙ‖²`, so batch and stochastic traces line up.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};
use rand::Rng;

use crate::error::{check_dim, NmfError, Result};

/// Floor applied to every denominator of a multiplicative rule.
pub const DIV_GUARD: f64 = 1e-12;

#[inline]
pub(crate) fn guard(x: f64) -> f64 {
    x.max(DIV_GUARD)
}

/// Dense row-major matrix whose entries are all finite and `>= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegativeMatrix(Array2<f64>);

impl NonnegativeMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows == 0 || cols == 0 {
            return Err(NmfError::EmptyMatrix { rows, cols });
        }
        for ((row, col), &value) in entries.indexed_iter() {
            if !value.is_finite() {
                return Err(NmfError::NonFinite { row, col, value });
            }
            if value < 0.0 {
                return Err(NmfError::NegativeEntry { row, col, value });
            }
        }
        Ok(NonnegativeMatrix(entries.as_standard_layout().into_owned()))
    }

    pub fn from_shape_vec(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows * cols != entries.len() {
            return Err(NmfError::ShapeLength {
                rows,
                cols,
                len: entries.len(),
            });
        }
        let arr = Array2::from_shape_vec((rows, cols), entries).expect("length checked");
        Self::new(arr)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        NonnegativeMatrix(Array2::zeros((rows, cols)))
    }

    /// Wrap an array the caller has already proven nonnegative and finite.
    pub(crate) fn from_array_unchecked(entries: Array2<f64>) -> Self {
        debug_assert!(entries.iter().all(|x| x.is_finite() && *x >= 0.0));
        NonnegativeMatrix(entries)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub(crate) fn as_array_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.0.column(j)
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_entry(&self) -> f64 {
        self.0.sum() / self.0.len() as f64
    }
}

/// Current iterate `(W, H)` with `W: F×K` and `H: K×N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    w: NonnegativeMatrix,
    h: NonnegativeMatrix,
}

impl FactorPair {
    pub fn new(w: NonnegativeMatrix, h: NonnegativeMatrix) -> Result<Self> {
        check_dim("factor pair", "rank (H rows vs W cols)", w.cols(), h.rows())?;
        let k = w.cols();
        let bound = w.rows().min(h.cols());
        if k > bound {
            return Err(NmfError::config(format!(
                "rank {k} exceeds min(F, N) = {bound}"
            )));
        }
        Ok(FactorPair { w, h })
    }

    /// Entries i.i.d. uniform on `(0, 1]`, scaled by `1/√K`.
    pub fn random_init<R: Rng + ?Sized>(f: usize, n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if f == 0 || n == 0 || k == 0 {
            return Err(NmfError::config("dimensions and rank must be positive"));
        }
        let scale = 1.0 / (k as f64).sqrt();
        let w = Array2::from_shape_simple_fn((f, k), || (1.0 - rng.random::<f64>()) * scale);
        let h = Array2::from_shape_simple_fn((k, n), || (1.0 - rng.random::<f64>()) * scale);
        FactorPair::new(
            NonnegativeMatrix::from_array_unchecked(w),
            NonnegativeMatrix::from_array_unchecked(h),
        )
    }

    pub fn w(&self) -> &NonnegativeMatrix {
        &self.w
    }

    pub fn h(&self) -> &NonnegativeMatrix {
        &self.h
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    pub fn into_parts(self) -> (NonnegativeMatrix, NonnegativeMatrix) {
        (self.w, self.h)
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Array2<f64>, &mut Array2<f64>) {
        (self.w.as_array_mut(), self.h.as_array_mut())
    }

    /// `W H` as a plain array.
    pub fn product(&self) -> Array2<f64> {
        self.w.as_array().dot(self.h.as_array())
    }

    pub fn check_against(&self, v: &NonnegativeMatrix) -> Result<()> {
        check_dim("factors vs data", "rows (F)", v.rows(), self.w.rows())?;
        check_dim("factors vs data", "columns (N)", v.cols(), self.h.cols())
    }
}

/// Epoch anchor `(W̃, H̃)` plus the two full-gradient products
/// `W̃H̃H̃ᵀ/N` and `VH̃ᵀ/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    w_tilde: NonnegativeMatrix,
    h_tilde: NonnegativeMatrix,
    grad_part_a: Array2<f64>,
    grad_part_b: Array2<f64>,
}

impl Snapshot {
    pub fn new(v: &NonnegativeMatrix, factors: &FactorPair) -> Result<Self> {
        factors.check_against(v)?;
        let (grad_part_a, grad_part_b) = Self::full_gradient_parts(v, factors.w(), factors.h());
        Ok(Snapshot {
            w_tilde: factors.w().clone(),
            h_tilde: factors.h().clone(),
            grad_part_a,
            grad_part_b,
        })
    }

    /// The two products as computed for a snapshot; exposed so callers can
    /// recompute and compare.
    pub fn full_gradient_parts(
        v: &NonnegativeMatrix,
        w: &NonnegativeMatrix,
        h: &NonnegativeMatrix,
    ) -> (Array2<f64>, Array2<f64>) {
        let n = v.cols() as f64;
        let h = h.as_array();
        let hht = h.dot(&h.t());
        let a = w.as_array().dot(&hht) / n;
        let b = v.as_array().dot(&h.t()) / n;
        (a, b)
    }

    pub fn w_tilde(&self) -> &NonnegativeMatrix {
        &self.w_tilde
    }

    pub fn h_tilde(&self) -> &NonnegativeMatrix {
        &self.h_tilde
    }

    pub fn grad_part_a(&self) -> &Array2<f64> {
        &self.grad_part_a
    }

    pub fn grad_part_b(&self) -> &Array2<f64> {
        &self.grad_part_b
    }

    pub fn samples(&self) -> usize {
        self.h_tilde.cols()
    }

    /// Full gradient of the averaged cost at the snapshot point.
    pub fn full_gradient(&self) -> Array2<f64> {
        &self.grad_part_a - &self.grad_part_b
    }
}

/// Outlier matrix `R` (same shape as `V`) and its ℓ1 weight λ.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierModel {
    r: NonnegativeMatrix,
    lambda: f64,
}

impl OutlierModel {
    pub fn new(r: NonnegativeMatrix, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(NmfError::config(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(OutlierModel { r, lambda })
    }

    pub fn r(&self) -> &NonnegativeMatrix {
        &self.r
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub(crate) fn r_mut(&mut self) -> &mut Array2<f64> {
        self.r.as_array_mut()
    }
}

/// `(1/N) Σₙ ½‖vₙ − W hₙ‖²`.
pub fn frobenius_cost(v: &NonnegativeMatrix, factors: &FactorPair) -> Result<f64> {
    factors.check_against(v)?;
    let residual = v.as_array() - &factors.product();
    Ok(0.5 * residual.iter().map(|x| x * x).sum::<f64>() / v.cols() as f64)
}

/// `(1/N) Σₙ [½‖vₙ − W hₙ − rₙ‖² + λ‖rₙ‖₁]`.
pub fn robust_cost(
    v: &NonnegativeMatrix,
    factors: &FactorPair,
    outliers: &OutlierModel,
) -> Result<f64> {
    factors.check_against(v)?;
    check_dim("outliers vs data", "rows (F)", v.rows(), outliers.r.rows())?;
    check_dim("outliers vs data", "columns (N)", v.cols(), outliers.r.cols())?;
    let mut residual = v.as_array() - &factors.product();
    residual -= outliers.r.as_array();
    let fit = 0.5 * residual.iter().map(|x| x * x).sum::<f64>();
    let penalty = outliers.lambda * outliers.r.as_array().sum();
    Ok((fit + penalty) / v.cols() as f64)
}

/// `A ⊙ B / max(C, DIV_GUARD)`, entrywise.
pub fn elementwise_mul_div(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_dim("elementwise_mul_div", "rows of B", a.nrows(), b.nrows())?;
    check_dim("elementwise_mul_div", "columns of B", a.ncols(), b.ncols())?;
    check_dim("elementwise_mul_div", "rows of C", a.nrows(), c.nrows())?;
    check_dim("elementwise_mul_div", "columns of C", a.ncols(), c.ncols())?;
    Ok(Zip::from(&a)
        .and(&b)
        .and(&c)
        .map_collect(|&x, &y, &z| x * y / guard(z)))
}
