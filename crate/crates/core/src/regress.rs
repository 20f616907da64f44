//! Least-squares fitting of continuation values.
//!
//! Rows of the design matrix are folded one at a time into an upper
//! triangular factor by Givens rotations, so only the nonzero span of each
//! row is touched. For B-spline designs every row has at most `(M+1)^d`
//! nonzeros and the factor stays banded. Several label vectors can share one
//! factorization. Rank-deficient problems fall back to an SVD of the small
//! triangular factor, which yields the minimum-norm least-squares solution.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spline::SplineSpace;

/// `max(-level, min(level, z))`.
pub fn truncate(level: f64, z: f64) -> f64 {
    z.clamp(-level, level)
}

/// Something that maps a state to a real number.
pub trait Evaluate {
    fn value(&self, x: &[f64]) -> f64;
}

impl<E: Evaluate + ?Sized> Evaluate for &E {
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}

/// Adapts a closure to [`Evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct FnEstimate<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Evaluate for FnEstimate<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Mean squared deviation of `est` from `ys` over the states `xs`
/// (flattened, `dim` coordinates each).
pub fn empirical_risk<E: Evaluate + ?Sized>(
    est: &E,
    xs: &[f64],
    dim: usize,
    ys: &[f64],
) -> Result<f64> {
    if ys.is_empty() {
        return Err(Error::EmptySample);
    }
    if xs.len() != ys.len() * dim {
        return Err(Error::LengthMismatch(format!(
            "{} states vs {} labels",
            xs.len() / dim,
            ys.len()
        )));
    }
    let sum: f64 = xs
        .chunks_exact(dim)
        .zip(ys)
        .map(|(x, y)| (est.value(x) - y).powi(2))
        .sum();
    Ok(sum / ys.len() as f64)
}

/// Incremental QR least squares with several right-hand sides.
#[derive(Debug, Clone)]
pub struct GivensLeastSquares {
    ncols: usize,
    nrhs: usize,
    /// Upper-triangular factor, row-major `ncols x ncols`.
    r: Vec<f64>,
    /// One past the last nonzero column of each row of `r`; 0 marks an empty row.
    row_end: Vec<usize>,
    /// Rotated right-hand sides, row-major `ncols x nrhs`.
    qty: Vec<f64>,
    residual: Vec<f64>,
    rows: usize,
    scratch: Vec<f64>,
    scratch_rhs: Vec<f64>,
}

/// Singular values below `RCOND * max` are treated as zero.
const RCOND: f64 = 1e-11;
/// Diagonal ratio below which the triangular solve is not trusted.
const DIAG_RATIO: f64 = 1e-9;

impl GivensLeastSquares {
    pub fn new(ncols: usize, nrhs: usize) -> Self {
        Self {
            ncols,
            nrhs,
            r: vec![0.0; ncols * ncols],
            row_end: vec![0; ncols],
            qty: vec![0.0; ncols * nrhs],
            residual: vec![0.0; nrhs],
            rows: 0,
            scratch: vec![0.0; ncols],
            scratch_rhs: vec![0.0; nrhs],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Adds the row with entries `vals` at columns `cols` and labels `ys`
    /// (one per right-hand side).
    pub fn add_row(&mut self, cols: &[usize], vals: &[f64], ys: &[f64]) {
        debug_assert_eq!(cols.len(), vals.len());
        debug_assert_eq!(ys.len(), self.nrhs);
        self.rows += 1;
        let n = self.ncols;
        let nrhs = self.nrhs;
        let v = &mut self.scratch;
        let yv = &mut self.scratch_rhs;
        yv.copy_from_slice(ys);
        let mut lo = usize::MAX;
        let mut hi = 0;
        for (&c, &x) in cols.iter().zip(vals) {
            if x != 0.0 {
                v[c] += x;
                lo = lo.min(c);
                hi = hi.max(c + 1);
            }
        }
        let mut j = lo;
        while j < hi {
            let vj = v[j];
            if vj == 0.0 {
                j += 1;
                continue;
            }
            if self.row_end[j] == 0 {
                self.r[j * n + j..j * n + hi].copy_from_slice(&v[j..hi]);
                self.row_end[j] = hi;
                self.qty[j * nrhs..(j + 1) * nrhs].copy_from_slice(yv);
                v[j..hi].iter_mut().for_each(|x| *x = 0.0);
                return;
            }
            let rjj = self.r[j * n + j];
            let h = rjj.hypot(vj);
            let (c, s) = (rjj / h, vj / h);
            let end = hi.max(self.row_end[j]);
            let row = &mut self.r[j * n..j * n + end];
            for k in j..end {
                let (a, b) = (row[k], v[k]);
                row[k] = c * a + s * b;
                v[k] = c * b - s * a;
            }
            v[j] = 0.0;
            let qrow = &mut self.qty[j * nrhs..(j + 1) * nrhs];
            for (a, b) in qrow.iter_mut().zip(yv.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = c * x + s * y;
                *b = c * y - s * x;
            }
            self.row_end[j] = end;
            hi = end;
            j += 1;
        }
        for (res, y) in self.residual.iter_mut().zip(yv.iter()) {
            *res += y * y;
        }
        if lo != usize::MAX {
            v[lo..hi].iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Sum of squared residuals of the least-squares fit, per right-hand side
    /// (exact for full-rank problems).
    pub fn residual_sum_of_squares(&self) -> &[f64] {
        &self.residual
    }

    /// Minimum-norm least-squares coefficients, one vector per right-hand side.
    pub fn solve(&self) -> Vec<Vec<f64>> {
        let n = self.ncols;
        let nrhs = self.nrhs;
        if n == 0 {
            return vec![Vec::new(); nrhs];
        }
        let diag: Vec<f64> = (0..n).map(|j| self.r[j * n + j].abs()).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let full_rank = dmax > 0.0 && diag.iter().all(|&d| d > DIAG_RATIO * dmax);
        if full_rank {
            return (0..nrhs).map(|q| self.back_substitute(q)).collect();
        }
        let rm = DMatrix::from_row_slice(n, n, &self.r);
        let b = DMatrix::from_row_slice(n, nrhs, &self.qty);
        let svd = rm.svd(true, true);
        let smax = svd.singular_values.max();
        if smax == 0.0 {
            return vec![vec![0.0; n]; nrhs];
        }
        let sol = svd
            .solve(&b, RCOND * smax)
            .expect("SVD computed with U and V");
        (0..nrhs)
            .map(|q| sol.column(q).iter().copied().collect())
            .collect()
    }

    fn back_substitute(&self, q: usize) -> Vec<f64> {
        let n = self.ncols;
        let mut a = vec![0.0; n];
        for j in (0..n).rev() {
            let end = self.row_end[j];
            let s: f64 = (j + 1..end).map(|k| self.r[j * n + k] * a[k]).sum();
            a[j] = (self.qty[j * self.nrhs + q] - s) / self.r[j * n + j];
        }
        a
    }
}

/// Sparse design rows, compacted onto the columns that actually occur.
#[derive(Debug, Clone)]
pub struct SparseDesign {
    /// Original (uncompacted) column of each compact column, ascending.
    pub columns: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseDesign {
    /// B-spline design for states `xs` (flattened).
    pub fn splines(space: &SplineSpace, xs: &[f64]) -> Self {
        let d = space.dim();
        let n = xs.len() / d;
        let per_row = (space.params().degree + 1).pow(d as u32);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(n * per_row);
        let mut vals = Vec::with_capacity(n * per_row);
        row_ptr.push(0);
        for x in xs.chunks_exact(d) {
            space.for_each_basis(x, |k, v| {
                if v != 0.0 {
                    cols.push(k);
                    vals.push(v);
                }
            });
            row_ptr.push(cols.len());
        }
        Self::compact(row_ptr, cols, vals)
    }

    /// Dense design from a feature map producing `width` features per state.
    pub fn dense(
        xs: &[f64],
        dim: usize,
        width: usize,
        features: impl Fn(&[f64], &mut [f64]),
    ) -> Self {
        let n = xs.len() / dim;
        let mut vals = vec![0.0; n * width];
        for (x, row) in xs.chunks_exact(dim).zip(vals.chunks_exact_mut(width)) {
            features(x, row);
        }
        let cols = (0..n).flat_map(|_| 0..width).collect();
        let row_ptr = (0..=n).map(|i| i * width).collect();
        Self::compact(row_ptr, cols, vals)
    }

    fn compact(row_ptr: Vec<usize>, mut cols: Vec<usize>, vals: Vec<f64>) -> Self {
        let mut columns = cols.clone();
        columns.sort_unstable();
        columns.dedup();
        for c in cols.iter_mut() {
            *c = columns.binary_search(c).expect("column present");
        }
        Self {
            columns,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Least-squares coefficients (over the compact columns) for each label
    /// vector in `ys`.
    pub fn solve(&self, ys: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let n = self.nrows();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        for y in ys {
            if y.len() != n {
                return Err(Error::LengthMismatch(format!(
                    "{} rows vs {} labels",
                    n,
                    y.len()
                )));
            }
        }
        let mut ls = GivensLeastSquares::new(self.columns.len(), ys.len());
        let mut buf = vec![0.0; ys.len()];
        for i in 0..n {
            for (b, y) in buf.iter_mut().zip(ys) {
                *b = y[i];
            }
            let (c, v) = self.row(i);
            ls.add_row(c, v, &buf);
        }
        Ok(ls.solve())
    }

    /// Scatters compact coefficients back into a vector of length `full`.
    pub fn expand(&self, compact: &[f64], full: usize) -> Vec<f64> {
        let mut out = vec![0.0; full];
        for (&c, &a) in self.columns.iter().zip(compact) {
            out[c] = a;
        }
        out
    }
}

/// Truncated spline estimate of a continuation value.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationEstimate {
    pub space: SplineSpace,
    /// Coefficients aligned with the space's flat basis order.
    pub coeffs: Vec<f64>,
    pub trunc_level: f64,
}

impl ContinuationEstimate {
    pub fn new(space: SplineSpace, coeffs: Vec<f64>, trunc_level: f64) -> Result<Self> {
        if coeffs.len() != space.dimension() {
            return Err(Error::DimensionMismatch {
                expected: space.dimension(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            space,
            coeffs,
            trunc_level,
        })
    }

    /// Spline value before truncation.
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.space.combine(&self.coeffs, x)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        truncate(self.trunc_level, self.raw(x))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

impl Evaluate for ContinuationEstimate {
    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
    }
}

/// Least-squares fit of `ys` on `xs` (flattened) in `space`, truncated at
/// `trunc_level` on evaluation.
pub fn fit_least_squares(
    space: &SplineSpace,
    xs: &[f64],
    ys: &[f64],
    trunc_level: f64,
) -> Result<ContinuationEstimate> {
    Ok(fit_many(space, xs, &[ys], trunc_level)?
        .pop()
        .expect("one fit"))
}

/// One fit per label vector, sharing the factorization of the design.
pub fn fit_many(
    space: &SplineSpace,
    xs: &[f64],
    ys: &[&[f64]],
    trunc_level: f64,
) -> Result<Vec<ContinuationEstimate>> {
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    if !xs.len().is_multiple_of(space.dim()) {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            got: xs.len() % space.dim(),
        });
    }
    if ys.iter().flat_map(|y| y.iter()).any(|v| !v.is_finite()) {
        return Err(crate::error::invalid("labels must be finite"));
    }
    let design = SparseDesign::splines(space, xs);
    let sols = design.solve(ys)?;
    sols.iter()
        .map(|a| {
            ContinuationEstimate::new(
                space.clone(),
                design.expand(a, space.dimension()),
                trunc_level,
            )
        })
        .collect()
}

/// Monomials of total degree `<= degree` in the scaled coordinates `x / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialBasis {
    exponents: Vec<Vec<u32>>,
    scale: Vec<f64>,
}

impl PolynomialBasis {
    pub fn new(dim: usize, degree: u32, scale: Vec<f64>) -> Result<Self> {
        if scale.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: scale.len(),
            });
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(crate::error::invalid("polynomial scale must be positive"));
        }
        let mut exponents = Vec::new();
        for total in 0..=degree {
            push_compositions(dim, total, &mut Vec::new(), &mut exponents);
        }
        Ok(Self { exponents, scale })
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn features(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e
                .iter()
                .zip(x.iter().zip(&self.scale))
                .map(|(&p, (&xi, &s))| (xi / s).powi(p as i32))
                .product();
        }
    }
}

fn push_compositions(dim: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == dim {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(dim, total - first, prefix, out);
        prefix.pop();
    }
}

/// Untruncated polynomial regression estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialEstimate {
    pub basis: PolynomialBasis,
    pub coeffs: Vec<f64>,
}

impl PolynomialEstimate {
    pub fn fit(basis: PolynomialBasis, xs: &[f64], ys: &[f64]) -> Result<Self> {
        let dim = basis.scale.len();
        let design = SparseDesign::dense(xs, dim, basis.len(), |x, row| basis.features(x, row));
        let sol = design.solve(&[ys])?;
        let coeffs = design.expand(&sol[0], basis.len());
        Ok(Self { basis, coeffs })
    }
}

impl Evaluate for PolynomialEstimate {
    fn value(&self, x: &[f64]) -> f64 {
        let mut f = vec![0.0; self.basis.len()];
        self.basis.features(x, &mut f);
        f.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }
}

/// A continuation-value estimate of any supported form.
#[derive(Debug, Clone, PartialEq)]
pub enum Continuation {
    Constant(f64),
    Spline(ContinuationEstimate),
    Polynomial(PolynomialEstimate),
}

impl Evaluate for Continuation {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Continuation::Constant(c) => *c,
            Continuation::Spline(e) => e.evaluate(x),
            Continuation::Polynomial(p) => p.value(x),
        }
    }
}
