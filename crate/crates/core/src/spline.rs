//! Tensor-product B-spline spaces with equidistant knots `u_k = k * alpha`
//! on the cube `[-A, A]^d`.

use smallvec::SmallVec;

use crate::error::{invalid, Result};

/// Degree `M` and knot distance `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineParams {
    pub degree: usize,
    pub knot_distance: f64,
}

impl SplineParams {
    pub fn new(degree: usize, knot_distance: f64) -> Result<Self> {
        if !(knot_distance.is_finite() && knot_distance > 0.0) {
            return Err(invalid(format!(
                "knot distance must be positive, got {knot_distance}"
            )));
        }
        Ok(Self {
            degree,
            knot_distance,
        })
    }

    /// Lexicographic order on `(M, alpha)`; used for deterministic tie-breaks.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree
            .cmp(&other.degree)
            .then(self.knot_distance.total_cmp(&other.knot_distance))
    }
}

/// Univariate B-spline `B_{k,M}` on knots `u_l = l * alpha`, by the
/// triangular Cox-de Boor recursion.
///
/// Degree zero is the indicator of `[u_k, u_{k+1})`.
pub fn bspline_univariate(degree: usize, knot_distance: f64, k: i64, x: f64) -> f64 {
    let s = x / knot_distance;
    let k = k as f64;
    // b[j] = B_{k+j, r}(s) for the current degree r
    let mut b: SmallVec<[f64; 8]> = (0..=degree)
        .map(|j| {
            let lo = k + j as f64;
            if s >= lo && s < lo + 1.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for r in 1..=degree {
        let rf = r as f64;
        for j in 0..=degree - r {
            let kj = k + j as f64;
            b[j] = (s - kj) / rf * b[j] + (kj + rf + 1.0 - s) / rf * b[j + 1];
        }
    }
    b[0]
}

/// The `degree + 1` B-splines of degree `degree` that are nonzero on the unit
/// cell `[j, j + 1]` of the integer knot sequence, evaluated at `j + u`.
/// Entry `q` belongs to `B_{j - degree + q}`.
fn cell_basis(degree: usize, u: f64) -> SmallVec<[f64; 8]> {
    let mut n: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, degree + 1);
    n[0] = 1.0;
    for r in 1..=degree {
        let rf = r as f64;
        let mut saved = 0.0;
        for q in 0..r {
            // left/right knot distances on the integer grid sum to r
            let right = (q + 1) as f64 - u;
            let left = u + (r - q - 1) as f64;
            let temp = n[q] / rf;
            n[q] = saved + right * temp;
            saved = left * temp;
        }
        n[r] = saved;
    }
    n
}

/// Span of the tensor-product B-splines whose support meets `[-A, A]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace {
    params: SplineParams,
    dim: usize,
    domain_bound: f64,
    /// `ceil(A / alpha)`
    cells: i64,
    per_axis: usize,
}

impl SplineSpace {
    pub fn new(params: SplineParams, dim: usize, domain_bound: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("spline dimension must be at least 1"));
        }
        if !(domain_bound.is_finite() && domain_bound > 0.0) {
            return Err(invalid(format!(
                "domain bound must be positive, got {domain_bound}"
            )));
        }
        SplineParams::new(params.degree, params.knot_distance)?;
        let cells = (domain_bound / params.knot_distance).ceil() as i64;
        let per_axis = 2 * cells as usize + params.degree;
        if (per_axis as f64).powi(dim as i32) > 1e8 {
            return Err(invalid(format!(
                "spline space too large: {per_axis}^{dim} basis functions"
            )));
        }
        Ok(Self {
            params,
            dim,
            domain_bound,
            cells,
            per_axis,
        })
    }

    pub fn params(&self) -> SplineParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain_bound(&self) -> f64 {
        self.domain_bound
    }

    /// Smallest active univariate index `-ceil(A/alpha) - M`.
    pub fn min_index(&self) -> i64 {
        -self.cells - self.params.degree as i64
    }

    /// Basis functions per axis, `2 ceil(A/alpha) + M`.
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    /// Total number of active tensor B-splines.
    pub fn dimension(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    /// Multi-index of flat basis position `flat` (row-major, last axis fastest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<i64> {
        let mut k = vec![0i64; self.dim];
        for slot in k.iter_mut().rev() {
            *slot = (flat % self.per_axis) as i64 + self.min_index();
            flat /= self.per_axis;
        }
        k
    }

    pub fn active_indices(&self) -> Vec<Vec<i64>> {
        (0..self.dimension()).map(|f| self.multi_index(f)).collect()
    }

    /// Value of the tensor B-spline with multi-index `k` at `x` (no clamping).
    pub fn basis_function(&self, k: &[i64], x: &[f64]) -> f64 {
        k.iter()
            .zip(x)
            .map(|(&ki, &xi)| {
                bspline_univariate(self.params.degree, self.params.knot_distance, ki, xi)
            })
            .product()
    }

    /// Calls `f(flat_index, value)` for every basis function of the local
    /// cell containing `x` clamped into `[-A, A]^d`. Values may be zero at
    /// cell boundaries.
    pub fn for_each_basis(&self, x: &[f64], mut f: impl FnMut(usize, f64)) {
        let m = self.params.degree;
        let mut first: SmallVec<[usize; 4]> = SmallVec::with_capacity(self.dim);
        let mut vals: SmallVec<[SmallVec<[f64; 8]>; 4]> = SmallVec::with_capacity(self.dim);
        for &xi in x.iter().take(self.dim) {
            let xc = xi.clamp(-self.domain_bound, self.domain_bound);
            let s = xc / self.params.knot_distance;
            let j = (s.floor() as i64).clamp(-self.cells, self.cells - 1);
            let u = s - j as f64;
            vals.push(cell_basis(m, u));
            first.push((j - m as i64 - self.min_index()) as usize);
        }
        let d = self.dim;
        let mut counter: SmallVec<[usize; 4]> = SmallVec::from_elem(0, d);
        loop {
            let mut flat = 0usize;
            let mut w = 1.0;
            for a in 0..d {
                flat = flat * self.per_axis + first[a] + counter[a];
                w *= vals[a][counter[a]];
            }
            f(flat, w);
            let mut a = d;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                counter[a] += 1;
                if counter[a] <= m {
                    break;
                }
                counter[a] = 0;
            }
        }
    }

    /// Nonzero basis values at `x` as `(flat index, value)` pairs.
    pub fn basis_eval(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity((self.params.degree + 1).pow(self.dim as u32));
        self.for_each_basis(x, |k, v| {
            if v != 0.0 {
                out.push((k, v))
            }
        });
        out
    }

    /// `sum_k coeffs[k] B_k(x)` with `x` clamped into the domain.
    pub fn combine(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_basis(x, |k, v| acc += coeffs[k] * v);
        acc
    }
}

/// Candidate spline parameters, sorted lexicographically by `(M, alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    params: Vec<SplineParams>,
}

impl ParameterGrid {
    pub fn new(mut params: Vec<SplineParams>) -> Result<Self> {
        if params.is_empty() {
            return Err(invalid("parameter grid is empty"));
        }
        for p in &params {
            SplineParams::new(p.degree, p.knot_distance)?;
        }
        params.sort_by(|a, b| a.lex_cmp(b));
        if params.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("parameter grid contains duplicates"));
        }
        Ok(Self { params })
    }

    /// Cartesian product of degrees and knot distances.
    pub fn product(degrees: &[usize], knot_distances: &[f64]) -> Result<Self> {
        Self::new(
            degrees
                .iter()
                .flat_map(|&m| {
                    knot_distances.iter().map(move |&a| SplineParams {
                        degree: m,
                        knot_distance: a,
                    })
                })
                .collect(),
        )
    }

    /// `M <= ceil(ln n)` and `alpha = 2^k` with `|k| <= ceil(ln n)`.
    pub fn theoretical(n: usize) -> Result<Self> {
        let c = (n.max(2) as f64).ln().ceil() as i32;
        let degrees: Vec<usize> = (0..=c as usize).collect();
        let alphas: Vec<f64> = (-c..=c).map(|k| 2f64.powi(k)).collect();
        Self::product(&degrees, &alphas)
    }

    pub fn params(&self) -> &[SplineParams] {
        &self.params
    }

    pub fn max_degree(&self) -> usize {
        self.params.iter().map(|p| p.degree).max().unwrap_or(0)
    }
}
