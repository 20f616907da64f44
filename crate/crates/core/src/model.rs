//! Simulation of the underlying Markov state.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng::{Purpose, SeedPlan, Stream};

/// A discrete-time Markov process on `R^d` with time indices `0..=steps()`.
pub trait MarkovModel: Sync {
    fn dim(&self) -> usize;

    fn steps(&self) -> usize;

    fn initial_state(&self) -> &[f64];

    /// Continues a path started at time `t`.
    ///
    /// `out` holds `(end - t + 1) * dim()` entries; the first `dim()` already
    /// contain the state at time `t`. Implementations fill the rest, drawing
    /// only from `stream`.
    fn extend(&self, t: usize, out: &mut [f64], stream: &mut Stream);
}

/// Geometric Brownian motion with correlated drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmParams {
    x0: Vec<f64>,
    rate: f64,
    vols: Vec<f64>,
    corr: Vec<f64>,
    steps: usize,
    horizon: f64,
    /// Lower-triangular factor of `corr`, row-major.
    factor: Vec<f64>,
}

impl GbmParams {
    /// `corr` is the row-major `d x d` correlation matrix.
    pub fn new(
        x0: Vec<f64>,
        rate: f64,
        vols: Vec<f64>,
        corr: Vec<f64>,
        steps: usize,
        horizon: f64,
    ) -> Result<Self> {
        let d = x0.len();
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if vols.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: vols.len(),
            });
        }
        if corr.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: corr.len(),
            });
        }
        if steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        let all_finite = x0
            .iter()
            .chain(&vols)
            .chain(&corr)
            .chain([&rate, &horizon])
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(invalid("non-finite model parameter"));
        }
        if x0.iter().any(|&v| v <= 0.0) {
            return Err(invalid("initial state must be positive"));
        }
        if vols.iter().any(|&v| v < 0.0) {
            return Err(invalid("volatilities must be nonnegative"));
        }
        if horizon <= 0.0 {
            return Err(invalid("horizon must be positive"));
        }
        let factor = correlation_factor(&corr, d)?;
        Ok(Self {
            x0,
            rate,
            vols,
            corr,
            steps,
            horizon,
            factor,
        })
    }

    /// Single-asset model.
    pub fn single(x0: f64, rate: f64, vol: f64, steps: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![x0], rate, vec![vol], vec![1.0], steps, horizon)
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn vols(&self) -> &[f64] {
        &self.vols
    }

    pub fn corr(&self) -> &[f64] {
        &self.corr
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Path from `start` driven by the given independent standard normals,
    /// `dim()` of them per step. Returns the states after the start.
    ///
    /// Component `k` after `j` steps is
    /// `start_k * exp((r - vol_k^2/2) j dt + vol_k sqrt(dt) W_k)` where `W` is
    /// the running sum of the correlated drivers.
    pub fn path_from_normals(&self, start: &[f64], normals: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; start.len() + normals.len()];
        out[..d].copy_from_slice(start);
        let mut zs = normals.chunks_exact(d);
        self.fill(&mut out, |z| {
            z.copy_from_slice(zs.next().expect("normals per step"))
        });
        out.split_off(d)
    }

    fn fill(&self, out: &mut [f64], mut draw: impl FnMut(&mut [f64])) {
        let d = self.dim();
        let dt = self.dt();
        let sqdt = dt.sqrt();
        let start: Vec<f64> = out[..d].to_vec();
        let mut cum = vec![0.0; d];
        let mut corr_z = vec![0.0; d];
        let mut z = vec![0.0; d];
        for step in out.chunks_exact_mut(d).skip(1) {
            draw(&mut z);
            for (k, cz) in corr_z.iter_mut().enumerate() {
                *cz = (0..=k).map(|l| self.factor[k * d + l] * z[l]).sum();
            }
            for k in 0..d {
                let vol = self.vols[k];
                cum[k] += (self.rate - 0.5 * vol * vol) * dt + vol * sqdt * corr_z[k];
                step[k] = start[k] * cum[k].exp();
            }
        }
    }
}

impl MarkovModel for GbmParams {
    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    fn extend(&self, _t: usize, out: &mut [f64], stream: &mut Stream) {
        self.fill(out, |z| z.iter_mut().for_each(|v| *v = stream.normal()));
    }
}

/// Lower-triangular `L` with `L L^T = corr`.
///
/// Semidefinite input is accepted: a vanishing pivot yields a zero column,
/// so singular correlation matrices produce rank-deficient drivers.
pub fn correlation_factor(corr: &[f64], d: usize) -> Result<Vec<f64>> {
    const PIVOT_TOL: f64 = 1e-10;
    const RESIDUAL_TOL: f64 = 1e-5;
    if corr.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: corr.len(),
        });
    }
    for i in 0..d {
        if (corr[i * d + i] - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("correlation diagonal entry {i} is not 1")));
        }
        for j in 0..i {
            let (a, b) = (corr[i * d + j], corr[j * d + i]);
            if (a - b).abs() > 1e-12 {
                return Err(invalid(format!(
                    "correlation matrix not symmetric at ({i}, {j})"
                )));
            }
            if a.abs() > 1.0 {
                return Err(invalid(format!(
                    "correlation entry ({i}, {j}) outside [-1, 1]"
                )));
            }
        }
    }
    let mut l = vec![0.0f64; d * d];
    for j in 0..d {
        let s = corr[j * d + j] - (0..j).map(|k| l[j * d + k].powi(2)).sum::<f64>();
        if s < -PIVOT_TOL {
            return Err(Error::NotPositiveSemidefinite { pivot: j, value: s });
        }
        if s <= PIVOT_TOL {
            for i in j + 1..d {
                let r = corr[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
                if r.abs() > RESIDUAL_TOL {
                    return Err(Error::NotPositiveSemidefinite { pivot: j, value: s });
                }
            }
            continue;
        }
        let pivot = s.sqrt();
        l[j * d + j] = pivot;
        for i in j + 1..d {
            let r = corr[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            l[i * d + j] = r / pivot;
        }
    }
    Ok(l)
}

/// Sample paths over the time indices `start..=end`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    states: Vec<f64>,
    n: usize,
    start: usize,
    len: usize,
    dim: usize,
}

/// One path restricted to a time window.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub start: usize,
    pub dim: usize,
    pub data: &'a [f64],
}

impl<'a> PathView<'a> {
    pub fn new(start: usize, dim: usize, data: &'a [f64]) -> Self {
        debug_assert_eq!(data.len() % dim, 0);
        Self { start, dim, data }
    }

    /// Last time index covered.
    pub fn end(&self) -> usize {
        self.start + self.data.len() / self.dim - 1
    }

    pub fn at(&self, s: usize) -> &'a [f64] {
        let o = (s - self.start) * self.dim;
        &self.data[o..o + self.dim]
    }

    /// The sub-window `from..=to`.
    pub fn window(&self, from: usize, to: usize) -> PathView<'a> {
        let a = (from - self.start) * self.dim;
        let b = (to + 1 - self.start) * self.dim;
        PathView::new(from, self.dim, &self.data[a..b])
    }
}

impl PathSet {
    pub fn from_raw(
        states: Vec<f64>,
        n: usize,
        start: usize,
        len: usize,
        dim: usize,
    ) -> Result<Self> {
        if states.len() != n * len * dim {
            return Err(Error::DimensionMismatch {
                expected: n * len * dim,
                got: states.len(),
            });
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(invalid("path set contains non-finite states"));
        }
        Ok(Self {
            states,
            n,
            start,
            len,
            dim,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// First time index.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Last time index.
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }

    pub fn path(&self, i: usize) -> PathView<'_> {
        let stride = self.len * self.dim;
        PathView::new(
            self.start,
            self.dim,
            &self.states[i * stride..(i + 1) * stride],
        )
    }

    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        self.path(i).at(t)
    }

    /// States of all paths at time `t`, flattened.
    pub fn slice(&self, t: usize) -> Vec<f64> {
        (0..self.n)
            .flat_map(|i| self.state(i, t).iter().copied())
            .collect()
    }

    pub fn raw(&self) -> &[f64] {
        &self.states
    }
}

/// `n` independent training paths over `0..=T`.
pub fn simulate_paths<M: MarkovModel + ?Sized>(
    model: &M,
    n: usize,
    seeds: &SeedPlan,
) -> Result<PathSet> {
    simulate_paths_for(model, n, seeds, Purpose::Paths)
}

/// Like [`simulate_paths`] with an explicit stream purpose.
pub fn simulate_paths_for<M: MarkovModel + ?Sized>(
    model: &M,
    n: usize,
    seeds: &SeedPlan,
    purpose: Purpose,
) -> Result<PathSet> {
    if n == 0 {
        return Err(invalid("path count must be at least 1"));
    }
    let d = model.dim();
    let len = model.steps() + 1;
    let mut states = vec![0.0; n * len * d];
    states
        .par_chunks_mut(len * d)
        .enumerate()
        .for_each(|(i, out)| {
            out[..d].copy_from_slice(model.initial_state());
            let mut stream = seeds.stream(purpose, 0, i);
            model.extend(0, out, &mut stream);
        });
    PathSet::from_raw(states, n, 0, len, d)
}

/// Fresh continuations restarted at time `t` from `starts` (flattened, one
/// state per path), covering `t..=end`.
///
/// Path `j` draws from the stream keyed `(Fresh, t, first_index + j)`, so the
/// caller chooses global path labels and no two time steps share draws.
pub fn simulate_fresh_subpaths<M: MarkovModel + ?Sized>(
    model: &M,
    starts: &[f64],
    first_index: usize,
    t: usize,
    end: usize,
    seeds: &SeedPlan,
) -> Result<PathSet> {
    let d = model.dim();
    if end <= t {
        return Err(invalid(format!(
            "fresh sub-path end {end} must exceed start {t}"
        )));
    }
    if end > model.steps() {
        return Err(invalid(format!(
            "end {end} beyond maturity {}",
            model.steps()
        )));
    }
    if !starts.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: starts.len() % d,
        });
    }
    let n = starts.len() / d;
    let len = end - t + 1;
    let mut states = vec![0.0; n * len * d];
    states
        .par_chunks_mut(len * d)
        .zip(starts.par_chunks(d))
        .enumerate()
        .for_each(|(j, (out, x))| {
            out[..d].copy_from_slice(x);
            let mut stream = seeds.stream(Purpose::Fresh, t, first_index + j);
            model.extend(t, out, &mut stream);
        });
    PathSet::from_raw(states, n, t, len, d)
}
