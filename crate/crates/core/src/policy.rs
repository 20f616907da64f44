//! Backward induction for the stopping policy.
//!
//! [`fit_policy`] is the dynamic look-ahead estimator: at every exercise date
//! it restarts fresh sub-paths from the training states, builds look-ahead
//! labels for each candidate window, fits one truncated spline regression per
//! `(window, parameter)` pair on the learning sample, picks the parameter on
//! the testing sample and the window on the validation sample.
//! [`fit_baseline_ls`] and [`fit_baseline_tr`] are the classical single-sample
//! regressions with realized cash flows and with one-step values.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lookahead::{build_labels, tau_unchecked, EstimateSequence, Estimates, Override};
use crate::model::{simulate_fresh_subpaths, simulate_paths, MarkovModel, PathSet, PathView};
use crate::payoff::Reward;
use crate::regress::{
    empirical_risk, fit_many, Continuation, ContinuationEstimate, Evaluate, PolynomialBasis,
    PolynomialEstimate,
};
use crate::rng::{Purpose, SeedPlan};
use crate::spline::{ParameterGrid, SplineParams, SplineSpace};

/// Sizes of the learning, testing and validation samples. Paths are used in
/// that order: learning first, validation last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPlan {
    pub learning: usize,
    pub testing: usize,
    pub validation: usize,
}

impl SplitPlan {
    pub fn new(learning: usize, testing: usize, validation: usize) -> Result<Self> {
        if learning == 0 || testing == 0 || validation == 0 {
            return Err(invalid("all three samples need at least one path"));
        }
        Ok(Self {
            learning,
            testing,
            validation,
        })
    }

    /// `n_t = n_v = floor(n / 3)`, the rest for learning.
    pub fn thirds(n: usize) -> Result<Self> {
        let third = n / 3;
        Self::new(n - 2 * third, third, third)
    }

    pub fn total(&self) -> usize {
        self.learning + self.testing + self.validation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSpec {
    Fixed(usize),
    /// `T - t - 1`: look ahead to maturity.
    ToMaturity,
}

/// Candidate look-ahead windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowGrid {
    specs: Vec<WindowSpec>,
}

impl WindowGrid {
    pub fn new(specs: Vec<WindowSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(invalid("window grid is empty"));
        }
        Ok(Self { specs })
    }

    pub fn specs(&self) -> &[WindowSpec] {
        &self.specs
    }

    /// Sorted distinct windows at time `t`; fixed windows are capped at
    /// `T - t - 1`.
    pub fn candidates(&self, t: usize, maturity: usize) -> Vec<usize> {
        let cap = maturity - t - 1;
        let mut w: Vec<usize> = self
            .specs
            .iter()
            .map(|s| match s {
                WindowSpec::Fixed(w) => (*w).min(cap),
                WindowSpec::ToMaturity => cap,
            })
            .collect();
        w.sort_unstable();
        w.dedup();
        w
    }
}

/// Settings of the look-ahead estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EktConfig {
    pub split: SplitPlan,
    pub grid: ParameterGrid,
    pub windows: WindowGrid,
    pub domain_bound: f64,
}

/// What was chosen at one exercise date, with the scores behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSelection {
    pub t: usize,
    pub window: usize,
    pub params: SplineParams,
    /// Candidate windows in increasing order.
    pub windows: Vec<usize>,
    /// Parameter chosen for each candidate window.
    pub window_params: Vec<SplineParams>,
    /// `test_risks[w][p]`: testing-sample risk of window `w`, parameter `p`
    /// (grid order).
    pub test_risks: Vec<Vec<f64>>,
    /// Validation lower-bound average for each candidate window.
    pub validation_values: Vec<f64>,
}

/// Continuation estimates for `t = 0..T` (with `q_T = 0`) and, for the
/// look-ahead estimator, the selections made at each date.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingPolicy {
    pub estimates: Estimates,
    pub selections: Vec<StepSelection>,
}

impl StoppingPolicy {
    pub fn maturity(&self) -> usize {
        self.estimates.by_time.len()
    }

    /// Estimate `q_t`; zero at maturity.
    pub fn continuation(&self, t: usize, x: &[f64]) -> f64 {
        self.at(t, x)
    }

    /// Selection at time `t`, if the policy carries selections.
    pub fn selection(&self, t: usize) -> Option<&StepSelection> {
        self.selections.iter().find(|s| s.t == t)
    }
}

impl EstimateSequence for StoppingPolicy {
    fn maturity(&self) -> usize {
        self.estimates.by_time.len()
    }

    fn estimate(&self, t: usize, x: &[f64]) -> f64 {
        self.estimates.by_time[t].value(x)
    }
}

/// Index of the candidate with the smallest testing risk and the risks of all
/// candidates. Candidates must be listed in `(M, alpha)` order; ties keep the
/// earliest.
pub fn select_parameter<E: Evaluate>(
    candidates: &[E],
    xs: &[f64],
    dim: usize,
    ys: &[f64],
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(invalid("no candidates to select from"));
    }
    let risks = candidates
        .iter()
        .map(|c| empirical_risk(c, xs, dim, ys))
        .collect::<Result<Vec<f64>>>()?;
    Ok((argmin_first(&risks), risks))
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &r) in v.iter().enumerate() {
        if r < v[best] {
            best = i;
        }
    }
    best
}

/// Average discounted payoff of the stopping rule that uses `candidate` at
/// time `t` and `finalized` afterwards, over `validation` paths covering
/// `t..=T`.
pub fn validation_value<R, S, E>(
    f: &R,
    finalized: &S,
    t: usize,
    candidate: &E,
    validation: &PathSet,
) -> Result<f64>
where
    R: Reward + ?Sized,
    S: EstimateSequence + ?Sized,
    E: Evaluate + Sync + ?Sized,
{
    let maturity = finalized.maturity();
    if validation.start() > t || validation.end() < maturity {
        return Err(invalid(format!(
            "validation paths cover {}..={}, need {t}..={maturity}",
            validation.start(),
            validation.end()
        )));
    }
    if validation.n() == 0 {
        return Err(Error::EmptySample);
    }
    let rule = Override {
        base: finalized,
        time: t,
        candidate,
    };
    let payoffs: Vec<f64> = (0..validation.n())
        .into_par_iter()
        .map(|i| {
            let p = validation.path(i);
            let tau = tau_unchecked(f, &rule, t, p);
            f.reward(tau, p.at(tau))
        })
        .collect();
    Ok(payoffs.iter().sum::<f64>() / payoffs.len() as f64)
}

/// Index of the window candidate maximizing the validation lower bound
/// (ties keep the earliest) and the per-candidate averages.
pub fn select_window<R, S, E>(
    f: &R,
    finalized: &S,
    t: usize,
    candidates: &[E],
    validation: &PathSet,
) -> Result<(usize, Vec<f64>)>
where
    R: Reward + ?Sized,
    S: EstimateSequence + ?Sized,
    E: Evaluate + Sync,
{
    if candidates.is_empty() {
        return Err(invalid("no window candidates"));
    }
    let values = candidates
        .iter()
        .map(|c| validation_value(f, finalized, t, c, validation))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok((best, values))
}

/// Fits the dynamic look-ahead stopping policy.
pub fn fit_policy<M, R>(
    model: &M,
    f: &R,
    cfg: &EktConfig,
    seeds: &SeedPlan,
) -> Result<StoppingPolicy>
where
    M: MarkovModel + ?Sized,
    R: Reward + ?Sized,
{
    let maturity = model.steps();
    let d = model.dim();
    let split = cfg.split;
    let n = split.total();
    let n_lt = split.learning + split.testing;
    let level = f.bound();
    if !(level.is_finite() && level > 0.0) {
        return Err(invalid("payoff bound must be positive and finite"));
    }
    let paths = simulate_paths(model, n, seeds)?;
    let mut policy = StoppingPolicy {
        estimates: Estimates::zeros(maturity),
        selections: Vec::with_capacity(maturity),
    };
    let spaces = cfg
        .grid
        .params()
        .iter()
        .map(|&p| SplineSpace::new(p, d, cfg.domain_bound))
        .collect::<Result<Vec<_>>>()?;

    for t in (0..maturity).rev() {
        let windows = cfg.windows.candidates(t, maturity);
        let wmax = *windows.last().expect("nonempty window grid");
        let states = paths.slice(t);
        let (xs_lt, xs_v) = states.split_at(n_lt * d);
        let (xs_l, xs_t) = xs_lt.split_at(split.learning * d);

        let fresh_lt = simulate_fresh_subpaths(model, xs_lt, 0, t, t + wmax + 1, seeds)?;
        let fresh_v = simulate_fresh_subpaths(model, xs_v, n_lt, t, maturity, seeds)?;

        let labels = windows
            .iter()
            .map(|&w| build_labels(f, &policy, &fresh_lt, t, w))
            .collect::<Result<Vec<_>>>()?;
        debug_assert!(labels.iter().flatten().all(|y| (0.0..=level).contains(y)));
        let learn: Vec<&[f64]> = labels.iter().map(|y| &y[..split.learning]).collect();

        // fits[p][w]
        let fits = spaces
            .par_iter()
            .map(|space| fit_many(space, xs_l, &learn, level))
            .collect::<Result<Vec<Vec<ContinuationEstimate>>>>()?;
        for (space, per_w) in spaces.iter().zip(&fits) {
            for (&w, est) in windows.iter().zip(per_w) {
                if !est.is_finite() {
                    let p = space.params();
                    return Err(Error::NonFinite {
                        t,
                        w,
                        degree: p.degree,
                        knot_distance: p.knot_distance,
                    });
                }
            }
        }

        let mut chosen = Vec::with_capacity(windows.len());
        let mut test_risks = Vec::with_capacity(windows.len());
        for (wi, y) in labels.iter().enumerate() {
            let cands: Vec<&ContinuationEstimate> = fits.iter().map(|per_w| &per_w[wi]).collect();
            let (best, risks) = select_parameter(&cands, xs_t, d, &y[split.learning..])?;
            chosen.push(best);
            test_risks.push(risks);
        }

        let cand_estimates: Vec<&ContinuationEstimate> = chosen
            .iter()
            .enumerate()
            .map(|(wi, &p)| &fits[p][wi])
            .collect();
        let (wbest, validation_values) = select_window(f, &policy, t, &cand_estimates, &fresh_v)?;

        let pbest = chosen[wbest];
        policy.estimates.by_time[t] = Continuation::Spline(fits[pbest][wbest].clone());
        policy.selections.push(StepSelection {
            t,
            window: windows[wbest],
            params: spaces[pbest].params(),
            window_params: chosen.iter().map(|&p| spaces[p].params()).collect(),
            windows,
            test_risks,
            validation_values,
        });
    }
    policy.selections.reverse();
    Ok(policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BaselineLabels {
    /// Realized cash flow under the previously fitted rule.
    RealizedCashFlow,
    /// `max(f_{t+1}, q_{t+1})` at the next state.
    OneStep,
}

/// Regression with realized cash flows along a single path set, polynomial
/// basis of total degree `poly_degree` in `x / x0`.
pub fn fit_baseline_ls<M, R>(
    model: &M,
    f: &R,
    n: usize,
    poly_degree: u32,
    seeds: &SeedPlan,
) -> Result<StoppingPolicy>
where
    M: MarkovModel + ?Sized,
    R: Reward + ?Sized,
{
    fit_baseline(
        model,
        f,
        n,
        poly_degree,
        seeds,
        BaselineLabels::RealizedCashFlow,
    )
}

/// One-step regression on a single path set (window zero).
pub fn fit_baseline_tr<M, R>(
    model: &M,
    f: &R,
    n: usize,
    poly_degree: u32,
    seeds: &SeedPlan,
) -> Result<StoppingPolicy>
where
    M: MarkovModel + ?Sized,
    R: Reward + ?Sized,
{
    fit_baseline(model, f, n, poly_degree, seeds, BaselineLabels::OneStep)
}

fn fit_baseline<M, R>(
    model: &M,
    f: &R,
    n: usize,
    poly_degree: u32,
    seeds: &SeedPlan,
    kind: BaselineLabels,
) -> Result<StoppingPolicy>
where
    M: MarkovModel + ?Sized,
    R: Reward + ?Sized,
{
    let d = model.dim();
    let maturity = model.steps();
    let scale: Vec<f64> = model
        .initial_state()
        .iter()
        .map(|v| if v.abs() > 0.0 { v.abs() } else { 1.0 })
        .collect();
    let basis = PolynomialBasis::new(d, poly_degree, scale)?;
    if n < basis.len() {
        return Err(invalid(format!(
            "{n} paths for {} basis functions",
            basis.len()
        )));
    }
    let paths = simulate_paths(model, n, seeds)?;
    let mut estimates = Estimates::zeros(maturity);
    // cash flow under the current rule, started at maturity
    let mut cash: Vec<f64> = (0..n)
        .map(|i| f.reward(maturity, paths.state(i, maturity)))
        .collect();
    for t in (0..maturity).rev() {
        let labels: Vec<f64> = match kind {
            BaselineLabels::RealizedCashFlow => cash.clone(),
            BaselineLabels::OneStep => (0..n)
                .map(|i| {
                    let x = paths.state(i, t + 1);
                    f.reward(t + 1, x).max(estimates.at(t + 1, x))
                })
                .collect(),
        };
        let xs = paths.slice(t);
        let est = PolynomialEstimate::fit(basis.clone(), &xs, &labels)?;
        if est.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid(format!(
                "non-finite regression coefficients at t={t}"
            )));
        }
        if kind == BaselineLabels::RealizedCashFlow {
            for (i, c) in cash.iter_mut().enumerate() {
                let x = paths.state(i, t);
                let ft = f.reward(t, x);
                if ft - est.value(x) >= 0.0 {
                    *c = ft;
                }
            }
        }
        estimates.by_time[t] = Continuation::Polynomial(est);
    }
    Ok(StoppingPolicy {
        estimates,
        selections: Vec::new(),
    })
}

/// Monte Carlo price with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    pub price: f64,
    pub stderr: f64,
    pub n: usize,
}

impl PriceEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            price: mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// Discounted payoffs of the policy's rule (exercise scan from `s = 1`) on
/// each evaluation path.
pub fn realized_payoffs<S, R>(policy: &S, f: &R, eval: &PathSet) -> Result<Vec<f64>>
where
    S: EstimateSequence + ?Sized,
    R: Reward + ?Sized,
{
    let maturity = policy.maturity();
    if eval.start() != 0 || eval.end() < maturity {
        return Err(invalid(format!(
            "evaluation paths cover {}..={}, need 0..={maturity}",
            eval.start(),
            eval.end()
        )));
    }
    if eval.n() == 0 {
        return Err(Error::EmptySample);
    }
    let first = 1.min(maturity);
    Ok((0..eval.n())
        .into_par_iter()
        .map(|i| {
            let p = eval.path(i);
            let tau = tau_unchecked(f, policy, first, p);
            f.reward(tau, p.at(tau))
        })
        .collect())
}

/// Lower-bound price estimate on independent evaluation paths.
pub fn lower_bound_price<S, R>(policy: &S, f: &R, eval: &PathSet) -> Result<PriceEstimate>
where
    S: EstimateSequence + ?Sized,
    R: Reward + ?Sized,
{
    Ok(PriceEstimate::from_samples(&realized_payoffs(
        policy, f, eval,
    )?))
}

/// Lower-bound price on `n_eval` paths drawn from the `Evaluation` streams
/// of `seeds`, simulated one at a time instead of stored. Equals
/// [`lower_bound_price`] on `simulate_paths_for(model, n_eval, seeds,
/// Purpose::Evaluation)`.
pub fn monte_carlo_price<S, M, R>(
    policy: &S,
    model: &M,
    f: &R,
    n_eval: usize,
    seeds: &SeedPlan,
) -> Result<PriceEstimate>
where
    S: EstimateSequence + ?Sized,
    M: MarkovModel + ?Sized,
    R: Reward + ?Sized,
{
    let maturity = policy.maturity();
    if model.steps() != maturity {
        return Err(invalid(format!(
            "policy has {maturity} steps, model {}",
            model.steps()
        )));
    }
    if n_eval == 0 {
        return Err(Error::EmptySample);
    }
    let d = model.dim();
    let first = 1.min(maturity);
    let payoffs: Vec<f64> = (0..n_eval)
        .into_par_iter()
        .map_init(
            || vec![0.0; (maturity + 1) * d],
            |buf, i| {
                buf[..d].copy_from_slice(model.initial_state());
                let mut stream = seeds.stream(Purpose::Evaluation, 0, i);
                model.extend(0, buf, &mut stream);
                let p = PathView::new(0, d, buf);
                let tau = tau_unchecked(f, policy, first, p);
                f.reward(tau, p.at(tau))
            },
        )
        .collect();
    let est = PriceEstimate::from_samples(&payoffs);
    if !est.price.is_finite() {
        return Err(invalid("non-finite evaluation payoff"));
    }
    Ok(est)
}

/// `max(f_0(x0), q_0(x0))`.
pub fn point_price<S, R>(policy: &S, f: &R, x0: &[f64]) -> f64
where
    S: EstimateSequence + ?Sized,
    R: Reward + ?Sized,
{
    f.reward(0, x0).max(policy.at(0, x0))
}
