//! Python bindings for the Bermudan pricing engine.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use bermudan::{
    fit_baseline_ls, fit_baseline_tr, ParameterGrid, PayoffKind, SeedPlan, SplitPlan, WindowGrid,
    WindowSpec,
};
use bermudan_bench::{Algorithm, ExperimentConfig, RunOptions};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn seeds(seed: u64, replicate: u64) -> SeedPlan {
    SeedPlan::new(seed).replicate(replicate)
}

/// Correlated geometric Brownian motion sampled at `steps` equally spaced
/// dates over `horizon`.
#[pyclass(name = "GbmParams", frozen)]
pub struct PyGbm(bermudan::GbmParams);

#[pymethods]
impl PyGbm {
    #[new]
    #[pyo3(signature = (x0, rate, vols, steps, horizon = 1.0, corr = None))]
    fn new(
        x0: Vec<f64>,
        rate: f64,
        vols: Vec<f64>,
        steps: usize,
        horizon: f64,
        corr: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Self> {
        let d = x0.len();
        let corr = match corr {
            Some(rows) => rows.concat(),
            None => (0..d * d)
                .map(|k| if k / d == k % d { 1.0 } else { 0.0 })
                .collect(),
        };
        bermudan::GbmParams::new(x0, rate, vols, corr, steps, horizon)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        bermudan::MarkovModel::dim(&self.0)
    }

    #[getter]
    fn steps(&self) -> usize {
        bermudan::MarkovModel::steps(&self.0)
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.0.x0().to_vec()
    }

    /// `n` paths of `steps + 1` states each, as nested lists `[i][t][k]`.
    #[pyo3(signature = (n, seed, replicate = 0))]
    fn simulate(
        &self,
        py: Python<'_>,
        n: usize,
        seed: u64,
        replicate: u64,
    ) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let paths = py
            .detach(|| bermudan::simulate_paths(&self.0, n, &seeds(seed, replicate)))
            .map_err(err)?;
        Ok((0..paths.n())
            .map(|i| {
                (paths.start()..=paths.end())
                    .map(|t| paths.state(i, t).to_vec())
                    .collect()
            })
            .collect())
    }
}

/// Discounted exercise payoff.
#[pyclass(name = "PayoffSpec", frozen)]
pub struct PyPayoff(bermudan::PayoffSpec);

#[pymethods]
impl PyPayoff {
    /// `kind` is one of `put`, `strangle-spread`,
    /// `basket-average-strangle-spread`.
    #[new]
    #[pyo3(signature = (kind, strikes, rate, steps, horizon = 1.0))]
    fn new(kind: &str, strikes: Vec<f64>, rate: f64, steps: usize, horizon: f64) -> PyResult<Self> {
        let kind: PayoffKind = kind.parse().map_err(err)?;
        bermudan::PayoffSpec::new(kind, strikes, rate, horizon, steps)
            .map(Self)
            .map_err(err)
    }

    fn intrinsic(&self, x: Vec<f64>) -> f64 {
        self.0.intrinsic(&x)
    }

    fn discounted_payoff(&self, t: usize, x: Vec<f64>) -> PyResult<f64> {
        self.0.discounted_payoff(t, &x).map_err(err)
    }

    fn payoff_bound(&self) -> f64 {
        self.0.payoff_bound()
    }
}

/// Sample split, spline grid and look-ahead windows of the policy fit.
#[pyclass(name = "EktConfig", frozen)]
pub struct PyEktConfig(bermudan::EktConfig);

#[pymethods]
impl PyEktConfig {
    /// `windows` holds integers or the string `"T-t-1"`.
    #[new]
    #[pyo3(signature = (n_l, n_t, n_v, degrees, knot_distances, domain_bound, windows = None))]
    fn new(
        n_l: usize,
        n_t: usize,
        n_v: usize,
        degrees: Vec<usize>,
        knot_distances: Vec<f64>,
        domain_bound: f64,
        windows: Option<Vec<Bound<'_, PyAny>>>,
    ) -> PyResult<Self> {
        let specs = match windows {
            None => vec![
                WindowSpec::Fixed(0),
                WindowSpec::Fixed(4),
                WindowSpec::ToMaturity,
            ],
            Some(items) => items
                .iter()
                .map(|w| match w.extract::<usize>() {
                    Ok(k) => Ok(WindowSpec::Fixed(k)),
                    Err(_) => match w.extract::<String>()?.replace(' ', "").as_str() {
                        "T-t-1" => Ok(WindowSpec::ToMaturity),
                        other => Err(err(format!("bad window '{other}'"))),
                    },
                })
                .collect::<PyResult<_>>()?,
        };
        if !(domain_bound.is_finite() && domain_bound > 0.0) {
            return Err(err("domain_bound must be positive"));
        }
        Ok(Self(bermudan::EktConfig {
            split: SplitPlan::new(n_l, n_t, n_v).map_err(err)?,
            grid: ParameterGrid::product(&degrees, &knot_distances).map_err(err)?,
            windows: WindowGrid::new(specs).map_err(err)?,
            domain_bound,
        }))
    }
}

/// A fitted stopping rule: continuation estimates for `t = 0..T`.
#[pyclass(name = "StoppingPolicy", frozen)]
pub struct PyPolicy(bermudan::StoppingPolicy);

#[pymethods]
impl PyPolicy {
    #[getter]
    fn maturity(&self) -> usize {
        self.0.maturity()
    }

    fn continuation(&self, t: usize, x: Vec<f64>) -> PyResult<f64> {
        if t >= self.0.maturity() {
            return Err(err(format!(
                "t = {t} is not before maturity {}",
                self.0.maturity()
            )));
        }
        Ok(self.0.continuation(t, &x))
    }

    /// `(t, window, degree, knot_distance)` per step; empty for baselines.
    fn selections(&self) -> Vec<(usize, usize, usize, f64)> {
        self.0
            .selections
            .iter()
            .map(|s| (s.t, s.window, s.params.degree, s.params.knot_distance))
            .collect()
    }

    /// Exercise decision at `t` in state `x`.
    fn stops(&self, payoff: &PyPayoff, t: usize, x: Vec<f64>) -> bool {
        use bermudan::Reward;
        t >= self.0.maturity() || payoff.0.reward(t, &x) >= self.0.continuation(t, &x)
    }
}

#[pyclass(name = "PriceEstimate", frozen, get_all)]
pub struct PyPrice {
    price: f64,
    stderr: f64,
    n: usize,
}

#[pymethods]
impl PyPrice {
    fn __repr__(&self) -> String {
        format!(
            "PriceEstimate(price={}, stderr={}, n={})",
            self.price, self.stderr, self.n
        )
    }
}

#[pyfunction]
#[pyo3(signature = (model, payoff, config, seed, replicate = 0))]
fn fit_policy(
    py: Python<'_>,
    model: &PyGbm,
    payoff: &PyPayoff,
    config: &PyEktConfig,
    seed: u64,
    replicate: u64,
) -> PyResult<PyPolicy> {
    py.detach(|| bermudan::fit_policy(&model.0, &payoff.0, &config.0, &seeds(seed, replicate)))
        .map(PyPolicy)
        .map_err(err)
}

/// Regression baseline on realized cash flows (`ls`) or on
/// `max(f, q_hat)` (`tr`).
#[pyfunction]
#[pyo3(signature = (kind, model, payoff, n, poly_degree, seed, replicate = 0))]
#[allow(clippy::too_many_arguments)]
fn fit_baseline(
    py: Python<'_>,
    kind: &str,
    model: &PyGbm,
    payoff: &PyPayoff,
    n: usize,
    poly_degree: u32,
    seed: u64,
    replicate: u64,
) -> PyResult<PyPolicy> {
    let s = seeds(seed, replicate);
    let fitted = match kind {
        "ls" => py.detach(|| fit_baseline_ls(&model.0, &payoff.0, n, poly_degree, &s)),
        "tr" => py.detach(|| fit_baseline_tr(&model.0, &payoff.0, n, poly_degree, &s)),
        other => return Err(err(format!("unknown baseline '{other}'"))),
    };
    fitted.map(PyPolicy).map_err(err)
}

/// Lower-bound Monte Carlo price on fresh evaluation paths.
#[pyfunction]
#[pyo3(signature = (policy, model, payoff, n_eval, seed, replicate = 0))]
fn monte_carlo_price(
    py: Python<'_>,
    policy: &PyPolicy,
    model: &PyGbm,
    payoff: &PyPayoff,
    n_eval: usize,
    seed: u64,
    replicate: u64,
) -> PyResult<PyPrice> {
    let p = py
        .detach(|| {
            bermudan::monte_carlo_price(
                &policy.0,
                &model.0,
                &payoff.0,
                n_eval,
                &seeds(seed, replicate),
            )
        })
        .map_err(err)?;
    Ok(PyPrice {
        price: p.price,
        stderr: p.stderr,
        n: p.n,
    })
}

/// `max(f_0(x0), q_hat_0(x0))`.
#[pyfunction]
fn point_price(policy: &PyPolicy, payoff: &PyPayoff, x0: Vec<f64>) -> f64 {
    bermudan::point_price(&policy.0, &payoff.0, &x0)
}

/// Binomial reference for a Bermudan put.
#[pyclass(name = "LatticePut", frozen)]
pub struct PyLatticePut(bermudan::LatticePut);

#[pymethods]
impl PyLatticePut {
    #[new]
    #[pyo3(signature = (x0, strike, rate, vol, horizon = 1.0))]
    fn new(x0: f64, strike: f64, rate: f64, vol: f64, horizon: f64) -> Self {
        Self(bermudan::LatticePut {
            x0,
            strike,
            rate,
            vol,
            horizon,
        })
    }

    /// Price with `dates` equally spaced exercise dates on `steps` lattice
    /// steps.
    fn bermudan(&self, dates: usize, steps: usize) -> PyResult<f64> {
        self.0.bermudan(dates, steps).map_err(err)
    }

    /// `(steps, price, price_2n, extrapolated)`.
    #[pyo3(signature = (dates, steps = None))]
    fn report(&self, dates: usize, steps: Option<usize>) -> PyResult<(usize, f64, f64, f64)> {
        let r = self.0.bermudan_report(dates, steps).map_err(err)?;
        Ok((r.steps, r.price, r.price_doubled, r.extrapolated()))
    }

    fn black_scholes(&self) -> PyResult<f64> {
        self.0.black_scholes().map_err(err)
    }
}

/// Finite Markov chain with exact dynamic-programming tables.
#[pyclass(name = "FiniteChain", frozen)]
pub struct PyChain(bermudan::FiniteChain);

#[pymethods]
impl PyChain {
    #[staticmethod]
    fn random(states: usize, steps: usize, seed: u64) -> PyResult<Self> {
        bermudan::FiniteChain::random(states, steps, seed)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn from_fixture(text: &str) -> PyResult<Self> {
        bermudan::FiniteChain::from_fixture(text)
            .map(Self)
            .map_err(err)
    }

    fn to_fixture(&self) -> String {
        self.0.to_fixture()
    }

    /// `(q, v)` indexed `[t][state]`.
    fn dp_exact(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let dp = self.0.dp_exact();
        (dp.q, dp.v)
    }
}

/// Runs an experiment config given as text; returns one
/// `(algorithm, replicate, price, stderr)` per row.
#[pyfunction]
#[pyo3(signature = (text, replicates = None, timing = false))]
fn run_config(
    py: Python<'_>,
    text: &str,
    replicates: Option<usize>,
    timing: bool,
) -> PyResult<Vec<(String, usize, f64, f64)>> {
    let mut cfg = ExperimentConfig::parse(text).map_err(err)?;
    if let Some(r) = replicates {
        cfg.eval.replicates = r.max(1);
    }
    let res = py
        .detach(|| bermudan_bench::run_experiment(&cfg, RunOptions { timing }))
        .map_err(err)?;
    Ok(res
        .rows
        .iter()
        .map(|r| {
            (
                Algorithm::name(r.algorithm).to_string(),
                r.replicate,
                r.price.price,
                r.price.stderr,
            )
        })
        .collect())
}

#[pymodule]
fn bermudan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGbm>()?;
    m.add_class::<PyPayoff>()?;
    m.add_class::<PyEktConfig>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyPrice>()?;
    m.add_class::<PyLatticePut>()?;
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(fit_policy, m)?)?;
    m.add_function(wrap_pyfunction!(fit_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_price, m)?)?;
    m.add_function(wrap_pyfunction!(point_price, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
