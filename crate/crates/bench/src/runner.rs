//! Replicated experiment runs and their CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use bermudan::policy::monte_carlo_price;
use bermudan::{
    fit_baseline_ls, fit_baseline_tr, fit_policy, PriceEstimate, SeedPlan, SplineParams,
    StoppingPolicy,
};

use crate::config::{Algorithm, ConfigError, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid experiment: {0}")]
    Setup(bermudan::Error),
    #[error("replicate {replicate} ({algorithm}): {source}")]
    Numeric {
        replicate: usize,
        algorithm: Algorithm,
        source: bermudan::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for numeric
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Setup(_) => 2,
            RunError::Numeric { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall-clock time per replicate; when false `elapsed_ms` is 0 so
    /// reruns give byte-identical files.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { timing: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub algorithm: Algorithm,
    pub replicate: usize,
    pub seed: u64,
    pub price: PriceEstimate,
    pub elapsed_ms: u128,
    /// `(window, params)` chosen at `t = 0..T`; empty for the baselines.
    pub selections: Vec<(usize, SplineParams)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Ordered by algorithm (as listed in the config), then replicate.
    pub rows: Vec<ReplicateResult>,
}

/// Seeds of replicate `r`.
pub fn replicate_seeds(cfg: &ExperimentConfig, r: usize) -> SeedPlan {
    SeedPlan::new(cfg.seed).replicate(r as u64)
}

/// Fits one algorithm on replicate `r`.
pub fn fit_replicate(
    cfg: &ExperimentConfig,
    algo: Algorithm,
    r: usize,
) -> Result<StoppingPolicy, RunError> {
    let model = cfg.gbm().map_err(RunError::Setup)?;
    let payoff = cfg.payoff_spec().map_err(RunError::Setup)?;
    let seeds = replicate_seeds(cfg, r);
    let numeric = |source| RunError::Numeric {
        replicate: r,
        algorithm: algo,
        source,
    };
    match algo {
        Algorithm::Ekt => {
            let ekt = cfg.ekt().map_err(RunError::Setup)?;
            fit_policy(&model, &payoff, &ekt, &seeds).map_err(numeric)
        }
        Algorithm::Ls => fit_baseline_ls(
            &model,
            &payoff,
            cfg.algo.baseline_n,
            cfg.algo.poly_degree,
            &seeds,
        )
        .map_err(numeric),
        Algorithm::Tr => fit_baseline_tr(
            &model,
            &payoff,
            cfg.algo.baseline_n,
            cfg.algo.poly_degree,
            &seeds,
        )
        .map_err(numeric),
    }
}

/// Fits and prices one algorithm on replicate `r`.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    algo: Algorithm,
    r: usize,
    opts: RunOptions,
) -> Result<ReplicateResult, RunError> {
    let start = Instant::now();
    let policy = fit_replicate(cfg, algo, r)?;
    let model = cfg.gbm().map_err(RunError::Setup)?;
    let payoff = cfg.payoff_spec().map_err(RunError::Setup)?;
    let seeds = replicate_seeds(cfg, r);
    let price =
        monte_carlo_price(&policy, &model, &payoff, cfg.eval.n_eval, &seeds).map_err(|source| {
            RunError::Numeric {
                replicate: r,
                algorithm: algo,
                source,
            }
        })?;
    let elapsed_ms = if opts.timing {
        start.elapsed().as_millis()
    } else {
        0
    };
    Ok(ReplicateResult {
        algorithm: algo,
        replicate: r,
        seed: seeds.master,
        price,
        elapsed_ms,
        selections: policy
            .selections
            .iter()
            .map(|s| (s.window, s.params))
            .collect(),
    })
}

/// Runs every listed algorithm on every replicate. Replicates run in
/// parallel; the result does not depend on scheduling.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    opts: RunOptions,
) -> Result<ExperimentResult, RunError> {
    cfg.gbm().map_err(RunError::Setup)?;
    cfg.payoff_spec().map_err(RunError::Setup)?;
    let jobs: Vec<(Algorithm, usize)> = cfg
        .algo
        .names
        .iter()
        .flat_map(|&a| (0..cfg.eval.replicates).map(move |r| (a, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(a, r)| run_replicate(cfg, a, r, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        rows,
    })
}

pub const CSV_HEADER: [&str; 9] = [
    "experiment",
    "algorithm",
    "replicate",
    "price",
    "stderr",
    "n",
    "n_eval",
    "seed",
    "elapsed_ms",
];

impl ExperimentResult {
    pub fn rows_for(&self, algo: Algorithm) -> impl Iterator<Item = &ReplicateResult> {
        self.rows.iter().filter(move |r| r.algorithm == algo)
    }

    /// CSV text for one algorithm.
    pub fn csv(&self, algo: Algorithm) -> Result<String, RunError> {
        let cfg = &self.config;
        let steps = cfg.model.steps;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
        if algo == Algorithm::Ekt {
            for t in 0..steps {
                header.extend([format!("w_t{t}"), format!("M_t{t}"), format!("alpha_t{t}")]);
            }
        }
        w.write_record(&header)?;
        let n = match algo {
            Algorithm::Ekt => cfg.algo.n,
            _ => cfg.algo.baseline_n,
        };
        for row in self.rows_for(algo) {
            let mut rec = vec![
                cfg.name.clone(),
                algo.name().to_string(),
                row.replicate.to_string(),
                row.price.price.to_string(),
                row.price.stderr.to_string(),
                n.to_string(),
                row.price.n.to_string(),
                row.seed.to_string(),
                row.elapsed_ms.to_string(),
            ];
            for (wdw, p) in &row.selections {
                rec.extend([
                    wdw.to_string(),
                    p.degree.to_string(),
                    p.knot_distance.to_string(),
                ]);
            }
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| RunError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Per-time histogram of chosen windows, `t,window,count`.
    pub fn window_histogram(&self) -> BTreeMap<(usize, usize), usize> {
        let mut h = BTreeMap::new();
        for row in self.rows_for(Algorithm::Ekt) {
            for (t, (w, _)) in row.selections.iter().enumerate() {
                *h.entry((t, *w)).or_insert(0) += 1;
            }
        }
        h
    }

    /// Per-time histogram of chosen `(M, alpha)`, keyed by the bit pattern of
    /// `alpha` to keep the key ordered and exact.
    pub fn parameter_histogram(&self) -> BTreeMap<(usize, usize, u64), usize> {
        let mut h = BTreeMap::new();
        for row in self.rows_for(Algorithm::Ekt) {
            for (t, (_, p)) in row.selections.iter().enumerate() {
                *h.entry((t, p.degree, p.knot_distance.to_bits()))
                    .or_insert(0) += 1;
            }
        }
        h
    }

    /// Algorithm-specific metadata followed by the resolved config.
    pub fn metadata(&self, algo: Algorithm) -> String {
        let cfg = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "# algorithm = {}", algo.name());
        match algo {
            Algorithm::Ekt => {
                let a = &cfg.algo;
                let _ = writeln!(out, "# n = {}", a.n);
                let _ = writeln!(out, "# split = {}/{}/{}", a.n_l, a.n_t, a.n_v);
                let _ = writeln!(
                    out,
                    "# parameter_grid_size = {}",
                    a.degrees.len() * a.knot_distances.len()
                );
                let _ = writeln!(out, "# domain_bound = {:?}", a.domain_bound);
            }
            Algorithm::Ls | Algorithm::Tr => {
                let _ = writeln!(out, "# n = {}", cfg.algo.baseline_n);
                let _ = writeln!(out, "# poly_degree = {}", cfg.algo.poly_degree);
            }
        }
        let _ = writeln!(out, "# quantile convention = nearest-rank");
        out.push_str(&cfg.to_text());
        out
    }

    /// Writes `<name>_<algo>.csv`, `<name>_<algo>.meta`, the selection
    /// histograms for ekt and `<name>.resolved.ini`; returns the paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| RunError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let name = &self.config.name;
        let mut written = Vec::new();
        let mut put = |file: String, text: String| -> Result<(), RunError> {
            let path = dir.join(file);
            fs::write(&path, text).map_err(io(&path))?;
            written.push(path);
            Ok(())
        };
        put(format!("{name}.resolved.ini"), self.config.to_text())?;
        for &algo in &self.config.algo.names {
            put(format!("{name}_{algo}.csv"), self.csv(algo)?)?;
            put(format!("{name}_{algo}.meta"), self.metadata(algo))?;
            if algo == Algorithm::Ekt {
                let mut s = String::from("t,window,count\n");
                for ((t, w), c) in self.window_histogram() {
                    let _ = writeln!(s, "{t},{w},{c}");
                }
                put(format!("{name}_ekt_windows.csv"), s)?;
                let mut s = String::from("t,M,alpha,count\n");
                for ((t, m, a), c) in self.parameter_histogram() {
                    let _ = writeln!(s, "{t},{m},{},{c}", f64::from_bits(a));
                }
                put(format!("{name}_ekt_params.csv"), s)?;
            }
        }
        Ok(written)
    }
}
