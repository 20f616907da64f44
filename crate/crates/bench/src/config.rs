//! Experiment configuration files.
//!
//! ```text
//! [experiment]
//! name = put
//! seed = 7
//!
//! [model]
//! x0 = 100
//! rate = 0.05
//! vols = 0.25
//! steps = 12
//!
//! [payoff]
//! kind = put
//! strikes = 90
//!
//! [algo]
//! name = ekt, ls, tr
//! n = 10000
//! knot_distances = 50, 25, 12.5, 6.25
//! domain_bound = 300
//! ```
//!
//! Lines are `key = value`; lists are comma separated; `#` starts a comment.
//! Scalars given for `x0` and `vols` are broadcast to `dim`; `corr` is either
//! the full row-major matrix or one equicorrelation coefficient.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use bermudan::{
    EktConfig, GbmParams, ParameterGrid, PayoffKind, PayoffSpec, SplitPlan, WindowGrid, WindowSpec,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Field {
        section: String,
        key: String,
        msg: String,
    },
}

fn field(section: &str, key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        section: section.into(),
        key: key.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Ekt,
    Ls,
    Tr,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ekt => "ekt",
            Algorithm::Ls => "ls",
            Algorithm::Tr => "tr",
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ekt" => Ok(Algorithm::Ekt),
            "ls" => Ok(Algorithm::Ls),
            "tr" => Ok(Algorithm::Tr),
            other => Err(format!(
                "unknown algorithm '{other}' (expected ekt, ls or tr)"
            )),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBlock {
    pub x0: Vec<f64>,
    pub rate: f64,
    pub vols: Vec<f64>,
    /// Full row-major correlation matrix.
    pub corr: Vec<f64>,
    pub steps: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffBlock {
    pub kind: PayoffKind,
    pub strikes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoBlock {
    pub names: Vec<Algorithm>,
    pub n: usize,
    pub n_l: usize,
    pub n_t: usize,
    pub n_v: usize,
    pub degrees: Vec<usize>,
    pub knot_distances: Vec<f64>,
    pub windows: Vec<WindowSpec>,
    pub domain_bound: f64,
    pub poly_degree: u32,
    /// Path count of the regression baselines.
    pub baseline_n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalBlock {
    pub n_eval: usize,
    pub replicates: usize,
}

/// Fully resolved experiment, defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub model: ModelBlock,
    pub payoff: PayoffBlock,
    pub algo: AlgoBlock,
    pub eval: EvalBlock,
}

/// Raw `section -> key -> (line, value)` table.
type Table = BTreeMap<String, BTreeMap<String, (usize, String)>>;

const KEYS: &[(&str, &[&str])] = &[
    ("experiment", &["name", "seed"]),
    (
        "model",
        &["dim", "x0", "rate", "vols", "corr", "steps", "horizon"],
    ),
    ("payoff", &["kind", "strikes"]),
    (
        "algo",
        &[
            "name",
            "n",
            "n_l",
            "n_t",
            "n_v",
            "degrees",
            "knot_distances",
            "windows",
            "domain_bound",
            "poly_degree",
            "baseline_n",
        ],
    ),
    ("eval", &["n_eval", "replicates"]),
];

fn tokenize(text: &str) -> Result<Table, ConfigError> {
    let mut table = Table::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Line {
                    line,
                    msg: format!("malformed section header '{content}'"),
                })?
                .trim()
                .to_string();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("unknown section [{name}]"),
                });
            }
            if table.contains_key(&name) {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("section [{name}] appears twice"),
                });
            }
            table.insert(name.clone(), BTreeMap::new());
            section = Some(name);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Line {
                line,
                msg: format!("expected 'key = value', found '{content}'"),
            });
        };
        let Some(sec) = &section else {
            return Err(ConfigError::Line {
                line,
                msg: "key outside of any section".into(),
            });
        };
        let key = key.trim().to_string();
        let allowed = KEYS
            .iter()
            .find(|(s, _)| s == sec)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError::Line {
                line,
                msg: format!("unknown key '{key}' in [{sec}]"),
            });
        }
        let entries = table.get_mut(sec).expect("section inserted");
        if entries.contains_key(&key) {
            return Err(ConfigError::Line {
                line,
                msg: format!("duplicate key '{key}'"),
            });
        }
        entries.insert(key, (line, value.trim().to_string()));
    }
    Ok(table)
}

struct Reader<'a> {
    table: &'a Table,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&(usize, String)> {
        self.table.get(section).and_then(|s| s.get(key))
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| ConfigError::Line {
                line: *line,
                msg: format!("[{section}] {key}: cannot parse '{v}'"),
            }),
        }
    }

    fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError> {
        self.parse(section, key)?
            .ok_or_else(|| field(section, key, "required key is missing"))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse().map_err(|_| ConfigError::Line {
                        line: *line,
                        msg: format!("[{section}] {key}: cannot parse list item '{item}'"),
                    })
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.raw(section, key).map(|(l, _)| *l)
    }
}

fn parse_window(item: &str) -> Option<WindowSpec> {
    let compact: String = item.chars().filter(|c| !c.is_whitespace()).collect();
    match compact.to_ascii_lowercase().as_str() {
        "t-t-1" | "max" => Some(WindowSpec::ToMaturity),
        other => other.parse().ok().map(WindowSpec::Fixed),
    }
}

fn broadcast(section: &str, key: &str, v: Vec<f64>, d: usize) -> Result<Vec<f64>, ConfigError> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        k if k == d => Ok(v),
        k => Err(field(
            section,
            key,
            format!("has {k} entries, expected 1 or {d}"),
        )),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table = tokenize(text)?;
        let r = Reader { table: &table };

        let name: String = r
            .parse("experiment", "name")?
            .unwrap_or_else(|| "experiment".into());
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(field(
                "experiment",
                "name",
                "use letters, digits, '-' and '_' only",
            ));
        }
        let seed = r.parse("experiment", "seed")?.unwrap_or(1);

        let x0: Vec<f64> = r
            .list("model", "x0")?
            .ok_or_else(|| field("model", "x0", "required key is missing"))?;
        let vols: Vec<f64> = r
            .list("model", "vols")?
            .ok_or_else(|| field("model", "vols", "required key is missing"))?;
        let dim: usize = r.parse("model", "dim")?.unwrap_or(x0.len().max(vols.len()));
        if dim == 0 {
            return Err(field("model", "dim", "must be at least 1"));
        }
        let x0 = broadcast("model", "x0", x0, dim)?;
        let vols = broadcast("model", "vols", vols, dim)?;
        let corr = match r.list::<f64>("model", "corr")? {
            None => identity(dim),
            Some(c) if c.len() == 1 => {
                let rho = c[0];
                (0..dim * dim)
                    .map(|k| if k / dim == k % dim { 1.0 } else { rho })
                    .collect()
            }
            Some(c) if c.len() == dim * dim => c,
            Some(c) => {
                return Err(field(
                    "model",
                    "corr",
                    format!("has {} entries, expected 1 or {}", c.len(), dim * dim),
                ))
            }
        };
        let model = ModelBlock {
            x0,
            rate: r.required("model", "rate")?,
            vols,
            corr,
            steps: r.required("model", "steps")?,
            horizon: r.parse("model", "horizon")?.unwrap_or(1.0),
        };

        let kind: PayoffKind = match r.raw("payoff", "kind") {
            None => return Err(field("payoff", "kind", "required key is missing")),
            Some((line, v)) => v.parse().map_err(|e: bermudan::Error| ConfigError::Line {
                line: *line,
                msg: format!("[payoff] kind: {e}"),
            })?,
        };
        let payoff = PayoffBlock {
            kind,
            strikes: r
                .list("payoff", "strikes")?
                .ok_or_else(|| field("payoff", "strikes", "required key is missing"))?,
        };

        let names: Vec<Algorithm> = match r.raw("algo", "name") {
            None => return Err(field("algo", "name", "required key is missing")),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, String>>()
                .map_err(|msg| ConfigError::Line {
                    line: *line,
                    msg: format!("[algo] name: {msg}"),
                })?,
        };
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(field("algo", "name", "algorithm listed twice"));
        }
        let n: usize = r.required("algo", "n")?;
        let third = n / 3;
        let n_t = r.parse("algo", "n_t")?.unwrap_or(third);
        let n_v = r.parse("algo", "n_v")?.unwrap_or(third);
        let n_l = r
            .parse("algo", "n_l")?
            .unwrap_or(n.saturating_sub(n_t + n_v));
        let windows = match r.raw("algo", "windows") {
            None => vec![
                WindowSpec::Fixed(0),
                WindowSpec::Fixed(4),
                WindowSpec::ToMaturity,
            ],
            Some((line, v)) => v
                .split(',')
                .map(|item| {
                    parse_window(item).ok_or_else(|| ConfigError::Line {
                        line: *line,
                        msg: format!(
                            "[algo] windows: cannot parse '{}' (integer or T-t-1)",
                            item.trim()
                        ),
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let uses_ekt = names.contains(&Algorithm::Ekt);
        let knot_distances = r.list("algo", "knot_distances")?.unwrap_or_default();
        let domain_bound = r.parse("algo", "domain_bound")?;
        if uses_ekt && knot_distances.is_empty() {
            return Err(field("algo", "knot_distances", "required for ekt"));
        }
        if uses_ekt && domain_bound.is_none() {
            return Err(field("algo", "domain_bound", "required for ekt"));
        }
        let algo = AlgoBlock {
            names,
            n,
            n_l,
            n_t,
            n_v,
            degrees: r.list("algo", "degrees")?.unwrap_or_else(|| vec![0, 1, 2]),
            knot_distances,
            windows,
            domain_bound: domain_bound.unwrap_or(0.0),
            poly_degree: r.parse("algo", "poly_degree")?.unwrap_or(3),
            baseline_n: r.parse("algo", "baseline_n")?.unwrap_or(n),
        };
        let eval = EvalBlock {
            n_eval: r.parse("eval", "n_eval")?.unwrap_or(100_000),
            replicates: r.parse("eval", "replicates")?.unwrap_or(10),
        };
        let cfg = ExperimentConfig {
            name,
            seed,
            model,
            payoff,
            algo,
            eval,
        };
        cfg.validate(&r)?;
        Ok(cfg)
    }

    fn validate(&self, r: &Reader<'_>) -> Result<(), ConfigError> {
        let at = |section: &str, key: &str, msg: String| match r.line_of(section, key) {
            Some(line) => ConfigError::Line {
                line,
                msg: format!("[{section}] {key}: {msg}"),
            },
            None => field(section, key, msg),
        };
        self.gbm().map_err(|e| at("model", "x0", e.to_string()))?;
        self.payoff_spec()
            .map_err(|e| at("payoff", "strikes", e.to_string()))?;
        let a = &self.algo;
        if self.uses(Algorithm::Ekt) {
            if a.n_l + a.n_t + a.n_v != a.n {
                return Err(at(
                    "algo",
                    "n",
                    format!(
                        "split {} + {} + {} does not sum to n = {}",
                        a.n_l, a.n_t, a.n_v, a.n
                    ),
                ));
            }
            self.ekt()
                .map_err(|e| at("algo", "knot_distances", e.to_string()))?;
        }
        if a.baseline_n == 0 || a.n == 0 {
            return Err(at("algo", "n", "must be positive".into()));
        }
        if self.eval.n_eval == 0 {
            return Err(at("eval", "n_eval", "must be positive".into()));
        }
        if self.eval.replicates == 0 {
            return Err(at("eval", "replicates", "must be positive".into()));
        }
        Ok(())
    }

    pub fn uses(&self, algo: Algorithm) -> bool {
        self.algo.names.contains(&algo)
    }

    pub fn dim(&self) -> usize {
        self.model.x0.len()
    }

    pub fn gbm(&self) -> bermudan::Result<GbmParams> {
        let m = &self.model;
        GbmParams::new(
            m.x0.clone(),
            m.rate,
            m.vols.clone(),
            m.corr.clone(),
            m.steps,
            m.horizon,
        )
    }

    pub fn payoff_spec(&self) -> bermudan::Result<PayoffSpec> {
        let m = &self.model;
        PayoffSpec::new(
            self.payoff.kind,
            self.payoff.strikes.clone(),
            m.rate,
            m.horizon,
            m.steps,
        )
    }

    pub fn ekt(&self) -> bermudan::Result<EktConfig> {
        let a = &self.algo;
        if !(a.domain_bound.is_finite() && a.domain_bound > 0.0) {
            return Err(bermudan::Error::InvalidParameter(
                "domain_bound must be positive".into(),
            ));
        }
        Ok(EktConfig {
            split: SplitPlan::new(a.n_l, a.n_t, a.n_v)?,
            grid: ParameterGrid::product(&a.degrees, &a.knot_distances)?,
            windows: WindowGrid::new(a.windows.clone())?,
            domain_bound: a.domain_bound,
        })
    }

    /// The resolved configuration in the input format; parsing it back gives
    /// an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let m = &self.model;
        let a = &self.algo;
        let _ = writeln!(
            out,
            "[experiment]\nname = {}\nseed = {}\n",
            self.name, self.seed
        );
        let _ = writeln!(
            out,
            "[model]\ndim = {}\nx0 = {}\nrate = {:?}\nvols = {}\ncorr = {}\nsteps = {}\nhorizon = {:?}\n",
            self.dim(),
            list(&m.x0),
            m.rate,
            list(&m.vols),
            list(&m.corr),
            m.steps,
            m.horizon
        );
        let _ = writeln!(
            out,
            "[payoff]\nkind = {}\nstrikes = {}\n",
            self.payoff.kind.name(),
            list(&self.payoff.strikes)
        );
        let names: Vec<&str> = a.names.iter().map(|n| n.name()).collect();
        let degrees: Vec<String> = a.degrees.iter().map(|d| d.to_string()).collect();
        let windows: Vec<String> = a
            .windows
            .iter()
            .map(|w| match w {
                WindowSpec::Fixed(k) => k.to_string(),
                WindowSpec::ToMaturity => "T-t-1".into(),
            })
            .collect();
        let _ = writeln!(
            out,
            "[algo]\nname = {}\nn = {}\nn_l = {}\nn_t = {}\nn_v = {}\ndegrees = {}",
            names.join(", "),
            a.n,
            a.n_l,
            a.n_t,
            a.n_v,
            degrees.join(", ")
        );
        if !a.knot_distances.is_empty() {
            let _ = writeln!(out, "knot_distances = {}", list(&a.knot_distances));
        }
        let _ = writeln!(out, "windows = {}", windows.join(", "));
        if a.domain_bound > 0.0 {
            let _ = writeln!(out, "domain_bound = {:?}", a.domain_bound);
        }
        let _ = writeln!(
            out,
            "poly_degree = {}\nbaseline_n = {}\n",
            a.poly_degree, a.baseline_n
        );
        let _ = write!(
            out,
            "[eval]\nn_eval = {}\nreplicates = {}\n",
            self.eval.n_eval, self.eval.replicates
        );
        out
    }
}

fn identity(d: usize) -> Vec<f64> {
    (0..d * d)
        .map(|k| if k / d == k % d { 1.0 } else { 0.0 })
        .collect()
}
