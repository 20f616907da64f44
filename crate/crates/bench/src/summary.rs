//! Boxplot statistics of replicate prices.
//!
//! Quantiles use the nearest-rank convention: for sorted values
//! `x_1 <= ... <= x_n`, the `p`-quantile is `x_k` with `k = ceil(p n)`
//! (at least 1).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum SummaryError {
    #[error("no input rows")]
    Empty,
    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path} row {row}: bad price '{value}'")]
    BadPrice {
        path: PathBuf,
        row: usize,
        value: String,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Nearest-rank `p`-quantile of sorted values.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub experiment: String,
    pub algorithm: String,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Standard error of the mean of the replicate prices.
    pub se: f64,
}

impl GroupSummary {
    pub fn from_prices(experiment: &str, algorithm: &str, prices: &[f64]) -> Option<Self> {
        if prices.is_empty() {
            return None;
        }
        let mut v = prices.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            experiment: experiment.into(),
            algorithm: algorithm.into(),
            count: n,
            min: v[0],
            q1: nearest_rank(&v, 0.25),
            median: nearest_rank(&v, 0.5),
            q3: nearest_rank(&v, 0.75),
            max: v[n - 1],
            mean,
            se,
        })
    }
}

/// Groups `(experiment, algorithm, price)` triples; output is sorted by
/// group key.
pub fn summarize_rows<I>(rows: I) -> Result<Vec<GroupSummary>, SummaryError>
where
    I: IntoIterator<Item = (String, String, f64)>,
{
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (e, a, p) in rows {
        groups.entry((e, a)).or_default().push(p);
    }
    if groups.is_empty() {
        return Err(SummaryError::Empty);
    }
    Ok(groups
        .iter()
        .filter_map(|((e, a), p)| GroupSummary::from_prices(e, a, p))
        .collect())
}

/// Reads result CSVs and summarizes them per `(experiment, algorithm)`.
pub fn summarize<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<GroupSummary>, SummaryError> {
    let mut rows = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let wrap = |source| SummaryError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(wrap)?;
        let headers = rdr.headers().map_err(wrap)?.clone();
        let col = |column: &'static str| {
            headers
                .iter()
                .position(|h| h == column)
                .ok_or(SummaryError::MissingColumn {
                    path: path.to_path_buf(),
                    column,
                })
        };
        let (ie, ia, ip) = (col("experiment")?, col("algorithm")?, col("price")?);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(wrap)?;
            let value = &rec[ip];
            let price: f64 = value.parse().map_err(|_| SummaryError::BadPrice {
                path: path.to_path_buf(),
                row: i + 1,
                value: value.to_string(),
            })?;
            rows.push((rec[ie].to_string(), rec[ia].to_string(), price));
        }
    }
    summarize_rows(rows)
}

pub fn to_csv(summary: &[GroupSummary]) -> String {
    let mut out = String::from("experiment,algorithm,count,min,q1,median,q3,max,mean,se\n");
    for g in summary {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            g.experiment, g.algorithm, g.count, g.min, g.q1, g.median, g.q3, g.max, g.mean, g.se
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(prices: &[f64]) -> Vec<(String, String, f64)> {
        prices
            .iter()
            .map(|&p| ("put".to_string(), "ekt".to_string(), p))
            .collect()
    }

    #[test]
    fn single_row() {
        let s = summarize_rows(rows(&[3.5])).unwrap();
        let g = &s[0];
        assert_eq!([g.min, g.q1, g.median, g.q3, g.max], [3.5; 5]);
        assert_eq!(g.se, 0.0);
    }

    #[test]
    fn one_to_five() {
        let g = &summarize_rows(rows(&[4.0, 1.0, 5.0, 3.0, 2.0])).unwrap()[0];
        assert_eq!((g.q1, g.median, g.q3), (2.0, 3.0, 4.0));
        assert_eq!((g.min, g.max, g.mean), (1.0, 5.0, 3.0));
    }

    #[test]
    fn stable_under_permutation() {
        let mut r = rows(&[1.0, 7.0, 2.0]);
        r.push(("put".into(), "ls".into(), 4.0));
        r.push(("basket".into(), "tr".into(), 0.5));
        let a = summarize_rows(r.clone()).unwrap();
        r.reverse();
        assert_eq!(a, summarize_rows(r).unwrap());
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].experiment, "basket");
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(
            summarize_rows(Vec::new()),
            Err(SummaryError::Empty)
        ));
    }

    #[test]
    fn nearest_rank_edges() {
        let v = [1.0, 2.0];
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
        assert_eq!(nearest_rank(&v, 0.5), 1.0);
        assert_eq!(nearest_rank(&v, 0.51), 2.0);
        assert_eq!(nearest_rank(&v, 1.0), 2.0);
    }
}
