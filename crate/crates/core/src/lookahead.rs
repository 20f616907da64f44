//! Look-ahead payoffs and recursive stopping rules.
//!
//! Given continuation candidates `h_s`, the rule exercises at the first time
//! `s` with `f_s(x_s) >= h_s(x_s)` (ties exercise). The look-ahead payoff over
//! a window `t..=t+w` returns the reward at that exercise time, or the
//! residual value `h_{t+w}(x_{t+w})` when the window ends first.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{PathSet, PathView};
use crate::payoff::Reward;
use crate::regress::{Continuation, Evaluate};

/// Continuation candidates `h_t` for `t = 0..=maturity()`, with `h_T = 0`.
pub trait EstimateSequence: Sync {
    fn maturity(&self) -> usize;

    /// `h_t(x)` for `t < maturity()`.
    fn estimate(&self, t: usize, x: &[f64]) -> f64;

    /// `h_t(x)` with the terminal convention applied.
    fn at(&self, t: usize, x: &[f64]) -> f64 {
        if t >= self.maturity() {
            0.0
        } else {
            self.estimate(t, x)
        }
    }
}

/// Estimates stored per time index.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub by_time: Vec<Continuation>,
}

impl Estimates {
    /// All-zero candidates up to `maturity`.
    pub fn zeros(maturity: usize) -> Self {
        Self {
            by_time: vec![Continuation::Constant(0.0); maturity],
        }
    }
}

impl EstimateSequence for Estimates {
    fn maturity(&self) -> usize {
        self.by_time.len()
    }

    fn estimate(&self, t: usize, x: &[f64]) -> f64 {
        self.by_time[t].value(x)
    }
}

/// `base` with the candidate at one time index replaced.
pub struct Override<'a, S: ?Sized, E: ?Sized> {
    pub base: &'a S,
    pub time: usize,
    pub candidate: &'a E,
}

impl<S: EstimateSequence + ?Sized, E: Evaluate + Sync + ?Sized> EstimateSequence
    for Override<'_, S, E>
{
    fn maturity(&self) -> usize {
        self.base.maturity()
    }

    fn estimate(&self, t: usize, x: &[f64]) -> f64 {
        if t == self.time {
            self.candidate.value(x)
        } else {
            self.base.estimate(t, x)
        }
    }
}

/// Closure-backed sequence, handy for exact tables.
pub struct FnSequence<F> {
    pub maturity: usize,
    pub f: F,
}

impl<F: Fn(usize, &[f64]) -> f64 + Sync> EstimateSequence for FnSequence<F> {
    fn maturity(&self) -> usize {
        self.maturity
    }

    fn estimate(&self, t: usize, x: &[f64]) -> f64 {
        (self.f)(t, x)
    }
}

fn covers(path: &PathView<'_>, from: usize, to: usize) -> Result<()> {
    if path.start > from || path.end() < to {
        return Err(Error::LengthMismatch(format!(
            "path covers {}..={} but {from}..={to} is required",
            path.start,
            path.end()
        )));
    }
    Ok(())
}

/// Look-ahead payoff over `t..=t+w` along `path`.
pub fn theta<R, S>(f: &R, hs: &S, t: usize, w: usize, path: PathView<'_>) -> Result<f64>
where
    R: Reward + ?Sized,
    S: EstimateSequence + ?Sized,
{
    let last = t + w;
    if last > hs.maturity() {
        return Err(invalid(format!(
            "window {t}..={last} beyond maturity {}",
            hs.maturity()
        )));
    }
    covers(&path, t, last)?;
    Ok(theta_unchecked(f, hs, t, last, path))
}

fn theta_unchecked<R, S>(f: &R, hs: &S, t: usize, last: usize, path: PathView<'_>) -> f64
where
    R: Reward + ?Sized,
    S: EstimateSequence + ?Sized,
{
    for s in t..=last {
        let x = path.at(s);
        let fs = f.reward(s, x);
        if fs - hs.at(s, x) >= 0.0 {
            return fs;
        }
    }
    hs.at(last, path.at(last))
}

/// First `s` in `t..=T` with `f_s(x_s) >= h_s(x_s)`; `T` if none earlier.
pub fn tau_stopping<R, S>(f: &R, hs: &S, t: usize, path: PathView<'_>) -> Result<usize>
where
    R: Reward + ?Sized,
    S: EstimateSequence + ?Sized,
{
    let maturity = hs.maturity();
    if t > maturity {
        return Err(invalid(format!("start {t} beyond maturity {maturity}")));
    }
    covers(&path, t, maturity)?;
    Ok(tau_unchecked(f, hs, t, path))
}

pub(crate) fn tau_unchecked<R, S>(f: &R, hs: &S, t: usize, path: PathView<'_>) -> usize
where
    R: Reward + ?Sized,
    S: EstimateSequence + ?Sized,
{
    let maturity = hs.maturity();
    for s in t..maturity {
        let x = path.at(s);
        if f.reward(s, x) - hs.estimate(s, x) >= 0.0 {
            return s;
        }
    }
    maturity
}

/// Regression labels for time `t` and window `w`: the look-ahead payoff over
/// `t+1..=t+w+1` along each fresh path.
pub fn build_labels<R, S>(f: &R, hs: &S, fresh: &PathSet, t: usize, w: usize) -> Result<Vec<f64>>
where
    R: Reward + ?Sized,
    S: EstimateSequence + ?Sized,
{
    let last = t + w + 1;
    if last > hs.maturity() {
        return Err(invalid(format!(
            "window {w} at t={t} reaches past maturity {}",
            hs.maturity()
        )));
    }
    if fresh.start() > t + 1 || fresh.end() < last {
        return Err(invalid(format!(
            "fresh paths cover {}..={}, labels need {}..={last}",
            fresh.start(),
            fresh.end(),
            t + 1
        )));
    }
    Ok((0..fresh.n())
        .into_par_iter()
        .map(|i| theta_unchecked(f, hs, t + 1, last, fresh.path(i)))
        .collect())
}
