//! Exact reference solutions for small instances.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::model::MarkovModel;
use crate::payoff::Reward;
use crate::rng::{Purpose, SeedPlan, Stream};

const ROW_SUM_TOL: f64 = 1e-12;

/// Time-inhomogeneous Markov chain on finitely many points of `R^d`, with
/// discounted rewards tabulated per time and state.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    states: Vec<f64>,
    dim: usize,
    /// `transitions[t]`: row-major `S x S` law of `X_{t+1}` given `X_t`.
    transitions: Vec<Vec<f64>>,
    /// `rewards[t][s]` for `t = 0..=T`.
    rewards: Vec<Vec<f64>>,
    initial: usize,
    bound: f64,
}

/// `q_t(s)` and `v_t(s)` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTables {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl FiniteChain {
    pub fn new(
        states: Vec<f64>,
        dim: usize,
        transitions: Vec<Vec<f64>>,
        rewards: Vec<Vec<f64>>,
        initial: usize,
    ) -> Result<Self> {
        if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) {
            return Err(invalid("state vectors do not match the dimension"));
        }
        let s = states.len() / dim;
        if transitions.is_empty() {
            return Err(invalid("chain needs at least one transition"));
        }
        if rewards.len() != transitions.len() + 1 {
            return Err(invalid(format!(
                "{} transition matrices need {} reward rows, got {}",
                transitions.len(),
                transitions.len() + 1,
                rewards.len()
            )));
        }
        if initial >= s {
            return Err(invalid(format!("initial state {initial} out of range")));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite state value"));
        }
        for i in 0..s {
            for j in 0..i {
                if states[i * dim..(i + 1) * dim] == states[j * dim..(j + 1) * dim] {
                    return Err(invalid(format!("states {j} and {i} coincide")));
                }
            }
        }
        for (t, p) in transitions.iter().enumerate() {
            if p.len() != s * s {
                return Err(Error::DimensionMismatch {
                    expected: s * s,
                    got: p.len(),
                });
            }
            for (row, r) in p.chunks_exact(s).enumerate() {
                if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return Err(invalid(format!(
                        "transition {t} row {row} has an entry outside [0, 1]"
                    )));
                }
                let sum: f64 = r.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(invalid(format!("transition {t} row {row} sums to {sum}")));
                }
            }
        }
        let mut bound: f64 = 0.0;
        for r in &rewards {
            if r.len() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    got: r.len(),
                });
            }
            if r.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(invalid("rewards must be finite and nonnegative"));
            }
            bound = r.iter().cloned().fold(bound, f64::max);
        }
        Ok(Self {
            states,
            dim,
            transitions,
            rewards,
            initial,
            bound,
        })
    }

    /// Random chain with `s` equally spaced one-dimensional states in
    /// `[0.5, 1.5]`, random row-stochastic transitions and rewards in
    /// `[0, 1)`.
    pub fn random(s: usize, steps: usize, seed: u64) -> Result<Self> {
        if s == 0 || steps == 0 {
            return Err(invalid("need at least one state and one step"));
        }
        let plan = SeedPlan::new(seed);
        let mut g = plan.stream(Purpose::Custom(0), 0, 0);
        let states: Vec<f64> = (0..s)
            .map(|i| {
                if s == 1 {
                    1.0
                } else {
                    0.5 + i as f64 / (s - 1) as f64
                }
            })
            .collect();
        let transitions = (0..steps)
            .map(|_| {
                let mut p: Vec<f64> = (0..s * s).map(|_| g.uniform()).collect();
                for row in p.chunks_exact_mut(s) {
                    let sum: f64 = row.iter().sum();
                    row.iter_mut().for_each(|x| *x /= sum);
                    // absorb rounding so the row sums to one exactly enough
                    let rest: f64 = row[..s - 1].iter().sum();
                    row[s - 1] = (1.0 - rest).max(0.0);
                }
                p
            })
            .collect();
        let rewards = (0..=steps)
            .map(|_| (0..s).map(|_| g.uniform()).collect())
            .collect();
        Self::new(states, 1, transitions, rewards, 0)
    }

    pub fn num_states(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn maturity(&self) -> usize {
        self.transitions.len()
    }

    pub fn state(&self, s: usize) -> &[f64] {
        &self.states[s * self.dim..(s + 1) * self.dim]
    }

    pub fn transition(&self, t: usize) -> &[f64] {
        &self.transitions[t]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    /// Index of the state closest to `x`.
    pub fn index_of(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for s in 0..self.num_states() {
            let d: f64 = self
                .state(s)
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            if d < best_d {
                best = s;
                best_d = d;
            }
        }
        best
    }

    fn next_state(&self, t: usize, s: usize, u: f64) -> usize {
        let n = self.num_states();
        let row = &self.transitions[t][s * n..(s + 1) * n];
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // rounding left a sliver above the cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(n - 1)
    }

    /// Backward recursion `q_T = 0`, `q_t = P_t max(f_{t+1}, q_{t+1})`,
    /// `v_t = max(f_t, q_t)`.
    pub fn dp_exact(&self) -> DpTables {
        let n = self.num_states();
        let big_t = self.maturity();
        let mut q = vec![vec![0.0; n]; big_t + 1];
        let mut v = vec![vec![0.0; n]; big_t + 1];
        v[big_t] = self.rewards[big_t].clone();
        for t in (0..big_t).rev() {
            let p = &self.transitions[t];
            for s in 0..n {
                q[t][s] = (0..n).map(|j| p[s * n + j] * v[t + 1][j]).sum();
                v[t][s] = self.rewards[t][s].max(q[t][s]);
            }
        }
        DpTables { q, v }
    }

    /// Largest `|q_t(s) - sum_j P_t(s, j) max(f_{t+1}(j), q_{t+1}(j))|` over
    /// all `t < T` and states, plus `|q_T|`.
    pub fn dp_residual(&self, q: &[Vec<f64>]) -> f64 {
        let n = self.num_states();
        let big_t = self.maturity();
        let mut worst = q[big_t].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for t in 0..big_t {
            let p = &self.transitions[t];
            for s in 0..n {
                let rhs: f64 = (0..n)
                    .map(|j| p[s * n + j] * self.rewards[t + 1][j].max(q[t + 1][j]))
                    .sum();
                worst = worst.max((q[t][s] - rhs).abs());
            }
        }
        worst
    }

    /// `E[theta_{t+1:w}(f, q) | X_t = s]` for every state `s`, by summing over
    /// all continuations of length `w + 1`. Fails when more than `budget`
    /// continuations would be visited.
    pub fn theta_representation_check(
        &self,
        q: &[Vec<f64>],
        t: usize,
        w: usize,
        budget: u128,
    ) -> Result<Vec<f64>> {
        let big_t = self.maturity();
        if t + w + 1 > big_t {
            return Err(invalid(format!(
                "window {w} at t={t} reaches past maturity {big_t}"
            )));
        }
        if q.len() != big_t + 1 {
            return Err(Error::DimensionMismatch {
                expected: big_t + 1,
                got: q.len(),
            });
        }
        let n = self.num_states();
        let needed = (n as u128)
            .checked_pow(w as u32 + 1)
            .and_then(|x| x.checked_mul(n as u128))
            .unwrap_or(u128::MAX);
        if needed > budget {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let last = t + w + 1;
        let out = (0..n).map(|s| self.expand(q, t, s, 1.0, last)).collect();
        Ok(out)
    }

    /// Sum over continuations from `(time, s)` of weight times the look-ahead
    /// payoff, which starts at `time + 1`.
    fn expand(&self, q: &[Vec<f64>], time: usize, s: usize, weight: f64, last: usize) -> f64 {
        let n = self.num_states();
        let p = &self.transitions[time];
        let u = time + 1;
        let h = |j: usize| if u == self.maturity() { 0.0 } else { q[u][j] };
        let mut total = 0.0;
        for j in 0..n {
            let pj = p[s * n + j];
            if pj == 0.0 {
                continue;
            }
            let f = self.rewards[u][j];
            total += if f >= h(j) {
                weight * pj * f
            } else if u == last {
                weight * pj * h(j)
            } else {
                self.expand(q, u, j, weight * pj, last)
            };
        }
        total
    }

    /// Plain-text fixture: `S T d`, the `S` state vectors, `T` row-major
    /// transition matrices, `T + 1` reward rows and the initial index.
    pub fn to_fixture(&self) -> String {
        let mut out = String::new();
        let n = self.num_states();
        let _ = writeln!(out, "{} {} {}", n, self.maturity(), self.dim);
        for s in 0..n {
            let _ = writeln!(out, "{}", join(self.state(s)));
        }
        for p in &self.transitions {
            for row in p.chunks_exact(n) {
                let _ = writeln!(out, "{}", join(row));
            }
        }
        for r in &self.rewards {
            let _ = writeln!(out, "{}", join(r));
        }
        let _ = writeln!(out, "{}", self.initial);
        out
    }

    /// Parses [`FiniteChain::to_fixture`] output. The trailing initial index
    /// may be omitted and defaults to 0.
    pub fn from_fixture(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |tok| (i + 1, tok)));
        let mut next = |what: &str| -> Result<(usize, &str)> {
            tokens.next().ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unexpected end of input, expected {what}"),
            })
        };
        let mut int = |what: &str| -> Result<usize> {
            let (line, tok) = next(what)?;
            tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("expected {what}, found '{tok}'"),
            })
        };
        let s = int("state count")?;
        let big_t = int("step count")?;
        let d = int("dimension")?;
        let mut real = |what: &str| -> Result<f64> {
            let (line, tok) = next(what)?;
            tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("expected {what}, found '{tok}'"),
            })
        };
        let states = (0..s * d)
            .map(|_| real("state value"))
            .collect::<Result<Vec<_>>>()?;
        let transitions = (0..big_t)
            .map(|_| (0..s * s).map(|_| real("transition probability")).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let rewards = (0..=big_t)
            .map(|_| (0..s).map(|_| real("reward")).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let initial = match tokens.next() {
            None => 0,
            Some((line, tok)) => {
                let v = tok.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("expected initial state index, found '{tok}'"),
                })?;
                if let Some((line, tok)) = tokens.next() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("trailing token '{tok}'"),
                    });
                }
                v
            }
        };
        Self::new(states, d, transitions, rewards, initial)
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl Reward for FiniteChain {
    fn reward(&self, t: usize, x: &[f64]) -> f64 {
        self.rewards[t][self.index_of(x)]
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

impl MarkovModel for FiniteChain {
    fn dim(&self) -> usize {
        self.dim
    }

    fn steps(&self) -> usize {
        self.maturity()
    }

    fn initial_state(&self) -> &[f64] {
        self.state(self.initial)
    }

    fn extend(&self, t: usize, out: &mut [f64], stream: &mut Stream) {
        let d = self.dim;
        let mut s = self.index_of(&out[..d]);
        for (k, chunk) in out.chunks_exact_mut(d).enumerate().skip(1) {
            s = self.next_state(t + k - 1, s, stream.uniform());
            chunk.copy_from_slice(self.state(s));
        }
    }
}

/// Contract and market data for the lattice put.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticePut {
    pub x0: f64,
    pub strike: f64,
    pub rate: f64,
    pub vol: f64,
    pub horizon: f64,
}

/// Lattice price at `n` steps and at `2n` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeReport {
    pub steps: usize,
    pub price: f64,
    pub price_doubled: f64,
}

impl LatticeReport {
    pub fn difference(&self) -> f64 {
        (self.price_doubled - self.price).abs()
    }

    /// `2 P(2N) - P(N)`.
    pub fn extrapolated(&self) -> f64 {
        2.0 * self.price_doubled - self.price
    }
}

impl LatticePut {
    fn validate(&self) -> Result<()> {
        let all = [self.x0, self.strike, self.rate, self.vol, self.horizon];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite lattice parameter"));
        }
        if self.x0 <= 0.0 || self.strike <= 0.0 || self.vol <= 0.0 || self.horizon <= 0.0 {
            return Err(invalid("x0, strike, vol and horizon must be positive"));
        }
        Ok(())
    }

    /// Cox-Ross-Rubinstein price with `n` steps, exercisable at the given
    /// times in `(0, horizon]`. Every time must fall on a lattice node. The
    /// last step uses the closed-form European value, which removes the
    /// odd-even oscillation of the plain tree.
    pub fn price(&self, n: usize, exercise_times: &[f64]) -> Result<f64> {
        self.backward(n, exercise_times, true)
    }

    /// Plain Cox-Ross-Rubinstein tree without last-step smoothing.
    pub fn price_crr(&self, n: usize, exercise_times: &[f64]) -> Result<f64> {
        self.backward(n, exercise_times, false)
    }

    fn backward(&self, n: usize, exercise_times: &[f64], smooth: bool) -> Result<f64> {
        self.validate()?;
        if n == 0 {
            return Err(invalid("lattice needs at least one step"));
        }
        let mut exercise = vec![false; n + 1];
        for &time in exercise_times {
            let node = time / self.horizon * n as f64;
            let k = node.round();
            if !(time > 0.0 && time <= self.horizon * (1.0 + 1e-12))
                || (node - k).abs() > 1e-9 * n as f64
            {
                return Err(invalid(format!(
                    "exercise time {time} is not on the {n}-step lattice"
                )));
            }
            exercise[k as usize] = true;
        }
        let dt = self.horizon / n as f64;
        let up = (self.vol * dt.sqrt()).exp();
        let down = 1.0 / up;
        let growth = (self.rate * dt).exp();
        let p = (growth - down) / (up - down);
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!(
                "risk-neutral probability {p} outside [0, 1]; increase vol or steps"
            )));
        }
        let disc = 1.0 / growth;
        let spot = |k: usize, j: usize| self.x0 * up.powi(j as i32) * down.powi((k - j) as i32);
        let intrinsic = |k: usize, j: usize| (self.strike - spot(k, j)).max(0.0);
        let mut v: Vec<f64>;
        let top;
        if smooth {
            let last = Self {
                horizon: dt,
                ..*self
            };
            v = (0..n)
                .map(|j| {
                    if exercise[n] {
                        Self {
                            x0: spot(n - 1, j),
                            ..last
                        }
                        .black_scholes_unchecked()
                    } else {
                        0.0
                    }
                })
                .collect();
            if exercise[n - 1] {
                for (j, x) in v.iter_mut().enumerate() {
                    *x = x.max(intrinsic(n - 1, j));
                }
            }
            top = n - 1;
        } else {
            v = (0..=n)
                .map(|j| if exercise[n] { intrinsic(n, j) } else { 0.0 })
                .collect();
            top = n;
        }
        for k in (0..top).rev() {
            for j in 0..=k {
                let hold = disc * (p * v[j + 1] + (1.0 - p) * v[j]);
                v[j] = if exercise[k] {
                    hold.max(intrinsic(k, j))
                } else {
                    hold
                };
            }
        }
        Ok(v[0])
    }

    /// Price with `m` equally spaced exercise dates `j * horizon / m`,
    /// `j = 1..=m`.
    pub fn bermudan(&self, m: usize, n: usize) -> Result<f64> {
        if m == 0 || !n.is_multiple_of(m) {
            return Err(invalid(format!(
                "{n} lattice steps are not a multiple of {m} exercise dates"
            )));
        }
        self.price(n, &bermudan_times(self.horizon, m))
    }

    /// Bermudan price at `n` and `2n` steps; `n` defaults to `120 m`.
    pub fn bermudan_report(&self, m: usize, n: Option<usize>) -> Result<LatticeReport> {
        let n = n.unwrap_or(120 * m);
        Ok(LatticeReport {
            steps: n,
            price: self.bermudan(m, n)?,
            price_doubled: self.bermudan(m, 2 * n)?,
        })
    }

    /// Closed-form European put.
    pub fn black_scholes(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.black_scholes_unchecked())
    }

    fn black_scholes_unchecked(&self) -> f64 {
        let std = Normal::standard();
        let sd = self.vol * self.horizon.sqrt();
        let d1 = ((self.x0 / self.strike).ln()
            + (self.rate + 0.5 * self.vol * self.vol) * self.horizon)
            / sd;
        let d2 = d1 - sd;
        self.strike * (-self.rate * self.horizon).exp() * std.cdf(-d2) - self.x0 * std.cdf(-d1)
    }
}

/// `j * horizon / m` for `j = 1..=m`.
pub fn bermudan_times(horizon: f64, m: usize) -> Vec<f64> {
    (1..=m).map(|j| horizon * j as f64 / m as f64).collect()
}

/// Bermudan put price on an `n`-step lattice with exercise at `times`.
pub fn binomial_bermudan_put(
    x0: f64,
    strike: f64,
    rate: f64,
    vol: f64,
    horizon: f64,
    n: usize,
    times: &[f64],
) -> Result<f64> {
    LatticePut {
        x0,
        strike,
        rate,
        vol,
        horizon,
    }
    .price(n, times)
}
