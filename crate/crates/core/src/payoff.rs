//! Exercise payoffs. Rewards are discounted to time zero, so `reward(t, x)`
//! is directly comparable across exercise dates.

use crate::error::{invalid, Error, Result};

/// Discounted reward `f_t(x)` with a global bound `L`.
pub trait Reward: Sync {
    fn reward(&self, t: usize, x: &[f64]) -> f64;

    /// `L` with `0 <= reward(t, x) <= L` everywhere.
    fn bound(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffKind {
    Put,
    StrangleSpread,
    /// Strangle spread on the arithmetic mean of all coordinates.
    BasketStrangleSpread,
}

impl PayoffKind {
    pub fn name(self) -> &'static str {
        match self {
            PayoffKind::Put => "put",
            PayoffKind::StrangleSpread => "strangle-spread",
            PayoffKind::BasketStrangleSpread => "basket-average-strangle-spread",
        }
    }
}

impl std::str::FromStr for PayoffKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "put" => Ok(PayoffKind::Put),
            "strangle-spread" | "strangle" => Ok(PayoffKind::StrangleSpread),
            "basket-average-strangle-spread" | "basket-strangle" | "basket" => {
                Ok(PayoffKind::BasketStrangleSpread)
            }
            other => Err(invalid(format!("unknown payoff kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    kind: PayoffKind,
    strikes: Vec<f64>,
    rate: f64,
    horizon: f64,
    steps: usize,
}

impl PayoffSpec {
    pub fn new(
        kind: PayoffKind,
        strikes: Vec<f64>,
        rate: f64,
        horizon: f64,
        steps: usize,
    ) -> Result<Self> {
        let expected = match kind {
            PayoffKind::Put => 1,
            _ => 4,
        };
        if strikes.len() != expected {
            return Err(invalid(format!(
                "{} needs {expected} strike(s), got {}",
                kind.name(),
                strikes.len()
            )));
        }
        if strikes
            .iter()
            .chain([&rate, &horizon])
            .any(|v| !v.is_finite())
        {
            return Err(invalid("non-finite payoff parameter"));
        }
        if strikes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("strikes must be strictly increasing"));
        }
        if kind == PayoffKind::Put && strikes[0] <= 0.0 {
            return Err(invalid("put strike must be positive"));
        }
        if horizon <= 0.0 || steps == 0 {
            return Err(invalid("horizon and steps must be positive"));
        }
        Ok(Self {
            kind,
            strikes,
            rate,
            horizon,
            steps,
        })
    }

    pub fn put(strike: f64, rate: f64, horizon: f64, steps: usize) -> Result<Self> {
        Self::new(PayoffKind::Put, vec![strike], rate, horizon, steps)
    }

    pub fn kind(&self) -> PayoffKind {
        self.kind
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Undiscounted exercise value.
    pub fn intrinsic(&self, x: &[f64]) -> f64 {
        match self.kind {
            PayoffKind::Put => (self.strikes[0] - x[0]).clamp(0.0, self.strikes[0]),
            PayoffKind::StrangleSpread => strangle_spread(&self.strikes, x[0]),
            PayoffKind::BasketStrangleSpread => {
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                strangle_spread(&self.strikes, mean)
            }
        }
    }

    pub fn discount(&self, t: usize) -> f64 {
        (-self.rate * self.horizon * t as f64 / self.steps as f64).exp()
    }

    /// `exp(-r * horizon * t / m) * intrinsic(x)`.
    pub fn discounted_payoff(&self, t: usize, x: &[f64]) -> Result<f64> {
        if t > self.steps {
            return Err(invalid(format!(
                "time index {t} beyond maturity {}",
                self.steps
            )));
        }
        Ok(self.discount(t) * self.intrinsic(x))
    }

    pub fn payoff_bound(&self) -> f64 {
        let k = &self.strikes;
        match self.kind {
            PayoffKind::Put => k[0],
            _ => (k[1] - k[0]).max(k[3] - k[2]),
        }
    }
}

/// Long `K2` put, short `K1` put, long `K3` call, short `K4` call.
fn strangle_spread(k: &[f64], x: f64) -> f64 {
    let v = (k[1] - x).max(0.0) - (k[0] - x).max(0.0) + (x - k[2]).max(0.0) - (x - k[3]).max(0.0);
    v.clamp(0.0, (k[1] - k[0]).max(k[3] - k[2]))
}

impl Reward for PayoffSpec {
    fn reward(&self, t: usize, x: &[f64]) -> f64 {
        debug_assert!(t <= self.steps);
        self.discount(t) * self.intrinsic(x)
    }

    fn bound(&self) -> f64 {
        self.payoff_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn strangle() -> PayoffSpec {
        PayoffSpec::new(
            PayoffKind::StrangleSpread,
            vec![50.0, 90.0, 110.0, 150.0],
            0.05,
            1.0,
            48,
        )
        .unwrap()
    }

    #[test]
    fn put_values() {
        let p = PayoffSpec::put(90.0, 0.05, 1.0, 12).unwrap();
        assert_eq!(p.intrinsic(&[80.0]), 10.0);
        assert_eq!(p.intrinsic(&[95.0]), 0.0);
        assert_eq!(p.discounted_payoff(0, &[80.0]).unwrap(), 10.0);
        assert_relative_eq!(
            p.discounted_payoff(12, &[80.0]).unwrap(),
            9.512_294_245,
            epsilon = 1e-8
        );
        assert!(p.discounted_payoff(13, &[80.0]).is_err());
        assert_eq!(p.payoff_bound(), 90.0);
    }

    #[test]
    fn strangle_values() {
        let s = strangle();
        for (x, v) in [
            (70.0, 20.0),
            (100.0, 0.0),
            (130.0, 20.0),
            (40.0, 40.0),
            (200.0, 40.0),
        ] {
            assert_relative_eq!(s.intrinsic(&[x]), v, epsilon = 1e-12);
        }
        assert_eq!(s.payoff_bound(), 40.0);
    }

    #[test]
    fn basket_values() {
        let b = PayoffSpec::new(
            PayoffKind::BasketStrangleSpread,
            vec![0.85, 0.95, 1.05, 1.15],
            0.05,
            1.0,
            12,
        )
        .unwrap();
        assert_eq!(b.intrinsic(&[1.0, 1.0, 1.0]), 0.0);
        assert_relative_eq!(b.intrinsic(&[0.8, 0.9, 1.0]), 0.05, epsilon = 1e-12);
        assert_relative_eq!(b.payoff_bound(), 0.10, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_strikes() {
        assert!(PayoffSpec::new(
            PayoffKind::StrangleSpread,
            vec![50.0, 40.0, 110.0, 150.0],
            0.0,
            1.0,
            4
        )
        .is_err());
        assert!(PayoffSpec::new(PayoffKind::StrangleSpread, vec![50.0], 0.0, 1.0, 4).is_err());
        assert!(PayoffSpec::put(-1.0, 0.0, 1.0, 4).is_err());
    }

    #[test]
    fn kinks_exactly_at_strikes() {
        let s = strangle();
        let h = 1e-3;
        let slope = |x: f64| (s.intrinsic(&[x + h]) - s.intrinsic(&[x - h])) / (2.0 * h);
        // piecewise slopes: 0, -1, 0, +1, 0
        for (x, m) in [
            (30.0, 0.0),
            (70.0, -1.0),
            (100.0, 0.0),
            (130.0, 1.0),
            (170.0, 0.0),
        ] {
            assert_relative_eq!(slope(x), m, epsilon = 1e-9);
        }
        for k in s.strikes() {
            let left = (s.intrinsic(&[*k]) - s.intrinsic(&[k - h])) / h;
            let right = (s.intrinsic(&[k + h]) - s.intrinsic(&[*k])) / h;
            assert!((left - right).abs() > 0.5, "no kink at {k}");
            // continuity
            assert!((s.intrinsic(&[k + 1e-9]) - s.intrinsic(&[k - 1e-9])).abs() < 1e-8);
        }
    }

    #[test]
    fn bound_is_tight() {
        let s = strangle();
        assert_eq!(s.intrinsic(&[10.0]), s.payoff_bound());
        let p = PayoffSpec::put(90.0, 0.05, 1.0, 12).unwrap();
        assert_eq!(p.intrinsic(&[0.0]), p.payoff_bound());
    }

    proptest! {
        #[test]
        fn payoff_within_bound(t in 0usize..=48, x in 0.0f64..400.0, y in 0.0f64..3.0, z in 0.0f64..3.0) {
            let s = strangle();
            let v = s.discounted_payoff(t, &[x]).unwrap();
            prop_assert!(v >= 0.0 && v <= s.payoff_bound());
            let p = PayoffSpec::put(90.0, 0.05, 1.0, 48).unwrap();
            let v = p.discounted_payoff(t, &[x]).unwrap();
            prop_assert!(v >= 0.0 && v <= p.payoff_bound());
            let b = PayoffSpec::new(PayoffKind::BasketStrangleSpread, vec![0.85, 0.95, 1.05, 1.15], 0.05, 1.0, 48).unwrap();
            let v = b.discounted_payoff(t, &[x / 100.0, y, z]).unwrap();
            prop_assert!(v >= 0.0 && v <= b.payoff_bound());
        }

        #[test]
        fn discounting_nonincreasing(t in 0usize..48, x in 0.0f64..200.0) {
            let p = PayoffSpec::put(90.0, 0.05, 1.0, 48).unwrap();
            prop_assert!(p.reward(t + 1, &[x]) <= p.reward(t, &[x]));
        }
    }
}
