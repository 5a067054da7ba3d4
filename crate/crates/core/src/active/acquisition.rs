use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Acquisition {
    /// `max(0, μ + βσ)`.
    Ucb { beta: f64 },
    /// Expected improvement over the incumbent `best_y`.
    Ei { best_y: f64 },
}

impl Default for Acquisition {
    fn default() -> Self {
        Acquisition::Ucb { beta: 1.0 }
    }
}

impl Acquisition {
    pub fn value(&self, mean: f64, std: f64) -> f64 {
        debug_assert!(std >= 0.0);
        match *self {
            Acquisition::Ucb { beta } => (mean + beta * std).max(0.0),
            Acquisition::Ei { best_y } => expected_improvement(mean, std, best_y),
        }
    }

    /// EI with the incumbent replaced; UCB is unchanged.
    pub fn with_incumbent(self, best: f64) -> Self {
        match self {
            Acquisition::Ei { .. } => Acquisition::Ei { best_y: best },
            ucb => ucb,
        }
    }
}

pub fn expected_improvement(mean: f64, std: f64, best_y: f64) -> f64 {
    let gap = mean - best_y;
    if std <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / std;
    let n = Normal::standard();
    (gap * n.cdf(z) + std * n.pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ucb_clamps_at_zero() {
        let a = Acquisition::Ucb { beta: 0.0 };
        assert_eq!(a.value(-2.0, 5.0), 0.0);
        assert_eq!(a.value(1.5, 5.0), 1.5);
        assert_eq!(Acquisition::Ucb { beta: 2.0 }.value(-1.0, 1.0), 1.0);
    }

    #[test]
    fn ei_at_incumbent_with_unit_std() {
        let v = expected_improvement(0.3, 1.0, 0.3);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn ei_without_uncertainty() {
        assert_eq!(expected_improvement(0.2, 0.0, 0.5), 0.0);
        assert_eq!(expected_improvement(0.7, 0.0, 0.5), 0.7 - 0.5);
    }

    #[test]
    fn ei_is_monotone_in_std() {
        for &mean in &[-2.0, -0.5, 0.0, 0.4, 1.0, 3.0] {
            let mut prev = expected_improvement(mean, 0.0, 0.5);
            for k in 1..200 {
                let v = expected_improvement(mean, k as f64 * 0.02, 0.5);
                assert!(v >= prev - 1e-15, "mean {mean}, std {}", k as f64 * 0.02);
                assert!(v.is_finite() && v >= 0.0);
                prev = v;
            }
        }
    }
}
