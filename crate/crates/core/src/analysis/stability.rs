use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityParams {
    /// One-pass gain of the loop.
    pub one_pass_gain: f64,
    /// Number of round trips.
    pub traversals: u64,
}

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.traversals == 0 {
            return Err(invalid("traversals", "must be at least 1"));
        }
        if !(self.one_pass_gain >= 0.0) || !self.one_pass_gain.is_finite() {
            return Err(invalid("one_pass_gain", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Steady-state loop gain `G = gain^K`; stable iff `G < 1`.
pub fn loop_gain(params: &StabilityParams) -> Result<(f64, bool)> {
    params.validate()?;
    let k = i32::try_from(params.traversals).ok();
    let g = match k {
        Some(k) => params.one_pass_gain.powi(k),
        None => params.one_pass_gain.powf(params.traversals as f64),
    };
    Ok((g, g < 1.0))
}

/// Gain of a periodically opened loop,
/// `G_ave = (1 / (K + 1)) * sum_{k=1..K} alpha^k`; stable iff `G_ave < 1`.
pub fn average_gain(alpha: f64, traversals: u64) -> Result<(f64, bool)> {
    StabilityParams {
        one_pass_gain: alpha,
        traversals,
    }
    .validate()?;
    let k = traversals as f64;
    let sum = if alpha == 1.0 {
        k
    } else if alpha == 0.0 {
        0.0
    } else {
        // alpha (1 - alpha^K) / (1 - alpha), written to stay accurate near 1.
        let ln = alpha.ln();
        alpha * (-(k * ln).exp_m1()) / (-(ln.exp_m1()))
    };
    let g = sum / (k + 1.0);
    Ok((g, g < 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(alpha: f64, k: u64) -> f64 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for _ in 0..k {
            term *= alpha;
            sum += term;
        }
        sum / (k as f64 + 1.0)
    }

    #[test]
    fn unit_gain_is_unstable() {
        for k in [1, 7, 1000] {
            let p = StabilityParams {
                one_pass_gain: 1.0,
                traversals: k,
            };
            assert_eq!(loop_gain(&p).unwrap(), (1.0, false));
        }
    }

    #[test]
    fn half_gain_two_passes() {
        let p = StabilityParams {
            one_pass_gain: 0.5,
            traversals: 2,
        };
        assert_eq!(loop_gain(&p).unwrap(), (0.25, true));
    }

    #[test]
    fn slight_excess_gain_blows_up() {
        let p = StabilityParams {
            one_pass_gain: 1.001,
            traversals: 1000,
        };
        let (g, stable) = loop_gain(&p).unwrap();
        assert!((g - 1.001f64.powf(1000.0)).abs() < 1e-9);
        assert!((g - 2.7169).abs() < 1e-3);
        assert!(!stable);
    }

    #[test]
    fn average_gain_examples() {
        assert_eq!(average_gain(0.0, 10).unwrap(), (0.0, true));
        let (g, stable) = average_gain(0.999, 1000).unwrap();
        // Direct summation gives 0.63095...
        assert!((g - brute_force(0.999, 1000)).abs() < 1e-12);
        assert!((g - 0.6310).abs() < 1e-3);
        assert!(stable);
        let (g, stable) = average_gain(1.0 - 1e-12, 1000).unwrap();
        assert!(g < 1.0 && stable);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(average_gain(0.5, 0).is_err());
        assert!(average_gain(-0.1, 3).is_err());
        assert!(loop_gain(&StabilityParams { one_pass_gain: f64::NAN, traversals: 1 }).is_err());
    }

    proptest! {
        #[test]
        fn closed_form_matches_summation(alpha in 0.0f64..1.2, k in 1u64..20_000) {
            let (g, _) = average_gain(alpha, k).unwrap();
            let b = brute_force(alpha, k);
            if b.is_infinite() {
                prop_assert!(g.is_infinite() || g > 1e300);
            } else {
                prop_assert!((g - b).abs() <= 1e-10 * b.max(1.0), "{} vs {}", g, b);
            }
        }
    }
}
