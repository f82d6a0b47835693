use crate::error::{invalid, Result};

/// Mackey-Glass delay equation
/// `dx/dt = beta x(t - tau) / (1 + x(t - tau)^n) - gamma x(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MackeyGlassSpec {
    pub beta: f64,
    pub gamma: f64,
    pub exponent: f64,
    pub delay_tau: f64,
    /// Integration step.
    pub step: f64,
    /// Number of returned samples.
    pub length: usize,
    /// Integration steps between returned samples.
    pub sample_every: usize,
    /// Integration steps discarded before the first returned sample.
    pub transient_steps: usize,
    /// Constant history on `t <= 0`.
    pub initial: f64,
    pub seed: u64,
}

impl Default for MackeyGlassSpec {
    fn default() -> Self {
        Self {
            beta: 0.2,
            gamma: 0.1,
            exponent: 10.0,
            delay_tau: 17.0,
            step: 0.1,
            length: 3000,
            sample_every: 10,
            transient_steps: 1000,
            initial: 1.2,
            seed: 1,
        }
    }
}

impl MackeyGlassSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.delay_tau > 0.0) {
            return Err(invalid("step/delay_tau", "must be positive"));
        }
        if self.beta < 0.0 || self.gamma < 0.0 || !(self.exponent > 0.0) {
            return Err(invalid("beta/gamma/exponent", "must be non-negative (exponent positive)"));
        }
        if self.sample_every == 0 {
            return Err(invalid("sample_every", "must be at least 1"));
        }
        let ratio = self.delay_tau / self.step;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(invalid("delay_tau", "must be a positive multiple of the step"));
        }
        Ok(())
    }

    fn rhs(&self, x: f64, delayed: f64) -> f64 {
        self.beta * delayed / (1.0 + delayed.abs().powf(self.exponent)) - self.gamma * x
    }

    /// Time of the `i`-th returned sample.
    pub fn time_of(&self, i: usize) -> f64 {
        (self.transient_steps + i * self.sample_every) as f64 * self.step
    }
}

/// Fixed-step RK4 on the delay equation. The delayed value at half steps is
/// the cubic Hermite interpolant of the stored grid values and slopes, which
/// keeps the scheme fourth order.
pub fn gen_mackey_glass(spec: &MackeyGlassSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.length == 0 {
        return Ok(Vec::new());
    }
    let h = spec.step;
    let lag = (spec.delay_tau / h).round() as usize;
    let total = spec.transient_steps + (spec.length - 1) * spec.sample_every;

    // Index `lag + i` holds t = i * h; the first `lag` entries are history.
    let mut xs = Vec::with_capacity(lag + total + 1);
    let mut slopes = Vec::with_capacity(lag + total + 1);
    xs.resize(lag + 1, spec.initial);
    slopes.resize(lag, 0.0);
    slopes.push(spec.rhs(spec.initial, spec.initial));

    for i in lag..lag + total {
        let (d0, d1) = (xs[i - lag], xs[i - lag + 1]);
        let (s0, s1) = (slopes[i - lag], slopes[i - lag + 1]);
        let mid = 0.5 * (d0 + d1) + h * (s0 - s1) / 8.0;
        let x = xs[i];
        let k1 = spec.rhs(x, d0);
        let k2 = spec.rhs(x + 0.5 * h * k1, mid);
        let k3 = spec.rhs(x + 0.5 * h * k2, mid);
        let k4 = spec.rhs(x + h * k3, d1);
        let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        xs.push(next);
        slopes.push(spec.rhs(next, d1));
    }

    Ok((0..spec.length)
        .map(|i| xs[lag + spec.transient_steps + i * spec.sample_every])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_length_is_empty() {
        let spec = MackeyGlassSpec {
            length: 0,
            ..Default::default()
        };
        assert!(gen_mackey_glass(&spec).unwrap().is_empty());
    }

    #[test]
    fn pure_decay_matches_exponential() {
        let spec = MackeyGlassSpec {
            beta: 0.0,
            transient_steps: 0,
            sample_every: 1,
            length: 500,
            ..Default::default()
        };
        let xs = gen_mackey_glass(&spec).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let exact = 1.2 * (-0.1 * spec.time_of(i)).exp();
            assert!((x - exact).abs() < 1e-6, "t={} {x} vs {exact}", spec.time_of(i));
        }
    }

    #[test]
    fn canonical_series_is_bounded_and_aperiodic() {
        let spec = MackeyGlassSpec {
            length: 10_000,
            sample_every: 1,
            ..Default::default()
        };
        let xs = gen_mackey_glass(&spec).unwrap();
        assert!(xs.iter().all(|x| *x > 0.0 && *x < 1.5));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(var.sqrt() > 0.1, "series collapsed to a fixed point");
        // No exact repetition of the series at short lags.
        for lag in [50, 170, 500] {
            let max_diff = xs.iter().zip(&xs[lag..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(max_diff > 0.1);
        }
    }

    #[test]
    fn halving_the_step_converges() {
        let coarse = MackeyGlassSpec {
            length: 301,
            sample_every: 10,
            ..Default::default()
        };
        let fine = MackeyGlassSpec {
            step: 0.05,
            transient_steps: 2 * coarse.transient_steps,
            sample_every: 20,
            ..coarse.clone()
        };
        let a = gen_mackey_glass(&coarse).unwrap();
        let b = gen_mackey_glass(&fine).unwrap();
        let sup = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(sup < 1e-4, "sup-norm difference {sup}");
    }

    #[test]
    fn rejects_incommensurate_delay() {
        let spec = MackeyGlassSpec {
            delay_tau: 17.05,
            ..Default::default()
        };
        assert!(gen_mackey_glass(&spec).is_err());
    }
}
