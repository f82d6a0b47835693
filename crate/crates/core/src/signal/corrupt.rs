use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;

use super::Iq;
use crate::error::{invalid, Result};
use crate::rng;

/// Channel corruption: one random carrier offset per burst, then white
/// circular Gaussian noise at a random SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub jitter_max_hz: f64,
    /// Inclusive SNR range in dB; `(inf, inf)` disables the noise.
    pub snr_db_range: (f64, f64),
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            jitter_max_hz: 50e3,
            snr_db_range: (20.0, 30.0),
            seed: 1,
        }
    }
}

impl CorruptionSpec {
    pub fn clean() -> Self {
        Self {
            jitter_max_hz: 0.0,
            snr_db_range: (f64::INFINITY, f64::INFINITY),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_max_hz >= 0.0) || !self.jitter_max_hz.is_finite() {
            return Err(invalid("jitter_max_hz", "must be finite and non-negative"));
        }
        let (lo, hi) = self.snr_db_range;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(invalid("snr_db_range", format!("need low <= high, got ({lo}, {hi})")));
        }
        Ok(())
    }

    /// Spec for the `index`-th burst, with its own derived seed.
    pub fn for_burst(&self, index: u64) -> Self {
        Self {
            seed: rng::derive_seed(self.seed, "corrupt.burst", index),
            ..*self
        }
    }
}

/// The random values drawn for one burst.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionDraw {
    pub freq_offset_hz: f64,
    pub snr_db: f64,
}

pub fn corrupt(burst: &[Iq], spec: &CorruptionSpec, sample_rate_hz: f64) -> Result<Vec<Iq>> {
    corrupt_with_draw(burst, spec, sample_rate_hz).map(|(b, _)| b)
}

/// Rotates sample `t` by `exp(j 2π Δf t / fs)` and adds noise so that the
/// burst-to-noise power ratio equals the drawn SNR.
pub fn corrupt_with_draw(
    burst: &[Iq],
    spec: &CorruptionSpec,
    sample_rate_hz: f64,
) -> Result<(Vec<Iq>, CorruptionDraw)> {
    spec.validate()?;
    if !(sample_rate_hz > 0.0) {
        return Err(invalid("sample_rate_hz", "must be positive"));
    }
    let mut r = rng::stream(spec.seed, "corrupt");
    let freq_offset_hz = if spec.jitter_max_hz > 0.0 {
        r.random_range(-spec.jitter_max_hz..=spec.jitter_max_hz)
    } else {
        0.0
    };
    let (lo, hi) = spec.snr_db_range;
    let snr_db = if lo == hi || lo.is_infinite() {
        lo
    } else {
        r.random_range(lo..=hi)
    };

    let step = TAU * freq_offset_hz / sample_rate_hz;
    let mut out: Vec<num_complex::Complex64> = burst
        .iter()
        .enumerate()
        .map(|(t, z)| {
            let z = num_complex::Complex64::new(f64::from(z.re), f64::from(z.im));
            z * num_complex::Complex64::from_polar(1.0, step * t as f64)
        })
        .collect();

    if snr_db.is_finite() && !burst.is_empty() {
        let power = out.iter().map(|z| z.norm_sqr()).sum::<f64>() / out.len() as f64;
        let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        for z in out.iter_mut() {
            let a: f64 = r.sample(StandardNormal);
            let b: f64 = r.sample(StandardNormal);
            *z += num_complex::Complex64::new(sigma * a, sigma * b);
        }
    }

    Ok((
        out.into_iter()
            .map(|z| Iq::new(z.re as f32, z.im as f32))
            .collect(),
        CorruptionDraw {
            freq_offset_hz,
            snr_db,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{magnitude, DEFAULT_SAMPLE_RATE_HZ};

    fn tone(n: usize) -> Vec<Iq> {
        (0..n)
            .map(|i| Iq::from_polar(0.5 + 0.3 * (i as f32 * 0.05).sin(), 0.2 * i as f32))
            .collect()
    }

    #[test]
    fn phase_increment_for_max_jitter() {
        // 50 kHz at 100 MHz -> 2π·5e-4 rad per sample.
        let step = TAU * 50e3 / DEFAULT_SAMPLE_RATE_HZ;
        assert!((step - TAU * 5e-4).abs() < 1e-18);
    }

    #[test]
    fn clean_spec_is_identity() {
        let b = tone(500);
        assert_eq!(corrupt(&b, &CorruptionSpec::clean(), DEFAULT_SAMPLE_RATE_HZ).unwrap(), b);
    }

    #[test]
    fn jitter_alone_preserves_magnitude() {
        let b = tone(2000);
        let spec = CorruptionSpec {
            jitter_max_hz: 50e3,
            snr_db_range: (f64::INFINITY, f64::INFINITY),
            seed: 9,
        };
        let (out, draw) = corrupt_with_draw(&b, &spec, DEFAULT_SAMPLE_RATE_HZ).unwrap();
        assert!(draw.freq_offset_hz.abs() <= 50e3 && draw.freq_offset_hz != 0.0);
        for (a, c) in magnitude(&b).values.iter().zip(magnitude(&out).values) {
            assert!((a - c).abs() <= 1e-6 * a.max(1e-3));
        }
    }

    #[test]
    fn measured_snr_matches_draw() {
        let b = tone(10_000);
        for seed in 0..5 {
            let spec = CorruptionSpec {
                jitter_max_hz: 50e3,
                snr_db_range: (10.0, 30.0),
                seed,
            };
            let (out, draw) = corrupt_with_draw(&b, &spec, DEFAULT_SAMPLE_RATE_HZ).unwrap();
            let step = TAU * draw.freq_offset_hz / DEFAULT_SAMPLE_RATE_HZ;
            let mut signal = 0.0;
            let mut noise = 0.0;
            for (t, (z, y)) in b.iter().zip(&out).enumerate() {
                let z = num_complex::Complex64::new(f64::from(z.re), f64::from(z.im))
                    * num_complex::Complex64::from_polar(1.0, step * t as f64);
                let y = num_complex::Complex64::new(f64::from(y.re), f64::from(y.im));
                signal += z.norm_sqr();
                noise += (y - z).norm_sqr();
            }
            let measured = 10.0 * (signal / noise).log10();
            assert!((measured - draw.snr_db).abs() < 0.5, "{measured} vs {}", draw.snr_db);
            assert!((10.0..=30.0).contains(&draw.snr_db));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let b = tone(300);
        let spec = CorruptionSpec::default();
        let a = corrupt(&b, &spec, DEFAULT_SAMPLE_RATE_HZ).unwrap();
        assert_eq!(a, corrupt(&b, &spec, DEFAULT_SAMPLE_RATE_HZ).unwrap());
        assert_ne!(a, corrupt(&b, &spec.for_burst(1), DEFAULT_SAMPLE_RATE_HZ).unwrap());
    }

    #[test]
    fn validation() {
        let bad = CorruptionSpec {
            snr_db_range: (30.0, 10.0),
            ..Default::default()
        };
        assert!(corrupt(&[], &bad, 1.0).is_err());
        let bad = CorruptionSpec {
            jitter_max_hz: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
