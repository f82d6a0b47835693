use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::signal::{Iq, DEFAULT_SAMPLE_RATE_HZ};

/// Samples per symbol of the baseline waveform.
const SAMPLES_PER_SYMBOL: usize = 4;
const ROLLOFF: f64 = 0.35;
/// Pulse span in symbols on each side of the centre tap.
const PULSE_HALF_SPAN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Payload {
    /// Every burst of every device carries the same symbols.
    #[default]
    FixedPreamble,
    RandomPayload,
}

impl std::str::FromStr for Payload {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fixed_preamble" => Ok(Payload::FixedPreamble),
            "random_payload" => Ok(Payload::RandomPayload),
            other => Err(format!("unknown payload `{other}`")),
        }
    }
}

impl Payload {
    pub fn name(self) -> &'static str {
        match self {
            Payload::FixedPreamble => "fixed_preamble",
            Payload::RandomPayload => "random_payload",
        }
    }
}

/// Half-widths (or bounds) of the per-device impairment draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpairmentRanges {
    pub cfo_hz: f64,
    pub gain_imbalance_db: f64,
    pub phase_skew_rad: f64,
    /// Linear amplifier gain bounds; sets the per-device transmit power.
    pub a1: (f64, f64),
    /// Most negative third- and fifth-order coefficients (draws lie in `[min, 0]`).
    pub a3_min: f64,
    pub a5_min: f64,
    pub ramp_samples: (usize, usize),
    /// Minimum distance between two devices in range-normalized parameter space.
    pub min_separation: f64,
}

impl Default for ImpairmentRanges {
    fn default() -> Self {
        Self {
            cfo_hz: 25e3,
            gain_imbalance_db: 1.0,
            phase_skew_rad: 0.05,
            a1: (0.6, 1.0),
            a3_min: -0.15,
            a5_min: -0.05,
            ramp_samples: (50, 300),
            min_separation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_devices: usize,
    pub bursts_per_device: usize,
    pub payload: Payload,
    pub seed: u64,
    pub sample_rate_hz: f64,
    /// Steady-state power of a unit-gain burst over the receiver noise floor.
    pub capture_snr_db: f64,
    /// Standard deviation of a per-burst channel gain, in dB.
    pub channel_gain_jitter_db: f64,
    pub ranges: ImpairmentRanges,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_devices: 20,
            bursts_per_device: 500,
            payload: Payload::FixedPreamble,
            seed: 1,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            capture_snr_db: 21.0,
            channel_gain_jitter_db: 0.0,
            ranges: ImpairmentRanges::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_devices < 2 {
            return Err(invalid("num_devices", "need at least 2 devices"));
        }
        if self.bursts_per_device == 0 {
            return Err(invalid("bursts_per_device", "must be at least 1"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(invalid("sample_rate_hz", "must be positive"));
        }
        if self.capture_snr_db.is_nan() || !(self.channel_gain_jitter_db >= 0.0) {
            return Err(invalid("capture_snr_db/channel_gain_jitter_db", "out of range"));
        }
        let r = &self.ranges;
        if !(r.a1.0 > 0.0 && r.a1.0 <= r.a1.1) || r.a3_min > 0.0 || r.a5_min > 0.0 {
            return Err(invalid("ranges", "need 0 < a1_lo <= a1_hi and non-positive a3/a5 bounds"));
        }
        if r.ramp_samples.0 > r.ramp_samples.1 {
            return Err(invalid("ranges", "ramp bounds inverted"));
        }
        Ok(())
    }
}

/// Hardware impairments of one simulated transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterModel {
    pub device_id: usize,
    pub cfo_hz: f64,
    pub iq_gain_imbalance_db: f64,
    pub iq_phase_skew_rad: f64,
    /// Odd-order amplifier polynomial `a1 r + a3 r^3 + a5 r^5` on the
    /// instantaneous amplitude.
    pub pa_coeffs: [f64; 3],
    pub ramp_samples: usize,
}

impl EmitterModel {
    /// A device with no impairments at all.
    pub fn ideal(device_id: usize) -> Self {
        Self {
            device_id,
            cfo_hz: 0.0,
            iq_gain_imbalance_db: 0.0,
            iq_phase_skew_rad: 0.0,
            pa_coeffs: [1.0, 0.0, 0.0],
            ramp_samples: 0,
        }
    }

    /// Checks `a1 > 0` and that the amplifier map is increasing on `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let [a1, a3, a5] = self.pa_coeffs;
        if !(a1 > 0.0) {
            return Err(invalid("pa_coeffs", "a1 must be positive"));
        }
        let monotone = (0..=1000).all(|i| {
            let r = i as f64 / 1000.0;
            a1 + 3.0 * a3 * r * r + 5.0 * a5 * r.powi(4) > 0.0
        });
        if !monotone {
            return Err(invalid("pa_coeffs", "amplifier map is not monotone on [0, 1]"));
        }
        Ok(())
    }

    pub fn amplify(&self, r: f64) -> f64 {
        let [a1, a3, a5] = self.pa_coeffs;
        let r2 = r * r;
        r * (a1 + r2 * (a3 + a5 * r2))
    }

    fn normalized(&self, ranges: &ImpairmentRanges) -> [f64; 7] {
        let span = |lo: f64, hi: f64, v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        [
            span(-ranges.cfo_hz, ranges.cfo_hz, self.cfo_hz),
            span(-ranges.gain_imbalance_db, ranges.gain_imbalance_db, self.iq_gain_imbalance_db),
            span(-ranges.phase_skew_rad, ranges.phase_skew_rad, self.iq_phase_skew_rad),
            span(ranges.a1.0, ranges.a1.1, self.pa_coeffs[0]),
            span(ranges.a3_min, 0.0, self.pa_coeffs[1]),
            span(ranges.a5_min, 0.0, self.pa_coeffs[2]),
            span(
                ranges.ramp_samples.0 as f64,
                ranges.ramp_samples.1 as f64,
                self.ramp_samples as f64,
            ),
        ]
    }

    /// Euclidean distance in range-normalized parameter space.
    pub fn distance(&self, other: &Self, ranges: &ImpairmentRanges) -> f64 {
        self.normalized(ranges)
            .iter()
            .zip(other.normalized(ranges))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

const MAX_REDRAWS: usize = 10_000;

fn symmetric(r: &mut impl Rng, half: f64) -> f64 {
    if half > 0.0 {
        r.random_range(-half..=half)
    } else {
        0.0
    }
}

fn below_zero(r: &mut impl Rng, min: f64) -> f64 {
    if min < 0.0 {
        r.random_range(min..=0.0)
    } else {
        0.0
    }
}

fn draw_emitter(r: &mut impl Rng, device_id: usize, ranges: &ImpairmentRanges) -> EmitterModel {
    let a1 = if ranges.a1.1 > ranges.a1.0 {
        r.random_range(ranges.a1.0..=ranges.a1.1)
    } else {
        ranges.a1.0
    };
    EmitterModel {
        device_id,
        cfo_hz: symmetric(r, ranges.cfo_hz),
        iq_gain_imbalance_db: symmetric(r, ranges.gain_imbalance_db),
        iq_phase_skew_rad: symmetric(r, ranges.phase_skew_rad),
        pa_coeffs: [a1, below_zero(r, ranges.a3_min), below_zero(r, ranges.a5_min)],
        ramp_samples: r.random_range(ranges.ramp_samples.0..=ranges.ramp_samples.1),
    }
}

/// Draws `num_devices` emitters. A candidate closer than
/// `ranges.min_separation` to an accepted device (or with a non-monotone
/// amplifier) is re-drawn.
pub fn gen_emitters(spec: &SynthSpec) -> Result<Vec<EmitterModel>> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, "emitters");
    let mut models: Vec<EmitterModel> = Vec::with_capacity(spec.num_devices);
    for device_id in 0..spec.num_devices {
        let mut placed = false;
        for _ in 0..MAX_REDRAWS {
            let m = draw_emitter(&mut r, device_id, &spec.ranges);
            if m.validate().is_err() {
                continue;
            }
            if models
                .iter()
                .all(|o| o.distance(&m, &spec.ranges) >= spec.ranges.min_separation)
            {
                models.push(m);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::TooManyDevices {
                requested: spec.num_devices,
                achievable: models.len(),
            });
        }
    }
    Ok(models)
}

fn raised_cosine(t: f64) -> f64 {
    // t in symbol periods
    let sinc = if t.abs() < 1e-12 { 1.0 } else { (PI * t).sin() / (PI * t) };
    let denom = 1.0 - (2.0 * ROLLOFF * t).powi(2);
    if denom.abs() < 1e-9 {
        PI / 4.0 * sinc_at(1.0 / (2.0 * ROLLOFF))
    } else {
        sinc * (PI * ROLLOFF * t).cos() / denom
    }
}

fn sinc_at(t: f64) -> f64 {
    (PI * t).sin() / (PI * t)
}

/// Unimpaired waveform: QPSK symbols from the payload stream, pulse shaped
/// with a raised cosine at four samples per symbol and scaled to unit peak
/// amplitude.
pub fn clean_waveform(payload_seed: u64, length: usize) -> Vec<Complex64> {
    if length == 0 {
        return Vec::new();
    }
    let mut r = rng::stream(payload_seed, "payload");
    let n_symbols = length / SAMPLES_PER_SYMBOL + 2 * PULSE_HALF_SPAN + 1;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let symbols: Vec<Complex64> = (0..n_symbols)
        .map(|_| {
            let bits: u8 = r.random_range(0..4);
            Complex64::new(
                if bits & 1 == 0 { h } else { -h },
                if bits & 2 == 0 { h } else { -h },
            )
        })
        .collect();
    let offset = PULSE_HALF_SPAN * SAMPLES_PER_SYMBOL;
    let mut wave: Vec<Complex64> = (0..length)
        .map(|t| {
            let pos = (t + offset) as f64 / SAMPLES_PER_SYMBOL as f64;
            let centre = pos.round() as i64;
            let mut acc = Complex64::new(0.0, 0.0);
            for k in centre - PULSE_HALF_SPAN as i64..=centre + PULSE_HALF_SPAN as i64 {
                if k >= 0 && (k as usize) < n_symbols {
                    acc += symbols[k as usize] * raised_cosine(pos - k as f64);
                }
            }
            acc
        })
        .collect();
    let peak = wave.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak > 0.0 {
        wave.iter_mut().for_each(|z| *z /= peak);
    }
    wave
}

/// Per-burst nuisance parameters that do not identify the device.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BurstVariation {
    pub carrier_phase: f64,
    pub gain_db: f64,
}

pub fn synth_burst(model: &EmitterModel, payload_seed: u64, length: usize, sample_rate_hz: f64) -> Result<Vec<Iq>> {
    synth_burst_with(model, payload_seed, length, sample_rate_hz, &BurstVariation::default())
}

/// Clean waveform passed through, in order: IQ imbalance, the amplifier
/// polynomial on the instantaneous amplitude, the carrier offset phasor,
/// and the power-on ramp.
pub fn synth_burst_with(
    model: &EmitterModel,
    payload_seed: u64,
    length: usize,
    sample_rate_hz: f64,
    variation: &BurstVariation,
) -> Result<Vec<Iq>> {
    if length < model.ramp_samples {
        return Err(invalid("length", "burst shorter than the power-on ramp"));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(invalid("sample_rate_hz", "must be positive"));
    }
    let g = 10f64.powf(model.iq_gain_imbalance_db / 20.0);
    let phi = model.iq_phase_skew_rad;
    let mu = (Complex64::new(1.0, 0.0) + g * Complex64::from_polar(1.0, -phi)) / 2.0;
    let nu = (Complex64::new(1.0, 0.0) - g * Complex64::from_polar(1.0, phi)) / 2.0;
    let step = TAU * model.cfo_hz / sample_rate_hz;
    let channel = 10f64.powf(variation.gain_db / 20.0);
    let ramp = model.ramp_samples;

    Ok(clean_waveform(payload_seed, length)
        .into_iter()
        .enumerate()
        .map(|(t, z)| {
            let y = mu * z + nu * z.conj();
            let r = y.norm();
            let y = if r > 0.0 { y * (model.amplify(r) / r) } else { y };
            let y = y * Complex64::from_polar(1.0, step * t as f64 + variation.carrier_phase);
            let envelope = if t < ramp {
                0.5 * (1.0 - (PI * t as f64 / ramp as f64).cos())
            } else {
                1.0
            };
            let y = y * (envelope * channel);
            Iq::new(y.re as f32, y.im as f32)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_iq(w: &[Complex64]) -> Vec<Iq> {
        w.iter().map(|z| Iq::new(z.re as f32, z.im as f32)).collect()
    }

    #[test]
    fn emitters_are_reproducible_and_distinct() {
        let spec = SynthSpec {
            num_devices: 2,
            ..Default::default()
        };
        let a = gen_emitters(&spec).unwrap();
        assert_eq!(a, gen_emitters(&spec).unwrap());
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn twenty_emitters_respect_separation() {
        let spec = SynthSpec::default();
        let models = gen_emitters(&spec).unwrap();
        assert_eq!(models.len(), 20);
        for (i, a) in models.iter().enumerate() {
            assert!(a.validate().is_ok());
            for b in &models[i + 1..] {
                assert!(a.distance(b, &spec.ranges) >= spec.ranges.min_separation);
            }
        }
    }

    #[test]
    fn impossible_separation_is_reported() {
        let spec = SynthSpec {
            num_devices: 20,
            ranges: ImpairmentRanges {
                min_separation: 2.0,
                ..Default::default()
            },
            ..Default::default()
        };
        match gen_emitters(&spec) {
            Err(Error::TooManyDevices { requested, achievable }) => {
                assert_eq!(requested, 20);
                assert!(achievable < 20);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ideal_model_gives_clean_waveform() {
        let burst = synth_burst(&EmitterModel::ideal(0), 5, 400, DEFAULT_SAMPLE_RATE_HZ).unwrap();
        assert_eq!(burst, to_iq(&clean_waveform(5, 400)));
    }

    #[test]
    fn pure_cfo_keeps_magnitude() {
        let model = EmitterModel {
            cfo_hz: 20e3,
            ..EmitterModel::ideal(0)
        };
        let burst = synth_burst_with(
            &model,
            5,
            800,
            DEFAULT_SAMPLE_RATE_HZ,
            &BurstVariation { carrier_phase: 1.1, gain_db: 0.0 },
        )
        .unwrap();
        for (b, c) in burst.iter().zip(clean_waveform(5, 800)) {
            assert!((f64::from(b.norm()) - c.norm()).abs() <= 1e-6 * c.norm().max(1e-3));
        }
    }

    #[test]
    fn compression_lowers_the_peak() {
        let model = EmitterModel {
            pa_coeffs: [0.9, -0.1, 0.0],
            ..EmitterModel::ideal(0)
        };
        model.validate().unwrap();
        let clean_peak = clean_waveform(3, 600).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let burst = synth_burst(&model, 3, 600, DEFAULT_SAMPLE_RATE_HZ).unwrap();
        let peak = burst.iter().map(|z| f64::from(z.norm())).fold(0.0, f64::max);
        assert!(peak < 0.9 * clean_peak);
        // Polynomial on the amplitude grid stays below the linear term.
        assert!((1..=100).all(|i| model.amplify(i as f64 / 100.0) < 0.9 * i as f64 / 100.0));
    }

    #[test]
    fn non_monotone_amplifier_rejected() {
        let model = EmitterModel {
            pa_coeffs: [0.5, -0.5, 0.0],
            ..EmitterModel::ideal(0)
        };
        assert!(model.validate().is_err());
    }

    #[test]
    fn ramp_longer_than_burst_rejected() {
        let model = EmitterModel {
            ramp_samples: 100,
            ..EmitterModel::ideal(0)
        };
        assert!(synth_burst(&model, 1, 50, DEFAULT_SAMPLE_RATE_HZ).is_err());
    }

    #[test]
    fn clean_waveform_has_unit_peak() {
        let w = clean_waveform(9, 1024);
        let peak = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
        assert!(clean_waveform(9, 0).is_empty());
    }
}
