use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::emitter::{clean_waveform, gen_emitters, synth_burst_with, BurstVariation, EmitterModel, Payload, SynthSpec};
use crate::error::Result;
use crate::rng;
use crate::signal::format::Dataset;
use crate::signal::{
    corrupt, detect_bursts_with, extract_datapoint, magnitude, normalize_global, sub_burst, CorruptionSpec,
    DetectorConfig, Iq, IqCapture, Provenance, DEFAULT_BURST_LEN, DEFAULT_PRE_ROLL, DEFAULT_SUB_BURST,
};

/// Length of each synthesized transmission.
const BURST_SAMPLES: usize = 1024;
/// Quiet gap before each burst: this many samples plus up to `GAP_SPREAD`.
const GAP_SAMPLES: usize = 3072;
const GAP_SPREAD: usize = 1024;
/// Seed of the shared preamble; fixed so every device sends the same symbols.
const PREAMBLE_SEED: u64 = 0x5052_4541_4d42_4c45;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceStats {
    pub device_id: usize,
    pub planted: usize,
    pub detected: usize,
    /// Detected edges within the detector window of a planted burst start.
    pub matched: usize,
    /// Edges whose extraction window ran off the capture.
    pub extraction_failures: usize,
}

/// Everything needed to write the manifest next to the generated files.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub spec: SynthSpec,
    pub corruption: Option<CorruptionSpec>,
    pub emitters: Vec<EmitterModel>,
    pub devices: Vec<DeviceStats>,
    /// Value all magnitudes were divided by.
    pub global_scale: f64,
    /// Free-form `key = value` lines appended by callers (e.g. calibration).
    pub notes: Vec<(String, String)>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let spec = &self.spec;
        let _ = writeln!(s, "# synthetic emitter dataset manifest");
        let _ = writeln!(s, "seed = {}", spec.seed);
        let _ = writeln!(s, "num_devices = {}", spec.num_devices);
        let _ = writeln!(s, "bursts_per_device = {}", spec.bursts_per_device);
        let _ = writeln!(s, "payload = {}", spec.payload.name());
        let _ = writeln!(s, "sample_rate_hz = {}", spec.sample_rate_hz);
        let _ = writeln!(s, "capture_snr_db = {}", spec.capture_snr_db);
        let _ = writeln!(s, "channel_gain_jitter_db = {}", spec.channel_gain_jitter_db);
        let _ = writeln!(s, "global_scale = {:e}", self.global_scale);
        match &self.corruption {
            Some(c) => {
                let _ = writeln!(s, "corruption.jitter_max_hz = {}", c.jitter_max_hz);
                let _ = writeln!(s, "corruption.snr_db_low = {}", c.snr_db_range.0);
                let _ = writeln!(s, "corruption.snr_db_high = {}", c.snr_db_range.1);
                let _ = writeln!(s, "corruption.seed = {}", c.seed);
            }
            None => {
                let _ = writeln!(s, "corruption = none");
            }
        }
        for m in &self.emitters {
            let _ = writeln!(
                s,
                "device.{} = cfo_hz {:.3} gain_imbalance_db {:.5} phase_skew_rad {:.6} pa {:.5} {:.5} {:.5} ramp {}",
                m.device_id,
                m.cfo_hz,
                m.iq_gain_imbalance_db,
                m.iq_phase_skew_rad,
                m.pa_coeffs[0],
                m.pa_coeffs[1],
                m.pa_coeffs[2],
                m.ramp_samples
            );
        }
        for d in &self.devices {
            let _ = writeln!(
                s,
                "detect.{} = planted {} detected {} matched {} extraction_failures {}",
                d.device_id, d.planted, d.detected, d.matched, d.extraction_failures
            );
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub dataset: Dataset,
    /// One capture per device, kept only when requested.
    pub captures: Vec<IqCapture>,
    pub manifest: Manifest,
}

struct DeviceOutput {
    datapoints: Vec<crate::signal::Datapoint>,
    capture: Option<IqCapture>,
    stats: DeviceStats,
}

fn reference_power() -> f64 {
    let w = clean_waveform(PREAMBLE_SEED, BURST_SAMPLES);
    w.iter().map(|z| z.norm_sqr()).sum::<f64>() / w.len() as f64
}

fn device_capture(spec: &SynthSpec, model: &EmitterModel, noise_sigma: f64) -> Result<(IqCapture, Vec<usize>)> {
    let d = model.device_id as u64;
    let mut layout = rng::indexed_stream(spec.seed, "capture.layout", d);
    let mut noise = rng::indexed_stream(spec.seed, "capture.noise", d);

    let mut samples: Vec<Complex64> = Vec::with_capacity(
        spec.bursts_per_device * (BURST_SAMPLES + GAP_SAMPLES + GAP_SPREAD) + GAP_SAMPLES + DEFAULT_BURST_LEN,
    );
    let mut starts = Vec::with_capacity(spec.bursts_per_device);
    for b in 0..spec.bursts_per_device {
        let gap = GAP_SAMPLES + layout.random_range(0..=GAP_SPREAD);
        samples.resize(samples.len() + gap, Complex64::new(0.0, 0.0));
        let payload_seed = match spec.payload {
            Payload::FixedPreamble => PREAMBLE_SEED,
            Payload::RandomPayload => rng::derive_seed(spec.seed, "payload", d << 32 | b as u64),
        };
        let gain_db: f64 = layout.sample::<f64, _>(StandardNormal) * spec.channel_gain_jitter_db;
        let variation = BurstVariation {
            carrier_phase: layout.random_range(0.0..std::f64::consts::TAU),
            gain_db,
        };
        let burst = synth_burst_with(model, payload_seed, BURST_SAMPLES, spec.sample_rate_hz, &variation)?;
        starts.push(samples.len());
        samples.extend(burst.iter().map(|z| Complex64::new(f64::from(z.re), f64::from(z.im))));
    }
    samples.resize(samples.len() + GAP_SAMPLES + DEFAULT_BURST_LEN, Complex64::new(0.0, 0.0));

    let iq = samples
        .into_iter()
        .map(|z| {
            let a: f64 = noise.sample(StandardNormal);
            let b: f64 = noise.sample(StandardNormal);
            Iq::new((z.re + noise_sigma * a) as f32, (z.im + noise_sigma * b) as f32)
        })
        .collect();
    Ok((IqCapture::new(iq, spec.sample_rate_hz, 2.437e9)?, starts))
}

/// Builds one noisy capture per device, runs the burst pipeline on it
/// (detect, extract `k = 1024` with 500 samples of pre-roll, optional
/// corruption, 256-sample sub-burst, magnitude) and normalizes all
/// datapoints by their global maximum.
pub fn gen_dataset(
    spec: &SynthSpec,
    corruption: Option<&CorruptionSpec>,
    keep_captures: bool,
) -> Result<GeneratedDataset> {
    spec.validate()?;
    if let Some(c) = corruption {
        c.validate()?;
    }
    let emitters = gen_emitters(spec)?;
    let noise_power = reference_power() * 10f64.powf(-spec.capture_snr_db / 10.0);
    let noise_sigma = (noise_power / 2.0).sqrt();
    let detector = DetectorConfig::default();
    let (sb_start, sb_end) = DEFAULT_SUB_BURST;

    let outputs = emitters
        .par_iter()
        .map(|model| -> Result<DeviceOutput> {
            let (capture, starts) = device_capture(spec, model, noise_sigma)?;
            let edges = detect_bursts_with(&capture, &detector)?;
            let matched = edges
                .iter()
                .filter(|&&e| {
                    starts
                        .iter()
                        .any(|&s| e >= s && e <= s + model.ramp_samples + detector.window)
                })
                .count();
            let mut datapoints = Vec::with_capacity(edges.len());
            let mut extraction_failures = 0;
            for (i, &edge) in edges.iter().enumerate() {
                let burst = match extract_datapoint(&capture, edge, DEFAULT_BURST_LEN, DEFAULT_PRE_ROLL) {
                    Ok(b) => b,
                    Err(_) => {
                        extraction_failures += 1;
                        continue;
                    }
                };
                let burst = match corruption {
                    Some(c) => {
                        let index = (model.device_id as u64) << 32 | i as u64;
                        corrupt(&burst, &c.for_burst(index), spec.sample_rate_hz)?
                    }
                    None => burst,
                };
                let mut d = magnitude(&sub_burst(&burst, sb_start, sb_end)?);
                d.label = Some(model.device_id);
                d.provenance = Provenance {
                    capture_id: model.device_id as u64,
                    burst_offset: edge as u64,
                };
                datapoints.push(d);
            }
            Ok(DeviceOutput {
                datapoints,
                stats: DeviceStats {
                    device_id: model.device_id,
                    planted: starts.len(),
                    detected: edges.len(),
                    matched,
                    extraction_failures,
                },
                capture: keep_captures.then_some(capture),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut datapoints = Vec::new();
    let mut captures = Vec::new();
    let mut devices = Vec::new();
    for out in outputs {
        datapoints.extend(out.datapoints);
        captures.extend(out.capture);
        devices.push(out.stats);
    }
    let global_scale = normalize_global(&mut datapoints);
    // Match what a dataset file stores, so files and memory train alike.
    for d in &mut datapoints {
        d.values.iter_mut().for_each(|v| *v = f64::from(*v as f32));
    }
    let dataset = Dataset::new(datapoints, spec.num_devices)?;
    Ok(GeneratedDataset {
        dataset,
        captures,
        manifest: Manifest {
            spec: spec.clone(),
            corruption: corruption.copied(),
            emitters,
            devices,
            global_scale,
            notes: Vec::new(),
        },
    })
}
