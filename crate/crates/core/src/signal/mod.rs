//! From complex captures to labeled magnitude datapoints.

mod corrupt;
mod detect;
pub mod format;
mod saliency;

use num_complex::Complex;

use crate::error::{invalid, Error, Result};

pub use corrupt::{corrupt, corrupt_with_draw, CorruptionDraw, CorruptionSpec};
pub use detect::{detect_bursts, detect_bursts_with, DetectorConfig};
pub use saliency::{saliency_sweep, LabeledBurst, SaliencyMap, DEFAULT_MIN_WINDOW};

/// One complex baseband sample.
pub type Iq = Complex<f32>;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100e6;
pub const DEFAULT_BURST_LEN: usize = 1024;
pub const DEFAULT_PRE_ROLL: usize = 500;
/// Default sub-burst window within an extracted burst.
pub const DEFAULT_SUB_BURST: (usize, usize) = (500, 756);

#[derive(Debug, Clone, PartialEq)]
pub struct IqCapture {
    pub samples: Vec<Iq>,
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
}

impl IqCapture {
    pub fn new(samples: Vec<Iq>, sample_rate_hz: f64, center_freq_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(invalid("sample_rate_hz", "must be positive"));
        }
        if let Some(i) = samples.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            center_freq_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Where a datapoint came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub capture_id: u64,
    pub burst_offset: u64,
}

/// `L` real samples with an optional zero-indexed class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Datapoint {
    pub values: Vec<f64>,
    pub label: Option<usize>,
    pub provenance: Provenance,
}

impl Datapoint {
    pub fn new(values: Vec<f64>, label: Option<usize>) -> Self {
        Self {
            values,
            label,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[f64]> for Datapoint {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Returns samples `[edge - pre_roll, edge - pre_roll + k)`.
pub fn extract_datapoint(capture: &IqCapture, edge: usize, k: usize, pre_roll: usize) -> Result<Vec<Iq>> {
    let start = edge as i64 - pre_roll as i64;
    let end = start + k as i64;
    if start < 0 || end > capture.len() as i64 || k == 0 {
        return Err(Error::OutOfBounds {
            start,
            end,
            len: capture.len(),
        });
    }
    Ok(capture.samples[start as usize..end as usize].to_vec())
}

pub fn sub_burst(burst: &[Iq], start: usize, end: usize) -> Result<Vec<Iq>> {
    if start >= end || end > burst.len() {
        return Err(Error::OutOfBounds {
            start: start as i64,
            end: end as i64,
            len: burst.len(),
        });
    }
    Ok(burst[start..end].to_vec())
}

/// `s_i = sqrt(I_i^2 + Q_i^2)`, computed in double precision.
pub fn magnitude(burst: &[Iq]) -> Datapoint {
    Datapoint::new(
        burst
            .iter()
            .map(|z| f64::from(z.re).hypot(f64::from(z.im)))
            .collect(),
        None,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Leave values as they are.
    #[default]
    None,
    /// Divide each datapoint by its own maximum.
    PerDatapoint,
    /// Divide every datapoint by the maximum over the whole set.
    Global,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::PerDatapoint => "per_datapoint",
            Normalization::Global => "global",
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Normalization::None),
            "per_datapoint" => Ok(Normalization::PerDatapoint),
            "global" => Ok(Normalization::Global),
            other => Err(format!("unknown normalization `{other}`")),
        }
    }
}

/// Divides by the largest sample. A datapoint without a positive maximum is
/// returned unchanged and flagged (`false`).
pub fn normalize(datapoint: &Datapoint) -> (Datapoint, bool) {
    let max = datapoint.values.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return (datapoint.clone(), false);
    }
    let mut out = datapoint.clone();
    out.values.iter_mut().for_each(|v| *v /= max);
    (out, true)
}

/// Divides every datapoint by the maximum over all of them and returns that
/// maximum (1 when nothing is positive).
pub fn normalize_global(datapoints: &mut [Datapoint]) -> f64 {
    let max = datapoints
        .iter()
        .flat_map(|d| d.values.iter().copied())
        .fold(0.0, f64::max);
    if !(max > 0.0) {
        return 1.0;
    }
    for d in datapoints.iter_mut() {
        d.values.iter_mut().for_each(|v| *v /= max);
    }
    max
}

/// Applies `mode` in place; returns the number of datapoints that could not
/// be normalized (all-zero).
pub fn apply_normalization(datapoints: &mut [Datapoint], mode: Normalization) -> usize {
    match mode {
        Normalization::None => 0,
        Normalization::Global => {
            normalize_global(datapoints);
            0
        }
        Normalization::PerDatapoint => {
            let mut flagged = 0;
            for d in datapoints.iter_mut() {
                let (n, ok) = normalize(d);
                *d = n;
                flagged += usize::from(!ok);
            }
            flagged
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ramp_capture(len: usize) -> IqCapture {
        let samples = (0..len).map(|i| Iq::new(i as f32, -(i as f32))).collect();
        IqCapture::new(samples, DEFAULT_SAMPLE_RATE_HZ, 2.44e9).unwrap()
    }

    #[test]
    fn capture_validation() {
        assert!(IqCapture::new(vec![], 0.0, 0.0).is_err());
        assert!(matches!(
            IqCapture::new(vec![Iq::new(0.0, f32::NAN)], 1.0, 0.0),
            Err(Error::NonFinite(0))
        ));
    }

    #[test]
    fn extraction_windows() {
        let cap = ramp_capture(3000);
        let burst = extract_datapoint(&cap, 500, DEFAULT_BURST_LEN, DEFAULT_PRE_ROLL).unwrap();
        assert_eq!(burst.len(), 1024);
        assert_eq!(burst[0], cap.samples[0]);
        assert!(matches!(
            extract_datapoint(&cap, 100, 1024, 500),
            Err(Error::OutOfBounds { start: -400, .. })
        ));
        assert!(extract_datapoint(&cap, 2500, 1024, 500).is_err());
    }

    #[test]
    fn sub_burst_slices() {
        let burst: Vec<Iq> = ramp_capture(1024).samples;
        assert_eq!(sub_burst(&burst, 0, 1024).unwrap(), burst);
        let sb = sub_burst(&burst, DEFAULT_SUB_BURST.0, DEFAULT_SUB_BURST.1).unwrap();
        assert_eq!(sb.len(), 256);
        assert_eq!(sb[0], burst[500]);
        assert!(sub_burst(&burst, 10, 10).is_err());
        assert!(sub_burst(&burst, 20, 10).is_err());
        assert!(sub_burst(&burst, 0, 1025).is_err());
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude(&[Iq::new(3.0, 4.0)]).values, vec![5.0]);
        assert!(magnitude(&[Iq::new(0.0, 0.0); 8]).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn normalize_examples() {
        let d = Datapoint::new(vec![2.0, 4.0, 8.0], Some(1));
        let (n, ok) = normalize(&d);
        assert!(ok);
        assert_eq!(n.values, vec![0.25, 0.5, 1.0]);
        assert_eq!(n.label, Some(1));
        assert_eq!(normalize(&n).0, n);
        let zero = Datapoint::new(vec![0.0; 3], None);
        assert_eq!(normalize(&zero), (zero.clone(), false));
    }

    #[test]
    fn global_normalization_preserves_ratios() {
        let mut set = vec![
            Datapoint::new(vec![1.0, 2.0], Some(0)),
            Datapoint::new(vec![4.0, 0.5], Some(1)),
        ];
        let before = set[0].values[1] / set[1].values[0];
        assert_eq!(normalize_global(&mut set), 4.0);
        assert_abs_diff_eq!(set[0].values[1] / set[1].values[0], before, epsilon = 1e-15);
        assert_eq!(set[1].values[0], 1.0);
    }

    proptest! {
        #[test]
        fn magnitude_matches_hypot(re in prop::collection::vec(-1e3f32..1e3, 1..64), seed in any::<u32>()) {
            let burst: Vec<Iq> = re.iter().enumerate()
                .map(|(i, r)| Iq::new(*r, (seed as f32 * 1e-6 + i as f32).sin() * 100.0))
                .collect();
            let m = magnitude(&burst);
            for (z, v) in burst.iter().zip(&m.values) {
                let oracle = (f64::from(z.re).powi(2) + f64::from(z.im).powi(2)).sqrt();
                prop_assert!((v - oracle).abs() <= 1e-12 * oracle.max(1.0));
            }
        }

        #[test]
        fn normalize_is_idempotent_and_scale_free(
            values in prop::collection::vec(0.0f64..100.0, 1..64),
            c in 1e-3f64..1e3,
        ) {
            let d = Datapoint::new(values.clone(), None);
            let (n, ok) = normalize(&d);
            if ok {
                let max = n.values.iter().copied().fold(0.0, f64::max);
                prop_assert!((max - 1.0).abs() < 1e-15);
                prop_assert_eq!(&normalize(&n).0, &n);
                let scaled = Datapoint::new(values.iter().map(|v| v * c).collect(), None);
                let ns = normalize(&scaled).0;
                for (a, b) in ns.values.iter().zip(&n.values) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
