use super::{IqCapture, DEFAULT_BURST_LEN};
use crate::error::{invalid, Error, Result};

/// Energy detector settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Moving-average length for the power estimate.
    pub window: usize,
    /// An edge fires when the averaged power exceeds this multiple of the
    /// noise floor.
    pub threshold_factor: f64,
    /// Trailing span over which the noise floor median is taken.
    pub floor_len: usize,
    /// The floor is re-estimated once per `floor_hop` samples.
    pub floor_hop: usize,
    /// Edges closer than this to the previous kept edge are dropped.
    pub merge_radius: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: 64,
            threshold_factor: 4.0,
            floor_len: 4096,
            floor_hop: 1024,
            merge_radius: DEFAULT_BURST_LEN,
        }
    }
}

pub fn detect_bursts(capture: &IqCapture, window: usize, threshold_factor: f64) -> Result<Vec<usize>> {
    detect_bursts_with(
        capture,
        &DetectorConfig {
            window,
            threshold_factor,
            ..DetectorConfig::default()
        },
    )
}

/// Rising-edge indices of bursts in `capture`.
///
/// The power `|z|^2` is smoothed by a trailing moving average. The noise
/// floor for each block of `floor_hop` samples is the median of the smoothed
/// power over the preceding `floor_len` samples (the first block looks at
/// the opening `floor_len` samples instead). An edge is an index where the
/// smoothed power crosses from at-or-below to above `threshold_factor`
/// times the floor.
pub fn detect_bursts_with(capture: &IqCapture, cfg: &DetectorConfig) -> Result<Vec<usize>> {
    if capture.is_empty() {
        return Err(Error::Empty("capture"));
    }
    if cfg.window == 0 {
        return Err(invalid("window", "must be at least 1"));
    }
    if !(cfg.threshold_factor > 1.0) {
        return Err(invalid("threshold_factor", "must exceed 1"));
    }
    if cfg.floor_len == 0 || cfg.floor_hop == 0 {
        return Err(invalid("floor_len/floor_hop", "must be at least 1"));
    }

    let len = capture.len();
    let mut smoothed = Vec::with_capacity(len);
    let mut acc = 0.0f64;
    let power = |i: usize| {
        let z = capture.samples[i];
        f64::from(z.re) * f64::from(z.re) + f64::from(z.im) * f64::from(z.im)
    };
    for i in 0..len {
        acc += power(i);
        if i >= cfg.window {
            acc -= power(i - cfg.window);
        }
        let count = (i + 1).min(cfg.window);
        smoothed.push((acc / count as f64).max(0.0));
    }

    let mut scratch = Vec::with_capacity(cfg.floor_len);
    let mut floor_for = |block_start: usize| {
        let (lo, hi) = if block_start == 0 {
            (0, cfg.floor_len.min(len))
        } else {
            (block_start.saturating_sub(cfg.floor_len), block_start)
        };
        scratch.clear();
        scratch.extend_from_slice(&smoothed[lo..hi]);
        let mid = scratch.len() / 2;
        *scratch.select_nth_unstable_by(mid, f64::total_cmp).1
    };

    let mut edges: Vec<usize> = Vec::new();
    let mut threshold = cfg.threshold_factor * floor_for(0);
    let mut prev_above = smoothed[0] > threshold;
    for (i, &power) in smoothed.iter().enumerate().take(len).skip(1) {
        if i % cfg.floor_hop == 0 {
            threshold = cfg.threshold_factor * floor_for(i);
        }
        let above = power > threshold;
        if above && !prev_above {
            let far_enough = edges
                .last()
                .is_none_or(|&last| i - last >= cfg.merge_radius);
            if far_enough {
                edges.push(i);
            }
        }
        prev_above = above;
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::signal::{Iq, DEFAULT_SAMPLE_RATE_HZ};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn capture(samples: Vec<Iq>) -> IqCapture {
        IqCapture::new(samples, DEFAULT_SAMPLE_RATE_HZ, 0.0).unwrap()
    }

    fn noise(n: usize, sigma: f32, seed: u64) -> Vec<Iq> {
        let mut r = rng::stream(seed, "noise");
        (0..n)
            .map(|_| {
                let a: f32 = r.sample(StandardNormal);
                let b: f32 = r.sample(StandardNormal);
                Iq::new(a * sigma, b * sigma)
            })
            .collect()
    }

    #[test]
    fn step_onto_tone() {
        let mut s = vec![Iq::new(0.0, 0.0); 10_000];
        s.extend((0..5000).map(|i| Iq::from_polar(1.0, 0.01 * i as f32)));
        let edges = detect_bursts(&capture(s), 64, 4.0).unwrap();
        assert_eq!(edges.len(), 1);
        assert!(edges[0].abs_diff(10_000) <= 64, "{edges:?}");
    }

    #[test]
    fn constant_power_noise_has_no_edges() {
        let mut r = rng::stream(3, "phase");
        let s: Vec<Iq> = (0..50_000)
            .map(|_| Iq::from_polar(1.0, r.random_range(0.0..std::f32::consts::TAU)))
            .collect();
        assert!(detect_bursts(&capture(s.clone()), 64, 4.0).unwrap().is_empty());
        assert!(detect_bursts(&capture(noise(50_000, 0.1, 4)), 64, 4.0).unwrap().is_empty());
    }

    #[test]
    fn planted_bursts_are_found() {
        let mut s = noise(60_000, 0.01, 5);
        let truth = [6000, 14_500, 25_000, 37_777, 50_001];
        for &t in &truth {
            for (j, z) in s[t..t + 1500].iter_mut().enumerate() {
                *z += Iq::from_polar(0.5, 0.3 * j as f32);
            }
        }
        let edges = detect_bursts(&capture(s), 64, 4.0).unwrap();
        assert_eq!(edges.len(), truth.len(), "{edges:?}");
        for (e, t) in edges.iter().zip(truth) {
            assert!(e.abs_diff(t) <= 64, "edge {e} vs {t}");
        }
    }

    #[test]
    fn nearby_edges_are_merged() {
        // A burst with a short dropout re-crosses the threshold within k.
        let mut s = vec![Iq::new(0.0, 0.0); 8000];
        for i in (2000..2400).chain(2600..3000) {
            s[i] = Iq::new(1.0, 0.0);
        }
        let edges = detect_bursts(&capture(s), 16, 4.0).unwrap();
        assert_eq!(edges, vec![2000]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let c = capture(vec![Iq::new(1.0, 0.0); 10]);
        assert!(detect_bursts(&c, 0, 4.0).is_err());
        assert!(detect_bursts(&c, 8, 1.0).is_err());
        assert!(matches!(
            detect_bursts(&IqCapture { samples: vec![], sample_rate_hz: 1.0, center_freq_hz: 0.0 }, 8, 4.0),
            Err(Error::Empty(_))
        ));
    }
}
