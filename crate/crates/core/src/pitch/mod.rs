//! Pitch statistics for comparing natural, adversarially generated and
//! regression-generated speech.

mod export;
mod f0;
mod report;

pub use export::{export_contour, export_spectrogram, read_contour};
pub use f0::{extract_f0, F0Config, PitchContour, PitchFrame};
pub use report::{compare_systems, EvalConfig, EvalReport, StdRatio, StreamMode, SystemInput, SystemStats};

use serde::Serialize;

/// Concatenates voiced F0 values of all contours, in order.
pub fn voiced_stream(contours: &[PitchContour]) -> Vec<f64> {
    contours.iter().flat_map(|c| c.voiced_values()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PitchHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub n_voiced: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Set when the stream was empty.
    pub degenerate: bool,
}

impl PitchHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low_hz,bin_high_hz,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.bin_edges[i], self.bin_edges[i + 1], c));
        }
        out
    }
}

/// Fixed-width histogram over `[lo, hi]`; values outside land in the end bins.
/// Statistics are computed over the sorted stream so they do not depend on order.
pub fn histogram(stream: &[f64], bin_width: f64, range: (f64, f64)) -> PitchHistogram {
    let (lo, hi) = range;
    let n_bins = (((hi - lo) / bin_width) - 1e-9).ceil().max(1.0) as usize;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|i| (lo + i as f64 * bin_width).min(hi)).collect();
    let mut counts = vec![0usize; n_bins];
    for &v in stream {
        let idx = ((v - lo) / bin_width).floor();
        let idx = if idx < 0.0 { 0 } else { (idx as usize).min(n_bins - 1) };
        counts[idx] += 1;
    }
    let mut sorted = stream.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (mean, std) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    PitchHistogram {
        bin_edges,
        counts,
        n_voiced: n,
        mean,
        std,
        degenerate: n == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn contour(values: &[Option<f64>]) -> PitchContour {
        PitchContour {
            frames: values
                .iter()
                .enumerate()
                .map(|(i, &f0)| PitchFrame {
                    time: i as f64 * 0.01,
                    f0,
                })
                .collect(),
            frame_len: 1024,
            hop: 160,
        }
    }

    #[test]
    fn stream_examples() {
        assert!(voiced_stream(&[contour(&[None, None])]).is_empty());
        assert_eq!(voiced_stream(&[contour(&[Some(150.0), None, Some(150.0)])]), vec![150.0, 150.0]);
        let s = voiced_stream(&[contour(&[Some(100.0)]), contour(&[None, Some(200.0), Some(210.0)])]);
        assert_eq!(s, vec![100.0, 200.0, 210.0]);
    }

    #[test]
    fn constant_stream_single_bin() {
        let h = histogram(&[150.0; 40], 5.0, (60.0, 400.0));
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.std, 0.0);
        assert_eq!(h.counts.len(), 68);
        assert_eq!(h.counts.iter().sum::<usize>(), 40);
    }

    #[test]
    fn two_point_stats() {
        let h = histogram(&[100.0, 300.0], 5.0, (60.0, 400.0));
        assert!((h.mean - 200.0).abs() < 1e-12);
        assert!((h.std - 100.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_stream_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..50_000).map(|_| rng.gen_range(100.0..300.0)).collect();
        let h = histogram(&s, 5.0, (60.0, 400.0));
        let expected = 200.0 / 12f64.sqrt();
        assert!((h.std - expected).abs() / expected < 0.05);
        // Direct two-pass computation.
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let std = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
        assert!((h.mean - mean).abs() < 1e-9);
        assert!((h.std - std).abs() < 1e-9);
        assert_eq!(h.counts.iter().sum::<usize>(), h.n_voiced);
    }

    #[test]
    fn empty_stream_is_flagged() {
        let h = histogram(&[], 5.0, (60.0, 400.0));
        assert!(h.degenerate);
        assert_eq!(h.n_voiced, 0);
        assert!(h.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn csv_has_one_row_per_bin() {
        let h = histogram(&[150.0], 5.0, (60.0, 400.0));
        let csv = h.to_csv();
        assert!(csv.starts_with("bin_low_hz,bin_high_hz,count\n"));
        assert_eq!(csv.lines().count(), 69);
    }
}
