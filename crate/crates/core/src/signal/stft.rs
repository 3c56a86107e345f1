//! Short-time magnitude spectra in decibels.
//!
//! Frames start at offsets `0, hop, 2*hop, ...` and keep going until the
//! signal is covered; the last frame is zero-padded. A signal shorter than
//! one frame yields a single padded frame.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann.
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub db_floor: f64,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 512,
            hop: 256,
            db_floor: -100.0,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.frame_len.is_power_of_two() || self.frame_len < 2 {
            return Err(Error::Config(format!(
                "stft frame_len must be a power of two, got {}",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::Config(format!(
                "stft hop must satisfy 0 < hop <= frame_len (hop {}, frame_len {})",
                self.hop, self.frame_len
            )));
        }
        if !self.db_floor.is_finite() {
            return Err(Error::Config("stft db_floor must be finite".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Linear magnitude corresponding to `db_floor`.
    pub fn amplitude_floor(&self) -> f64 {
        10f64.powf(self.db_floor / 20.0)
    }
}

pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len <= frame_len {
        1
    } else {
        (len - frame_len).div_ceil(hop) + 1
    }
}

/// Dense `n_frames x n_bins` dB magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrameSet {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub db_floor: f64,
}

impl SpectralFrameSet {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_bins..(i + 1) * self.n_bins]
    }

    /// CSV with header `frame_index,bin_0,...,bin_N`, one row per frame.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("frame_index");
        for b in 0..self.n_bins {
            out.push_str(&format!(",bin_{b}"));
        }
        out.push('\n');
        for f in 0..self.n_frames {
            out.push_str(&f.to_string());
            for v in self.frame(f) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Reusable FFT plan and window for one [`StftConfig`].
#[derive(Clone)]
pub struct StftPlan {
    cfg: StftConfig,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("cfg", &self.cfg).finish()
    }
}

impl StftPlan {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.frame_len;
        let window = match cfg.window {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        };
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg,
            window,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn n_frames(&self, len: usize) -> usize {
        frame_count(len, self.cfg.frame_len, self.cfg.hop)
    }

    /// One-sided complex spectrum of frame `index` (windowed, zero-padded).
    pub fn spectrum(&self, samples: &[f64], index: usize) -> Vec<Complex<f64>> {
        let n = self.cfg.frame_len;
        let start = index * self.cfg.hop;
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| {
                let s = samples.get(start + i).copied().unwrap_or(0.0);
                Complex::new(s * self.window[i], 0.0)
            })
            .collect();
        self.fwd.process(&mut buf);
        buf.truncate(self.cfg.n_bins());
        buf
    }

    /// Gradient of `sum_k g[k] * |X_k|` with respect to the frame samples,
    /// where `coef[k] = g[k] * X_k / |X_k|` has already been formed by the caller.
    /// Returns `frame_len` values to be scattered back at the frame offset.
    pub fn magnitude_backward(&self, coef: &[Complex<f64>]) -> Vec<f64> {
        let n = self.cfg.frame_len;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        buf[..coef.len()].copy_from_slice(coef);
        // Unnormalized inverse transform evaluates sum_k coef[k] e^{+i 2 pi k n / N}.
        self.inv.process(&mut buf);
        buf.iter()
            .zip(&self.window)
            .map(|(c, w)| c.re * w)
            .collect()
    }

    pub fn db_frames(&self, samples: &[f64]) -> SpectralFrameSet {
        let n_frames = self.n_frames(samples.len());
        let n_bins = self.cfg.n_bins();
        let floor = self.cfg.amplitude_floor();
        let mut values = Vec::with_capacity(n_frames * n_bins);
        for f in 0..n_frames {
            values.extend(
                self.spectrum(samples, f)
                    .iter()
                    .map(|c| 20.0 * c.norm().max(floor).log10()),
            );
        }
        SpectralFrameSet {
            values,
            n_frames,
            n_bins,
            frame_len: self.cfg.frame_len,
            hop: self.cfg.hop,
            db_floor: self.cfg.db_floor,
        }
    }
}

pub fn stft_db(samples: &[f64], cfg: &StftConfig) -> Result<SpectralFrameSet> {
    Ok(StftPlan::new(*cfg)?.db_frames(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_signal_rectangular_window() {
        let cfg = StftConfig {
            window: Window::Rectangular,
            ..StftConfig::default()
        };
        let s = stft_db(&vec![1.0; 512], &cfg).unwrap();
        assert_eq!(s.n_frames, 1);
        assert_eq!(s.n_bins, 257);
        let dc = 20.0 * 512f64.log10();
        assert!((s.frame(0)[0] - dc).abs() < 1e-9);
        assert!((dc - 54.19).abs() < 0.01);
        assert!(s.frame(0)[1..].iter().all(|&v| v == -100.0));
    }

    #[test]
    fn silence_sits_on_floor() {
        let s = stft_db(&vec![0.0; 3000], &StftConfig::default()).unwrap();
        assert!(s.values.iter().all(|&v| v == -100.0));
        assert_eq!(s.n_frames, frame_count(3000, 512, 256));
    }

    #[test]
    fn deterministic_and_floored() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = stft_db(&x, &StftConfig::default()).unwrap();
        let b = stft_db(&x, &StftConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&v| v >= a.db_floor));
    }

    #[test]
    fn short_signal_single_padded_frame() {
        let s = stft_db(&[0.5; 100], &StftConfig::default()).unwrap();
        assert_eq!(s.n_frames, 1);
    }

    #[test]
    fn frame_counts_cover_signal() {
        assert_eq!(frame_count(1024, 512, 256), 3);
        assert_eq!(frame_count(1025, 512, 256), 4);
        assert_eq!(frame_count(512, 512, 256), 1);
        assert_eq!(frame_count(0, 512, 256), 1);
    }

    #[test]
    fn shift_by_hop_shifts_frames() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..5000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut shifted = vec![0.0; cfg.hop];
        shifted.extend_from_slice(&x);
        let a = stft_db(&x, &cfg).unwrap();
        let b = stft_db(&shifted, &cfg).unwrap();
        // Interior frames: both fully inside the signal.
        for f in 0..a.n_frames - 2 {
            for (u, v) in a.frame(f).iter().zip(b.frame(f + 1)) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bad_configs_rejected() {
        let c = StftConfig {
            frame_len: 500,
            ..StftConfig::default()
        };
        assert!(c.validate().is_err());
        let c = StftConfig {
            hop: 0,
            ..StftConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
