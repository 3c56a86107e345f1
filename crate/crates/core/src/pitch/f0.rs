//! Normalized-autocorrelation F0 tracker with an energy gate.

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Config {
    pub fmin: f64,
    pub fmax: f64,
    pub frame_len: usize,
    pub hop: usize,
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Minimum frame RMS for a voiced frame.
    pub silence_rms: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        Self {
            fmin: 60.0,
            fmax: 400.0,
            frame_len: 1024,
            hop: 160,
            voicing_threshold: 0.45,
            silence_rms: 1e-3,
        }
    }
}

impl F0Config {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(self.fmin > 0.0 && self.fmin < self.fmax) {
            return Err(Error::Config(format!(
                "f0 range requires 0 < fmin < fmax, got fmin {} fmax {}",
                self.fmin, self.fmax
            )));
        }
        if (sample_rate as f64) < 8.0 * self.fmax {
            return Err(Error::Config(format!(
                "sample rate {sample_rate} too low for fmax {}",
                self.fmax
            )));
        }
        if self.hop == 0 || self.frame_len == 0 {
            return Err(Error::Config("f0 frame_len and hop must be positive".into()));
        }
        let max_lag = (sample_rate as f64 / self.fmin).ceil() as usize + 1;
        if max_lag >= self.frame_len {
            return Err(Error::Config(format!(
                "frame_len {} too short for fmin {} (needs > {max_lag} samples)",
                self.frame_len, self.fmin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame {
    pub time: f64,
    /// `None` when unvoiced.
    pub f0: Option<f64>,
}

impl PitchFrame {
    pub fn voiced(&self) -> bool {
        self.f0.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    pub frames: Vec<PitchFrame>,
    pub frame_len: usize,
    pub hop: usize,
}

impl PitchContour {
    pub fn voiced_count(&self) -> usize {
        self.frames.iter().filter(|f| f.voiced()).count()
    }

    pub fn voiced_rate(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            self.voiced_count() as f64 / self.frames.len() as f64
        }
    }

    pub fn voiced_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().filter_map(|f| f.f0)
    }
}

/// Per-frame analysis: best normalized autocorrelation peak and its period.
#[derive(Debug, Clone, Copy)]
struct FrameAnalysis {
    rms: f64,
    peak: f64,
    period: f64,
}

fn normalized_autocorr(frame: &[f64], lag: usize) -> f64 {
    let n = frame.len() - lag;
    let (a, b) = (&frame[..n], &frame[lag..]);
    let mut xy = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for (x, y) in a.iter().zip(b) {
        xy += x * y;
        xx += x * x;
        yy += y * y;
    }
    let den = (xx * yy).sqrt();
    if den > 0.0 {
        xy / den
    } else {
        0.0
    }
}

fn analyze(frame: &[f64], min_lag: usize, max_lag: usize) -> FrameAnalysis {
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let centered: Vec<f64> = frame.iter().map(|x| x - mean).collect();
    let rms = (centered.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt();

    // One extra lag on each side for interpolation.
    let lo = min_lag.saturating_sub(1).max(1);
    let hi = max_lag + 1;
    let r: Vec<f64> = (lo..=hi).map(|lag| normalized_autocorr(&centered, lag)).collect();
    let at = |lag: usize| r[lag - lo];

    let mut best = f64::NEG_INFINITY;
    for lag in min_lag..=max_lag {
        best = best.max(at(lag));
    }
    // Shortest-lag local maximum close to the global best; avoids picking
    // multiples of the true period.
    let mut chosen = None;
    for lag in min_lag..=max_lag {
        let v = at(lag);
        if v >= 0.9 * best && v >= at(lag - 1) && v >= at(lag + 1) {
            chosen = Some(lag);
            break;
        }
    }
    let lag = chosen.unwrap_or_else(|| {
        (min_lag..=max_lag)
            .max_by(|&a, &b| at(a).total_cmp(&at(b)))
            .unwrap_or(min_lag)
    });
    let (l, c, rr) = (at(lag - 1), at(lag), at(lag + 1));
    let den = l - 2.0 * c + rr;
    let delta = if den.abs() > 1e-12 {
        (0.5 * (l - rr) / den).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    FrameAnalysis {
        rms,
        peak: c,
        period: lag as f64 + delta,
    }
}

fn frame_offsets(len: usize, frame_len: usize, hop: usize) -> Vec<usize> {
    if len <= frame_len {
        vec![0]
    } else {
        (0..=(len - frame_len) / hop).map(|i| i * hop).collect()
    }
}

pub fn extract_f0(w: &Waveform, cfg: &F0Config) -> Result<PitchContour> {
    cfg.validate(w.sample_rate)?;
    let rate = w.sample_rate as f64;
    let min_lag = (rate / cfg.fmax).floor() as usize;
    let max_lag = (rate / cfg.fmin).ceil() as usize;
    let mut buf = vec![0.0; cfg.frame_len];
    let frames = frame_offsets(w.len(), cfg.frame_len, cfg.hop)
        .into_iter()
        .map(|off| {
            let end = (off + cfg.frame_len).min(w.len());
            buf.iter_mut().for_each(|v| *v = 0.0);
            buf[..end - off].copy_from_slice(&w.samples[off..end]);
            let a = analyze(&buf, min_lag, max_lag);
            let voiced = a.rms >= cfg.silence_rms && a.peak >= cfg.voicing_threshold;
            PitchFrame {
                time: (off as f64 + cfg.frame_len as f64 / 2.0) / rate,
                f0: voiced.then(|| (rate / a.period).clamp(cfg.fmin, cfg.fmax)),
            }
        })
        .collect();
    Ok(PitchContour {
        frames,
        frame_len: cfg.frame_len,
        hop: cfg.hop,
    })
}
