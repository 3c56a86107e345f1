//! Source-filter generator for aligned whisper/natural pairs.
//!
//! Each utterance draws one formant trajectory and one amplitude envelope.
//! The natural version excites that filter with a glottal pulse train that
//! follows a smooth random F0 contour (noise during unvoiced stretches); the
//! whispered version excites it with white noise throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::corpus::{PairedCorpus, Split, Utterance};
use super::{peak_normalize, Waveform};
use crate::error::{Error, Result};

use std::f64::consts::PI;

const PEAK: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusSpec {
    pub n_utterances: usize,
    /// Seconds per utterance.
    pub duration: f64,
    pub sample_rate: u32,
    pub f0_range: (f64, f64),
    /// (center Hz, bandwidth Hz) per resonance.
    pub formant_bank: Vec<(f64, f64)>,
    pub noise_gain: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            n_utterances: 8,
            duration: 1.5,
            sample_rate: 16_000,
            f0_range: (90.0, 260.0),
            formant_bank: vec![
                (650.0, 160.0),
                (1250.0, 200.0),
                (2600.0, 260.0),
                (3600.0, 320.0),
                (4500.0, 400.0),
                (5500.0, 500.0),
                (6500.0, 600.0),
                (7400.0, 700.0),
            ],
            noise_gain: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.f0_range;
        if !(lo > 50.0 && hi < 500.0 && lo < hi) {
            return Err(Error::Config(format!(
                "f0_range must lie within (50, 500) Hz with min < max, got ({lo}, {hi})"
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for &(c, bw) in &self.formant_bank {
            if !(c > 0.0 && c < nyquist && bw > 0.0) {
                return Err(Error::Config(format!(
                    "formant ({c} Hz, bw {bw} Hz) must have 0 < center < {nyquist} and bw > 0"
                )));
            }
        }
        if self.n_utterances == 0 {
            return Err(Error::Config("n_utterances must be at least 1".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.noise_gain > 0.0 && self.noise_gain.is_finite()) {
            return Err(Error::Config(format!("noise_gain must be positive, got {}", self.noise_gain)));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }
}

/// Two-pole resonator with per-sample retuning and unit gain at DC, so a
/// cascade keeps the relative formant levels of a vocal tract.
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tick(&mut self, x: f64, center: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let theta = 2.0 * PI * center / fs;
        let a1 = 2.0 * r * theta.cos();
        let a2 = -r * r;
        let y = (1.0 - a1 - a2) * x + a1 * self.y1 + a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Rosenberg glottal flow over one period, phase in [0, 1).
fn glottal_flow(phase: f64) -> f64 {
    const OPEN: f64 = 0.4;
    const CLOSE: f64 = 0.16;
    if phase < OPEN {
        0.5 * (1.0 - (PI * phase / OPEN).cos())
    } else if phase < OPEN + CLOSE {
        (PI * (phase - OPEN) / (2.0 * CLOSE)).cos()
    } else {
        0.0
    }
}

struct Slow {
    rate: f64,
    phase: f64,
}

impl Slow {
    fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Self {
        Self {
            rate: rng.gen_range(lo..hi),
            phase: rng.gen_range(0.0..2.0 * PI),
        }
    }

    fn at(&self, t: f64) -> f64 {
        (2.0 * PI * self.rate * t + self.phase).sin()
    }
}

/// Deterministic (whisper, natural) pair for `utterance_index`.
pub fn synth_pair(spec: &SyntheticCorpusSpec, utterance_index: usize) -> Result<(Waveform, Waveform)> {
    spec.validate()?;
    if utterance_index >= spec.n_utterances {
        return Err(Error::Config(format!(
            "utterance index {utterance_index} out of range (n_utterances {})",
            spec.n_utterances
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(utterance_index as u64);

    let fs = spec.sample_rate as f64;
    let n = spec.n_samples();
    let (f0_lo, f0_hi) = spec.f0_range;
    let span = f0_hi - f0_lo;

    let base_f0 = rng.gen_range(f0_lo + 0.15 * span..f0_hi - 0.15 * span);
    let f0_slow = Slow::draw(&mut rng, 0.4, 1.2);
    let f0_fast = Slow::draw(&mut rng, 2.0, 4.0);
    let envelope = Slow::draw(&mut rng, 2.5, 4.5);
    let formant_motion: Vec<Slow> = spec
        .formant_bank
        .iter()
        .map(|_| Slow::draw(&mut rng, 1.0, 3.0))
        .collect();

    // Alternating voiced / unvoiced stretches.
    let mut voiced = vec![false; n];
    let mut pos = 0usize;
    let mut is_voiced = rng.gen_bool(0.7);
    while pos < n {
        let secs = if is_voiced {
            rng.gen_range(0.18..0.40)
        } else {
            rng.gen_range(0.04..0.10)
        };
        let end = (pos + (secs * fs) as usize).min(n);
        voiced[pos..end].iter_mut().for_each(|v| *v = is_voiced);
        pos = end;
        is_voiced = !is_voiced;
    }

    let mut natural_exc = Vec::with_capacity(n);
    let mut whisper_exc = Vec::with_capacity(n);
    let mut phase = 0.0;
    let mut prev_flow = 0.0;
    let mut voicing = if voiced.first().copied().unwrap_or(false) { 1.0 } else { 0.0 };
    // ~5 ms crossfade between excitation types.
    let smooth = (-1.0 / (0.005 * fs)).exp();
    for (i, &v) in voiced.iter().enumerate() {
        let t = i as f64 / fs;
        let f0 = (base_f0 * (1.0 + 0.14 * f0_slow.at(t) + 0.05 * f0_fast.at(t))).clamp(f0_lo, f0_hi);
        phase += f0 / fs;
        if phase >= 1.0 {
            phase -= 1.0;
        }
        let flow = glottal_flow(phase);
        // Radiated glottal derivative, scaled to roughly unit amplitude across F0.
        let pulse = (flow - prev_flow) * 0.25 * fs / f0;
        prev_flow = flow;

        voicing = smooth * voicing + (1.0 - smooth) * if v { 1.0 } else { 0.0 };
        let env = 0.3 + 0.7 * (0.5 + 0.5 * envelope.at(t));
        let n_nat: f64 = rng.sample(StandardNormal);
        let n_wh: f64 = rng.sample(StandardNormal);
        let aspiration = 0.02 * spec.noise_gain * n_nat;
        natural_exc.push(env * (voicing * (pulse + aspiration) + (1.0 - voicing) * 0.3 * spec.noise_gain * n_nat));
        whisper_exc.push(env * spec.noise_gain * n_wh);
    }

    let filter = |exc: &[f64]| -> Vec<f64> {
        let mut stages: Vec<Resonator> = spec
            .formant_bank
            .iter()
            .map(|_| Resonator { y1: 0.0, y2: 0.0 })
            .collect();
        exc.iter()
            .enumerate()
            .map(|(i, &x)| {
                let t = i as f64 / fs;
                stages
                    .iter_mut()
                    .zip(&spec.formant_bank)
                    .zip(&formant_motion)
                    .fold(x, |acc, ((r, &(c, bw)), m)| {
                        let center = (c * (1.0 + 0.12 * m.at(t))).min(0.95 * fs / 2.0);
                        r.tick(acc, center, bw, fs)
                    })
            })
            .collect()
    };

    let mut natural = filter(&natural_exc);
    let mut whisper = filter(&whisper_exc);
    peak_normalize(&mut natural, PEAK);
    peak_normalize(&mut whisper, PEAK);
    Ok((
        Waveform {
            samples: whisper,
            sample_rate: spec.sample_rate,
        },
        Waveform {
            samples: natural,
            sample_rate: spec.sample_rate,
        },
    ))
}

/// All utterances of `spec`, ordered by index, every one marked as training data.
pub fn synth_corpus(spec: &SyntheticCorpusSpec) -> Result<PairedCorpus> {
    let utterances = (0..spec.n_utterances)
        .map(|i| {
            let (whisper, natural) = synth_pair(spec, i)?;
            Ok(Utterance {
                id: format!("utt{i:04}"),
                whisper,
                natural,
                split: Split::Train,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PairedCorpus::new(utterances)
}
