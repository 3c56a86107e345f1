//! Waveform handling: I/O, emphasis filters, chunking, STFT analysis and
//! the synthetic paired corpus.

mod chunk;
mod corpus;
mod stft;
mod synth;
mod wav;

pub use chunk::{chunk, chunk_count, ChunkPolicy, ChunkSpec};
pub use corpus::{read_manifest, split_corpus, write_manifest, ManifestEntry, PairedCorpus, Split, Utterance};
pub use stft::{frame_count, stft_db, SpectralFrameSet, StftConfig, StftPlan, Window};
pub use synth::{synth_corpus, synth_pair, SyntheticCorpusSpec};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_EMPHASIS: f64 = 0.95;

/// Mono audio in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    pub fn preemphasize(&self, coeff: f64) -> Waveform {
        Waveform {
            samples: preemphasize(&self.samples, coeff),
            sample_rate: self.sample_rate,
        }
    }

    pub fn deemphasize(&self, coeff: f64) -> Waveform {
        Waveform {
            samples: deemphasize(&self.samples, coeff),
            sample_rate: self.sample_rate,
        }
    }
}

/// First-order high-pass: `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn preemphasize(x: &[f64], coeff: f64) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&coeff));
    let mut y = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &s in x {
        y.push(s - coeff * prev);
        prev = s;
    }
    y
}

/// Inverse of [`preemphasize`]: `y[n] = x[n] + coeff * y[n-1]`.
pub fn deemphasize(x: &[f64], coeff: f64) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&coeff));
    let mut y = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &s in x {
        prev = s + coeff * prev;
        y.push(prev);
    }
    y
}

/// Scales `x` so its largest magnitude equals `target`. Silent input is returned unchanged.
pub fn peak_normalize(x: &mut [f64], target: f64) {
    let peak = x.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = target / peak;
        x.iter_mut().for_each(|s| *s *= g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn preemphasis_examples() {
        let y = preemphasize(&[1.0, 1.0, 1.0], 0.95);
        assert!((y[0] - 1.0).abs() < 1e-15);
        assert!((y[1] - 0.05).abs() < 1e-15);
        assert!((y[2] - 0.05).abs() < 1e-15);
        assert_eq!(preemphasize(&[0.0; 5], 0.95), vec![0.0; 5]);
        assert_eq!(preemphasize(&[0.3, -0.2], 0.0), vec![0.3, -0.2]);
        assert!(preemphasize(&[], 0.95).is_empty());
    }

    #[test]
    fn deemphasis_examples() {
        let y = deemphasize(&[1.0, 0.05, 0.05], 0.95);
        for v in y {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(deemphasize(&[0.3, -0.2], 0.0), vec![0.3, -0.2]);
    }

    #[test]
    fn emphasis_round_trip_on_random_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..4000);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = deemphasize(&preemphasize(&x, 0.95), 0.95);
            let err = x.iter().zip(&y).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-6, "round-trip error {err}");
        }
    }

    proptest! {
        #[test]
        fn emphasis_inverse_any_coeff(x in prop::collection::vec(-1.0f64..1.0, 0..512), c in 0.0f64..0.99) {
            let y = preemphasize(&deemphasize(&x, c), c);
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![f64::NAN], 16000).is_err());
    }
}
