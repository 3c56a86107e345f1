//! Least-squares adversarial terms and the dB-domain spectral regularizer.

use rustfft::num_complex::Complex;

use crate::autodiff::{CustomOp, Tape, Var};
use crate::error::{Error, Result};
use crate::signal::{StftConfig, StftPlan};

/// The three discriminator terms and their 1/3-weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DLossTerms {
    pub real: f64,
    pub fake: f64,
    pub shuffle: f64,
    pub total: f64,
}

fn mean_sq_to(s: &[f64], target: f64) -> f64 {
    s.iter().map(|v| (v - target) * (v - target)).sum::<f64>() / s.len() as f64
}

pub fn d_loss_terms(real: &[f64], fake: &[f64], shuffle: &[f64]) -> Result<DLossTerms> {
    if real.is_empty() {
        return Err(Error::Usage("d_loss on an empty batch".into()));
    }
    if fake.len() != real.len() || shuffle.len() != real.len() {
        return Err(Error::shape(
            "d_loss",
            format!("three score vectors of length {}", real.len()),
            format!("{}, {}, {}", real.len(), fake.len(), shuffle.len()),
        ));
    }
    let (r, f, s) = (mean_sq_to(real, 1.0), mean_sq_to(fake, 0.0), mean_sq_to(shuffle, 0.0));
    Ok(DLossTerms {
        real: r,
        fake: f,
        shuffle: s,
        total: (r + f + s) / 3.0,
    })
}

/// `(1/3) mean((s_real - 1)^2) + (1/3) mean(s_fake^2) + (1/3) mean(s_shuffle^2)`.
pub fn d_loss(real: &[f64], fake: &[f64], shuffle: &[f64]) -> Result<f64> {
    Ok(d_loss_terms(real, fake, shuffle)?.total)
}

/// `mean((s - 1)^2)`.
pub fn g_adv_loss(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Usage("g_adv_loss on an empty batch".into()));
    }
    Ok(mean_sq_to(scores, 1.0))
}

pub fn g_total_loss(adv: f64, reg: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(adv + lambda * reg)
}

/// Sum over frames and bins of `|dB_gen - dB_nat|`, averaged over the batch.
#[derive(Debug, Clone)]
pub struct SpectralLoss {
    plan: StftPlan,
}

struct SpectralBackward {
    plan: StftPlan,
    /// Per item, per frame, `d loss / d |X|` folded with `X / |X|`.
    coef: Vec<Vec<Vec<Complex<f64>>>>,
    t: usize,
}

impl CustomOp for SpectralBackward {
    fn name(&self) -> &str {
        "spectral_reg_loss"
    }

    fn backward(&self, _inputs: &[&[f64]], _output: &[f64], grad_out: &[f64]) -> Vec<Option<Vec<f64>>> {
        let up = grad_out[0];
        let hop = self.plan.config().hop;
        let mut g = vec![0.0; self.coef.len() * self.t];
        for (item, frames) in self.coef.iter().enumerate() {
            let row = &mut g[item * self.t..(item + 1) * self.t];
            for (f, coef) in frames.iter().enumerate() {
                if coef.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
                    continue;
                }
                let scaled: Vec<Complex<f64>> = coef.iter().map(|c| c * up).collect();
                let start = f * hop;
                for (dst, v) in row.iter_mut().skip(start).zip(self.plan.magnitude_backward(&scaled)) {
                    *dst += v;
                }
            }
        }
        vec![Some(g)]
    }
}

impl SpectralLoss {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        Ok(Self { plan: StftPlan::new(cfg)? })
    }

    pub fn config(&self) -> &StftConfig {
        self.plan.config()
    }

    fn rows<'a>(&self, x: &'a [f64], batch: usize) -> Result<std::slice::Chunks<'a, f64>> {
        if batch == 0 || x.len() % batch != 0 || x.is_empty() {
            return Err(Error::shape("spectral_reg_loss", format!("{batch} equal rows"), x.len()));
        }
        Ok(x.chunks(x.len() / batch))
    }

    /// Loss value on plain buffers of `batch` rows.
    pub fn value(&self, generated: &[f64], natural: &[f64], batch: usize) -> Result<f64> {
        if generated.len() != natural.len() {
            return Err(Error::shape("spectral_reg_loss", natural.len(), generated.len()));
        }
        let mut total = 0.0;
        for (g, n) in self.rows(generated, batch)?.zip(self.rows(natural, batch)?) {
            let dg = self.plan.db_frames(g);
            let dn = self.plan.db_frames(n);
            total += dg.values.iter().zip(&dn.values).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        Ok(total / batch as f64)
    }

    /// Records the loss of `generated: [B, 1, T]` against constant `natural`
    /// samples on `tape`. Bins at or below the dB floor pass no gradient.
    pub fn record(&self, tape: &mut Tape, generated: Var, natural: &[f64]) -> Result<Var> {
        let (batch, t) = match tape.shape(generated)[..] {
            [b, 1, t] => (b, t),
            ref s => return Err(Error::shape("spectral_reg_loss", "[B, 1, T]", format!("{s:?}"))),
        };
        if natural.len() != batch * t {
            return Err(Error::shape("spectral_reg_loss", format!("{} natural samples", batch * t), natural.len()));
        }
        let floor = self.plan.config().amplitude_floor();
        let db_scale = 20.0 / std::f64::consts::LN_10;
        let inv_b = 1.0 / batch as f64;
        let n_frames = self.plan.n_frames(t);
        let gen = tape.value(generated);
        let mut total = 0.0;
        let mut coef = Vec::with_capacity(batch);
        for item in 0..batch {
            let g = &gen[item * t..(item + 1) * t];
            let n = &natural[item * t..(item + 1) * t];
            let mut frames = Vec::with_capacity(n_frames);
            for f in 0..n_frames {
                let xg = self.plan.spectrum(g, f);
                let xn = self.plan.spectrum(n, f);
                let fc = xg
                    .iter()
                    .zip(&xn)
                    .map(|(a, b)| {
                        let (ma, mb) = (a.norm(), b.norm());
                        let diff = 20.0 * ma.max(floor).log10() - 20.0 * mb.max(floor).log10();
                        total += diff.abs();
                        if ma <= floor || diff == 0.0 {
                            Complex::new(0.0, 0.0)
                        } else {
                            // d|diff|/d|X| = sign * 20 / (ln10 |X|), times X / |X|.
                            a * (diff.signum() * db_scale * inv_b / (ma * ma))
                        }
                    })
                    .collect();
                frames.push(fc);
            }
            coef.push(frames);
        }
        let rule = SpectralBackward {
            plan: self.plan.clone(),
            coef,
            t,
        };
        tape.custom(&[generated], vec![1], vec![total * inv_b], Box::new(rule))
    }
}

/// Convenience wrapper over [`SpectralLoss::value`].
pub fn spectral_reg_loss(generated: &[f64], natural: &[f64], batch: usize, cfg: &StftConfig) -> Result<f64> {
    SpectralLoss::new(*cfg)?.value(generated, natural, batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_loss_examples() {
        assert_eq!(d_loss(&[1.0], &[0.0], &[0.0]).unwrap(), 0.0);
        assert!((d_loss(&[0.0; 3], &[0.0; 3], &[0.0; 3]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((d_loss(&[0.5; 2], &[0.5; 2], &[0.5; 2]).unwrap() - 0.25).abs() < 1e-12);
        assert!(matches!(d_loss(&[], &[], &[]), Err(Error::Usage(_))));
        assert!(d_loss(&[1.0], &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn g_loss_examples() {
        assert_eq!(g_adv_loss(&[1.0]).unwrap(), 0.0);
        assert_eq!(g_adv_loss(&[0.0]).unwrap(), 1.0);
        assert_eq!(g_adv_loss(&[0.5]).unwrap(), 0.25);
        assert!((g_total_loss(0.25, 100.0, 0.01).unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(g_total_loss(0.3, 100.0, 0.0).unwrap(), 0.3);
        assert!(g_total_loss(0.3, 1.0, -1.0).is_err());
    }

    /// Broadband deterministic noise: every bin sits far above the floor.
    fn noise(n: usize) -> Vec<f64> {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                0.3 * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            })
            .collect()
    }

    #[test]
    fn identical_and_silent_are_zero() {
        let cfg = StftConfig::default();
        let x = noise(2048);
        assert_eq!(spectral_reg_loss(&x, &x, 1, &cfg).unwrap(), 0.0);
        assert_eq!(spectral_reg_loss(&[0.0; 2048], &[0.0; 2048], 2, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn tenfold_is_twenty_db_per_bin() {
        let cfg = StftConfig::default();
        let x = noise(4096);
        let y: Vec<f64> = x.iter().map(|v| 10.0 * v).collect();
        let plan = StftPlan::new(cfg).unwrap();
        let set = plan.db_frames(&x);
        assert!(set.values.iter().all(|&d| d > cfg.db_floor + 20.0), "noise must be above floor");
        let expected = 20.0 * (set.n_frames * set.n_bins) as f64;
        let got = spectral_reg_loss(&y, &x, 1, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-6 * expected, "{got} vs {expected}");
    }

    #[test]
    fn recorded_value_matches_plain() {
        let loss = SpectralLoss::new(StftConfig::default()).unwrap();
        let x = noise(2048);
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * (1.0 + 0.3 * (i as f64 * 0.01).sin())).collect();
        let mut tape = Tape::new();
        let g = tape.var(vec![2, 1, 1024], y.clone()).unwrap();
        let l = loss.record(&mut tape, g, &x).unwrap();
        let plain = loss.value(&y, &x, 2).unwrap();
        assert!((tape.scalar(l) - plain).abs() < 1e-9 * plain.max(1.0));
        assert!(tape.scalar(l) >= 0.0);
    }
}
