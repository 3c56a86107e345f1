use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::batch::{BatchTriplet, ShuffleMode};
use super::losses::SpectralLoss;
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{Discriminator, Generator};
use crate::signal::{ChunkSpec, StftConfig, DEFAULT_EMPHASIS};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lr_d: f64,
    pub lr_g: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Weight of the spectral regularizer.
    pub lambda: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub preemph: f64,
    pub seed: u64,
    pub shuffle: ShuffleMode,
    /// Checkpoint period in steps (0 disables periodic checkpoints).
    pub checkpoint_every: usize,
    pub stft: StftConfig,
    /// Chunk hop used to cut training canvases.
    pub chunk_stride: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr_d: 4e-4,
            lr_g: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            epsilon: 1e-8,
            lambda: 1.0,
            batch_size: 16,
            steps: 2000,
            preemph: DEFAULT_EMPHASIS,
            seed: 0,
            shuffle: ShuffleMode::WithinBatch,
            checkpoint_every: 500,
            stft: StftConfig::default(),
            chunk_stride: ChunkSpec::default().stride,
        }
    }
}

impl TrainingConfig {
    pub fn adam_d(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_d,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn adam_g(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_g,
            ..self.adam_d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam_d().validate()?;
        self.adam_g().validate()?;
        self.stft.validate()?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("train.lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.preemph) {
            return Err(Error::Config(format!("train.preemph must be in [0, 1), got {}", self.preemph)));
        }
        if self.chunk_stride == 0 {
            return Err(Error::Config("train.chunk_stride must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step losses. Regression steps report zero discriminator and
/// adversarial terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub step: usize,
    pub d_total: f64,
    pub d_real: f64,
    pub d_fake: f64,
    pub d_shuffle: f64,
    pub g_adv: f64,
    pub g_reg: f64,
    pub g_total: f64,
}

impl LossReport {
    pub fn values(&self) -> [f64; 7] {
        [self.d_total, self.d_real, self.d_fake, self.d_shuffle, self.g_adv, self.g_reg, self.g_total]
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Optimizer moments, the noise stream and the step counter.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub adam_g: AdamState,
    pub adam_d: Option<AdamState>,
    pub rng: ChaCha8Rng,
    pub step: usize,
    spectral: SpectralLoss,
}

impl TrainState {
    pub fn new(gen: &Generator, disc: Option<&Discriminator>, cfg: &TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            adam_g: AdamState::new(gen.params()),
            adam_d: disc.map(|d| AdamState::new(d.params())),
            rng,
            step: 0,
            spectral: SpectralLoss::new(cfg.stft)?,
        })
    }

    pub fn spectral(&self) -> &SpectralLoss {
        &self.spectral
    }
}

fn check_batch(batch: &BatchTriplet, gen: &Generator) -> Result<()> {
    let n = batch.batch * batch.canvas;
    if batch.natural.len() != n || batch.whisper.len() != n || batch.shuffled.len() != n {
        return Err(Error::shape("train_step", format!("3 x {n} samples"), batch.natural.len()));
    }
    gen.config().latent_len(batch.canvas).map(|_| ())
}

/// One TTUR step: refresh the spectral-norm estimates, update D on
/// `[real, fake (detached), shuffle]`, then update G on `adv + lambda * reg`
/// scored by the freshly updated D.
pub fn train_step(
    gen: &mut Generator,
    disc: &mut Discriminator,
    batch: &BatchTriplet,
    cfg: &TrainingConfig,
    state: &mut TrainState,
) -> Result<LossReport> {
    check_batch(batch, gen)?;
    let (b, t) = (batch.batch, batch.canvas);
    let shape = vec![b, 1, t];
    disc.power_iterate(disc.config().power_iterations);

    let mut gt = Tape::new();
    let w_g = gt.constant(shape.clone(), batch.whisper.clone())?;
    let z = gen.sample_z(b, t, &mut state.rng)?;
    let z = gt.constant(gen.latent_shape(b, t)?.to_vec(), z)?;
    let fake = gen.forward(&mut gt, w_g, z)?.output;

    // Discriminator phase.
    let mut dt = Tape::new();
    let x = dt.constant(shape.clone(), batch.natural.clone())?;
    let w = dt.constant(shape.clone(), batch.whisper.clone())?;
    let xr = dt.constant(shape.clone(), batch.shuffled.clone())?;
    let f = dt.constant(shape.clone(), gt.value(fake).to_vec())?;
    let s_real = disc.forward(&mut dt, x, w, false)?;
    let s_fake = disc.forward(&mut dt, f, w, false)?;
    let s_shuf = disc.forward(&mut dt, x, xr, false)?;
    let d_real = dt.mse_to(s_real, 1.0)?;
    let d_fake = dt.mse_to(s_fake, 0.0)?;
    let d_shuf = dt.mse_to(s_shuf, 0.0)?;
    let third = 1.0 / 3.0;
    let d_total = dt.weighted_sum(&[(d_real, third), (d_fake, third), (d_shuf, third)])?;
    let grads = dt.backward(d_total)?;
    disc.params_mut().reset_grads();
    disc.params_mut().accumulate(&dt, &grads);
    let adam_d = state
        .adam_d
        .as_mut()
        .ok_or_else(|| Error::Usage("train state was created without a discriminator".into()))?;
    adam_step(disc.params_mut(), adam_d, &cfg.adam_d())?;

    // Generator phase, scored by the updated D.
    let w_cond = gt.constant(shape, batch.whisper.clone())?;
    let s_g = disc.forward(&mut gt, fake, w_cond, true)?;
    let adv = gt.mse_to(s_g, 1.0)?;
    let reg = state.spectral.record(&mut gt, fake, &batch.natural)?;
    let g_total = gt.weighted_sum(&[(adv, 1.0), (reg, cfg.lambda)])?;
    let grads = gt.backward(g_total)?;
    gen.params_mut().reset_grads();
    gen.params_mut().accumulate(&gt, &grads);
    adam_step(gen.params_mut(), &mut state.adam_g, &cfg.adam_g())?;

    state.step += 1;
    Ok(LossReport {
        step: state.step,
        d_total: dt.scalar(d_total),
        d_real: dt.scalar(d_real),
        d_fake: dt.scalar(d_fake),
        d_shuffle: dt.scalar(d_shuf),
        g_adv: gt.scalar(adv),
        g_reg: gt.scalar(reg),
        g_total: gt.scalar(g_total),
    })
}

/// One generator update on the spectral regularizer alone (no D).
pub fn regression_step(gen: &mut Generator, batch: &BatchTriplet, cfg: &TrainingConfig, state: &mut TrainState) -> Result<LossReport> {
    check_batch(batch, gen)?;
    if !(cfg.lambda > 0.0) {
        return Err(Error::Config("regression training needs train.lambda > 0".into()));
    }
    let (b, t) = (batch.batch, batch.canvas);
    let mut gt = Tape::new();
    let w = gt.constant(vec![b, 1, t], batch.whisper.clone())?;
    let z = gen.sample_z(b, t, &mut state.rng)?;
    let z = gt.constant(gen.latent_shape(b, t)?.to_vec(), z)?;
    let fake = gen.forward(&mut gt, w, z)?.output;
    let reg = state.spectral.record(&mut gt, fake, &batch.natural)?;
    let total = gt.scale(reg, cfg.lambda)?;
    let grads = gt.backward(total)?;
    gen.params_mut().reset_grads();
    gen.params_mut().accumulate(&gt, &grads);
    adam_step(gen.params_mut(), &mut state.adam_g, &cfg.adam_g())?;
    state.step += 1;
    Ok(LossReport {
        step: state.step,
        d_total: 0.0,
        d_real: 0.0,
        d_fake: 0.0,
        d_shuffle: 0.0,
        g_adv: 0.0,
        g_reg: gt.scalar(reg),
        g_total: gt.scalar(total),
    })
}
