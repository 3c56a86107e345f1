use rand::Rng;

use super::{check_ladder, truncated_normal};
use crate::autodiff::{sample_gaussian, same_padding, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Training canvas length in samples.
    pub canvas: usize,
    pub kernel: usize,
    /// Stride of every encoder and decoder layer.
    pub pooling: usize,
    pub enc_channels: Vec<usize>,
    pub dec_channels: Vec<usize>,
    /// Channels of the noise `z` concatenated to the thought vector.
    pub latent_channels: usize,
    pub skip_init: f64,
    pub output_tanh: bool,
    /// Initial slope of every PReLU.
    pub prelu_init: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            canvas: 16384,
            kernel: 31,
            pooling: 4,
            enc_channels: vec![64, 128, 256, 512, 1024],
            dec_channels: vec![512, 256, 128, 64, 1],
            latent_channels: 1024,
            skip_init: 1.0,
            output_tanh: true,
            prelu_init: 0.25,
        }
    }
}

impl GeneratorConfig {
    /// Desk-scale variant: 1024-sample canvas, ladder {8, 16, 32, 64, 128}.
    pub fn toy() -> Self {
        Self {
            canvas: 1024,
            enc_channels: vec![8, 16, 32, 64, 128],
            dec_channels: vec![64, 32, 16, 8, 1],
            latent_channels: 128,
            ..Self::default()
        }
    }

    pub fn layers(&self) -> usize {
        self.enc_channels.len()
    }

    /// Total down-sampling factor `pooling ^ layers`.
    pub fn reduction(&self) -> usize {
        self.pooling.pow(self.layers() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        check_ladder("gen.enc_channels", &self.enc_channels)?;
        check_ladder("gen.dec_channels", &self.dec_channels)?;
        if self.pooling < 1 || self.kernel < self.pooling {
            return Err(Error::Config(format!(
                "gen.kernel ({}) must be >= gen.pooling ({}) >= 1",
                self.kernel, self.pooling
            )));
        }
        if self.latent_channels == 0 {
            return Err(Error::Config("gen.latent_channels must be positive".into()));
        }
        let mut mirror: Vec<usize> = self.enc_channels.iter().rev().skip(1).copied().collect();
        mirror.push(1);
        if self.dec_channels != mirror {
            return Err(Error::Config(format!(
                "gen.dec_channels must mirror the encoder ladder ending in 1: expected {mirror:?}, got {:?}",
                self.dec_channels
            )));
        }
        if !self.skip_init.is_finite() || !self.prelu_init.is_finite() {
            return Err(Error::Config("gen.skip_init and gen.prelu_init must be finite".into()));
        }
        if self.canvas == 0 || self.canvas % self.reduction() != 0 {
            return Err(Error::Config(format!(
                "gen.canvas {} is not divisible by pooling^layers = {}",
                self.canvas,
                self.reduction()
            )));
        }
        Ok(())
    }

    /// Time length of the thought vector for an input of `t` samples.
    pub fn latent_len(&self, t: usize) -> Result<usize> {
        if t == 0 || t % self.reduction() != 0 {
            return Err(Error::shape(
                "generate",
                format!("length divisible by {}", self.reduction()),
                format!("{t}"),
            ));
        }
        Ok(t / self.reduction())
    }

    /// Closed-form parameter count: conv weights and biases, PReLU slopes and
    /// skip scales.
    pub fn parameter_count(&self) -> usize {
        let k = self.kernel;
        let mut n = 0;
        let mut prev = 1;
        for &c in &self.enc_channels {
            n += c * prev * k + 2 * c;
            prev = c;
        }
        n += self.enc_channels[..self.layers() - 1].iter().sum::<usize>();
        let mut cin = prev + self.latent_channels;
        for (j, &c) in self.dec_channels.iter().enumerate() {
            n += cin * c * k + c;
            if j + 1 < self.dec_channels.len() {
                n += c;
            }
            cin = c;
        }
        n
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: ParamId,
    b: ParamId,
    slope: Option<ParamId>,
}

/// Encoder-decoder with per-channel scaled skip connections.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    params: ParamStore,
    enc: Vec<Layer>,
    dec: Vec<Layer>,
    /// `skips[i]` scales encoder layer `i` (all but the innermost).
    skips: Vec<ParamId>,
}

/// Tape handles produced by [`Generator::forward`].
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOutput {
    /// `[B, 1, T]`.
    pub output: Var,
    /// Deepest encoder activation `c`, `[B, C_enc, T / reduction]`.
    pub thought: Var,
    /// `c` concatenated with `z`, the decoder input.
    pub latent: Var,
}

impl Generator {
    pub fn build<R: Rng + ?Sized>(cfg: GeneratorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.kernel;
        let mut params = ParamStore::new();
        let mut enc = Vec::new();
        let mut prev = 1;
        for (i, &c) in cfg.enc_channels.iter().enumerate() {
            let std = (2.0 / (prev * k) as f64).sqrt();
            let w = params.add(format!("gen.enc{i}.w"), vec![c, prev, k], truncated_normal(c * prev * k, std, rng), true)?;
            let b = params.add(format!("gen.enc{i}.b"), vec![c], vec![0.0; c], true)?;
            let slope = params.add(format!("gen.enc{i}.alpha"), vec![c], vec![cfg.prelu_init; c], true)?;
            enc.push(Layer { w, b, slope: Some(slope) });
            prev = c;
        }
        let skips = cfg.enc_channels[..cfg.layers() - 1]
            .iter()
            .enumerate()
            .map(|(i, &c)| params.add(format!("gen.skip{i}"), vec![c], vec![cfg.skip_init; c], true))
            .collect::<Result<Vec<_>>>()?;
        let mut dec = Vec::new();
        let mut cin = prev + cfg.latent_channels;
        let last = cfg.dec_channels.len() - 1;
        for (j, &c) in cfg.dec_channels.iter().enumerate() {
            // Each transposed-conv output sums about cin * K / stride inputs.
            let fan_in = (cin * k).div_ceil(cfg.pooling);
            let std = (2.0 / fan_in as f64).sqrt();
            let w = params.add(format!("gen.dec{j}.w"), vec![cin, c, k], truncated_normal(cin * c * k, std, rng), true)?;
            let b = params.add(format!("gen.dec{j}.b"), vec![c], vec![0.0; c], true)?;
            let slope = if j < last {
                Some(params.add(format!("gen.dec{j}.alpha"), vec![c], vec![cfg.prelu_init; c], true)?)
            } else {
                None
            };
            dec.push(Layer { w, b, slope });
            cin = c;
        }
        Ok(Self {
            cfg,
            params,
            enc,
            dec,
            skips,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Parameter count as built; equals [`GeneratorConfig::parameter_count`].
    pub fn parameter_count(&self) -> usize {
        self.params.trainable_count()
    }

    pub fn skip_ids(&self) -> &[ParamId] {
        &self.skips
    }

    /// Shape of `z` for a batch of `t`-sample inputs.
    pub fn latent_shape(&self, batch: usize, t: usize) -> Result<[usize; 3]> {
        Ok([batch, self.cfg.latent_channels, self.cfg.latent_len(t)?])
    }

    /// `z ~ N(0, I)` for a batch of `t`-sample inputs.
    pub fn sample_z<R: Rng + ?Sized>(&self, batch: usize, t: usize, rng: &mut R) -> Result<Vec<f64>> {
        let [b, c, l] = self.latent_shape(batch, t)?;
        Ok(sample_gaussian(b * c * l, rng))
    }

    /// Records the network on `tape`. `whisper` is `[B, 1, T]` and `z`
    /// matches [`Generator::latent_shape`].
    pub fn forward(&self, tape: &mut Tape, whisper: Var, z: Var) -> Result<GeneratorOutput> {
        let (batch, t) = match tape.shape(whisper)[..] {
            [b, 1, t] => (b, t),
            ref s => return Err(Error::shape("generate", "[B, 1, T]", format!("{s:?}"))),
        };
        let zshape = self.latent_shape(batch, t)?;
        if tape.shape(z) != zshape {
            return Err(Error::shape("generate", format!("z {zshape:?}"), format!("{:?}", tape.shape(z))));
        }
        let s = self.cfg.pooling;
        let (pl, pr) = same_padding(self.cfg.kernel, s);

        let mut h = whisper;
        let mut skips_out = Vec::with_capacity(self.enc.len());
        for layer in &self.enc {
            let w = tape.param(&self.params, layer.w);
            let b = tape.param(&self.params, layer.b);
            h = tape.conv1d(h, w, Some(b), s, pl, pr)?;
            let a = tape.param(&self.params, layer.slope.expect("encoder layers have slopes"));
            h = tape.prelu(h, a)?;
            skips_out.push(h);
        }
        let thought = h;
        let latent = tape.concat_channels(thought, z)?;

        let n = self.enc.len();
        h = latent;
        for (j, layer) in self.dec.iter().enumerate() {
            let out_len = tape.shape(h)[2] * s;
            let w = tape.param(&self.params, layer.w);
            let b = tape.param(&self.params, layer.b);
            h = tape.conv_transpose1d(h, w, Some(b), s, pl, out_len)?;
            match layer.slope {
                Some(slope) => {
                    let a = tape.param(&self.params, slope);
                    h = tape.prelu(h, a)?;
                    let src = n - 2 - j;
                    let scale = tape.param(&self.params, self.skips[src]);
                    h = tape.channel_scale_add(h, skips_out[src], scale)?;
                }
                None if self.cfg.output_tanh => h = tape.tanh(h)?,
                None => {}
            }
        }
        Ok(GeneratorOutput {
            output: h,
            thought,
            latent,
        })
    }

    /// Forward pass on plain buffers: `whisper` holds `batch` rows of `t`
    /// samples, `z` matches [`Generator::latent_shape`].
    pub fn generate(&self, whisper: &[f64], batch: usize, t: usize, z: &[f64]) -> Result<Vec<f64>> {
        if whisper.len() != batch * t {
            return Err(Error::shape("generate", format!("{batch} x {t} samples"), whisper.len()));
        }
        let mut tape = Tape::new();
        let x = tape.constant(vec![batch, 1, t], whisper.to_vec())?;
        let zv = tape.constant(self.latent_shape(batch, t)?.to_vec(), z.to_vec())?;
        let out = self.forward(&mut tape, x, zv)?;
        Ok(tape.value(out.output).to_vec())
    }

    /// [`Generator::generate`] with `z` drawn from `rng`.
    pub fn generate_with_rng<R: Rng + ?Sized>(&self, whisper: &[f64], batch: usize, t: usize, rng: &mut R) -> Result<Vec<f64>> {
        let z = self.sample_z(batch, t, rng)?;
        self.generate(whisper, batch, t, &z)
    }
}
