use rand::Rng;

use super::spectral::{matrix_dims, SpectralNormState};
use super::{check_ladder, truncated_normal};
use crate::autodiff::{same_padding, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    /// Input length; the final linear layer is sized for it.
    pub canvas: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub input_channels: usize,
    pub leaky_slope: f64,
    pub spectral_norm: bool,
    pub power_iterations: usize,
    /// Power iterations run once at construction.
    pub warmup_iterations: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            canvas: 16384,
            channels: vec![64, 128, 256, 512, 1024],
            kernel: 31,
            stride: 4,
            input_channels: 2,
            leaky_slope: 0.3,
            spectral_norm: true,
            power_iterations: 1,
            warmup_iterations: 500,
        }
    }
}

impl DiscriminatorConfig {
    pub fn toy() -> Self {
        Self {
            canvas: 1024,
            channels: vec![8, 16, 32, 64, 128],
            ..Self::default()
        }
    }

    pub fn final_len(&self) -> usize {
        self.canvas / self.stride.pow(self.channels.len() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        check_ladder("disc.channels", &self.channels)?;
        if self.stride < 1 || self.kernel < self.stride {
            return Err(Error::Config(format!(
                "disc.kernel ({}) must be >= disc.stride ({}) >= 1",
                self.kernel, self.stride
            )));
        }
        if self.input_channels != 2 {
            return Err(Error::Config(format!(
                "disc.input_channels must be 2 (signal + condition), got {}",
                self.input_channels
            )));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("disc.leaky_slope must be finite".into()));
        }
        let r = self.stride.pow(self.channels.len() as u32);
        if self.canvas == 0 || self.canvas % r != 0 {
            return Err(Error::Config(format!(
                "disc.canvas {} is not divisible by stride^layers = {r}",
                self.canvas
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

/// Conditional pair critic: scores `(signal, condition)` stacked on channels.
#[derive(Debug, Clone)]
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    params: ParamStore,
    convs: Vec<Layer>,
    out: Layer,
    /// One state per weight: the convolutions, then the output layer.
    sn: Vec<SpectralNormState>,
}

impl Discriminator {
    pub fn build<R: Rng + ?Sized>(cfg: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.kernel;
        let mut params = ParamStore::new();
        let mut convs = Vec::new();
        let mut prev = cfg.input_channels;
        for (i, &c) in cfg.channels.iter().enumerate() {
            let std = (2.0 / (prev * k) as f64).sqrt();
            let w = params.add(format!("disc.conv{i}.w"), vec![c, prev, k], truncated_normal(c * prev * k, std, rng), true)?;
            let b = params.add(format!("disc.conv{i}.b"), vec![c], vec![0.0; c], true)?;
            convs.push(Layer { w, b });
            prev = c;
        }
        let n_in = prev * cfg.final_len();
        let w = params.add("disc.out.w", vec![1, n_in], truncated_normal(n_in, (1.0 / n_in as f64).sqrt(), rng), true)?;
        let b = params.add("disc.out.b", vec![1], vec![0.0], true)?;
        let out = Layer { w, b };
        let mut sn = Vec::new();
        for id in convs.iter().chain(std::iter::once(&out)).map(|l| l.w) {
            let (rows, cols) = matrix_dims(&params.get(id).shape)?;
            let mut st = SpectralNormState::new(rows, cols, rng);
            st.power_iterate(&params.get(id).value, cfg.warmup_iterations);
            sn.push(st);
        }
        Ok(Self {
            cfg,
            params,
            convs,
            out,
            sn,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn spectral_states(&self) -> &[SpectralNormState] {
        &self.sn
    }

    /// Replaces the singular-vector estimates (checkpoint restore).
    pub fn set_spectral_states(&mut self, states: Vec<SpectralNormState>) -> Result<()> {
        if states.len() != self.sn.len() || states.iter().zip(&self.sn).any(|(a, b)| a.rows() != b.rows() || a.cols() != b.cols()) {
            return Err(Error::Usage("spectral-norm states do not match the discriminator".into()));
        }
        self.sn = states;
        Ok(())
    }

    fn weight_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.convs.iter().chain(std::iter::once(&self.out)).map(|l| l.w)
    }

    /// Names of the spectrally normalized weights, in state order.
    pub fn weight_names(&self) -> Vec<String> {
        self.weight_ids().map(|id| self.params.get(id).name.clone()).collect()
    }

    /// Advances every singular-vector estimate by `n_iter` power iterations on
    /// the current weights.
    pub fn power_iterate(&mut self, n_iter: usize) {
        let ids: Vec<ParamId> = self.weight_ids().collect();
        for (st, id) in self.sn.iter_mut().zip(ids) {
            st.power_iterate(&self.params.get(id).value, n_iter);
        }
    }

    /// Current `w / sigma` for each weight, as the forward pass would use it.
    pub fn normalized_weights(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.weight_ids()
            .zip(&self.sn)
            .map(|(id, st)| {
                let p = self.params.get(id);
                let sigma = st.estimate(&p.value);
                let v = if self.cfg.spectral_norm {
                    if sigma <= crate::autodiff::SIGMA_MIN {
                        vec![0.0; p.value.len()]
                    } else {
                        p.value.iter().map(|x| x / sigma).collect()
                    }
                } else {
                    p.value.clone()
                };
                (p.name.clone(), p.shape.clone(), v)
            })
            .collect()
    }

    fn weight(&self, tape: &mut Tape, id: ParamId, state: &SpectralNormState, detached: bool) -> Result<Var> {
        let w = if detached {
            tape.param_detached(&self.params, id)
        } else {
            tape.param(&self.params, id)
        };
        if self.cfg.spectral_norm {
            tape.spectral_scale(w, &state.u, &state.v)
        } else {
            Ok(w)
        }
    }

    /// Scores `[B, 1]` for `signal` and `condition`, both `[B, 1, canvas]`.
    /// With `detached`, parameters enter the tape as constants so gradients
    /// reach only the inputs.
    pub fn forward(&self, tape: &mut Tape, signal: Var, condition: Var, detached: bool) -> Result<Var> {
        let expected = |b: usize| vec![b, 1, self.cfg.canvas];
        let batch = tape.shape(signal).first().copied().unwrap_or(0);
        for v in [signal, condition] {
            if tape.shape(v) != expected(batch) {
                return Err(Error::shape(
                    "discriminate",
                    format!("{:?}", expected(batch)),
                    format!("{:?}", tape.shape(v)),
                ));
            }
        }
        let (pl, pr) = same_padding(self.cfg.kernel, self.cfg.stride);
        let mut h = tape.concat_channels(signal, condition)?;
        for (layer, st) in self.convs.iter().zip(&self.sn) {
            let w = self.weight(tape, layer.w, st, detached)?;
            let b = if detached {
                tape.param_detached(&self.params, layer.b)
            } else {
                tape.param(&self.params, layer.b)
            };
            h = tape.conv1d(h, w, Some(b), self.cfg.stride, pl, pr)?;
            h = tape.leaky_relu(h, self.cfg.leaky_slope)?;
        }
        let w = self.weight(tape, self.out.w, self.sn.last().expect("output state"), detached)?;
        let b = if detached {
            tape.param_detached(&self.params, self.out.b)
        } else {
            tape.param(&self.params, self.out.b)
        };
        tape.linear(h, w, Some(b))
    }

    /// Scores on plain buffers of `batch` rows of `canvas` samples each.
    pub fn discriminate(&self, signal: &[f64], condition: &[f64], batch: usize) -> Result<Vec<f64>> {
        let t = self.cfg.canvas;
        let mut tape = Tape::new();
        let s = tape.constant(vec![batch, 1, signal.len() / batch.max(1)], signal.to_vec())?;
        let c = tape.constant(vec![batch, 1, condition.len() / batch.max(1)], condition.to_vec())?;
        if signal.len() != batch * t || condition.len() != batch * t {
            return Err(Error::shape(
                "discriminate",
                format!("{batch} x {t} samples"),
                format!("{} and {}", signal.len(), condition.len()),
            ));
        }
        let out = self.forward(&mut tape, s, c, true)?;
        Ok(tape.value(out).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn score_shape_and_asymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Discriminator::build(DiscriminatorConfig::toy(), &mut rng).unwrap();
        let a: Vec<f64> = (0..3 * 1024).map(|i| (i as f64 * 0.03).sin()).collect();
        let b: Vec<f64> = (0..3 * 1024).map(|i| (i as f64 * 0.11).cos() * 0.2).collect();
        let s1 = d.discriminate(&a, &b, 3).unwrap();
        let s2 = d.discriminate(&b, &a, 3).unwrap();
        assert_eq!(s1.len(), 3);
        assert_ne!(s1, s2);
        assert!(d.discriminate(&a[..2048], &b[..2048], 1).is_err());
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Discriminator::build(DiscriminatorConfig::toy(), &mut rng).unwrap();
        for p in d.params_mut().iter_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let id = d.params().id_of("disc.out.b").unwrap();
        d.params_mut().get_mut(id).value[0] = 0.5;
        d.power_iterate(1);
        let x: Vec<f64> = (0..1024).map(|i| (i as f64).sin()).collect();
        assert_eq!(d.discriminate(&x, &x, 1).unwrap(), vec![0.5]);
    }

    #[test]
    fn warm_start_sigma_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Discriminator::build(DiscriminatorConfig::toy(), &mut rng).unwrap();
        for (name, shape, w) in d.normalized_weights() {
            let s = super::super::largest_singular_value(&w, &shape, 1e-12, 5000).unwrap();
            assert!(s <= 1.0 + 1e-3, "{name}: {s}");
        }
    }
}
