//! Plain-text run configuration: `key = value` lines with dotted sections,
//! `#` comments, a `preset` base and later values overriding earlier ones.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{DiscriminatorConfig, GeneratorConfig};
use crate::pitch::{EvalConfig, StreamMode};
use crate::signal::Window;
use crate::training::{ShuffleMode, TrainingConfig};

/// Ordered `(key, value)` pairs as they appear in a file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    pub pairs: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: bad key {k:?}", i + 1)));
            }
            pairs.push((k.to_string(), v.to_string()));
        }
        Ok(Self { pairs })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses a `key=value` command-line override.
    pub fn parse_override(s: &str) -> Result<(String, String)> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
        Ok((k.trim().to_string(), v.trim().to_string()))
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.pairs.push((key.into(), value.into()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full-size networks on 16384-sample canvases.
    Paper,
    /// 1024-sample canvas, ladder {8, 16, 32, 64, 128}.
    Toy,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Toy => "toy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(Preset::Paper),
            "toy" => Some(Preset::Toy),
            _ => None,
        }
    }
}

/// Everything a run needs, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    /// Corpus manifest used by `train`.
    pub manifest: Option<PathBuf>,
    pub gen: GeneratorConfig,
    /// `disc.canvas` always follows `gen.canvas`.
    pub disc: DiscriminatorConfig,
    pub train: TrainingConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (gen, disc, train) = match preset {
            Preset::Paper => (GeneratorConfig::default(), DiscriminatorConfig::default(), TrainingConfig::default()),
            Preset::Toy => (
                GeneratorConfig::toy(),
                DiscriminatorConfig::toy(),
                TrainingConfig {
                    checkpoint_every: 100,
                    ..TrainingConfig::default()
                },
            ),
        };
        Self {
            preset,
            manifest: None,
            gen,
            disc,
            train,
            eval: EvalConfig::default(),
        }
    }

    /// Starts from the `preset` named in `kv` (default `paper`), then applies
    /// every other pair in order.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut preset = Preset::Paper;
        for (k, v) in &kv.pairs {
            if k == "preset" {
                preset = Preset::parse(v).ok_or_else(|| Error::Config(format!("preset must be paper or toy, got {v:?}")))?;
            }
        }
        let mut cfg = Self::preset(preset);
        for (k, v) in &kv.pairs {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.gen;
        let d = &mut self.disc;
        let t = &mut self.train;
        let f = &mut self.eval.f0;
        match key {
            "data.manifest" => self.manifest = Some(PathBuf::from(value)),
            "gen.canvas" => g.canvas = num(key, value)?,
            "gen.kernel" => g.kernel = num(key, value)?,
            "gen.pooling" => g.pooling = num(key, value)?,
            "gen.enc_channels" => g.enc_channels = list(key, value)?,
            "gen.dec_channels" => g.dec_channels = list(key, value)?,
            "gen.latent_channels" => g.latent_channels = num(key, value)?,
            "gen.skip_init" => g.skip_init = num(key, value)?,
            "gen.output_tanh" => g.output_tanh = num(key, value)?,
            "gen.prelu_init" => g.prelu_init = num(key, value)?,
            "disc.channels" => d.channels = list(key, value)?,
            "disc.kernel" => d.kernel = num(key, value)?,
            "disc.stride" => d.stride = num(key, value)?,
            "disc.leaky_slope" => d.leaky_slope = num(key, value)?,
            "disc.spectral_norm" => d.spectral_norm = num(key, value)?,
            "disc.power_iterations" => d.power_iterations = num(key, value)?,
            "disc.warmup_iterations" => d.warmup_iterations = num(key, value)?,
            "train.lr_d" => t.lr_d = num(key, value)?,
            "train.lr_g" => t.lr_g = num(key, value)?,
            "train.beta1" => t.beta1 = num(key, value)?,
            "train.beta2" => t.beta2 = num(key, value)?,
            "train.epsilon" => t.epsilon = num(key, value)?,
            "train.lambda" => t.lambda = num(key, value)?,
            "train.batch_size" => t.batch_size = num(key, value)?,
            "train.steps" => t.steps = num(key, value)?,
            "train.preemph" => t.preemph = num(key, value)?,
            "train.seed" => t.seed = num(key, value)?,
            "train.checkpoint_every" => t.checkpoint_every = num(key, value)?,
            "train.shuffle" => {
                t.shuffle = ShuffleMode::parse(value).ok_or_else(|| bad(key, value, "within_batch or corpus_wide"))?
            }
            "stft.frame_len" => t.stft.frame_len = num(key, value)?,
            "stft.hop" => t.stft.hop = num(key, value)?,
            "stft.db_floor" => t.stft.db_floor = num(key, value)?,
            "stft.window" => {
                t.stft.window = match value {
                    "hann" => Window::Hann,
                    "rectangular" => Window::Rectangular,
                    _ => return Err(bad(key, value, "hann or rectangular")),
                }
            }
            "chunk.stride" => t.chunk_stride = num(key, value)?,
            "eval.fmin" => f.fmin = num(key, value)?,
            "eval.fmax" => f.fmax = num(key, value)?,
            "eval.frame_len" => f.frame_len = num(key, value)?,
            "eval.hop" => f.hop = num(key, value)?,
            "eval.voicing_threshold" => f.voicing_threshold = num(key, value)?,
            "eval.silence_rms" => f.silence_rms = num(key, value)?,
            "eval.bin_width" => self.eval.bin_width = num(key, value)?,
            "eval.mode" => {
                self.eval.mode = match value {
                    "frames" => StreamMode::Frames,
                    "utterance_means" => StreamMode::UtteranceMeans,
                    _ => return Err(bad(key, value, "frames or utterance_means")),
                }
            }
            "preset" => return Err(Error::Config("preset can only be chosen up front".into())),
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        self.disc.canvas = self.gen.canvas;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.disc.validate()?;
        self.train.validate()?;
        self.eval.f0.validate(crate::signal::DEFAULT_SAMPLE_RATE)?;
        if !(self.eval.bin_width > 0.0) {
            return Err(Error::Config(format!("eval.bin_width must be positive, got {}", self.eval.bin_width)));
        }
        Ok(())
    }

    /// Every key with its resolved value; parsing it back yields `self`.
    pub fn to_text(&self) -> String {
        let (g, d, t, f) = (&self.gen, &self.disc, &self.train, &self.eval.f0);
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("preset", self.preset.as_str().into());
        if let Some(m) = &self.manifest {
            kv("data.manifest", m.display().to_string());
        }
        kv("gen.canvas", g.canvas.to_string());
        kv("gen.kernel", g.kernel.to_string());
        kv("gen.pooling", g.pooling.to_string());
        kv("gen.enc_channels", join(&g.enc_channels));
        kv("gen.dec_channels", join(&g.dec_channels));
        kv("gen.latent_channels", g.latent_channels.to_string());
        kv("gen.skip_init", g.skip_init.to_string());
        kv("gen.output_tanh", g.output_tanh.to_string());
        kv("gen.prelu_init", g.prelu_init.to_string());
        kv("disc.channels", join(&d.channels));
        kv("disc.kernel", d.kernel.to_string());
        kv("disc.stride", d.stride.to_string());
        kv("disc.leaky_slope", d.leaky_slope.to_string());
        kv("disc.spectral_norm", d.spectral_norm.to_string());
        kv("disc.power_iterations", d.power_iterations.to_string());
        kv("disc.warmup_iterations", d.warmup_iterations.to_string());
        kv("train.lr_d", t.lr_d.to_string());
        kv("train.lr_g", t.lr_g.to_string());
        kv("train.beta1", t.beta1.to_string());
        kv("train.beta2", t.beta2.to_string());
        kv("train.epsilon", t.epsilon.to_string());
        kv("train.lambda", t.lambda.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.steps", t.steps.to_string());
        kv("train.preemph", t.preemph.to_string());
        kv("train.seed", t.seed.to_string());
        kv("train.shuffle", t.shuffle.as_str().into());
        kv("train.checkpoint_every", t.checkpoint_every.to_string());
        kv("stft.frame_len", t.stft.frame_len.to_string());
        kv("stft.hop", t.stft.hop.to_string());
        kv("stft.db_floor", t.stft.db_floor.to_string());
        kv(
            "stft.window",
            match t.stft.window {
                Window::Hann => "hann",
                Window::Rectangular => "rectangular",
            }
            .into(),
        );
        kv("chunk.stride", t.chunk_stride.to_string());
        kv("eval.fmin", f.fmin.to_string());
        kv("eval.fmax", f.fmax.to_string());
        kv("eval.frame_len", f.frame_len.to_string());
        kv("eval.hop", f.hop.to_string());
        kv("eval.voicing_threshold", f.voicing_threshold.to_string());
        kv("eval.silence_rms", f.silence_rms.to_string());
        kv("eval.bin_width", self.eval.bin_width.to_string());
        kv(
            "eval.mode",
            match self.eval.mode {
                StreamMode::Frames => "frames",
                StreamMode::UtteranceMeans => "utterance_means",
            }
            .into(),
        );
        s
    }
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{key}: expected {expected}, got {value:?}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(key, value, std::any::type_name::<T>()))
}

fn list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|p| num(key, p.trim())).collect()
}
