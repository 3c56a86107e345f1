use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{make_batch, ChunkPool};
use super::step::{regression_step, train_step, LossReport, TrainState, TrainingConfig};
use crate::autodiff::{read_checkpoint, write_checkpoint, TensorRecord};
use crate::error::{Error, Result};
use crate::model::{load_store, store_records, Discriminator, Generator, SpectralNormState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Adversarial,
    /// Spectral regularizer only, no discriminator.
    Regression,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Adversarial => "adversarial",
            TrainMode::Regression => "regression",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adversarial" => Some(TrainMode::Adversarial),
            "regression" => Some(TrainMode::Regression),
            _ => None,
        }
    }
}

pub const METRICS_HEADER: &str = "step,d_total,d_real,d_fake,d_shuffle,g_adv,g_reg,g_total,wall_ms";

/// Per-step CSV log.
pub struct MetricsLog {
    out: BufWriter<File>,
    path: PathBuf,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(f);
        writeln!(out, "{METRICS_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, r: &LossReport, wall_ms: f64) -> Result<()> {
        let vals: Vec<String> = r.values().iter().map(|v| format!("{v:e}")).collect();
        writeln!(self.out, "{},{},{wall_ms:.3}", r.step, vals.join(",")).map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let ck = root.join("checkpoints");
        std::fs::create_dir_all(&ck).map_err(|e| Error::io(&ck, e))?;
        Ok(Self { root })
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    /// Checkpoint named by the `latest` entry, if any.
    pub fn latest(&self) -> Option<PathBuf> {
        let name = std::fs::read_to_string(self.checkpoints().join("latest")).ok()?;
        Some(self.checkpoints().join(name.trim()))
    }
}

/// Parameters of both networks plus the discriminator's singular vectors.
pub fn checkpoint_records(gen: &Generator, disc: Option<&Discriminator>) -> Vec<TensorRecord> {
    let mut recs = store_records(gen.params());
    if let Some(d) = disc {
        recs.extend(store_records(d.params()));
        for (i, st) in d.spectral_states().iter().enumerate() {
            recs.push(TensorRecord {
                name: format!("disc.sn{i}.u"),
                shape: vec![st.u.len()],
                values: st.u.clone(),
            });
            recs.push(TensorRecord {
                name: format!("disc.sn{i}.v"),
                shape: vec![st.v.len()],
                values: st.v.clone(),
            });
        }
    }
    recs
}

pub fn save_checkpoint(dir: &RunDir, step: usize, gen: &Generator, disc: Option<&Discriminator>) -> Result<PathBuf> {
    let name = format!("step_{step:06}.ckpt");
    let path = dir.checkpoints().join(&name);
    write_checkpoint(&path, &checkpoint_records(gen, disc))?;
    let latest = dir.checkpoints().join("latest");
    std::fs::write(&latest, format!("{name}\n")).map_err(|e| Error::io(&latest, e))?;
    Ok(path)
}

pub fn load_generator(gen: &mut Generator, path: &Path) -> Result<()> {
    let recs = read_checkpoint(path)?;
    load_store(gen.params_mut(), &recs, "gen.")
}

pub fn load_discriminator(disc: &mut Discriminator, path: &Path) -> Result<()> {
    let recs = read_checkpoint(path)?;
    let params: Vec<TensorRecord> = recs.iter().filter(|r| !r.name.starts_with("disc.sn")).cloned().collect();
    load_store(disc.params_mut(), &params, "disc.")?;
    let get = |name: String| {
        recs.iter()
            .find(|r| r.name == name)
            .map(|r| r.values.clone())
            .ok_or_else(|| Error::Usage(format!("checkpoint is missing {name}")))
    };
    let states = (0..disc.spectral_states().len())
        .map(|i| {
            let u = get(format!("disc.sn{i}.u"))?;
            let v = get(format!("disc.sn{i}.v"))?;
            let mut st = SpectralNormState { u, v, sigma: 1.0 };
            st.sigma = st.estimate(&disc.params().get(disc.params().id_of(&disc.weight_names()[i]).expect("weight")).value);
            Ok(st)
        })
        .collect::<Result<Vec<_>>>()?;
    disc.set_spectral_states(states)
}

/// Runs `cfg.steps` steps. Batches come from a stream seeded by `cfg.seed`;
/// with `out`, writes metrics, periodic checkpoints and a final checkpoint.
/// `on_step` sees every report (and the networks) as it is produced.
pub fn train<F>(
    gen: &mut Generator,
    mut disc: Option<&mut Discriminator>,
    pool: &ChunkPool,
    cfg: &TrainingConfig,
    mode: TrainMode,
    out: Option<&RunDir>,
    mut on_step: F,
) -> Result<Vec<LossReport>>
where
    F: FnMut(&LossReport, &Generator, Option<&Discriminator>) -> Result<()>,
{
    if mode == TrainMode::Adversarial && disc.is_none() {
        return Err(Error::Usage("adversarial training needs a discriminator".into()));
    }
    if pool.canvas != gen.config().canvas {
        return Err(Error::Config(format!(
            "chunk canvas {} differs from gen.canvas {}",
            pool.canvas,
            gen.config().canvas
        )));
    }
    let mut state = TrainState::new(gen, disc.as_deref(), cfg)?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = out.map(|d| MetricsLog::create(&d.metrics())).transpose()?;
    let mut reports = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let started = Instant::now();
        let batch = make_batch(pool, cfg.batch_size, cfg.shuffle, &mut batch_rng)?;
        let r = match (mode, disc.as_deref_mut()) {
            (TrainMode::Adversarial, Some(d)) => train_step(gen, d, &batch, cfg, &mut state)?,
            _ => regression_step(gen, &batch, cfg, &mut state)?,
        };
        if !r.all_finite() {
            return Err(Error::Numeric(format!("non-finite loss at step {}: {r:?}", r.step)));
        }
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        if let Some(log) = log.as_mut() {
            log.append(&r, wall_ms)?;
        }
        if let Some(dir) = out {
            if cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0 {
                save_checkpoint(dir, r.step, gen, disc.as_deref())?;
            }
        }
        on_step(&r, gen, disc.as_deref())?;
        reports.push(r);
    }
    if let Some(dir) = out {
        let last = reports.last().map_or(0, |r| r.step);
        if cfg.checkpoint_every == 0 || last % cfg.checkpoint_every != 0 {
            save_checkpoint(dir, last, gen, disc.as_deref())?;
        }
    }
    Ok(reports)
}

/// Regression baseline: [`train`] in [`TrainMode::Regression`].
pub fn train_regression(gen: &mut Generator, pool: &ChunkPool, cfg: &TrainingConfig, out: Option<&RunDir>) -> Result<Vec<LossReport>> {
    train(gen, None, pool, cfg, TrainMode::Regression, out, |_, _, _| Ok(()))
}
