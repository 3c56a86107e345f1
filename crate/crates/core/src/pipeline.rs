//! End-to-end plumbing shared by the command line and tests: seeded network
//! construction, training runs that leave a replayable directory behind, and
//! loading a trained generator back.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{KeyValues, RunConfig};
use crate::error::{Error, Result};
use crate::model::{Discriminator, Generator};
use crate::signal::{ChunkPolicy, ChunkSpec, PairedCorpus, Split};
use crate::training::{load_generator, train, ChunkPool, LossReport, RunDir, TrainMode};

/// Name of the resolved configuration inside a run directory.
pub const CONFIG_FILE: &str = "config.txt";

/// Generator weights come from stream 2 of the run seed, discriminator
/// weights from stream 3; batches and noise use streams 0 and 1.
pub fn init_generator(cfg: &RunConfig) -> Result<Generator> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    rng.set_stream(2);
    Generator::build(cfg.gen.clone(), &mut rng)
}

pub fn init_discriminator(cfg: &RunConfig) -> Result<Discriminator> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    rng.set_stream(3);
    Discriminator::build(cfg.disc.clone(), &mut rng)
}

/// Training canvases of the train split.
pub fn training_pool(cfg: &RunConfig, corpus: &PairedCorpus) -> Result<ChunkPool> {
    let spec = ChunkSpec {
        canvas: cfg.gen.canvas,
        stride: cfg.train.chunk_stride,
        policy: ChunkPolicy::DropShort,
    };
    spec.validate()?;
    let n_train = corpus.subset(Split::Train).count();
    if n_train < 2 {
        return Err(Error::Config(format!("need at least 2 training utterances, found {n_train}")));
    }
    let pool = ChunkPool::from_corpus(corpus, Some(Split::Train), &spec, cfg.train.preemph)?;
    if pool.n_sources() < 2 {
        return Err(Error::Config(format!(
            "fewer than 2 training utterances are at least one canvas ({} samples) long",
            cfg.gen.canvas
        )));
    }
    Ok(pool)
}

pub struct TrainedRun {
    pub gen: Generator,
    pub disc: Option<Discriminator>,
    pub reports: Vec<LossReport>,
}

/// Trains from scratch on the train split of `corpus`. With `out`, the
/// resolved config, metrics and checkpoints are written there.
pub fn run_training<F>(
    cfg: &RunConfig,
    corpus: &PairedCorpus,
    mode: TrainMode,
    out: Option<&Path>,
    on_step: F,
) -> Result<TrainedRun>
where
    F: FnMut(&LossReport, &Generator, Option<&Discriminator>) -> Result<()>,
{
    cfg.validate()?;
    let pool = training_pool(cfg, corpus)?;
    let dir = out.map(RunDir::new).transpose()?;
    if let Some(d) = &dir {
        let path = d.root.join(CONFIG_FILE);
        let text = format!("# mode = {}\n{}", mode.as_str(), cfg.to_text());
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    let mut gen = init_generator(cfg)?;
    let mut disc = match mode {
        TrainMode::Adversarial => Some(init_discriminator(cfg)?),
        TrainMode::Regression => None,
    };
    let reports = train(&mut gen, disc.as_mut(), &pool, &cfg.train, mode, dir.as_ref(), on_step)?;
    Ok(TrainedRun { gen, disc, reports })
}

/// `config.txt` of the run that produced `checkpoint`
/// (`<run>/checkpoints/<file>`), if present.
pub fn config_for_checkpoint(checkpoint: &Path) -> Option<PathBuf> {
    let run = checkpoint.parent()?.parent()?;
    let p = run.join(CONFIG_FILE);
    p.is_file().then_some(p)
}

pub fn read_run_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_key_values(&KeyValues::read(path)?)
}

/// A generator shaped by `cfg` with the weights of `checkpoint`.
pub fn load_trained_generator(cfg: &RunConfig, checkpoint: &Path) -> Result<Generator> {
    let mut gen = init_generator(cfg)?;
    load_generator(&mut gen, checkpoint)?;
    Ok(gen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::signal::{synth_corpus, SyntheticCorpusSpec};

    fn small() -> (RunConfig, PairedCorpus) {
        let mut cfg = RunConfig::preset(Preset::Toy);
        cfg.train.steps = 3;
        cfg.train.batch_size = 2;
        cfg.train.checkpoint_every = 2;
        cfg.disc.warmup_iterations = 20;
        let corpus = synth_corpus(&SyntheticCorpusSpec {
            n_utterances: 2,
            duration: 0.2,
            ..SyntheticCorpusSpec::default()
        })
        .unwrap();
        (cfg, corpus)
    }

    #[test]
    fn run_dir_replays() {
        let (cfg, corpus) = small();
        let dir = tempfile::tempdir().unwrap();
        let run = run_training(&cfg, &corpus, TrainMode::Adversarial, Some(dir.path()), |_, _, _| Ok(())).unwrap();
        assert_eq!(run.reports.len(), 3);
        let resolved = read_run_config(&dir.path().join(CONFIG_FILE)).unwrap();
        assert_eq!(resolved, cfg);
        let latest = RunDir::new(dir.path()).unwrap().latest().unwrap();
        assert!(latest.ends_with("step_000003.ckpt"));
        assert_eq!(config_for_checkpoint(&latest).unwrap(), dir.path().join(CONFIG_FILE));
        let g = load_trained_generator(&resolved, &latest).unwrap();
        let values = |g: &Generator| g.params().iter().flat_map(|p| p.value.clone()).collect::<Vec<f64>>();
        assert_eq!(values(&g), values(&run.gen));
    }

    #[test]
    fn needs_two_training_utterances() {
        let (cfg, mut corpus) = small();
        corpus.utterances.truncate(1);
        assert!(matches!(
            run_training(&cfg, &corpus, TrainMode::Regression, None, |_, _, _| Ok(())),
            Err(Error::Config(_))
        ));
    }
}
