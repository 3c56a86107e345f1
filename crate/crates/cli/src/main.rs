//! `wsegan`: corpus synthesis, training, inference and pitch evaluation.
//!
//! Exit codes: 0 success, 2 usage or configuration problem, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use wsegan::config::{KeyValues, RunConfig};
use wsegan::inference::{convert, InferenceOptions};
use wsegan::pipeline::{config_for_checkpoint, load_trained_generator, read_run_config, run_training};
use wsegan::pitch::{compare_systems, export_contour, EvalConfig, StreamMode, SystemInput};
use wsegan::signal::{
    read_wav, split_corpus, synth_corpus, write_manifest, write_wav, ManifestEntry, PairedCorpus, SyntheticCorpusSpec,
};
use wsegan::training::{RunDir, TrainMode};

#[derive(Parser)]
#[command(name = "wsegan", version, about = "Whispered-to-voiced speech conversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic paired whisper/natural corpus and its manifest.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seconds per utterance.
        #[arg(long, default_value_t = 1.5)]
        duration: f64,
        /// Fraction of utterances held out as test data.
        #[arg(long, default_value_t = 0.0)]
        test_frac: f64,
    },
    /// Train a generator (and discriminator) on a corpus manifest.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Adversarial)]
        mode: Mode,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Corpus manifest; overrides `data.manifest`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra `key=value` overrides applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Convert a whispered WAV with a trained generator.
    Infer {
        /// Checkpoint file, or a run directory (uses its latest checkpoint).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw fresh noise for every window instead of once per utterance.
        #[arg(long)]
        z_per_chunk: bool,
        /// Run configuration; defaults to the `config.txt` of the checkpoint's run.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare voiced-F0 statistics of natural and generated speech.
    Eval {
        #[arg(long)]
        natural: PathBuf,
        #[arg(long)]
        voiced: PathBuf,
        #[arg(long)]
        regression: Option<PathBuf>,
        /// Report path; histogram CSVs are written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Also export per-utterance contours.
        #[arg(long)]
        contours: bool,
        /// One value per utterance (its mean voiced F0) instead of all frames.
        #[arg(long)]
        utterance_means: bool,
        /// Reads `eval.*` keys from this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Adversarial,
    Regression,
}

impl From<Mode> for TrainMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Adversarial => TrainMode::Adversarial,
            Mode::Regression => TrainMode::Regression,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::SynthData {
            out,
            n,
            seed,
            duration,
            test_frac,
        } => synth_data(&out, n, seed, duration, test_frac),
        Command::Train {
            config,
            mode,
            steps,
            out,
            data,
            seed,
            overrides,
        } => train(config.as_deref(), mode.into(), steps, &out, data, seed, &overrides),
        Command::Infer {
            checkpoint,
            input,
            out,
            seed,
            z_per_chunk,
            config,
        } => infer(&checkpoint, &input, &out, seed, z_per_chunk, config.as_deref()),
        Command::Eval {
            natural,
            voiced,
            regression,
            out,
            contours,
            utterance_means,
            config,
        } => eval(&natural, &voiced, regression.as_deref(), &out, contours, utterance_means, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numeric = e
        .chain()
        .any(|c| matches!(c.downcast_ref::<wsegan::Error>(), Some(wsegan::Error::Numeric(_))));
    if numeric {
        3
    } else {
        2
    }
}

fn synth_data(out: &Path, n: usize, seed: u64, duration: f64, test_frac: f64) -> Result<()> {
    if n == 0 {
        return Err(wsegan::Error::Usage("--n must be at least 1".into()).into());
    }
    if !(0.0..1.0).contains(&test_frac) {
        return Err(wsegan::Error::Usage(format!("--test-frac must be in [0, 1), got {test_frac}")).into());
    }
    let spec = SyntheticCorpusSpec {
        n_utterances: n,
        duration,
        seed,
        ..SyntheticCorpusSpec::default()
    };
    let mut corpus = synth_corpus(&spec)?;
    if test_frac > 0.0 {
        corpus = split_corpus(corpus, 1.0 - test_frac, seed)?;
    }
    let mut entries = Vec::with_capacity(n);
    for sub in ["whisper", "natural"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| wsegan::Error::Io { path: d.clone(), source: e })?;
    }
    for u in &corpus.utterances {
        let file = format!("{}.wav", u.id);
        let (wp, np) = (Path::new("whisper").join(&file), Path::new("natural").join(&file));
        write_wav(&out.join(&wp), &u.whisper)?;
        write_wav(&out.join(&np), &u.natural)?;
        entries.push(ManifestEntry {
            id: u.id.clone(),
            whisper_path: wp,
            natural_path: np,
            split: u.split,
        });
    }
    let manifest = out.join("manifest.tsv");
    write_manifest(&manifest, &entries)?;
    println!("wrote {n} pairs and {}", manifest.display());
    Ok(())
}

fn train(
    config: Option<&Path>,
    mode: TrainMode,
    steps: Option<usize>,
    out: &Path,
    data: Option<PathBuf>,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<()> {
    let mut kv = KeyValues::default();
    if let Some(path) = config {
        let file = KeyValues::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (k, v) in file.pairs {
            // Relative corpus paths are relative to the config file.
            let v = if k == "data.manifest" && Path::new(&v).is_relative() {
                base.join(&v).display().to_string()
            } else {
                v
            };
            kv.push(k, v);
        }
    }
    for o in overrides {
        let (k, v) = KeyValues::parse_override(o)?;
        kv.push(k, v);
    }
    if let Some(d) = data {
        kv.push("data.manifest", d.display().to_string());
    }
    if let Some(s) = steps {
        kv.push("train.steps", s.to_string());
    }
    if let Some(s) = seed {
        kv.push("train.seed", s.to_string());
    }
    let mut cfg = RunConfig::from_key_values(&kv)?;
    let Some(manifest) = cfg.manifest.clone() else {
        return Err(wsegan::Error::Usage("no corpus: pass --data or set data.manifest".into()).into());
    };
    let manifest = manifest
        .canonicalize()
        .map_err(|e| wsegan::Error::Io { path: manifest.clone(), source: e })?;
    cfg.manifest = Some(manifest.clone());
    let corpus = PairedCorpus::load(&manifest)?;
    let total = cfg.train.steps;
    let every = (total / 20).max(1);
    let run = run_training(&cfg, &corpus, mode, Some(out), |r, _, _| {
        if r.step % every == 0 || r.step == total {
            eprintln!(
                "step {:>6}/{total}  d_total {:.4}  g_adv {:.4}  g_reg {:.2}",
                r.step, r.d_total, r.g_adv, r.g_reg
            );
        }
        Ok(())
    })
    .with_context(|| format!("{} training in {}", mode.as_str(), out.display()))?;
    let latest = RunDir::new(out)?.latest();
    println!(
        "finished {} steps; latest checkpoint {}",
        run.reports.len(),
        latest.map_or_else(|| "none".into(), |p| p.display().to_string())
    );
    Ok(())
}

fn infer(checkpoint: &Path, input: &Path, out: &Path, seed: u64, z_per_chunk: bool, config: Option<&Path>) -> Result<()> {
    let checkpoint = if checkpoint.is_dir() {
        match RunDir::new(checkpoint)?.latest() {
            Some(p) => p,
            None => bail!(wsegan::Error::Usage(format!("{} has no checkpoints", checkpoint.display()))),
        }
    } else {
        checkpoint.to_path_buf()
    };
    let cfg_path = match config {
        Some(p) => p.to_path_buf(),
        None => config_for_checkpoint(&checkpoint).ok_or_else(|| {
            wsegan::Error::Usage(format!("no config.txt beside {}; pass --config", checkpoint.display()))
        })?,
    };
    let cfg = read_run_config(&cfg_path)?;
    let gen = load_trained_generator(&cfg, &checkpoint)?;
    let whisper = read_wav(input)?;
    let opts = InferenceOptions {
        preemph: cfg.train.preemph,
        z_per_chunk,
    };
    let voiced = convert(&gen, &whisper, seed, &opts)?;
    write_wav(out, &voiced)?;
    println!("wrote {} ({} samples)", out.display(), voiced.len());
    Ok(())
}

/// `(id, waveform)` for every `.wav` in `dir`, sorted by id.
fn load_dir(dir: &Path) -> Result<Vec<(String, wsegan::signal::Waveform)>> {
    let rd = std::fs::read_dir(dir).map_err(|e| wsegan::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut paths: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, read_wav(&p)?))
        })
        .collect()
}

fn eval(
    natural: &Path,
    voiced: &Path,
    regression: Option<&Path>,
    out: &Path,
    contours: bool,
    utterance_means: bool,
    config: Option<&Path>,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => read_run_config(p)?.eval,
        None => EvalConfig::default(),
    };
    if utterance_means {
        cfg.mode = StreamMode::UtteranceMeans;
    }
    let mut systems = vec![
        SystemInput {
            name: "natural".into(),
            utterances: load_dir(natural)?,
        },
        SystemInput {
            name: "voiced".into(),
            utterances: load_dir(voiced)?,
        },
    ];
    if let Some(r) = regression {
        systems.push(SystemInput {
            name: "regression".into(),
            utterances: load_dir(r)?,
        });
    }
    let report = compare_systems(&systems, &cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| wsegan::Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    let write = |path: &Path, text: String| {
        std::fs::write(path, text).map_err(|e| wsegan::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    write(out, report.to_json())?;
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let dir = out.parent().unwrap_or(Path::new("."));
    for s in &report.systems {
        write(&dir.join(format!("{stem}.{}.hist.csv", s.name)), s.histogram.to_csv())?;
        if contours {
            let cdir = dir.join(format!("{stem}.contours")).join(&s.name);
            std::fs::create_dir_all(&cdir).map_err(|e| wsegan::Error::Io {
                path: cdir.clone(),
                source: e,
            })?;
            for (id, c) in &s.contours {
                export_contour(c, &cdir.join(format!("{id}.csv")))?;
            }
        }
    }
    for s in &report.systems {
        println!("{:<10} voiced frames {:>7}  f0 mean {:>7.2} Hz  std {:>6.2} Hz", s.name, s.histogram.n_voiced, s.f0_mean, s.f0_std);
    }
    for r in &report.std_ratios {
        println!("std ratio {}/{} = {:.4}", r.numerator, r.denominator, r.ratio);
    }
    for d in &report.degenerate {
        println!("degenerate: {d}");
    }
    Ok(())
}
