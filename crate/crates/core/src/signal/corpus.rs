use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{read_wav, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub whisper: Waveform,
    pub natural: Waveform,
    pub split: Split,
}

#[derive(Debug, Clone, Default)]
pub struct PairedCorpus {
    pub utterances: Vec<Utterance>,
}

impl PairedCorpus {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        for u in &utterances {
            if u.whisper.len() != u.natural.len() || u.whisper.sample_rate != u.natural.sample_rate {
                return Err(Error::Config(format!(
                    "utterance {}: whisper and natural differ in length or sample rate",
                    u.id
                )));
            }
        }
        Ok(Self { utterances })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn subset(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    /// Loads every pair listed in a manifest; relative paths resolve against `base`.
    pub fn load(manifest: &Path) -> Result<Self> {
        let base = manifest.parent().unwrap_or(Path::new("."));
        let entries = read_manifest(manifest)?;
        let mut utterances = Vec::with_capacity(entries.len());
        for e in entries {
            let whisper = read_wav(&base.join(&e.whisper_path))?;
            let natural = read_wav(&base.join(&e.natural_path))?;
            utterances.push(Utterance {
                id: e.id,
                whisper,
                natural,
                split: e.split,
            });
        }
        Self::new(utterances)
    }
}

/// Number of test utterances: `floor(n * (1 - train_frac))`, at least one, at most `n - 1`.
fn test_count(n: usize, train_frac: f64) -> usize {
    let raw = (n as f64 * (1.0 - train_frac) + 1e-9).floor() as usize;
    raw.clamp(1, n - 1)
}

/// Deterministically shuffles utterances and reassigns the train/test split.
pub fn split_corpus(mut corpus: PairedCorpus, train_frac: f64, seed: u64) -> Result<PairedCorpus> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train_frac must be in (0, 1), got {train_frac}")));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 utterances to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = test_count(n, train_frac);
    for (rank, &idx) in order.iter().enumerate() {
        corpus.utterances[idx].split = if rank < n - n_test {
            Split::Train
        } else {
            Split::Test
        };
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub whisper_path: PathBuf,
    pub natural_path: PathBuf,
    pub split: Split,
}

/// `id<TAB>whisper_path<TAB>natural_path<TAB>split`, one line per utterance.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.id,
            e.whisper_path.display(),
            e.natural_path.display(),
            e.split.as_str()
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::format(
                path,
                "columns",
                format!("line {}: expected 4 tab-separated fields, found {}", lineno + 1, cols.len()),
            ));
        }
        let split = Split::parse(cols[3]).ok_or_else(|| {
            Error::format(path, "split", format!("line {}: unknown split {:?}", lineno + 1, cols[3]))
        })?;
        entries.push(ManifestEntry {
            id: cols[0].to_string(),
            whisper_path: PathBuf::from(cols[1]),
            natural_path: PathBuf::from(cols[2]),
            split,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> PairedCorpus {
        let w = Waveform::new(vec![0.0; 4], 16000).unwrap();
        PairedCorpus::new(
            (0..n)
                .map(|i| Utterance {
                    id: format!("u{i}"),
                    whisper: w.clone(),
                    natural: w.clone(),
                    split: Split::Train,
                })
                .collect(),
        )
        .unwrap()
    }

    fn counts(c: &PairedCorpus) -> (usize, usize) {
        (c.subset(Split::Train).count(), c.subset(Split::Test).count())
    }

    #[test]
    fn ten_utterances_nine_one() {
        assert_eq!(counts(&split_corpus(corpus(10), 0.9, 1).unwrap()), (9, 1));
    }

    #[test]
    fn two_utterances_one_one() {
        assert_eq!(counts(&split_corpus(corpus(2), 0.9, 1).unwrap()), (1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_corpus(corpus(20), 0.9, 42).unwrap();
        let b = split_corpus(corpus(20), 0.9, 42).unwrap();
        let sa: Vec<Split> = a.utterances.iter().map(|u| u.split).collect();
        let sb: Vec<Split> = b.utterances.iter().map(|u| u.split).collect();
        assert_eq!(sa, sb);
        assert_eq!(counts(&a), (18, 2));
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split_corpus(corpus(1), 0.9, 0).is_err());
        assert!(split_corpus(corpus(5), 1.0, 0).is_err());
        assert!(split_corpus(corpus(5), 0.0, 0).is_err());
    }

    #[test]
    fn unequal_pair_rejected() {
        let u = Utterance {
            id: "x".into(),
            whisper: Waveform::new(vec![0.0; 3], 16000).unwrap(),
            natural: Waveform::new(vec![0.0; 4], 16000).unwrap(),
            split: Split::Train,
        };
        assert!(PairedCorpus::new(vec![u]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.tsv");
        let entries = vec![
            ManifestEntry {
                id: "a".into(),
                whisper_path: "a_w.wav".into(),
                natural_path: "a_n.wav".into(),
                split: Split::Train,
            },
            ManifestEntry {
                id: "b".into(),
                whisper_path: "b_w.wav".into(),
                natural_path: "b_n.wav".into(),
                split: Split::Test,
            },
        ];
        write_manifest(&p, &entries).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), entries);
        std::fs::write(&p, "a\tb\tc\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Format { field: "columns", .. })));
    }
}
