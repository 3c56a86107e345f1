use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::signal::{chunk, preemphasize, ChunkSpec, PairedCorpus, Split};

/// Where the mismatched natural chunk `x^r` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShuffleMode {
    /// Another row of the same batch from a different utterance; falls back
    /// to the whole pool when the batch holds a single utterance.
    WithinBatch,
    /// Any pool chunk from a different utterance.
    CorpusWide,
}

impl ShuffleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ShuffleMode::WithinBatch => "within_batch",
            ShuffleMode::CorpusWide => "corpus_wide",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "within_batch" => Some(ShuffleMode::WithinBatch),
            "corpus_wide" => Some(ShuffleMode::CorpusWide),
            _ => None,
        }
    }
}

/// Aligned pre-emphasized training chunks.
#[derive(Debug, Clone)]
pub struct ChunkPool {
    pub canvas: usize,
    pub natural: Vec<Vec<f64>>,
    pub whisper: Vec<Vec<f64>>,
    /// Index of the source utterance of each chunk.
    pub source: Vec<usize>,
}

impl ChunkPool {
    /// Pre-emphasizes whole utterances of `split` (all when `None`), then
    /// cuts aligned canvases.
    pub fn from_corpus(corpus: &PairedCorpus, split: Option<Split>, spec: &ChunkSpec, preemph: f64) -> Result<Self> {
        let mut pool = Self {
            canvas: spec.canvas,
            natural: Vec::new(),
            whisper: Vec::new(),
            source: Vec::new(),
        };
        let utts = corpus.utterances.iter().filter(|u| split.is_none_or(|s| u.split == s));
        for (k, u) in utts.enumerate() {
            let nat = chunk(&preemphasize(&u.natural.samples, preemph), spec)?;
            let whi = chunk(&preemphasize(&u.whisper.samples, preemph), spec)?;
            pool.source.extend(std::iter::repeat(k).take(nat.len()));
            pool.natural.extend(nat);
            pool.whisper.extend(whi);
        }
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.natural.len()
    }

    pub fn is_empty(&self) -> bool {
        self.natural.is_empty()
    }

    pub fn n_sources(&self) -> usize {
        let mut s = self.source.clone();
        s.sort_unstable();
        s.dedup();
        s.len()
    }
}

/// `B` rows of natural `x`, whispered `w` and mismatched natural `x^r`,
/// each flattened `[B, 1, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTriplet {
    pub batch: usize,
    pub canvas: usize,
    pub natural: Vec<f64>,
    pub whisper: Vec<f64>,
    pub shuffled: Vec<f64>,
    /// Pool index of each row.
    pub rows: Vec<usize>,
    /// Pool index of each row's `x^r`.
    pub shuffle_rows: Vec<usize>,
}

pub fn make_batch<R: Rng + ?Sized>(pool: &ChunkPool, batch_size: usize, mode: ShuffleMode, rng: &mut R) -> Result<BatchTriplet> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if pool.n_sources() < 2 {
        return Err(Error::Config(format!(
            "need chunks from at least 2 utterances to form shuffled pairs, have {}",
            pool.n_sources()
        )));
    }
    let rows: Vec<usize> = if pool.len() >= batch_size {
        sample(rng, pool.len(), batch_size).into_vec()
    } else {
        (0..batch_size).map(|_| rng.gen_range(0..pool.len())).collect()
    };
    let from_pool = |i: usize, rng: &mut R| {
        let cands: Vec<usize> = (0..pool.len()).filter(|&j| pool.source[j] != pool.source[i]).collect();
        cands[rng.gen_range(0..cands.len())]
    };
    let mut shuffle_rows = Vec::with_capacity(batch_size);
    for &i in &rows {
        let pick = match mode {
            ShuffleMode::WithinBatch => {
                let cands: Vec<usize> = rows.iter().copied().filter(|&j| pool.source[j] != pool.source[i]).collect();
                if cands.is_empty() {
                    from_pool(i, rng)
                } else {
                    cands[rng.gen_range(0..cands.len())]
                }
            }
            ShuffleMode::CorpusWide => from_pool(i, rng),
        };
        shuffle_rows.push(pick);
    }
    let gather = |src: &[Vec<f64>], idx: &[usize]| idx.iter().flat_map(|&i| src[i].iter().copied()).collect::<Vec<f64>>();
    Ok(BatchTriplet {
        batch: batch_size,
        canvas: pool.canvas,
        natural: gather(&pool.natural, &rows),
        whisper: gather(&pool.whisper, &rows),
        shuffled: gather(&pool.natural, &shuffle_rows),
        rows,
        shuffle_rows,
    })
}
