use crate::error::{Error, Result};

/// What to do with a signal shorter than one canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkPolicy {
    /// Produce no chunks (training).
    DropShort,
    /// Produce one right-padded chunk (inference).
    ZeroPad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSpec {
    pub canvas: usize,
    pub stride: usize,
    pub policy: ChunkPolicy,
}

impl Default for ChunkSpec {
    /// 16384-sample canvas every 50 ms at 16 kHz.
    fn default() -> Self {
        Self {
            canvas: 16384,
            stride: 800,
            policy: ChunkPolicy::DropShort,
        }
    }
}

impl ChunkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.canvas {
            return Err(Error::Config(format!(
                "chunk stride must satisfy 0 < stride <= canvas (stride {}, canvas {})",
                self.stride, self.canvas
            )));
        }
        Ok(())
    }
}

/// Number of full canvases at offsets `0, stride, 2*stride, ...` (requires `len >= canvas`).
pub fn chunk_count(len: usize, canvas: usize, stride: usize) -> usize {
    if len < canvas {
        0
    } else {
        (len - canvas) / stride + 1
    }
}

pub fn chunk(samples: &[f64], spec: &ChunkSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if samples.len() < spec.canvas {
        return Ok(match spec.policy {
            ChunkPolicy::DropShort => Vec::new(),
            ChunkPolicy::ZeroPad => {
                let mut c = samples.to_vec();
                c.resize(spec.canvas, 0.0);
                vec![c]
            }
        });
    }
    let n = chunk_count(samples.len(), spec.canvas, spec.stride);
    Ok((0..n)
        .map(|i| samples[i * spec.stride..i * spec.stride + spec.canvas].to_vec())
        .collect())
}
