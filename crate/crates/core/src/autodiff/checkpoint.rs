//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `WSGNCKPT`, `u32` version, `u32` record
//! count, then per record `u32 name_len`, name bytes, `u32 rank`, `rank x u64`
//! dims, `numel x f64` values. A sidecar `<file>.manifest` lists
//! `name<TAB>shape` per record for diffing.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"WSGNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn write_checkpoint(path: &Path, records: &[TensorRecord]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    let mut manifest = String::new();
    for r in records {
        if r.shape.iter().product::<usize>() != r.values.len() {
            return Err(Error::shape("write_checkpoint", format!("{:?}", r.shape), r.values.len()));
        }
        buf.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(r.name.as_bytes());
        buf.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &r.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        manifest.push_str(&format!("{}\t{:?}\n", r.name, r.shape));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))
}

struct Cursor<'a> {
    path: &'a Path,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::format(self.path, field, "unexpected end of file"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<TensorRecord>> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { path, data: &data, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(Error::format(path, "magic", "not a checkpoint file"));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, "version", format!("unsupported version {version}")));
    }
    let count = c.u32("count")? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = c.u32("name_len")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| Error::format(path, "name", "not utf-8"))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        let shape = (0..rank).map(|_| c.u64("shape").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n * 8, "values")?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        records.push(TensorRecord { name, shape, values });
    }
    if c.pos != data.len() {
        return Err(Error::format(path, "trailer", "unexpected bytes after last record"));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let recs = vec![
            TensorRecord {
                name: "gen.enc0.w".into(),
                shape: vec![2, 1, 3],
                values: vec![1.0, -2.5, 3.25, 0.0, 1e-300, -7.0],
            },
            TensorRecord {
                name: "gen.enc0.b".into(),
                shape: vec![2],
                values: vec![0.5, f64::MIN_POSITIVE],
            },
        ];
        write_checkpoint(&p, &recs).unwrap();
        assert_eq!(read_checkpoint(&p).unwrap(), recs);
        let manifest = std::fs::read_to_string(manifest_path(&p)).unwrap();
        assert_eq!(manifest, "gen.enc0.w\t[2, 1, 3]\ngen.enc0.b\t[2]\n");
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        write_checkpoint(
            &p,
            &[TensorRecord {
                name: "x".into(),
                shape: vec![4],
                values: vec![1.0; 4],
            }],
        )
        .unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::Format { field: "values", .. })));
        std::fs::write(&p, b"NOTACKPTxxxxxxxx").unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::Format { field: "magic", .. })));
    }
}
