//! PCM16 mono RIFF/WAVE files.

use std::io::ErrorKind;
use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32767.0;

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == ErrorKind::UnexpectedEof => {
            Error::format(path, "data", "file truncated")
        }
        hound::Error::IoError(e) if e.kind() == ErrorKind::NotFound => Error::io(path, e),
        hound::Error::IoError(e) => Error::format(path, "riff", e),
        hound::Error::FormatError(msg) => Error::format(path, "header", msg),
        hound::Error::TooWide => Error::format(path, "bits_per_sample", "sample too wide"),
        hound::Error::UnfinishedSample => Error::format(path, "data", "unfinished sample"),
        hound::Error::Unsupported => Error::format(path, "format", "unsupported wave format"),
        hound::Error::InvalidSampleFormat => {
            Error::format(path, "sample_format", "invalid sample format")
        }
    }
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(
            path,
            "channels",
            format!("expected 1 (mono), found {}", spec.channels),
        ));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::format(path, "sample_format", "expected integer PCM"));
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::format(
            path,
            "bits_per_sample",
            format!("expected 16, found {}", spec.bits_per_sample),
        ));
    }
    if spec.sample_rate == 0 {
        return Err(Error::format(path, "sample_rate", "zero sample rate"));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| (v as f64 / FULL_SCALE).max(-1.0)))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| map_hound(path, e))?;
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes 16-bit PCM; samples beyond [-1, 1] are clamped.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => map_hound(path, other),
    })?;
    for &s in &w.samples {
        let q = (s.clamp(-1.0, 1.0) * FULL_SCALE).round() as i16;
        writer.write_sample(q).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tone_round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let samples: Vec<f64> = (0..16000)
            .map(|n| 0.8 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16000.0).sin())
            .collect();
        let w = Waveform::new(samples, 16000).unwrap();
        write_wav(&path, &w).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r.sample_rate, 16000);
        assert_eq!(r.len(), w.len());
        let err = w
            .samples
            .iter()
            .zip(&r.samples)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1.0 / 32767.0);
    }

    #[test]
    fn clamps_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        write_wav(&path, &Waveform::new(vec![2.0, -3.0], 8000).unwrap()).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r.samples, vec![1.0, -1.0]);
        assert_eq!(r.sample_rate, 8000);
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_wav(&path, &Waveform::new(vec![0.1; 1000], 16000).unwrap()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 501]).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Format { .. })));
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn stereo_is_rejected_naming_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..20 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        match read_wav(&path) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "channels"),
            other => panic!("expected channel format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_bit_depth_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i32).unwrap();
        w.finalize().unwrap();
        match read_wav(&path) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "bits_per_sample"),
            other => panic!("expected bit-depth error, got {other:?}"),
        }
    }
}
