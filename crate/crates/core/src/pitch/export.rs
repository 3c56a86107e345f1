use std::path::Path;

use super::{PitchContour, PitchFrame};
use crate::error::{Error, Result};
use crate::signal::{stft_db, StftConfig, Waveform};

/// `time_s,f0_hz,voiced`; `f0_hz` is empty for unvoiced frames.
pub fn export_contour(contour: &PitchContour, path: &Path) -> Result<()> {
    let mut out = String::from("time_s,f0_hz,voiced\n");
    for f in &contour.frames {
        match f.f0 {
            Some(hz) => out.push_str(&format!("{},{},1\n", f.time, hz)),
            None => out.push_str(&format!("{},,0\n", f.time)),
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a contour CSV written by [`export_contour`]. Frame geometry is not
/// stored in the file and must be supplied.
pub fn read_contour(path: &Path, frame_len: usize, hop: usize) -> Result<PitchContour> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("time_s,f0_hz,voiced") {
        return Err(Error::format(path, "header", "expected time_s,f0_hz,voiced"));
    }
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::format(path, "row", format!("row {}: expected 3 fields", i + 1)));
        }
        let time: f64 = cols[0]
            .parse()
            .map_err(|_| Error::format(path, "time_s", format!("row {}: {:?}", i + 1, cols[0])))?;
        let f0 = match cols[2] {
            "1" => Some(
                cols[1]
                    .parse()
                    .map_err(|_| Error::format(path, "f0_hz", format!("row {}: {:?}", i + 1, cols[1])))?,
            ),
            "0" => None,
            other => return Err(Error::format(path, "voiced", format!("row {}: {other:?}", i + 1))),
        };
        frames.push(PitchFrame { time, f0 });
    }
    Ok(PitchContour {
        frames,
        frame_len,
        hop,
    })
}

/// Spectrogram CSV with the default analysis settings.
pub fn export_spectrogram(w: &Waveform, path: &Path) -> Result<()> {
    stft_db(&w.samples, &StftConfig::default())?.write_csv(path)
}
