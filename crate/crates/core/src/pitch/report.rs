use std::collections::BTreeSet;

use serde::Serialize;

use super::{extract_f0, histogram, F0Config, PitchContour, PitchHistogram};
use crate::error::{Error, Result};
use crate::signal::Waveform;

/// How voiced frames become a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// All voiced frames of all utterances, concatenated.
    Frames,
    /// One value per utterance: the mean of its voiced frames.
    UtteranceMeans,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub f0: F0Config,
    pub bin_width: f64,
    pub mode: StreamMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            f0: F0Config::default(),
            bin_width: 5.0,
            mode: StreamMode::Frames,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemInput {
    pub name: String,
    /// `(utterance id, waveform)`.
    pub utterances: Vec<(String, Waveform)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemStats {
    pub name: String,
    pub n_utterances: usize,
    pub n_frames: usize,
    pub voiced_rate: f64,
    pub f0_mean: f64,
    pub f0_std: f64,
    pub histogram: PitchHistogram,
    #[serde(skip)]
    pub contours: Vec<(String, PitchContour)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StdRatio {
    pub numerator: String,
    pub denominator: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: StreamMode,
    pub systems: Vec<SystemStats>,
    /// Every non-reference system's std over the first (reference) system's std.
    /// Omitted for degenerate pairs.
    pub std_ratios: Vec<StdRatio>,
    pub degenerate: Vec<String>,
}

impl EvalReport {
    pub fn system(&self, name: &str) -> Option<&SystemStats> {
        self.systems.iter().find(|s| s.name == name)
    }

    pub fn ratio(&self, numerator: &str) -> Option<f64> {
        self.std_ratios
            .iter()
            .find(|r| r.numerator == numerator)
            .map(|r| r.ratio)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn stats(sys: &SystemInput, cfg: &EvalConfig) -> Result<SystemStats> {
    let mut contours = Vec::with_capacity(sys.utterances.len());
    for (id, w) in &sys.utterances {
        contours.push((id.clone(), extract_f0(w, &cfg.f0)?));
    }
    let stream: Vec<f64> = match cfg.mode {
        StreamMode::Frames => contours.iter().flat_map(|(_, c)| c.voiced_values()).collect(),
        StreamMode::UtteranceMeans => contours
            .iter()
            .filter(|(_, c)| c.voiced_count() > 0)
            .map(|(_, c)| c.voiced_values().sum::<f64>() / c.voiced_count() as f64)
            .collect(),
    };
    let hist = histogram(&stream, cfg.bin_width, (cfg.f0.fmin, cfg.f0.fmax));
    let n_frames: usize = contours.iter().map(|(_, c)| c.frames.len()).sum();
    let n_voiced: usize = contours.iter().map(|(_, c)| c.voiced_count()).sum();
    Ok(SystemStats {
        name: sys.name.clone(),
        n_utterances: sys.utterances.len(),
        n_frames,
        voiced_rate: if n_frames == 0 { 0.0 } else { n_voiced as f64 / n_frames as f64 },
        f0_mean: hist.mean,
        f0_std: hist.std,
        histogram: hist,
        contours,
    })
}

/// Pitch statistics per system. The first system is the reference (natural speech).
pub fn compare_systems(systems: &[SystemInput], cfg: &EvalConfig) -> Result<EvalReport> {
    let Some(reference) = systems.first() else {
        return Err(Error::Usage("no systems to compare".into()));
    };
    let ref_ids: BTreeSet<&str> = reference.utterances.iter().map(|(id, _)| id.as_str()).collect();
    if ref_ids.len() != reference.utterances.len() {
        return Err(Error::Usage(format!("duplicate utterance ids in system {}", reference.name)));
    }
    for sys in &systems[1..] {
        let ids: BTreeSet<&str> = sys.utterances.iter().map(|(id, _)| id.as_str()).collect();
        if ids != ref_ids || sys.utterances.len() != reference.utterances.len() {
            let mismatched: Vec<&str> = ids.symmetric_difference(&ref_ids).copied().collect();
            return Err(Error::Usage(format!(
                "utterance ids of {} do not match {}: {}",
                sys.name,
                reference.name,
                mismatched.join(", ")
            )));
        }
    }

    let all: Vec<SystemStats> = systems.iter().map(|s| stats(s, cfg)).collect::<Result<_>>()?;
    let degenerate: Vec<String> = all
        .iter()
        .filter(|s| s.histogram.degenerate)
        .map(|s| s.name.clone())
        .collect();
    let base = &all[0];
    let std_ratios = all[1..]
        .iter()
        .filter(|s| !s.histogram.degenerate && !base.histogram.degenerate && base.f0_std > 0.0)
        .map(|s| StdRatio {
            numerator: s.name.clone(),
            denominator: base.name.clone(),
            ratio: s.f0_std / base.f0_std,
        })
        .collect();
    Ok(EvalReport {
        mode: cfg.mode,
        systems: all,
        std_ratios,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
        .unwrap()
    }

    fn system(name: &str, freqs: &[f64]) -> SystemInput {
        SystemInput {
            name: name.into(),
            utterances: freqs
                .iter()
                .enumerate()
                .map(|(i, &f)| (format!("u{i}"), tone(f, 8000)))
                .collect(),
        }
    }

    #[test]
    fn identical_systems_identical_histograms() {
        let s = system("natural", &[120.0, 180.0, 240.0]);
        let mut a = s.clone();
        a.name = "adversarial".into();
        let mut r = s.clone();
        r.name = "regression".into();
        let rep = compare_systems(&[s, a, r], &EvalConfig::default()).unwrap();
        assert_eq!(rep.systems[0].histogram, rep.systems[1].histogram);
        assert_eq!(rep.systems[0].histogram, rep.systems[2].histogram);
        assert_eq!(rep.ratio("adversarial"), Some(1.0));
        assert_eq!(rep.ratio("regression"), Some(1.0));
    }

    #[test]
    fn degenerate_system_omits_ratio() {
        let nat = system("natural", &[120.0, 200.0]);
        let silent = SystemInput {
            name: "regression".into(),
            utterances: vec![
                ("u0".into(), Waveform::new(vec![0.0; 8000], 16000).unwrap()),
                ("u1".into(), Waveform::new(vec![0.0; 8000], 16000).unwrap()),
            ],
        };
        let rep = compare_systems(&[nat, silent], &EvalConfig::default()).unwrap();
        assert_eq!(rep.degenerate, vec!["regression".to_string()]);
        assert!(rep.std_ratios.is_empty());
    }

    #[test]
    fn id_mismatch_is_usage_error() {
        let a = system("natural", &[120.0, 200.0]);
        let mut b = system("adversarial", &[120.0, 200.0]);
        b.utterances[1].0 = "other".into();
        let err = compare_systems(&[a, b], &EvalConfig::default()).unwrap_err();
        match err {
            Error::Usage(msg) => assert!(msg.contains("other")),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn permutation_invariant() {
        let a = system("natural", &[110.0, 170.0, 260.0]);
        let mut b = a.clone();
        b.utterances.reverse();
        let ra = compare_systems(&[a], &EvalConfig::default()).unwrap();
        let rb = compare_systems(&[b], &EvalConfig::default()).unwrap();
        assert_eq!(ra.systems[0].histogram, rb.systems[0].histogram);
    }

    #[test]
    fn utterance_mean_mode() {
        let cfg = EvalConfig {
            mode: StreamMode::UtteranceMeans,
            ..EvalConfig::default()
        };
        let rep = compare_systems(&[system("natural", &[100.0, 300.0])], &cfg).unwrap();
        assert_eq!(rep.systems[0].histogram.n_voiced, 2);
        assert!((rep.systems[0].f0_mean - 200.0).abs() < 2.0);
    }
}
