//! CSV output of curves and histograms with JSON metadata sidecars.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correlator::Histogram;
use crate::error::{Error, Result};
use crate::liouville::{CorrelationCurve, CurveKind};

/// Sidecar path: `<file>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Metadata stored next to a curve file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub kind: CurveKind,
    /// LO phase in radians.
    pub phase: Option<f64>,
    pub visibility: Option<f64>,
    pub ratio: Option<f64>,
    /// Prefactor `F` in s⁻², when known.
    pub prefactor: Option<f64>,
    pub normalizer: Option<f64>,
    pub model_hash: Option<String>,
    pub config_hash: Option<String>,
    pub source: String,
}

impl CurveMetadata {
    pub fn for_curve(curve: &CorrelationCurve, source: impl Into<String>) -> Self {
        CurveMetadata {
            kind: curve.kind,
            phase: curve.phase,
            visibility: None,
            ratio: None,
            prefactor: None,
            normalizer: curve.normalizer,
            model_hash: None,
            config_hash: None,
            source: source.into(),
        }
    }
}

/// Metadata stored next to a histogram file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMetadata {
    pub quantization_ps: u32,
    pub bin_tags: u64,
    pub n_starts: u64,
    pub n_stops: u64,
    pub duration_s: f64,
    pub phase_label: Option<f64>,
    pub model_hash: Option<String>,
    pub config_hash: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &CorrelationCurve, meta: &CurveMetadata) -> Result<()> {
    curve.validate()?;
    let mut out = String::from("tau_s,value,stderr\n");
    for ((t, v), e) in curve.tau.iter().zip(&curve.values).zip(&curve.stderr) {
        writeln!(out, "{t:e},{v:e},{e:e}").expect("writing to String");
    }
    std::fs::write(path, out)?;
    write_json(&sidecar_path(path), meta)
}

fn parse_rows<const N: usize>(path: &Path, header: &str) -> Result<Vec<[String; N]>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(Error::Format(format!(
                "{}: expected header `{header}`, found {:?}",
                path.display(),
                other.unwrap_or("")
            )))
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fields: Vec<String> = l.split(',').map(|f| f.trim().to_owned()).collect();
            fields
                .try_into()
                .map_err(|_| Error::Format(format!("{}: line {} needs {N} fields", path.display(), i + 2)))
        })
        .collect()
}

fn number<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Format(format!("{}: cannot parse `{s}`", path.display())))
}

/// Read a curve and its sidecar. The sidecar supplies kind and phase.
pub fn read_curve(path: &Path) -> Result<(CorrelationCurve, CurveMetadata)> {
    let meta: CurveMetadata = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let rows = parse_rows::<3>(path, "tau_s,value,stderr")?;
    let mut curve = CorrelationCurve {
        kind: meta.kind,
        tau: Vec::with_capacity(rows.len()),
        values: Vec::with_capacity(rows.len()),
        stderr: Vec::with_capacity(rows.len()),
        phase: meta.phase,
        normalizer: meta.normalizer,
    };
    for [t, v, e] in &rows {
        curve.tau.push(number(path, t)?);
        curve.values.push(number(path, v)?);
        curve.stderr.push(number(path, e)?);
    }
    curve.validate()?;
    Ok((curve, meta))
}

pub fn write_histogram(path: &Path, h: &Histogram, meta: &HistogramMetadata) -> Result<()> {
    let mut out = String::from("tau_s,counts\n");
    for (t, c) in h.tau().iter().zip(&h.counts) {
        writeln!(out, "{t:e},{c}").expect("writing to String");
    }
    std::fs::write(path, out)?;
    write_json(&sidecar_path(path), meta)
}

pub fn histogram_metadata(h: &Histogram, phase_label: Option<f64>) -> HistogramMetadata {
    HistogramMetadata {
        quantization_ps: h.quantization_ps,
        bin_tags: h.bin_tags,
        n_starts: h.n_starts,
        n_stops: h.n_stops,
        duration_s: h.duration,
        phase_label,
        model_hash: None,
        config_hash: None,
    }
}

pub fn read_histogram(path: &Path) -> Result<(Histogram, HistogramMetadata)> {
    let meta: HistogramMetadata = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let rows = parse_rows::<2>(path, "tau_s,counts")?;
    let counts = rows
        .iter()
        .map(|[_, c]| number::<u64>(path, c))
        .collect::<Result<Vec<_>>>()?;
    let h = Histogram {
        quantization_ps: meta.quantization_ps,
        bin_tags: meta.bin_tags,
        counts,
        n_starts: meta.n_starts,
        n_stops: meta.n_stops,
        duration: meta.duration_s,
    };
    Ok((h, meta))
}
