//! JSON report and CSV curve output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::NetConfig;
use crate::sensitivity::{DetectorMode, SensitivityCurve, TieBreak};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEntry {
    pub cap_index: usize,
    pub cap: usize,
    pub channels: Vec<usize>,
    pub param_count: usize,
    pub s_raw: f64,
    pub s_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEntry {
    pub k: usize,
    pub value: f64,
}

/// Everything a selection run decided, in cap-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub family: Vec<FamilyEntry>,
    pub variations: Vec<f64>,
    pub objective: Vec<ObjectiveEntry>,
    pub mode: DetectorMode,
    pub tie_break: TieBreak,
    pub k_star: usize,
    pub selected: NetConfig,
    pub seed: u64,
    pub num_samples: usize,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    /// Rebuilds the curve from the reported raw scores.
    pub fn curve(&self) -> Result<SensitivityCurve> {
        SensitivityCurve::from_scores(self.family.iter().map(|e| e.s_raw).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::validation(format!("report serialization failed: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::validation(format!("malformed report: {e}")))
    }
}

/// Scores only, for the `curve` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub family: Vec<FamilyEntry>,
    pub variations: Vec<f64>,
    pub seed: u64,
    pub num_samples: usize,
    pub warnings: Vec<String>,
}

impl CurveReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::validation(format!("curve serialization failed: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

pub(crate) fn family_entries(curve: &SensitivityCurve, configs: &[NetConfig]) -> Vec<FamilyEntry> {
    configs
        .iter()
        .zip(curve.raw.iter().zip(&curve.normalized))
        .map(|(c, (&s_raw, &s_norm))| FamilyEntry {
            cap_index: c.cap_index,
            cap: c.cap,
            channels: c.channels.clone(),
            param_count: c.param_count,
            s_raw,
            s_norm,
        })
        .collect()
}

/// CSV text with one row per family member; `d` is empty on the last row.
pub fn curve_csv(curve: &SensitivityCurve, configs: &[NetConfig]) -> String {
    let mut out = String::from("cap_index,cap,param_count,S_raw,S_norm,d\n");
    for (i, c) in configs.iter().enumerate() {
        let d = curve
            .variations
            .get(i)
            .map(|v| v.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.cap_index, c.cap, c.param_count, curve.raw[i], curve.normalized[i], d
        ));
    }
    out
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn emit_report(report: &SelectionReport, path: &Path) -> Result<()> {
    write_atomic(path, report.to_json()?.as_bytes())
}

pub fn emit_curve_csv(curve: &SensitivityCurve, configs: &[NetConfig], path: &Path) -> Result<()> {
    write_atomic(path, curve_csv(curve, configs).as_bytes())
}
