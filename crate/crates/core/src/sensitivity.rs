//! Sensitivity scores, cross-configuration normalization and collapse
//! boundary detection.
//!
//! Curves are ordered by cap index: position 0 is the largest model. The
//! variation vector `d` has one entry per consecutive pair, so for `N`
//! scores `d` is indexed `0..=N-2`, and a split at `k` puts `d[0..k]` on
//! the large-model side and `d[k..]` on the small-model side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Objective values closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Squared L2 norm of each image's gradient (over channels and pixels).
pub fn per_image_squared_norms(g: &Tensor) -> Result<Vec<f64>> {
    let (k, ..) = g.dims4()?;
    g.check_finite("gradient")?;
    let per = g.len() / k;
    Ok(g.data()
        .chunks(per)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect())
}

/// Root-mean-square over images of the per-image gradient norm.
pub fn sensitivity_score(g: &Tensor) -> Result<f64> {
    let norms = per_image_squared_norms(g)?;
    if norms.is_empty() {
        return Err(Error::validation("empty gradient batch"));
    }
    Ok((norms.iter().sum::<f64>() / norms.len() as f64).sqrt())
}

/// Min-max normalization. Returns all zeros and `true` for a flat curve.
pub fn normalize_scores(scores: &[f64]) -> Result<(Vec<f64>, bool)> {
    if scores.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 scores to normalize, got {}",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("non-finite score {bad}")));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range <= 0.0 {
        return Ok((vec![0.0; scores.len()], true));
    }
    Ok((scores.iter().map(|s| (s - min) / range).collect(), false))
}

/// `d[i] = |s[i+1] - s[i]|` for `i` in `0..=N-2`.
pub fn local_variations(s: &[f64]) -> Result<Vec<f64>> {
    if s.len() < 3 {
        return Err(Error::validation(format!(
            "need at least 3 points for a split, got {}",
            s.len()
        )));
    }
    Ok(s.windows(2).map(|w| (w[1] - w[0]).abs()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub variations: Vec<f64>,
    pub degenerate: bool,
}

impl SensitivityCurve {
    pub fn from_scores(raw: Vec<f64>) -> Result<Self> {
        if let Some(bad) = raw.iter().find(|v| **v < 0.0) {
            return Err(Error::validation(format!(
                "negative sensitivity score {bad}"
            )));
        }
        let (normalized, degenerate) = normalize_scores(&raw)?;
        let variations = local_variations(&normalized)?;
        Ok(SensitivityCurve {
            raw,
            normalized,
            variations,
            degenerate,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorMode {
    /// `TV_R(k) - TV_L(k)`: sums of the variations on each side.
    PaperExact,
    /// Mean variation right of the split minus mean variation left of it.
    #[default]
    MeanSplit,
    /// `d[k]`: the split sits just before the largest single jump.
    MaxJump,
}

impl DetectorMode {
    pub const ALL: [DetectorMode; 3] = [Self::PaperExact, Self::MeanSplit, Self::MaxJump];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PaperExact => "paper-exact",
            Self::MeanSplit => "mean-split",
            Self::MaxJump => "max-jump",
        }
    }
}

impl std::str::FromStr for DetectorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown detector mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Prefer the larger index, i.e. the smaller model.
    #[default]
    Largest,
    Smallest,
}

impl TieBreak {
    pub const ALL: [TieBreak; 2] = [Self::Largest, Self::Smallest];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Largest => "largest",
            Self::Smallest => "smallest",
        }
    }
}

impl std::str::FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown tie-break rule {s:?}")))
    }
}

/// Which split indices are considered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSet {
    /// `1..=N-2`: both sides of the split hold at least one variation.
    #[default]
    Interior,
    /// `2..=N-1`. At `k = N-1` the small-model side is empty and
    /// contributes 0 in every mode.
    PaperLiteral,
}

impl CandidateSet {
    /// Candidate indices for a curve of `n` scores.
    pub fn indices(self, n: usize) -> std::ops::RangeInclusive<usize> {
        match self {
            Self::Interior => 1..=n.saturating_sub(2),
            Self::PaperLiteral => 2..=n.saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectorOptions {
    pub mode: DetectorMode,
    pub tie_break: TieBreak,
    pub candidates: CandidateSet,
}

/// Split objective for candidate `k`, by direct summation.
pub fn split_objective(
    d: &[f64],
    k: usize,
    mode: DetectorMode,
    candidates: CandidateSet,
) -> Result<f64> {
    let n = d.len() + 1;
    let range = candidates.indices(n);
    if range.is_empty() || !range.contains(&k) {
        return Err(Error::validation(format!(
            "split index {k} outside candidate range {range:?} for {n} scores"
        )));
    }
    let (left, right) = d.split_at(k);
    Ok(match mode {
        DetectorMode::PaperExact => right.iter().sum::<f64>() - left.iter().sum::<f64>(),
        DetectorMode::MeanSplit => mean(right) - mean(left),
        DetectorMode::MaxJump => right.first().copied().unwrap_or(0.0),
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Picks the index of the best objective; ties within [`TIE_TOLERANCE`] go
/// to the rule's preferred end.
pub fn argmax_with_ties(objective: &[(usize, f64)], tie_break: TieBreak) -> Option<usize> {
    let best = objective
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied = objective
        .iter()
        .filter(|&&(_, v)| v >= best - TIE_TOLERANCE)
        .map(|&(k, _)| k);
    match tie_break {
        TieBreak::Largest => tied.max(),
        TieBreak::Smallest => tied.min(),
    }
}

/// Outcome of collapse detection on one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub options: DetectorOptions,
    pub candidates: Vec<usize>,
    /// `(k, objective)` for every candidate, ascending in `k`.
    pub objective: Vec<(usize, f64)>,
    pub k_star: usize,
    pub warnings: Vec<String>,
}

/// Locates the collapse boundary `k*` on a normalized curve.
///
/// A flat curve selects the largest candidate and says so in `warnings`.
pub fn detect_collapse(curve: &SensitivityCurve, options: DetectorOptions) -> Result<Detection> {
    let d = &curve.variations;
    let n = curve.len();
    if d.len() + 1 != n {
        return Err(Error::validation(format!(
            "curve has {n} scores but {} variations",
            d.len()
        )));
    }
    let candidates: Vec<usize> = options.candidates.indices(n).collect();
    if candidates.is_empty() {
        return Err(Error::validation(format!(
            "no split candidates for {n} scores"
        )));
    }

    // Prefix sums: prefix[k] = d[0] + ... + d[k-1].
    let mut prefix = Vec::with_capacity(d.len() + 1);
    prefix.push(0.0);
    for v in d {
        prefix.push(prefix.last().unwrap() + v);
    }
    let total = prefix[d.len()];
    let m = d.len();
    let objective: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&k| {
            let (left, right) = (prefix[k], total - prefix[k]);
            let v = match options.mode {
                DetectorMode::PaperExact => right - left,
                DetectorMode::MeanSplit => {
                    let r = if k < m { right / (m - k) as f64 } else { 0.0 };
                    r - left / k as f64
                }
                DetectorMode::MaxJump => d.get(k).copied().unwrap_or(0.0),
            };
            (k, v)
        })
        .collect();

    let mut warnings = Vec::new();
    let k_star = if curve.degenerate {
        warnings.push(
            "degenerate curve: all sensitivity scores are equal; selected the largest candidate"
                .to_string(),
        );
        *candidates.last().unwrap()
    } else {
        argmax_with_ties(&objective, options.tie_break).expect("nonempty candidates")
    };

    Ok(Detection {
        options,
        candidates,
        objective,
        k_star,
        warnings,
    })
}
