use crate::error::{Error, Result};
use crate::sensitivity::{CandidateSet, DetectorMode, TieBreak, TIE_TOLERANCE};

/// Exhaustive reference for `detect_collapse`: every candidate's objective
/// is summed from scratch.
pub fn brute_force_split(
    d: &[f64],
    mode: DetectorMode,
    tie_break: TieBreak,
    candidates: CandidateSet,
) -> Result<usize> {
    let n = d.len() + 1;
    let ks: Vec<usize> = candidates.indices(n).collect();
    if ks.is_empty() {
        return Err(Error::validation(format!(
            "no split candidates for {n} scores"
        )));
    }
    if d.iter().all(|&v| v == 0.0) {
        return Ok(*ks.last().unwrap());
    }

    let mut values = Vec::with_capacity(ks.len());
    for &k in &ks {
        let mut left = 0.0;
        for v in &d[..k] {
            left += v;
        }
        let mut right = 0.0;
        for v in &d[k..] {
            right += v;
        }
        let v = match mode {
            DetectorMode::PaperExact => right - left,
            DetectorMode::MeanSplit => {
                let rn = d.len() - k;
                let rm = if rn == 0 { 0.0 } else { right / rn as f64 };
                rm - left / k as f64
            }
            DetectorMode::MaxJump => {
                if k < d.len() {
                    d[k]
                } else {
                    0.0
                }
            }
        };
        values.push(v);
    }

    let mut best = f64::NEG_INFINITY;
    for &v in &values {
        if v > best {
            best = v;
        }
    }
    let mut chosen = None;
    for (i, &v) in values.iter().enumerate() {
        if v >= best - TIE_TOLERANCE {
            match tie_break {
                TieBreak::Largest => chosen = Some(ks[i]),
                TieBreak::Smallest => {
                    if chosen.is_none() {
                        chosen = Some(ks[i]);
                    }
                }
            }
        }
    }
    Ok(chosen.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn front_loaded_variation_ties_everywhere() {
        // k=1: 0 - 1, k=2: 0 - 1, k=3: 0 - 1.
        let d = [1.0, 0.0, 0.0, 0.0];
        let k = brute_force_split(
            &d,
            DetectorMode::PaperExact,
            TieBreak::Largest,
            CandidateSet::Interior,
        );
        assert_eq!(k.unwrap(), 3);
        let k = brute_force_split(
            &d,
            DetectorMode::PaperExact,
            TieBreak::Smallest,
            CandidateSet::Interior,
        );
        assert_eq!(k.unwrap(), 1);
    }

    #[test]
    fn three_points_have_one_candidate() {
        for mode in DetectorMode::ALL {
            for tb in TieBreak::ALL {
                assert_eq!(
                    brute_force_split(&[0.3, 0.7], mode, tb, CandidateSet::Interior).unwrap(),
                    1
                );
            }
        }
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(brute_force_split(
            &[1.0],
            DetectorMode::MaxJump,
            TieBreak::Largest,
            CandidateSet::Interior
        )
        .is_err());
    }
}
