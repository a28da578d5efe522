//! End-to-end selection: load images, sample a batch, score every family
//! member at initialization, normalize, detect, report.

mod dataset;
mod report;

use std::path::PathBuf;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use dataset::{
    decode_pgm, decode_xtrt, encode_pgm, encode_xtrt, load_dataset, read_image, zscore,
    DatasetSample, ImageRecord, XTRT_MAGIC, XTRT_VERSION,
};
pub use report::{
    curve_csv, emit_curve_csv, emit_report, write_atomic, CurveReport, FamilyEntry, ObjectiveEntry,
    SelectionReport,
};

use crate::error::{Error, Result};
use crate::family::{build_family, default_stages, FamilyConfig, NetConfig};
use crate::network::{member_seed, NetworkInstance};
use crate::sensitivity::{detect_collapse, sensitivity_score, DetectorOptions, SensitivityCurve};
use crate::tape::input_gradient;
use crate::tensor::Tensor;

pub const DEFAULT_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub samples: usize,
    pub seed: u64,
    pub base_channels: usize,
    pub max_channels: usize,
    /// Derived from the image size when unset.
    pub stages: Option<usize>,
    /// Taken from the data when unset.
    pub in_channels: Option<usize>,
    pub out_classes: usize,
    /// Taken from the data when unset.
    pub input_size: Option<(usize, usize)>,
    pub detector: DetectorOptions,
}

impl RunConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            data_dir: data_dir.into(),
            samples: DEFAULT_SAMPLES,
            seed: 0,
            base_channels: 32,
            max_channels: 512,
            stages: None,
            in_channels: None,
            out_classes: 2,
            input_size: None,
            detector: DetectorOptions::default(),
        }
    }

    fn expected_dims(&self) -> Option<(usize, usize, usize)> {
        match (self.in_channels, self.input_size) {
            (Some(c), Some((h, w))) => Some((c, h, w)),
            _ => None,
        }
    }

    /// Resolves the family against the loaded images.
    pub fn family_config(&self, ds: &DatasetSample) -> Result<FamilyConfig> {
        let (c, h, w) = ds.image_dims();
        if let Some(want) = self.in_channels {
            if want != c {
                return Err(Error::validation(format!(
                    "images have {c} channels, configured {want}"
                )));
            }
        }
        if let Some(size) = self.input_size {
            if size != (h, w) {
                return Err(Error::validation(format!(
                    "images are {h}x{w}, configured {}x{}",
                    size.0, size.1
                )));
            }
        }
        let fc = FamilyConfig {
            base_channels: self.base_channels,
            max_channels_base: self.max_channels,
            stages: self.stages.unwrap_or_else(|| default_stages((h, w))),
            in_channels: c,
            out_classes: self.out_classes,
            input_size: (h, w),
        };
        fc.validate()?;
        Ok(fc)
    }
}

/// Uniform sampling of `k` images without replacement, stacked `[K, C, H, W]`.
pub fn sample_images(ds: &DatasetSample, k: usize, seed: u64) -> Result<Tensor> {
    if k == 0 {
        return Err(Error::validation("sample count must be at least 1"));
    }
    if k > ds.len() {
        return Err(Error::validation(format!(
            "cannot sample {k} images from a dataset of {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<Tensor> = index::sample(&mut rng, ds.len(), k)
        .into_iter()
        .map(|i| ds.images[i].unsqueeze0())
        .collect();
    Tensor::stack_batch(&picks)
}

/// Sensitivity score of every config on the same batch, in input order.
///
/// Config `i` draws weights from `member_seed(base_seed, cap_index)`.
pub fn score_family(
    fc: &FamilyConfig,
    configs: &[NetConfig],
    batch: &Tensor,
    base_seed: u64,
) -> Result<Vec<f64>> {
    configs
        .par_iter()
        .map(|cfg| {
            let net = NetworkInstance::init(cfg, fc, member_seed(base_seed, cfg.cap_index))?;
            let g = input_gradient(&net, batch).map_err(|e| match e {
                Error::Numerical { layer, message } => Error::Numerical {
                    layer,
                    message: format!("cap index {}: {message}", cfg.cap_index),
                },
                other => other,
            })?;
            sensitivity_score(&g)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub family_config: FamilyConfig,
    pub configs: Vec<NetConfig>,
    pub curve: SensitivityCurve,
    pub report: SelectionReport,
}

fn family_warnings(configs: &[NetConfig]) -> Vec<String> {
    configs
        .windows(2)
        .filter(|w| w[1].param_count >= w[0].param_count)
        .map(|w| {
            format!(
                "cap indices {} and {} have the same schedule {:?}: the cap exceeds the widest stage",
                w[0].cap_index, w[1].cap_index, w[1].channels
            )
        })
        .collect()
}

/// Scores the family on a batch without running detection.
pub fn run_curve(
    rc: &RunConfig,
) -> Result<(FamilyConfig, Vec<NetConfig>, SensitivityCurve, CurveReport)> {
    let ds = load_dataset(&rc.data_dir, rc.expected_dims())?;
    let fc = rc.family_config(&ds)?;
    let configs = build_family(&fc)?;
    let batch = sample_images(&ds, rc.samples, rc.seed)?;
    let curve = SensitivityCurve::from_scores(score_family(&fc, &configs, &batch, rc.seed)?)?;

    let mut warnings = family_warnings(&configs);
    for r in ds.constant_images() {
        warnings.push(format!("constant image {} was zeroed", r.path.display()));
    }
    if curve.degenerate {
        warnings.push("degenerate curve: all sensitivity scores are equal".to_string());
    }
    let report = CurveReport {
        family: report::family_entries(&curve, &configs),
        variations: curve.variations.clone(),
        seed: rc.seed,
        num_samples: rc.samples,
        warnings,
    };
    Ok((fc, configs, curve, report))
}

/// The full pipeline.
pub fn run_selection(rc: &RunConfig) -> Result<RunOutput> {
    let (family_config, configs, curve, scored) = run_curve(rc)?;
    let detection = detect_collapse(&curve, rc.detector)?;
    let selected = configs[detection.k_star].clone();

    let mut warnings: Vec<String> = scored
        .warnings
        .into_iter()
        .filter(|w| !w.starts_with("degenerate curve"))
        .collect();
    warnings.extend(detection.warnings.iter().cloned());
    if selected.param_count >= configs[0].param_count {
        warnings.push(format!(
            "selected cap index {} is no smaller than the base configuration",
            selected.cap_index
        ));
    }

    let report = SelectionReport {
        family: scored.family,
        variations: curve.variations.clone(),
        objective: detection
            .objective
            .iter()
            .map(|&(k, value)| ObjectiveEntry { k, value })
            .collect(),
        mode: detection.options.mode,
        tie_break: detection.options.tie_break,
        k_star: detection.k_star,
        selected,
        seed: rc.seed,
        num_samples: rc.samples,
        warnings,
    };
    Ok(RunOutput {
        family_config,
        configs,
        curve,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> DatasetSample {
        let images = (0..n).map(|i| Tensor::full(&[1, 2, 2], i as f64)).collect();
        let records = (0..n)
            .map(|i| ImageRecord {
                path: PathBuf::from(format!("{i}")),
                mean: 0.0,
                std: 1.0,
                constant: false,
            })
            .collect();
        DatasetSample { images, records }
    }

    fn firsts(t: &Tensor) -> Vec<usize> {
        t.data().chunks(4).map(|c| c[0] as usize).collect()
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let ds = dataset(7);
        let b = sample_images(&ds, 7, 3).unwrap();
        assert_eq!(b.shape(), &[7, 1, 2, 2]);
        let mut seen = firsts(&b);
        seen.sort();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = dataset(20);
        assert_eq!(
            sample_images(&ds, 5, 9).unwrap(),
            sample_images(&ds, 5, 9).unwrap()
        );
        assert_eq!(sample_images(&ds, 1, 9).unwrap().shape(), &[1, 1, 2, 2]);
    }

    #[test]
    fn oversampling_is_rejected() {
        let ds = dataset(3);
        assert!(matches!(
            sample_images(&ds, 4, 0),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            sample_images(&ds, 0, 0),
            Err(Error::Validation(_))
        ));
    }
}
