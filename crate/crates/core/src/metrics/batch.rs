//! Batch evaluation: filter to correctly classified images, generate a map
//! per image, score the requested metrics, and aggregate into a report.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::attribution::{self, AttributionError};
use crate::foveation;
use crate::io::manifest::{load_boxes, load_fixations, DatasetManifest, ManifestError};
use crate::io::pnm::{self, PnmError};
use crate::io::RunConfig;
use crate::predictor::{Predictor, PredictorError};
use crate::rng::{derive_seed, STREAM_RANDOM_CAM_BASE, STREAM_SCANPATH_BASE};
use crate::scalar::Scalar;
use crate::scanpath::{self, ScanpathError};
use crate::tensor::Array;

use super::{avg_drop_increase, delete_insert_auc, ebpg, nss, aucj, CurveMode, MetricError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no correctly classified images to evaluate")]
    EmptyFilteredSet,
    #[error("{image}: metric `{metric}` needs a {what} file, but the manifest entry has none")]
    MissingGroundTruth { image: String, metric: &'static str, what: &'static str },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Scanpath(#[from] ScanpathError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Image(#[from] PnmError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

/// Attribution method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fovex,
    RandomCam,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Fovex => "fovex",
            Method::RandomCam => "random_cam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fovex" => Some(Method::Fovex),
            "random_cam" => Some(Method::RandomCam),
            _ => None,
        }
    }
}

/// Selectable metric columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Drop,
    Increase,
    Delete,
    Insert,
    Ebpg,
    Nss,
    Aucj,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Drop => "drop",
            MetricKind::Increase => "increase",
            MetricKind::Delete => "delete",
            MetricKind::Insert => "insert",
            MetricKind::Ebpg => "ebpg",
            MetricKind::Nss => "nss",
            MetricKind::Aucj => "aucj",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "drop" => Some(MetricKind::Drop),
            "increase" => Some(MetricKind::Increase),
            "delete" => Some(MetricKind::Delete),
            "insert" => Some(MetricKind::Insert),
            "ebpg" => Some(MetricKind::Ebpg),
            "nss" => Some(MetricKind::Nss),
            "aucj" => Some(MetricKind::Aucj),
            _ => None,
        }
    }
}

/// One evaluated image; `values` aligns with the report's metric list, with
/// `None` for excluded computations (zero unmasked confidence).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord<T> {
    pub index: usize,
    pub image: String,
    pub label: usize,
    pub predicted: usize,
    pub values: Vec<Option<T>>,
    pub degenerate_map: bool,
}

/// Bundled per-image values plus aggregates and run provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport<T> {
    pub method: Method,
    pub seed: u64,
    pub manifest: String,
    pub metrics: Vec<MetricKind>,
    pub records: Vec<ImageRecord<T>>,
    /// Arithmetic mean of the per-image values, per metric.
    pub aggregates: Vec<Option<T>>,
    pub total_entries: usize,
    pub correctly_classified: usize,
    pub excluded_zero_confidence: usize,
    pub degenerate_maps: usize,
    pub config_snapshot: String,
}

impl<T: Scalar> EvaluationReport<T> {
    /// Deterministic text rendering: header block, one record line per image,
    /// aggregate block. Missing values print as `na`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        writeln!(w, "# saliency evaluation report").unwrap();
        writeln!(w, "# method = {}", self.method.name()).unwrap();
        writeln!(w, "# manifest = {}", self.manifest).unwrap();
        writeln!(w, "# seed = {}", self.seed).unwrap();
        writeln!(w, "# entries = {}", self.total_entries).unwrap();
        writeln!(w, "# correctly_classified = {}", self.correctly_classified).unwrap();
        writeln!(w, "# evaluated = {}", self.records.len()).unwrap();
        writeln!(w, "# excluded_zero_confidence = {}", self.excluded_zero_confidence).unwrap();
        writeln!(w, "# degenerate_maps = {}", self.degenerate_maps).unwrap();
        writeln!(w, "# config").unwrap();
        for line in self.config_snapshot.lines() {
            writeln!(w, "#   {line}").unwrap();
        }
        let names: Vec<&str> = self.metrics.iter().map(|m| m.name()).collect();
        writeln!(w, "# columns: index,image,label,predicted,{}", names.join(",")).unwrap();
        for r in &self.records {
            write!(w, "{},{},{},{}", r.index, r.image, r.label, r.predicted).unwrap();
            for v in &r.values {
                match v {
                    Some(v) => write!(w, ",{v}").unwrap(),
                    None => write!(w, ",na").unwrap(),
                }
            }
            writeln!(w).unwrap();
        }
        writeln!(w, "# aggregate").unwrap();
        for (m, v) in self.metrics.iter().zip(&self.aggregates) {
            match v {
                Some(v) => writeln!(w, "{}_mean = {v}", m.name()).unwrap(),
                None => writeln!(w, "{}_mean = na", m.name()).unwrap(),
            }
        }
        out
    }

    /// Aggregate value for one metric, when present.
    pub fn aggregate(&self, kind: MetricKind) -> Option<T> {
        self.metrics.iter().position(|&m| m == kind).and_then(|i| self.aggregates[i])
    }
}

/// Generates the method's map for one image. Fovex runs the full scanpath
/// pipeline; RandomCAM draws its mixture from a per-image derived seed.
pub fn map_for_image<T: Scalar>(
    predictor: &Predictor<T>,
    image: &Array<T>,
    method: Method,
    cfg: &RunConfig,
    seed_index: u64,
) -> Result<attribution::AttributionMap<T>, EvalError> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    match method {
        Method::Fovex => {
            let fov = cfg.foveation_for::<T>(w);
            let scfg =
                cfg.scanpath_for::<T>(w, derive_seed(cfg.seed, STREAM_SCANPATH_BASE + seed_index));
            let sp = scanpath::generate_scanpath(predictor, image, &scfg, &fov)?;
            let weights = attribution::fixation_weights(&sp, cfg.weighting);
            Ok(attribution::build_map(&sp, &weights, cfg.saliency_sigma_for::<T>(w), h, w)?)
        }
        Method::RandomCam => {
            let (blobs, sigmas) = cfg.random_cam_for::<T>(w);
            Ok(attribution::random_cam(
                derive_seed(cfg.seed, STREAM_RANDOM_CAM_BASE + seed_index),
                h,
                w,
                blobs,
                sigmas,
            )?)
        }
    }
}

/// Runs the evaluation protocol over a manifest.
///
/// Images the predictor misclassifies are skipped; `metrics.limit` caps the
/// number of evaluated images (0 = all). Per-image work runs on a thread
/// pool; the output order and every random draw are functions of the
/// manifest index, so reports are reproducible byte for byte.
pub fn evaluate_batch<T: Scalar>(
    predictor: &Predictor<T>,
    manifest: &DatasetManifest,
    method: Method,
    cfg: &RunConfig,
) -> Result<EvaluationReport<T>, EvalError> {
    let mut kept: Vec<(usize, Array<T>)> = Vec::new();
    let mut correctly_classified = 0usize;
    for (index, entry) in manifest.entries.iter().enumerate() {
        let image: Array<T> = pnm::read_image(&entry.image)?;
        if predictor.predict(&image)? == entry.label {
            correctly_classified += 1;
            if cfg.eval_limit == 0 || kept.len() < cfg.eval_limit {
                kept.push((index, image));
            }
        }
    }
    if kept.is_empty() {
        return Err(EvalError::EmptyFilteredSet);
    }

    struct PerImage<T> {
        record: ImageRecord<T>,
        excluded_zero: bool,
    }

    let results: Result<Vec<PerImage<T>>, EvalError> = kept
        .par_iter()
        .map(|(index, image)| {
            let entry = &manifest.entries[*index];
            let image_name = entry.image.display().to_string();
            let map = map_for_image(predictor, image, method, cfg, *index as u64)?;
            let grid = map.grid();
            let lo = grid.data().iter().copied().fold(T::infinity(), T::min);
            let hi = grid.data().iter().copied().fold(T::neg_infinity(), T::max);
            let degenerate_map = lo == hi;
            let target = entry.label;
            let (h, w) = (image.shape()[1], image.shape()[2]);
            let fov = cfg.foveation_for::<T>(w);
            let needs_curves = cfg
                .metric_set
                .iter()
                .any(|m| matches!(m, MetricKind::Delete | MetricKind::Insert));
            let coarse = needs_curves
                .then(|| foveation::coarse(image, fov.blur_sigma, fov.blur_radius));
            let needs_drop = cfg
                .metric_set
                .iter()
                .any(|m| matches!(m, MetricKind::Drop | MetricKind::Increase));
            let drop_increase = if needs_drop {
                Some(avg_drop_increase(
                    predictor,
                    std::slice::from_ref(image),
                    std::slice::from_ref(grid),
                    &[target],
                )?)
            } else {
                None
            };
            let excluded_zero = drop_increase.as_ref().map_or(false, |d| d.excluded > 0);
            let mut values = Vec::with_capacity(cfg.metric_set.len());
            for metric in &cfg.metric_set {
                let value = match metric {
                    MetricKind::Drop | MetricKind::Increase => {
                        let d = drop_increase.as_ref().expect("computed above");
                        if excluded_zero {
                            None
                        } else if *metric == MetricKind::Drop {
                            Some(d.drop)
                        } else {
                            Some(d.increase)
                        }
                    }
                    MetricKind::Delete | MetricKind::Insert => {
                        let mode = if *metric == MetricKind::Delete {
                            CurveMode::Delete
                        } else {
                            CurveMode::Insert
                        };
                        Some(delete_insert_auc(
                            predictor,
                            image,
                            coarse.as_ref().expect("computed above"),
                            grid,
                            target,
                            cfg.metric_step_fraction,
                            mode,
                        )?)
                    }
                    MetricKind::Ebpg => {
                        let path = entry.bbox.as_ref().ok_or_else(|| {
                            EvalError::MissingGroundTruth {
                                image: image_name.clone(),
                                metric: "ebpg",
                                what: "bounding-box",
                            }
                        })?;
                        let boxes = load_boxes(path)?;
                        Some(ebpg(grid, &boxes)?)
                    }
                    MetricKind::Nss | MetricKind::Aucj => {
                        let path = entry.fixations.as_ref().ok_or_else(|| {
                            EvalError::MissingGroundTruth {
                                image: image_name.clone(),
                                metric: metric.name(),
                                what: "fixation",
                            }
                        })?;
                        let gt = load_fixations(path, &image_name)?;
                        gt.validate(h, w)?;
                        if *metric == MetricKind::Nss {
                            Some(nss(grid, &gt)?)
                        } else {
                            Some(aucj(grid, &gt)?)
                        }
                    }
                };
                values.push(value);
            }
            Ok(PerImage {
                record: ImageRecord {
                    index: *index,
                    image: image_name,
                    label: entry.label,
                    predicted: entry.label,
                    values,
                    degenerate_map,
                },
                excluded_zero,
            })
        })
        .collect();
    let results = results?;

    let excluded_zero_confidence = results.iter().filter(|r| r.excluded_zero).count();
    let degenerate_maps = results.iter().filter(|r| r.record.degenerate_map).count();
    let records: Vec<ImageRecord<T>> = results.into_iter().map(|r| r.record).collect();
    let aggregates = (0..cfg.metric_set.len())
        .map(|col| {
            let vals: Vec<T> = records.iter().filter_map(|r| r.values[col]).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().copied().sum::<T>() / T::of_usize(vals.len()))
            }
        })
        .collect();
    Ok(EvaluationReport {
        method,
        seed: cfg.seed,
        manifest: manifest.path.display().to_string(),
        metrics: cfg.metric_set.clone(),
        records,
        aggregates,
        total_entries: manifest.entries.len(),
        correctly_classified,
        excluded_zero_confidence,
        degenerate_maps,
        config_snapshot: cfg.to_text(),
    })
}
