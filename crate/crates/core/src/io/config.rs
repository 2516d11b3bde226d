//! Flat key-value run configuration.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Resolution-dependent pixel quantities (sigmas, radii, step sizes) accept
//! the literal `auto`, meaning "derive from the image width at use time".
//!
//! | key | unit / range | default |
//! |-----|--------------|---------|
//! | `seed` | u64 | 42 |
//! | `dataset.side` | pixels | 64 |
//! | `dataset.classes` | 2..=4 | 2 |
//! | `dataset.train_samples` | count | 2000 |
//! | `dataset.test_samples` | count | 500 |
//! | `train.epochs` | count | 3 |
//! | `train.batch_size` | count | 16 |
//! | `train.learning_rate` | non-negative | 0.05 |
//! | `foveation.fovea_sigma` | pixels or `auto` (width/8) | auto |
//! | `foveation.blur_sigma` | pixels or `auto` (width/16) | auto |
//! | `foveation.blur_radius` | pixels or `auto` (ceil of 3 blur sigmas) | auto |
//! | `foveation.forgetting` | [0, 1] | 0.6 |
//! | `scanpath.fixations` | >= 1 | 5 |
//! | `scanpath.step_size` | pixels per unit gradient or `auto` (width/10) | auto |
//! | `scanpath.inner_steps` | >= 1 | 1 |
//! | `scanpath.init` | `center` or `random` | center |
//! | `scanpath.target` | `predicted` or a class index | predicted |
//! | `attribution.saliency_sigma` | pixels or `auto` (= fovea sigma) | auto |
//! | `attribution.weighting` | `uniform` or `confidence` | uniform |
//! | `random_cam.min_blobs` | >= 1 | 1 |
//! | `random_cam.max_blobs` | >= min | 5 |
//! | `random_cam.min_sigma` | pixels or `auto` (width/16) | auto |
//! | `random_cam.max_sigma` | pixels or `auto` (width/4) | auto |
//! | `metrics.set` | comma list of drop,increase,delete,insert,ebpg,nss,aucj | drop,increase,ebpg |
//! | `metrics.step_fraction` | (0, 1] | 0.01 |
//! | `metrics.limit` | 0 = unlimited | 0 |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::attribution::WeightingMode;
use crate::foveation::FoveationConfig;
use crate::metrics::MetricKind;
use crate::predictor::TrainConfig;
use crate::scalar::Scalar;
use crate::scanpath::{InitPolicy, ScanpathConfig, TargetPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: expected `key = value`, got `{content}`")]
    Syntax { line: usize, content: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config key `{key}` must be {constraint}, got `{value}`")]
    BadValue { key: String, constraint: &'static str, value: String },
}

/// First-fixation choice, before a concrete seed is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Center,
    Random,
}

/// Complete run configuration with every module's knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset_side: usize,
    pub dataset_classes: usize,
    pub dataset_train_samples: usize,
    pub dataset_test_samples: usize,
    pub train_epochs: usize,
    pub train_batch_size: usize,
    pub train_learning_rate: f64,
    pub fovea_sigma: Option<f64>,
    pub blur_sigma: Option<f64>,
    pub blur_radius: Option<usize>,
    pub forgetting: f64,
    pub fixations: usize,
    pub step_size: Option<f64>,
    pub inner_steps: usize,
    pub init: InitKind,
    /// `None` explains the predictor's own prediction.
    pub target_label: Option<usize>,
    pub saliency_sigma: Option<f64>,
    pub weighting: WeightingMode,
    pub random_cam_blobs: (usize, usize),
    pub random_cam_sigma: (Option<f64>, Option<f64>),
    pub metric_set: Vec<MetricKind>,
    pub metric_step_fraction: f64,
    pub eval_limit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dataset_side: 64,
            dataset_classes: 2,
            dataset_train_samples: 2000,
            dataset_test_samples: 500,
            train_epochs: 3,
            train_batch_size: 16,
            train_learning_rate: 0.05,
            fovea_sigma: None,
            blur_sigma: None,
            blur_radius: None,
            forgetting: 0.6,
            fixations: 5,
            step_size: None,
            inner_steps: 1,
            init: InitKind::Center,
            target_label: None,
            saliency_sigma: None,
            weighting: WeightingMode::Uniform,
            random_cam_blobs: (1, 5),
            random_cam_sigma: (None, None),
            metric_set: vec![MetricKind::Drop, MetricKind::Increase, MetricKind::Ebpg],
            metric_step_fraction: 0.01,
            eval_limit: 0,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// ignored, later assignments win.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: line_no, content: raw.trim().into() });
            };
            cfg.assign(key.trim(), value.trim(), line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn assign(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = |constraint: &'static str| ConfigError::BadValue {
            key: key.to_string(),
            constraint,
            value: value.to_string(),
        };
        match key {
            "seed" => self.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
            "dataset.side" => self.dataset_side = parse_usize(value).ok_or_else(|| bad("a positive integer"))?,
            "dataset.classes" => self.dataset_classes = parse_usize(value).ok_or_else(|| bad("an integer in 2..=4"))?,
            "dataset.train_samples" => self.dataset_train_samples = parse_usize(value).ok_or_else(|| bad("a positive integer"))?,
            "dataset.test_samples" => self.dataset_test_samples = parse_usize(value).ok_or_else(|| bad("a positive integer"))?,
            "train.epochs" => self.train_epochs = value.parse().map_err(|_| bad("an unsigned integer"))?,
            "train.batch_size" => self.train_batch_size = parse_usize(value).ok_or_else(|| bad("a positive integer"))?,
            "train.learning_rate" => self.train_learning_rate = value.parse().map_err(|_| bad("a number"))?,
            "foveation.fovea_sigma" => self.fovea_sigma = parse_auto_f64(value).ok_or_else(|| bad("a number or `auto`"))?,
            "foveation.blur_sigma" => self.blur_sigma = parse_auto_f64(value).ok_or_else(|| bad("a number or `auto`"))?,
            "foveation.blur_radius" => {
                self.blur_radius = match value {
                    "auto" => None,
                    v => Some(parse_usize(v).ok_or_else(|| bad("a positive integer or `auto`"))?),
                }
            }
            "foveation.forgetting" => self.forgetting = value.parse().map_err(|_| bad("a number"))?,
            "scanpath.fixations" => self.fixations = parse_usize(value).ok_or_else(|| bad("a positive integer"))?,
            "scanpath.step_size" => self.step_size = parse_auto_f64(value).ok_or_else(|| bad("a number or `auto`"))?,
            "scanpath.inner_steps" => self.inner_steps = parse_usize(value).ok_or_else(|| bad("a positive integer"))?,
            "scanpath.init" => {
                self.init = match value {
                    "center" => InitKind::Center,
                    "random" => InitKind::Random,
                    _ => return Err(bad("`center` or `random`")),
                }
            }
            "scanpath.target" => {
                self.target_label = match value {
                    "predicted" => None,
                    v => Some(v.parse().map_err(|_| bad("`predicted` or a class index"))?),
                }
            }
            "attribution.saliency_sigma" => self.saliency_sigma = parse_auto_f64(value).ok_or_else(|| bad("a number or `auto`"))?,
            "attribution.weighting" => {
                self.weighting = match value {
                    "uniform" => WeightingMode::Uniform,
                    "confidence" => WeightingMode::ConfidenceGain,
                    _ => return Err(bad("`uniform` or `confidence`")),
                }
            }
            "random_cam.min_blobs" => self.random_cam_blobs.0 = parse_usize(value).ok_or_else(|| bad("a positive integer"))?,
            "random_cam.max_blobs" => self.random_cam_blobs.1 = parse_usize(value).ok_or_else(|| bad("a positive integer"))?,
            "random_cam.min_sigma" => self.random_cam_sigma.0 = parse_auto_f64(value).ok_or_else(|| bad("a number or `auto`"))?,
            "random_cam.max_sigma" => self.random_cam_sigma.1 = parse_auto_f64(value).ok_or_else(|| bad("a number or `auto`"))?,
            "metrics.set" => {
                let mut set = Vec::new();
                for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    set.push(MetricKind::parse(name).ok_or_else(|| {
                        bad("a comma list of drop,increase,delete,insert,ebpg,nss,aucj")
                    })?);
                }
                self.metric_set = set;
            }
            "metrics.step_fraction" => self.metric_step_fraction = value.parse().map_err(|_| bad("a number"))?,
            "metrics.limit" => self.eval_limit = value.parse().map_err(|_| bad("an unsigned integer"))?,
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
        }
        Ok(())
    }

    /// Re-checks every module invariant, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, constraint: &'static str, value: String| {
            Err(ConfigError::BadValue { key: key.into(), constraint, value })
        };
        if !(2..=4).contains(&self.dataset_classes) {
            return bad("dataset.classes", "in 2..=4", self.dataset_classes.to_string());
        }
        if self.dataset_side < 8 || self.dataset_side % 4 != 0 {
            return bad("dataset.side", "a multiple of 4, at least 8", self.dataset_side.to_string());
        }
        if !(self.train_learning_rate >= 0.0 && self.train_learning_rate.is_finite()) {
            return bad("train.learning_rate", "finite and non-negative", self.train_learning_rate.to_string());
        }
        if let Some(s) = self.fovea_sigma {
            if !(s > 0.0) {
                return bad("foveation.fovea_sigma", "positive", s.to_string());
            }
        }
        if let Some(s) = self.blur_sigma {
            if !(s > 0.0) {
                return bad("foveation.blur_sigma", "positive", s.to_string());
            }
        }
        if !(0.0..=1.0).contains(&self.forgetting) {
            return bad("foveation.forgetting", "in [0, 1]", self.forgetting.to_string());
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0) {
                return bad("scanpath.step_size", "positive", s.to_string());
            }
        }
        if let Some(s) = self.saliency_sigma {
            if !(s > 0.0) {
                return bad("attribution.saliency_sigma", "positive", s.to_string());
            }
        }
        if self.random_cam_blobs.0 > self.random_cam_blobs.1 {
            return bad(
                "random_cam.max_blobs",
                "at least random_cam.min_blobs",
                format!("{:?}", self.random_cam_blobs),
            );
        }
        if let (Some(lo), Some(hi)) = self.random_cam_sigma {
            if lo > hi {
                return bad("random_cam.max_sigma", "at least random_cam.min_sigma", format!("{lo}..{hi}"));
            }
        }
        if let (Some(lo), _) | (_, Some(lo)) = self.random_cam_sigma {
            if !(lo > 0.0) {
                return bad("random_cam.min_sigma", "positive", lo.to_string());
            }
        }
        if !(self.metric_step_fraction > 0.0 && self.metric_step_fraction <= 1.0) {
            return bad("metrics.step_fraction", "in (0, 1]", self.metric_step_fraction.to_string());
        }
        Ok(())
    }

    /// Effective foveation parameters for an image of the given width.
    pub fn foveation_for<T: Scalar>(&self, width: usize) -> FoveationConfig<T> {
        let defaults = FoveationConfig::<T>::for_width(width);
        let blur_sigma = self.blur_sigma.map(T::of).unwrap_or(defaults.blur_sigma);
        let blur_radius = self
            .blur_radius
            .unwrap_or_else(|| ((blur_sigma.to_f64().unwrap() * 3.0).ceil() as usize).max(1));
        FoveationConfig {
            fovea_sigma: self.fovea_sigma.map(T::of).unwrap_or(defaults.fovea_sigma),
            blur_sigma,
            forgetting: T::of(self.forgetting),
            blur_radius,
        }
    }

    /// Effective scanpath parameters; `random_seed` is attached when the
    /// init policy is random.
    pub fn scanpath_for<T: Scalar>(&self, width: usize, random_seed: u64) -> ScanpathConfig<T> {
        ScanpathConfig {
            fixation_count: self.fixations,
            step_size: self
                .step_size
                .map(T::of)
                .unwrap_or_else(|| T::of_usize(width) / T::of(10.0)),
            inner_steps: self.inner_steps,
            init: match self.init {
                InitKind::Center => InitPolicy::Center,
                InitKind::Random => InitPolicy::Random { seed: random_seed },
            },
            target: match self.target_label {
                None => TargetPolicy::Predicted,
                Some(label) => TargetPolicy::Label(label),
            },
        }
    }

    /// Effective saliency-blob sigma (defaults to the fovea sigma).
    pub fn saliency_sigma_for<T: Scalar>(&self, width: usize) -> T {
        self.saliency_sigma
            .map(T::of)
            .unwrap_or_else(|| self.foveation_for::<T>(width).fovea_sigma)
    }

    /// Effective RandomCAM parameters.
    pub fn random_cam_for<T: Scalar>(&self, width: usize) -> ((usize, usize), (T, T)) {
        let lo = self.random_cam_sigma.0.map(T::of).unwrap_or(T::of_usize(width) / T::of(16.0));
        let hi = self.random_cam_sigma.1.map(T::of).unwrap_or(T::of_usize(width) / T::of(4.0));
        (self.random_cam_blobs, (lo, hi))
    }

    pub fn train_config<T: Scalar>(&self) -> TrainConfig<T> {
        TrainConfig {
            epochs: self.train_epochs,
            batch_size: self.train_batch_size,
            learning_rate: T::of(self.train_learning_rate),
            seed: self.seed,
        }
    }

    /// Full snapshot in parseable form; unresolved pixel quantities print as
    /// `auto`. Key order is fixed, so identical configurations render to
    /// identical text.
    pub fn to_text(&self) -> String {
        fn auto_f64(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_else(|| "auto".into())
        }
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        kv("seed", self.seed.to_string());
        kv("dataset.side", self.dataset_side.to_string());
        kv("dataset.classes", self.dataset_classes.to_string());
        kv("dataset.train_samples", self.dataset_train_samples.to_string());
        kv("dataset.test_samples", self.dataset_test_samples.to_string());
        kv("train.epochs", self.train_epochs.to_string());
        kv("train.batch_size", self.train_batch_size.to_string());
        kv("train.learning_rate", self.train_learning_rate.to_string());
        kv("foveation.fovea_sigma", auto_f64(self.fovea_sigma));
        kv("foveation.blur_sigma", auto_f64(self.blur_sigma));
        kv(
            "foveation.blur_radius",
            self.blur_radius.map(|x| x.to_string()).unwrap_or_else(|| "auto".into()),
        );
        kv("foveation.forgetting", self.forgetting.to_string());
        kv("scanpath.fixations", self.fixations.to_string());
        kv("scanpath.step_size", auto_f64(self.step_size));
        kv("scanpath.inner_steps", self.inner_steps.to_string());
        kv(
            "scanpath.init",
            match self.init {
                InitKind::Center => "center".into(),
                InitKind::Random => "random".to_string(),
            },
        );
        kv(
            "scanpath.target",
            self.target_label.map(|l| l.to_string()).unwrap_or_else(|| "predicted".into()),
        );
        kv("attribution.saliency_sigma", auto_f64(self.saliency_sigma));
        kv(
            "attribution.weighting",
            match self.weighting {
                WeightingMode::Uniform => "uniform".into(),
                WeightingMode::ConfidenceGain => "confidence".to_string(),
            },
        );
        kv("random_cam.min_blobs", self.random_cam_blobs.0.to_string());
        kv("random_cam.max_blobs", self.random_cam_blobs.1.to_string());
        kv("random_cam.min_sigma", auto_f64(self.random_cam_sigma.0));
        kv("random_cam.max_sigma", auto_f64(self.random_cam_sigma.1));
        kv(
            "metrics.set",
            self.metric_set.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
        );
        kv("metrics.step_fraction", self.metric_step_fraction.to_string());
        kv("metrics.limit", self.eval_limit.to_string());
        out
    }
}

fn parse_usize(value: &str) -> Option<usize> {
    value.parse().ok().filter(|&v| v > 0)
}

fn parse_auto_f64(value: &str) -> Option<Option<f64>> {
    if value == "auto" {
        Some(None)
    } else {
        value.parse::<f64>().ok().map(Some)
    }
}
