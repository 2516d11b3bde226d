//! Command implementations on top of the library crate.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use fovex::attribution::{self, AttributionMap, MapSource};
use fovex::io::{self, RunConfig};
use fovex::metrics::{evaluate_batch, EvalError, Method};
use fovex::predictor::{self, TrainError};
use fovex::rng::{derive_seed, STREAM_DATA_TEST, STREAM_DATA_TRAIN, STREAM_SCANPATH_BASE};
use fovex::scanpath::{self, ScanpathError};
use fovex::tensor::Array;

/// Errors bucketed by exit code.
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

macro_rules! data_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    std::io::Error,
    io::ConfigError,
    io::ManifestError,
    io::PnmError,
    predictor::PredictorError,
    predictor::WeightFileError,
    attribution::AttributionError
);

impl From<ScanpathError> for CliError {
    fn from(e: ScanpathError) -> Self {
        match &e {
            ScanpathError::NonFinite | ScanpathError::AtFixation { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            TrainError::Diverged { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Scanpath(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn load_config(path: Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_path(&p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn train(config: Option<PathBuf>, out_dir: PathBuf, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    fs::create_dir_all(&out_dir)?;
    let train_set = predictor::generate_synthetic::<f64>(
        derive_seed(cfg.seed, STREAM_DATA_TRAIN),
        cfg.dataset_train_samples,
        cfg.dataset_side,
        cfg.dataset_classes,
    );
    let test_set = predictor::generate_synthetic::<f64>(
        derive_seed(cfg.seed, STREAM_DATA_TEST),
        cfg.dataset_test_samples,
        cfg.dataset_side,
        cfg.dataset_classes,
    );
    println!(
        "training on {} samples ({}x{}, {} classes, seed {})",
        cfg.dataset_train_samples, cfg.dataset_side, cfg.dataset_side, cfg.dataset_classes, cfg.seed
    );
    let (model, losses) = predictor::train_toy(&cfg.train_config::<f64>(), &train_set)?;
    let accuracy = predictor::accuracy(&model, &test_set)?;

    let weights_path = out_dir.join("weights.fovw");
    predictor::save_weights(&model, &weights_path)?;

    let mut log = String::from("# training log\n# epoch,mean_loss\n");
    for (epoch, loss) in losses.iter().enumerate() {
        writeln!(log, "{},{loss}", epoch + 1).expect("string write");
    }
    writeln!(log, "held_out_accuracy = {accuracy}").expect("string write");
    fs::write(out_dir.join("train_log.txt"), &log)?;

    let dataset_dir = out_dir.join("dataset");
    fs::create_dir_all(&dataset_dir)?;
    let manifest_path = io::export_dataset(&test_set, &dataset_dir)?;

    println!("held-out accuracy: {accuracy}");
    println!("weights: {}", weights_path.display());
    println!("held-out dataset manifest: {}", manifest_path.display());
    Ok(())
}

pub fn explain(
    weights: PathBuf,
    image_path: PathBuf,
    config: Option<PathBuf>,
    out_dir: PathBuf,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    fs::create_dir_all(&out_dir)?;
    let model = predictor::load_weights::<f64>(&weights)?;
    let image: Array<f64> = io::read_image(&image_path)?;
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let fov = cfg.foveation_for::<f64>(w);
    let scan = cfg.scanpath_for::<f64>(w, derive_seed(cfg.seed, STREAM_SCANPATH_BASE));
    let sp = scanpath::generate_scanpath(&model, &image, &scan, &fov)?;
    let weights_vec = attribution::fixation_weights(&sp, cfg.weighting);
    let map = attribution::build_map(&sp, &weights_vec, cfg.saliency_sigma_for::<f64>(w), h, w)?;

    fs::write(out_dir.join("scanpath.txt"), sp.to_text())?;
    attribution::render_heatmap(&map, &out_dir.join("heatmap.pgm"))?;
    attribution::render_overlay(&map, &image, &out_dir.join("overlay.ppm"))?;

    let mut meta = String::from("# explanation metadata\n");
    writeln!(meta, "image = {}", image_path.display()).expect("string write");
    writeln!(meta, "target_class = {}", sp.target()).expect("string write");
    writeln!(meta, "initial_loss = {}", sp.initial_loss()).expect("string write");
    let losses: Vec<String> = sp.losses().iter().map(|l| l.to_string()).collect();
    writeln!(meta, "fixation_losses = {}", losses.join(",")).expect("string write");
    meta.push_str("# config\n");
    meta.push_str(&cfg.to_text());
    fs::write(out_dir.join("explain_meta.txt"), meta)?;

    println!("target class: {}", sp.target());
    println!("fixations: {}", sp.len());
    println!("outputs in {}", out_dir.display());
    Ok(())
}

pub fn evaluate(
    weights: PathBuf,
    manifest_path: PathBuf,
    method: &str,
    config: Option<PathBuf>,
    out_dir: PathBuf,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let method = Method::parse(method)
        .ok_or_else(|| CliError::Usage(format!("unknown method `{method}` (expected fovex or random_cam)")))?;
    let cfg = load_config(config, seed)?;
    fs::create_dir_all(&out_dir)?;
    let model = predictor::load_weights::<f64>(&weights)?;
    let manifest = io::load_manifest(&manifest_path)?;
    let report = evaluate_batch(&model, &manifest, method, &cfg)?;
    fs::write(out_dir.join("report.txt"), report.to_text())?;
    println!(
        "evaluated {} of {} entries ({} correctly classified)",
        report.records.len(),
        report.total_entries,
        report.correctly_classified
    );
    for (kind, value) in report.metrics.iter().zip(&report.aggregates) {
        match value {
            Some(v) => println!("{}_mean = {v}", kind.name()),
            None => println!("{}_mean = na", kind.name()),
        }
    }
    println!("report: {}", out_dir.join("report.txt").display());
    Ok(())
}

pub fn render(map_path: PathBuf, image: Option<PathBuf>, out_dir: PathBuf) -> Result<(), CliError> {
    fs::create_dir_all(&out_dir)?;
    let raw: Array<f64> = io::read_image(&map_path)?;
    if raw.shape()[0] != 1 {
        return Err(CliError::Data(format!(
            "{} is not a single-channel attribution map",
            map_path.display()
        )));
    }
    let (h, w) = (raw.shape()[1], raw.shape()[2]);
    let grid = Array::new(vec![h, w], raw.data().to_vec());
    let map = AttributionMap::from_grid(
        grid,
        MapSource::Fovex,
        format!("rerendered from {}", map_path.display()),
    );
    attribution::render_heatmap(&map, &out_dir.join("heatmap.pgm"))?;
    if let Some(image_path) = image {
        let base: Array<f64> = io::read_image(&image_path)?;
        if base.shape()[1] != h || base.shape()[2] != w {
            return Err(CliError::Data(format!(
                "image is {}x{} but the map is {h}x{w}",
                base.shape()[1],
                base.shape()[2]
            )));
        }
        attribution::render_overlay(&map, &base, &out_dir.join("overlay.ppm"))?;
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}
