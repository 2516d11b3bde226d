//! Dataset manifests and ground-truth sidecar files.
//!
//! A manifest is a text file with one entry per line:
//!
//! ```text
//! image_path,label[,bbox_path[,fixations_path]]
//! ```
//!
//! Empty optional fields mean "absent". Paths are resolved relative to the
//! manifest's directory and checked for existence at load time. Bounding-box
//! files hold `top,left,height,width` lines; fixation files hold `row,col`
//! integer lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::pnm::{self, PnmError};
use crate::metrics::{BoundingBox, FixationGroundTruth};
use crate::predictor::SyntheticDataset;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path} line {line}: expected `image,label[,bbox[,fixations]]`, got `{content}`")]
    Syntax { path: String, line: usize, content: String },
    #[error("{path} line {line}: label `{value}` is not an unsigned integer")]
    BadLabel { path: String, line: usize, value: String },
    #[error("manifest references missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),
    #[error("manifest lists no entries")]
    Empty,
    #[error("{path} line {line}: expected {expected} comma-separated integers")]
    BadRecord { path: String, line: usize, expected: &'static str },
    #[error(transparent)]
    Image(#[from] PnmError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub label: usize,
    pub bbox: Option<PathBuf>,
    pub fixations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    /// Path the manifest was loaded from; doubles as the dataset identifier.
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// Loads and validates a manifest; every referenced file must exist, and all
/// missing paths are reported together.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let name = path.display().to_string();
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 4 || fields[0].is_empty() {
            return Err(ManifestError::Syntax { path: name, line: line_no, content: line.into() });
        }
        let label = fields[1].parse().map_err(|_| ManifestError::BadLabel {
            path: name.clone(),
            line: line_no,
            value: fields[1].into(),
        })?;
        let optional = |i: usize| -> Option<PathBuf> {
            fields.get(i).filter(|s| !s.is_empty()).map(|s| base.join(s))
        };
        entries.push(ManifestEntry {
            image: base.join(fields[0]),
            label,
            bbox: optional(2),
            fixations: optional(3),
        });
    }
    if entries.is_empty() {
        return Err(ManifestError::Empty);
    }
    let missing: Vec<PathBuf> = entries
        .iter()
        .flat_map(|e| {
            [Some(&e.image), e.bbox.as_ref(), e.fixations.as_ref()]
                .into_iter()
                .flatten()
                .filter(|p| !p.exists())
                .cloned()
                .collect::<Vec<_>>()
        })
        .collect();
    if !missing.is_empty() {
        return Err(ManifestError::MissingFiles(missing));
    }
    Ok(DatasetManifest { path: path.to_path_buf(), entries })
}

/// Reads a bounding-box sidecar file.
pub fn load_boxes(path: &Path) -> Result<Vec<BoundingBox>, ManifestError> {
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut boxes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<usize> = line.split(',').map(|f| f.trim().parse()).collect::<Result<_, _>>()
            .map_err(|_| ManifestError::BadRecord {
                path: name.clone(),
                line: idx + 1,
                expected: "four (top,left,height,width)",
            })?;
        if parts.len() != 4 {
            return Err(ManifestError::BadRecord {
                path: name,
                line: idx + 1,
                expected: "four (top,left,height,width)",
            });
        }
        boxes.push(BoundingBox { top: parts[0], left: parts[1], height: parts[2], width: parts[3] });
    }
    Ok(boxes)
}

/// Reads a fixation sidecar file.
pub fn load_fixations(path: &Path, image_id: &str) -> Result<FixationGroundTruth, ManifestError> {
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut pixels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<usize> = line.split(',').map(|f| f.trim().parse()).collect::<Result<_, _>>()
            .map_err(|_| ManifestError::BadRecord {
                path: name.clone(),
                line: idx + 1,
                expected: "two (row,col)",
            })?;
        if parts.len() != 2 {
            return Err(ManifestError::BadRecord {
                path: name,
                line: idx + 1,
                expected: "two (row,col)",
            });
        }
        pixels.push((parts[0], parts[1]));
    }
    Ok(FixationGroundTruth { pixels, image_id: image_id.to_string() })
}

/// Writes a synthetic dataset as graymap files plus box sidecars and a
/// manifest; returns the manifest path.
pub fn export_dataset<T: Scalar>(
    data: &SyntheticDataset<T>,
    dir: &Path,
) -> Result<PathBuf, ManifestError> {
    let images = dir.join("images");
    let boxes = dir.join("boxes");
    fs::create_dir_all(&images)?;
    fs::create_dir_all(&boxes)?;
    let mut manifest = String::new();
    for (i, sample) in data.samples().iter().enumerate() {
        let image_rel = format!("images/img_{i:04}.pgm");
        let bbox_rel = format!("boxes/img_{i:04}.txt");
        pnm::write_pgm(&dir.join(&image_rel), &sample.image, None)?;
        let b = sample.bbox;
        fs::write(dir.join(&bbox_rel), format!("{},{},{},{}\n", b.top, b.left, b.height, b.width))?;
        writeln!(manifest, "{image_rel},{},{bbox_rel}", sample.label).expect("string write");
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest)?;
    Ok(path)
}
