//! File formats and run configuration: portable graymaps/pixmaps, the flat
//! key-value config, dataset manifests, and ground-truth sidecar files.

pub mod config;
pub mod manifest;
pub mod pnm;

pub use config::{ConfigError, InitKind, RunConfig};
pub use manifest::{
    export_dataset, load_boxes, load_fixations, load_manifest, DatasetManifest, ManifestEntry,
    ManifestError,
};
pub use pnm::{read_image, write_pgm, write_ppm, PnmError};
