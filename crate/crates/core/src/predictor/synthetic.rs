//! Procedural blob-quadrant dataset.
//!
//! Each image is a textured noise background with one bright Gaussian blob;
//! the class is the quadrant holding the blob, and the bounding box tightly
//! encloses the blob's two-sigma extent, giving localization ground truth
//! for free.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::metrics::BoundingBox;
use crate::scalar::Scalar;
use crate::tensor::Array;

/// Quadrant anchors per class label: top-left, bottom-right, top-right,
/// bottom-left. Two-class datasets use diagonally opposite quadrants.
const QUADRANTS: [(usize, usize); 4] = [(0, 0), (1, 1), (0, 1), (1, 0)];

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub image: Array<T>,
    pub label: usize,
    pub bbox: BoundingBox,
}

/// Deterministically generated labelled images with localization boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset<T> {
    side: usize,
    classes: usize,
    seed: u64,
    samples: Vec<Sample<T>>,
}

impl<T: Scalar> SyntheticDataset<T> {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    #[cfg(test)]
    pub(crate) fn empty(side: usize, classes: usize, seed: u64) -> Self {
        Self { side, classes, seed, samples: Vec::new() }
    }
}

/// Generates `n` samples of `side x side` grayscale images over `classes`
/// quadrant classes. A pure function of its arguments.
pub fn generate_synthetic<T: Scalar>(
    seed: u64,
    n: usize,
    side: usize,
    classes: usize,
) -> SyntheticDataset<T> {
    assert!(n > 0, "dataset size must be positive");
    assert!((2..=4).contains(&classes), "quadrant classes must be 2..=4, got {classes}");
    assert!(side >= 8, "images smaller than 8x8 leave no room for a blob");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n).map(|_| generate_sample(&mut rng, side, classes)).collect();
    SyntheticDataset { side, classes, seed, samples }
}

fn generate_sample<T: Scalar>(rng: &mut ChaCha8Rng, side: usize, classes: usize) -> Sample<T> {
    let label = rng.random_range(0..classes);
    let (qr, qc) = QUADRANTS[label];
    let half = side / 2;

    // Textured background: a random low-frequency grating plus white noise.
    let freq_r: f64 = rng.random_range(0.5..3.0);
    let freq_c: f64 = rng.random_range(0.5..3.0);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    // Compact blobs keep the discriminative evidence high-frequency: a
    // moderate Gaussian blur genuinely erases it, which the foveation
    // pipeline depends on.
    let sigma: f64 = rng.random_range(0.03 * side as f64..0.05 * side as f64);
    let margin = 2.0 * sigma;
    let center_r: f64 =
        rng.random_range((qr * half) as f64 + margin..=((qr + 1) * half - 1) as f64 - margin);
    let center_c: f64 =
        rng.random_range((qc * half) as f64 + margin..=((qc + 1) * half - 1) as f64 - margin);
    let amplitude: f64 = rng.random_range(0.55..0.8);

    let mut image = Array::zeros(vec![1, side, side]);
    for r in 0..side {
        for c in 0..side {
            let grating = (std::f64::consts::TAU * (freq_r * r as f64 + freq_c * c as f64)
                / side as f64
                + phase)
                .sin();
            let noise: f64 = rng.random_range(-0.07..0.07);
            let d2 = (r as f64 - center_r).powi(2) + (c as f64 - center_c).powi(2);
            let blob = amplitude * (-d2 / (2.0 * sigma * sigma)).exp();
            let v = (0.22 + 0.1 * grating + noise + blob).clamp(0.0, 1.0);
            image.set3(0, r, c, T::of(v));
        }
    }

    let top = (center_r - margin).floor() as usize;
    let left = (center_c - margin).floor() as usize;
    let bottom = ((center_r + margin).ceil() as usize).min(side - 1);
    let right = ((center_c + margin).ceil() as usize).min(side - 1);
    let bbox = BoundingBox { top, left, height: bottom - top + 1, width: right - left + 1 };
    Sample { image, label, bbox }
}
