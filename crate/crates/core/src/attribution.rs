//! Attribution maps: a scanpath becomes a min-max-normalized mixture of
//! Gaussian saliency blobs, one per fixation. RandomCAM, the random-mixture
//! baseline, lives here too.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::io::pnm::{self, PnmError};
use crate::scalar::Scalar;
use crate::scanpath::Scanpath;
use crate::tensor::Array;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("cannot build a map from an empty scanpath")]
    EmptyScanpath,
    #[error("{fixations} fixations but {weights} weights")]
    WeightCountMismatch { fixations: usize, weights: usize },
    #[error("saliency sigma must be positive")]
    InvalidSigma,
    #[error("fixation weights must be non-negative with at least one positive")]
    InvalidWeights,
    #[error("random blob count range must satisfy 1 <= min <= max")]
    InvalidBlobCount,
    #[error("random sigma range must satisfy 0 < min <= max")]
    InvalidSigmaRange,
    #[error(transparent)]
    Image(#[from] PnmError),
}

/// Which generator produced a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSource {
    Fovex,
    Random,
}

impl MapSource {
    pub fn name(&self) -> &'static str {
        match self {
            MapSource::Fovex => "fovex",
            MapSource::Random => "random_cam",
        }
    }
}

/// Where a map came from, carried into rendered files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source: MapSource,
    /// Short `key=value` summary of the generating configuration.
    pub config: String,
}

/// Per-pixel relevance grid in `[0, 1]`. Unless the pre-normalization map was
/// constant, the minimum is exactly 0 and the maximum exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap<T> {
    grid: Array<T>,
    provenance: Provenance,
}

impl<T: Scalar> AttributionMap<T> {
    /// Wraps an existing relevance grid (values expected in `[0, 1]`).
    pub fn from_grid(grid: Array<T>, source: MapSource, config: String) -> Self {
        Self { grid, provenance: Provenance { source, config } }
    }

    pub fn grid(&self) -> &Array<T> {
        &self.grid
    }

    pub fn into_grid(self) -> Array<T> {
        self.grid
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

/// How fixation weights are chosen when turning a scanpath into a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingMode {
    /// Every fixation contributes equally.
    Uniform,
    /// Each fixation is weighted by the target-confidence gain it produced;
    /// falls back to uniform when no fixation gained confidence.
    ConfidenceGain,
}

/// Fixation weights for a scanpath under the chosen mode.
pub fn fixation_weights<T: Scalar>(scanpath: &Scanpath<T>, mode: WeightingMode) -> Vec<T> {
    match mode {
        WeightingMode::Uniform => vec![T::one(); scanpath.len()],
        WeightingMode::ConfidenceGain => {
            let mut prev = scanpath.initial_confidence();
            let mut weights = Vec::with_capacity(scanpath.len());
            for p in scanpath.confidences() {
                weights.push((p - prev).max(T::zero()));
                prev = p;
            }
            if weights.iter().all(|&w| w == T::zero()) {
                vec![T::one(); scanpath.len()]
            } else {
                weights
            }
        }
    }
}

/// Min-max normalization; a constant input maps to all zeros.
fn normalize<T: Scalar>(mut raw: Array<T>) -> Array<T> {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &v in raw.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == lo {
        return Array::zeros(raw.shape().to_vec());
    }
    let range = hi - lo;
    for v in raw.data_mut() {
        *v = (*v - lo) / range;
    }
    raw
}

fn gaussian_mixture<T: Scalar>(
    centers: &[(T, T)],
    weights: &[T],
    sigmas: &[T],
    height: usize,
    width: usize,
) -> Array<T> {
    let mut raw = Array::zeros(vec![height, width]);
    for ((&(fr, fc), &weight), &sigma) in centers.iter().zip(weights).zip(sigmas) {
        let denom = T::of(2.0) * sigma * sigma;
        for r in 0..height {
            let dr2 = (T::of_usize(r) - fr) * (T::of_usize(r) - fr);
            for c in 0..width {
                let dc = T::of_usize(c) - fc;
                let idx = raw.idx2(r, c);
                raw.data_mut()[idx] =
                    raw.data()[idx] + weight * (-(dr2 + dc * dc) / denom).exp();
            }
        }
    }
    raw
}

/// Weighted sum of per-fixation Gaussian saliency blobs, min-max normalized.
pub fn build_map<T: Scalar>(
    scanpath: &Scanpath<T>,
    weights: &[T],
    saliency_sigma: T,
    height: usize,
    width: usize,
) -> Result<AttributionMap<T>, AttributionError> {
    if scanpath.is_empty() {
        return Err(AttributionError::EmptyScanpath);
    }
    if weights.len() != scanpath.len() {
        return Err(AttributionError::WeightCountMismatch {
            fixations: scanpath.len(),
            weights: weights.len(),
        });
    }
    if !(saliency_sigma > T::zero()) {
        return Err(AttributionError::InvalidSigma);
    }
    if weights.iter().any(|&w| w < T::zero()) || weights.iter().all(|&w| w == T::zero()) {
        return Err(AttributionError::InvalidWeights);
    }
    let sigmas = vec![saliency_sigma; scanpath.len()];
    let raw = gaussian_mixture(scanpath.fixations(), weights, &sigmas, height, width);
    Ok(AttributionMap {
        grid: normalize(raw),
        provenance: Provenance {
            source: MapSource::Fovex,
            config: format!(
                "fixations={} saliency_sigma={}",
                scanpath.len(),
                saliency_sigma
            ),
        },
    })
}

/// Sanity-check baseline: a min-max-normalized sum of uniformly placed
/// Gaussians with uniformly drawn sigmas, deterministic per seed.
pub fn random_cam<T: Scalar>(
    seed: u64,
    height: usize,
    width: usize,
    blob_count: (usize, usize),
    sigma_range: (T, T),
) -> Result<AttributionMap<T>, AttributionError> {
    if blob_count.0 < 1 || blob_count.0 > blob_count.1 {
        return Err(AttributionError::InvalidBlobCount);
    }
    if !(sigma_range.0 > T::zero()) || sigma_range.0 > sigma_range.1 {
        return Err(AttributionError::InvalidSigmaRange);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(blob_count.0..=blob_count.1);
    let (lo, hi) = (sigma_range.0.to_f64().unwrap(), sigma_range.1.to_f64().unwrap());
    let mut centers = Vec::with_capacity(count);
    let mut sigmas = Vec::with_capacity(count);
    for _ in 0..count {
        let r: f64 = rng.random_range(0.0..=(height - 1) as f64);
        let c: f64 = rng.random_range(0.0..=(width - 1) as f64);
        centers.push((T::of(r), T::of(c)));
        sigmas.push(T::of(if lo == hi { lo } else { rng.random_range(lo..hi) }));
    }
    let weights = vec![T::one(); count];
    let raw = gaussian_mixture(&centers, &weights, &sigmas, height, width);
    Ok(AttributionMap {
        grid: normalize(raw),
        provenance: Provenance {
            source: MapSource::Random,
            config: format!("seed={seed} blobs={count}"),
        },
    })
}

/// Writes the map as an 8-bit binary graymap with a provenance comment.
pub fn render_heatmap<T: Scalar>(map: &AttributionMap<T>, path: &Path) -> Result<(), AttributionError> {
    let comment = format!("{} {}", map.provenance.source.name(), map.provenance.config);
    pnm::write_pgm(path, &map.grid, Some(&comment))?;
    Ok(())
}

/// Writes the map blended over an image as an 8-bit binary pixmap: the map
/// value acts as the intensity of a red tint on top of the (gray or color)
/// input.
pub fn render_overlay<T: Scalar>(
    map: &AttributionMap<T>,
    image: &Array<T>,
    path: &Path,
) -> Result<(), AttributionError> {
    let (h, w) = (map.grid.shape()[0], map.grid.shape()[1]);
    let channels = image.shape()[0];
    let mut rgb = Array::zeros(vec![3, h, w]);
    for p in 0..h * w {
        let alpha = map.grid.data()[p] * T::of(0.6);
        for ch in 0..3 {
            let base = if channels == 3 { image.data()[ch * h * w + p] } else { image.data()[p] };
            let heat = if ch == 0 { T::one() } else { T::zero() };
            rgb.data_mut()[ch * h * w + p] = (T::one() - alpha) * base + alpha * heat;
        }
    }
    let comment = format!("{} {}", map.provenance.source.name(), map.provenance.config);
    pnm::write_ppm(path, &rgb, Some(&comment))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanpath::Scanpath;

    fn path_of(fixations: Vec<(f64, f64)>) -> Scanpath<f64> {
        let n = fixations.len();
        Scanpath::from_parts(fixations, vec![0.5; n], 1.0, 0)
    }

    #[test]
    fn single_fixation_peaks_at_the_fixation_pixel() {
        let sp = path_of(vec![(4.0, 6.0)]);
        let map = build_map(&sp, &[1.0], 2.0, 9, 9).unwrap();
        assert_eq!(map.grid().at2(4, 6), 1.0);
        assert!(map.grid().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Away from the peak the normalized Gaussian shape survives min-max
        // normalization up to the subtracted minimum.
        assert!(map.grid().at2(0, 0) < map.grid().at2(3, 5));
    }

    #[test]
    fn repeated_fixation_collapses_to_a_single_blob() {
        let one = build_map(&path_of(vec![(3.0, 3.0)]), &[1.0], 1.5, 8, 8).unwrap();
        let two = build_map(&path_of(vec![(3.0, 3.0), (3.0, 3.0)]), &[2.0, 0.5], 1.5, 8, 8).unwrap();
        for (a, b) in one.grid().data().iter().zip(two.grid().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_corner_fixations_match_scalar_accumulation() {
        let sp = path_of(vec![(0.0, 0.0), (8.0, 8.0)]);
        let weights = [1.0, 0.5];
        let sigma = 2.0f64;
        let map = build_map(&sp, &weights, sigma, 9, 9).unwrap();
        // Independent scalar oracle: accumulate then min-max normalize.
        let mut raw = vec![0.0f64; 81];
        for (p, v) in raw.iter_mut().enumerate() {
            let (r, c) = ((p / 9) as f64, (p % 9) as f64);
            *v = 1.0 * (-(r * r + c * c) / (2.0 * sigma * sigma)).exp()
                + 0.5 * (-((r - 8.0).powi(2) + (c - 8.0).powi(2)) / (2.0 * sigma * sigma)).exp();
        }
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (p, &v) in raw.iter().enumerate() {
            let expected = (v - lo) / (hi - lo);
            assert!((map.grid().data()[p] - expected).abs() < 1e-12, "pixel {p}");
        }
    }

    #[test]
    fn normalization_sets_exact_bounds_and_is_idempotent() {
        let sp = path_of(vec![(2.2, 3.3), (5.1, 1.0), (0.5, 6.5)]);
        let map = build_map(&sp, &[1.0, 0.7, 0.2], 1.8, 8, 8).unwrap();
        let data = map.grid().data();
        assert_eq!(data.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(data.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        let renorm = normalize(map.grid().clone());
        assert_eq!(renorm.data(), map.grid().data());
    }

    #[test]
    fn weight_scale_invariance() {
        let sp = path_of(vec![(1.0, 2.0), (6.0, 5.0)]);
        let a = build_map(&sp, &[1.0, 0.25], 1.5, 8, 8).unwrap();
        let b = build_map(&sp, &[4.0, 1.0], 1.5, 8, 8).unwrap();
        for (x, y) in a.grid().data().iter().zip(b.grid().data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn horizontal_mirror_equivariance() {
        let w = 8usize;
        let fixations = vec![(1.25, 2.5), (5.0, 6.75)];
        let mirrored: Vec<(f64, f64)> =
            fixations.iter().map(|&(r, c)| (r, (w - 1) as f64 - c)).collect();
        let a = build_map(&path_of(fixations), &[1.0, 0.5], 1.5, 8, w).unwrap();
        let b = build_map(&path_of(mirrored), &[1.0, 0.5], 1.5, 8, w).unwrap();
        for r in 0..8 {
            for c in 0..w {
                let (x, y) = (a.grid().at2(r, c), b.grid().at2(r, w - 1 - c));
                assert!((x - y).abs() < 1e-12, "({r},{c}): {x} vs {y}");
            }
        }
    }

    #[test]
    fn degenerate_constant_map_becomes_all_zeros() {
        // A huge sigma makes every pixel essentially equal; force the exact
        // degenerate case through the normalizer directly.
        let constant = Array::filled(vec![4, 4], 3.25);
        let out = normalize(constant);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn build_map_validates_inputs() {
        let empty = Scanpath::from_parts(vec![], vec![], 1.0, 0);
        assert!(matches!(build_map(&empty, &[], 1.0, 4, 4), Err(AttributionError::EmptyScanpath)));
        let sp = path_of(vec![(1.0, 1.0)]);
        assert!(matches!(
            build_map(&sp, &[1.0, 2.0], 1.0, 4, 4),
            Err(AttributionError::WeightCountMismatch { .. })
        ));
        assert!(matches!(build_map(&sp, &[1.0], 0.0, 4, 4), Err(AttributionError::InvalidSigma)));
        assert!(matches!(build_map(&sp, &[0.0], 1.0, 4, 4), Err(AttributionError::InvalidWeights)));
        assert!(matches!(build_map(&sp, &[-1.0], 1.0, 4, 4), Err(AttributionError::InvalidWeights)));
    }

    #[test]
    fn random_cam_is_deterministic_per_seed_and_normalized() {
        let a = random_cam::<f64>(9, 16, 16, (1, 5), (1.0, 4.0)).unwrap();
        let b = random_cam::<f64>(9, 16, 16, (1, 5), (1.0, 4.0)).unwrap();
        assert_eq!(a.grid().data(), b.grid().data());
        let c = random_cam::<f64>(10, 16, 16, (1, 5), (1.0, 4.0)).unwrap();
        assert_ne!(a.grid().data(), c.grid().data());
        let data = a.grid().data();
        assert!(data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(data.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(data.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn random_cam_mean_ebpg_tracks_box_area_fraction() {
        // Centered box covering a quarter of the pixels; over many seeds the
        // mean energy fraction inside should approximate the area fraction.
        use crate::metrics::{ebpg, BoundingBox};
        let (h, w) = (16usize, 16usize);
        let bbox = BoundingBox { top: 4, left: 4, height: 8, width: 8 };
        let mut total = 0.0;
        let n = 100;
        for seed in 0..n {
            let map = random_cam::<f64>(seed, h, w, (1, 5), (1.0, 4.0)).unwrap();
            total += ebpg(map.grid(), &[bbox]).unwrap();
        }
        let mean = total / n as f64;
        assert!((mean - 0.25).abs() <= 0.1, "mean EBPG {mean} strays from 0.25");
    }

    #[test]
    fn confidence_gain_weighting_rewards_improvement() {
        let sp = Scanpath::from_parts(
            vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)],
            // Confidences: exp(-loss) = 0.2, 0.6, 0.5.
            vec![0.2f64.ln().abs(), 0.6f64.ln().abs(), 0.5f64.ln().abs()],
            0.1f64.ln().abs(),
            0,
        );
        let w = fixation_weights(&sp, WeightingMode::ConfidenceGain);
        assert!((w[0] - 0.1).abs() < 1e-12);
        assert!((w[1] - 0.4).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
        assert_eq!(fixation_weights(&sp, WeightingMode::Uniform), vec![1.0; 3]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn invariances_hold_on_random_scanpaths(
                n in 1usize..6,
                seed in 0u64..500,
                scale in 0.1f64..10.0,
            ) {
                let mut rng_state = seed.wrapping_mul(2654435761).wrapping_add(17);
                let mut next = move || {
                    rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (rng_state >> 11) as f64 / (1u64 << 53) as f64
                };
                let fixations: Vec<(f64, f64)> =
                    (0..n).map(|_| (next() * 7.0, next() * 7.0)).collect();
                let weights: Vec<f64> = (0..n).map(|_| next() + 0.05).collect();
                let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
                let sp = path_of(fixations.clone());
                let a = build_map(&sp, &weights, 1.5, 8, 8).unwrap();
                let b = build_map(&sp, &scaled, 1.5, 8, 8).unwrap();
                for (x, y) in a.grid().data().iter().zip(b.grid().data()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
                let renorm = normalize(a.grid().clone());
                prop_assert_eq!(renorm.data(), a.grid().data());
            }
        }
    }
}
