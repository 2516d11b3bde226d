//! Attribution-map evaluation: faithfulness (average drop/increase,
//! delete/insert curves), localization (energy-based pointing game), and
//! human-gaze correlation (normalized scanpath saliency, AUC-Judd).

mod batch;

pub use batch::{evaluate_batch, EvalError, EvaluationReport, ImageRecord, Method, MetricKind};

use thiserror::Error;

use crate::predictor::{Predictor, PredictorError};
use crate::scalar::Scalar;
use crate::tensor::Array;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("bounding box {0:?} exceeds a {1}x{2} map")]
    BoxOutOfBounds(BoundingBox, usize, usize),
    #[error("fixation ({0}, {1}) exceeds a {2}x{3} map")]
    FixationOutOfBounds(usize, usize, usize, usize),
    #[error("expected a rank-{expected} array, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("lists must be aligned: {images} images, {maps} maps, {targets} targets")]
    Misaligned { images: usize, maps: usize, targets: usize },
    #[error("step fraction must lie in (0, 1], got {0}")]
    BadStepFraction(f64),
    #[error("no bounding boxes supplied")]
    NoBoxes,
    #[error("no fixations supplied")]
    NoFixations,
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

/// Axis-aligned pixel rectangle, used as localization ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl BoundingBox {
    /// Checks positive area and containment in a `rows x cols` image.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<(), MetricError> {
        if self.height == 0
            || self.width == 0
            || self.top + self.height > rows
            || self.left + self.width > cols
        {
            return Err(MetricError::BoxOutOfBounds(*self, rows, cols));
        }
        Ok(())
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.top
            && row < self.top + self.height
            && col >= self.left
            && col < self.left + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// Ground-truth gaze fixations for one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixationGroundTruth {
    pub pixels: Vec<(usize, usize)>,
    pub image_id: String,
}

impl FixationGroundTruth {
    pub fn validate(&self, rows: usize, cols: usize) -> Result<(), MetricError> {
        if self.pixels.is_empty() {
            return Err(MetricError::NoFixations);
        }
        for &(r, c) in &self.pixels {
            if r >= rows || c >= cols {
                return Err(MetricError::FixationOutOfBounds(r, c, rows, cols));
            }
        }
        Ok(())
    }
}

/// Per-batch result of [`avg_drop_increase`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropIncrease<T> {
    /// Mean confidence drop under masking, in percent (lower is better).
    pub drop: T,
    /// Percentage of images whose confidence rose under masking.
    pub increase: T,
    /// Images skipped because the unmasked confidence was exactly zero.
    pub excluded: usize,
}

/// Whether a perturbation curve removes salient pixels from the original
/// image or restores them into the blurred baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMode {
    Delete,
    Insert,
}

fn require_map<T: Scalar>(map: &Array<T>) -> Result<(usize, usize), MetricError> {
    if map.shape().len() != 2 {
        return Err(MetricError::Rank { expected: 2, shape: map.shape().to_vec() });
    }
    Ok((map.shape()[0], map.shape()[1]))
}

/// Confidence change when the predictor sees only the map-masked input.
///
/// For each image, `masked = image * map` per pixel (broadcast over
/// channels); with `y` the target-class softmax score on the original and
/// `o` the score on the masked input, the drop is `100 * max(0, y-o)/y`
/// averaged over images and the increase is the percentage of images with
/// `o > y`. Images with `y == 0` are excluded and counted.
pub fn avg_drop_increase<T: Scalar>(
    predictor: &Predictor<T>,
    images: &[Array<T>],
    maps: &[Array<T>],
    targets: &[usize],
) -> Result<DropIncrease<T>, MetricError> {
    if images.len() != maps.len() || images.len() != targets.len() {
        return Err(MetricError::Misaligned {
            images: images.len(),
            maps: maps.len(),
            targets: targets.len(),
        });
    }
    let mut drop_sum = T::zero();
    let mut increases = 0usize;
    let mut included = 0usize;
    let mut excluded = 0usize;
    for ((image, map), &target) in images.iter().zip(maps).zip(targets) {
        let (h, w) = require_map(map)?;
        if image.shape().len() != 3 || image.shape()[1] != h || image.shape()[2] != w {
            return Err(MetricError::Rank { expected: 3, shape: image.shape().to_vec() });
        }
        let full = predictor.class_probabilities(image)?[target];
        if full == T::zero() {
            excluded += 1;
            continue;
        }
        let masked = mask_image(image, map);
        let on_masked = predictor.class_probabilities(&masked)?[target];
        drop_sum = drop_sum + (full - on_masked).max(T::zero()) / full;
        if on_masked > full {
            increases += 1;
        }
        included += 1;
    }
    let hundred = T::of(100.0);
    let denom = T::of_usize(included.max(1));
    Ok(DropIncrease {
        drop: hundred * drop_sum / denom,
        increase: hundred * T::of_usize(increases) / denom,
        excluded,
    })
}

/// Per-pixel multiply of an image by a saliency map, broadcast over channels.
pub fn mask_image<T: Scalar>(image: &Array<T>, map: &Array<T>) -> Array<T> {
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let mut out = Array::zeros(vec![c, h, w]);
    for ch in 0..c {
        for p in 0..h * w {
            out.data_mut()[ch * h * w + p] = image.data()[ch * h * w + p] * map.data()[p];
        }
    }
    out
}

/// Pixel indices sorted by descending saliency, ties broken by ascending
/// row-major index. NaNs rank last.
pub fn saliency_ranking<T: Scalar>(map: &Array<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..map.numel()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (map.data()[a], map.data()[b]);
        vb.partial_cmp(&va)
            .unwrap_or_else(|| va.is_nan().cmp(&vb.is_nan()))
            .then(a.cmp(&b))
    });
    order
}

/// Area under the confidence curve as pixels are progressively removed from
/// (delete) or restored into (insert) the image in saliency order.
///
/// `step_fraction` is the fraction of all pixels changed per step; the score
/// is recorded after every step, including step zero and the final fully
/// perturbed image, and integrated by the trapezoidal rule over the fraction
/// axis. The insert baseline is the supplied coarse image; the delete
/// baseline is zeros.
pub fn delete_insert_auc<T: Scalar>(
    predictor: &Predictor<T>,
    image: &Array<T>,
    coarse: &Array<T>,
    map: &Array<T>,
    target: usize,
    step_fraction: f64,
    mode: CurveMode,
) -> Result<T, MetricError> {
    let (h, w) = require_map(map)?;
    if image.shape().len() != 3 || image.shape()[1] != h || image.shape()[2] != w {
        return Err(MetricError::Rank { expected: 3, shape: image.shape().to_vec() });
    }
    if !(step_fraction > 0.0 && step_fraction <= 1.0) {
        return Err(MetricError::BadStepFraction(step_fraction));
    }
    let total = h * w;
    let per_step = ((total as f64 * step_fraction).round() as usize).max(1);
    let ranking = saliency_ranking(map);
    let channels = image.shape()[0];
    let mut work = match mode {
        CurveMode::Delete => image.clone(),
        CurveMode::Insert => coarse.clone(),
    };
    let mut fractions = vec![0.0f64];
    let mut scores = vec![predictor.class_probabilities(&work)?[target]];
    let mut changed = 0usize;
    while changed < total {
        let next = (changed + per_step).min(total);
        for &p in &ranking[changed..next] {
            for ch in 0..channels {
                let idx = ch * total + p;
                work.data_mut()[idx] = match mode {
                    CurveMode::Delete => T::zero(),
                    CurveMode::Insert => image.data()[idx],
                };
            }
        }
        changed = next;
        fractions.push(changed as f64 / total as f64);
        scores.push(predictor.class_probabilities(&work)?[target]);
    }
    let mut auc = T::zero();
    for i in 1..scores.len() {
        let dx = T::of(fractions[i] - fractions[i - 1]);
        auc = auc + dx * (scores[i] + scores[i - 1]) / T::of(2.0);
    }
    Ok(auc)
}

/// Fraction of total map energy inside the union of the bounding boxes.
/// A map summing to zero scores zero.
pub fn ebpg<T: Scalar>(map: &Array<T>, boxes: &[BoundingBox]) -> Result<T, MetricError> {
    let (h, w) = require_map(map)?;
    if boxes.is_empty() {
        return Err(MetricError::NoBoxes);
    }
    for b in boxes {
        b.validate(h, w)?;
    }
    let mut inside = T::zero();
    let mut total = T::zero();
    for r in 0..h {
        for c in 0..w {
            let v = map.at2(r, c);
            total = total + v;
            if boxes.iter().any(|b| b.contains(r, c)) {
                inside = inside + v;
            }
        }
    }
    if total == T::zero() {
        Ok(T::zero())
    } else {
        Ok(inside / total)
    }
}

/// Normalized scanpath saliency: the map is z-scored by its own mean and
/// population standard deviation, then averaged at the fixation pixels.
/// A constant map scores zero.
pub fn nss<T: Scalar>(map: &Array<T>, fixations: &FixationGroundTruth) -> Result<T, MetricError> {
    let (h, w) = require_map(map)?;
    fixations.validate(h, w)?;
    // An exactly constant map is degenerate by definition; check it directly
    // so summation rounding cannot produce a spurious tiny deviation.
    let first = map.data()[0];
    if map.data().iter().all(|&v| v == first) {
        return Ok(T::zero());
    }
    let n = T::of_usize(map.numel());
    let mean = map.sum() / n;
    let var = map.data().iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let std = var.sqrt();
    if std == T::zero() {
        return Ok(T::zero());
    }
    let total: T = fixations.pixels.iter().map(|&(r, c)| (map.at2(r, c) - mean) / std).sum();
    Ok(total / T::of_usize(fixations.pixels.len()))
}

/// AUC-Judd: fixated pixels are positives; thresholds sweep the distinct
/// saliency values observed at fixations. Per threshold, the true-positive
/// rate is the fraction of fixations at or above it and the false-positive
/// rate is the fraction of all pixels at or above it; the curve is closed
/// with (0,0) and (1,1) and integrated by trapezoid over the FPR axis.
pub fn aucj<T: Scalar>(map: &Array<T>, fixations: &FixationGroundTruth) -> Result<T, MetricError> {
    let (h, w) = require_map(map)?;
    fixations.validate(h, w)?;
    let mut thresholds: Vec<T> = fixations.pixels.iter().map(|&(r, c)| map.at2(r, c)).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("saliency values must be comparable"));
    thresholds.dedup();
    let n_fix = T::of_usize(fixations.pixels.len());
    let n_pix = T::of_usize(map.numel());
    let mut points = vec![(T::zero(), T::zero())];
    // Descending thresholds generate ascending (FPR, TPR) pairs.
    for &th in thresholds.iter().rev() {
        let tp = fixations.pixels.iter().filter(|&&(r, c)| map.at2(r, c) >= th).count();
        let fp = map.data().iter().filter(|&&v| v >= th).count();
        points.push((T::of_usize(fp) / n_pix, T::of_usize(tp) / n_fix));
    }
    points.push((T::one(), T::one()));
    let mut auc = T::zero();
    for i in 1..points.len() {
        let dx = points[i].0 - points[i - 1].0;
        auc = auc + dx * (points[i].1 + points[i - 1].1) / T::of(2.0);
    }
    Ok(auc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::Layer;

    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        (z ^ (z >> 31)) as f64 / u64::MAX as f64
    }

    fn random_map(h: usize, w: usize, seed: u64) -> Array<f64> {
        let mut s = seed;
        Array::from_fn(vec![h, w], |_| splitmix(&mut s))
    }

    /// Linear 2-class predictor over flattened pixels: logits = W x + b.
    fn linear_predictor(side: usize, weight: Vec<f64>, bias: [f64; 2]) -> Predictor<f64> {
        let features = side * side;
        assert_eq!(weight.len(), 2 * features);
        Predictor::from_layers(
            vec![
                Layer::Flatten,
                Layer::Dense {
                    weight: Array::new(vec![2, features], weight),
                    bias: Array::new(vec![2], bias.to_vec()),
                },
            ],
            vec![1, side, side],
            2,
        )
    }

    fn constant_predictor(side: usize, bias: [f64; 2]) -> Predictor<f64> {
        linear_predictor(side, vec![0.0; 2 * side * side], bias)
    }

    fn softmax2(a: f64, b: f64) -> (f64, f64) {
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        (ea / (ea + eb), eb / (ea + eb))
    }

    #[test]
    fn all_ones_map_changes_nothing() {
        let p = linear_predictor(2, vec![1.0, -0.5, 0.25, 2.0, 0.0, 0.0, 0.0, 0.0], [0.1, -0.1]);
        let images = vec![Array::from_fn(vec![1, 2, 2], |i| 0.1 + 0.2 * i as f64)];
        let maps = vec![Array::filled(vec![2, 2], 1.0)];
        let out = avg_drop_increase(&p, &images, &maps, &[0]).unwrap();
        assert_eq!(out.drop, 0.0);
        assert_eq!(out.increase, 0.0);
        assert_eq!(out.excluded, 0);
    }

    #[test]
    fn all_zeros_map_drops_confidence_when_black_scores_lower() {
        // Positive weights on class 0: a black image lowers the class-0 score.
        let p = linear_predictor(2, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0]);
        let images = vec![Array::filled(vec![1, 2, 2], 0.8)];
        let maps = vec![Array::zeros(vec![2, 2])];
        let out = avg_drop_increase(&p, &images, &maps, &[0]).unwrap();
        assert!(out.drop > 0.0);
    }

    #[test]
    fn drop_increase_matches_hand_computation_on_three_images() {
        let w = vec![2.0, -1.0, 0.5, 1.0, -0.5, 0.5, 1.0, -2.0];
        let p = linear_predictor(2, w.clone(), [0.2, -0.3]);
        let images: Vec<Array<f64>> = (0..3)
            .map(|k| Array::from_fn(vec![1, 2, 2], |i| 0.1 + 0.15 * ((i + k) % 4) as f64))
            .collect();
        let maps: Vec<Array<f64>> =
            (0..3).map(|k| Array::from_fn(vec![2, 2], |i| if i == k { 1.0 } else { 0.25 })).collect();
        let targets = [0usize, 1, 0];
        let out = avg_drop_increase(&p, &images, &maps, &targets).unwrap();

        // Independent scalar computation of the same quantities.
        let mut drops = 0.0;
        let mut incs = 0;
        for k in 0..3 {
            let x: Vec<f64> = images[k].data().to_vec();
            let m: Vec<f64> = maps[k].data().to_vec();
            let score = |px: &[f64]| {
                let l0 = 0.2 + (0..4).map(|i| w[i] * px[i]).sum::<f64>();
                let l1 = -0.3 + (0..4).map(|i| w[4 + i] * px[i]).sum::<f64>();
                let s = softmax2(l0, l1);
                if targets[k] == 0 {
                    s.0
                } else {
                    s.1
                }
            };
            let y = score(&x);
            let masked: Vec<f64> = x.iter().zip(&m).map(|(a, b)| a * b).collect();
            let o = score(&masked);
            drops += ((y - o).max(0.0) / y) * 100.0;
            if o > y {
                incs += 1;
            }
        }
        assert!((out.drop - drops / 3.0).abs() < 1e-12);
        assert!((out.increase - incs as f64 * 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_auc_equals_the_constant_score() {
        let p = constant_predictor(2, [0.4, -0.6]);
        let img = Array::from_fn(vec![1, 2, 2], |i| i as f64 / 4.0);
        let coarse = Array::filled(vec![1, 2, 2], 0.5);
        let map = random_map(2, 2, 5);
        let score = p.class_probabilities(&img).unwrap()[0];
        for mode in [CurveMode::Delete, CurveMode::Insert] {
            let auc = delete_insert_auc(&p, &img, &coarse, &map, 0, 0.25, mode).unwrap();
            assert!((auc - score).abs() < 1e-12);
        }
    }

    /// Brute-force single-pixel-step enumeration of the same curves.
    fn curve_oracle(
        p: &Predictor<f64>,
        img: &Array<f64>,
        coarse: &Array<f64>,
        map: &Array<f64>,
        target: usize,
        mode: CurveMode,
    ) -> f64 {
        let total = map.numel();
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| {
            map.data()[b].partial_cmp(&map.data()[a]).unwrap().then(a.cmp(&b))
        });
        let mut work = match mode {
            CurveMode::Delete => img.clone(),
            CurveMode::Insert => coarse.clone(),
        };
        let mut scores = vec![p.class_probabilities(&work).unwrap()[target]];
        for &pixel in &order {
            for ch in 0..img.shape()[0] {
                let idx = ch * total + pixel;
                work.data_mut()[idx] = match mode {
                    CurveMode::Delete => 0.0,
                    CurveMode::Insert => img.data()[idx],
                };
            }
            scores.push(p.class_probabilities(&work).unwrap()[target]);
        }
        let dx = 1.0 / total as f64;
        (1..scores.len()).map(|i| dx * (scores[i] + scores[i - 1]) / 2.0).sum()
    }

    #[test]
    fn delete_insert_match_exhaustive_enumeration() {
        // 2x2 with a single decisive pixel.
        let p2 = linear_predictor(2, vec![4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.3]);
        let img2 = Array::from_fn(vec![1, 2, 2], |i| 0.2 + 0.2 * i as f64);
        let coarse2 = Array::filled(vec![1, 2, 2], 0.1);
        let map2 = Array::new(vec![2, 2], vec![0.9, 0.1, 0.5, 0.5]);
        for mode in [CurveMode::Delete, CurveMode::Insert] {
            let auc = delete_insert_auc(&p2, &img2, &coarse2, &map2, 0, 0.25, mode).unwrap();
            let oracle = curve_oracle(&p2, &img2, &coarse2, &map2, 0, mode);
            assert!((auc - oracle).abs() <= 1e-12, "{mode:?}: {auc} vs {oracle}");
        }
        // 4x4 with a random map and mixed weights.
        let mut s = 77u64;
        let w: Vec<f64> = (0..32).map(|_| splitmix(&mut s) - 0.5).collect();
        let p4 = linear_predictor(4, w, [0.1, -0.1]);
        let img4 = Array::from_fn(vec![1, 4, 4], |_| splitmix(&mut s));
        let coarse4 = Array::from_fn(vec![1, 4, 4], |_| 0.3 * splitmix(&mut s));
        let map4 = random_map(4, 4, 123);
        for mode in [CurveMode::Delete, CurveMode::Insert] {
            let auc = delete_insert_auc(&p4, &img4, &coarse4, &map4, 1, 1.0 / 16.0, mode).unwrap();
            let oracle = curve_oracle(&p4, &img4, &coarse4, &map4, 1, mode);
            assert!((auc - oracle).abs() <= 1e-12, "{mode:?}: {auc} vs {oracle}");
        }
    }

    #[test]
    fn insert_ranks_informative_maps_above_reversed_ones() {
        // The class-0 logit reads the top-left quadrant; a map that reveals
        // it first must win the insert curve against the reversed ranking.
        let side = 4;
        let mut w = vec![0.0; 2 * 16];
        for r in 0..2 {
            for c in 0..2 {
                w[r * 4 + c] = 3.0;
            }
        }
        let p = linear_predictor(side, w, [0.0, 0.5]);
        let img = Array::filled(vec![1, 4, 4], 0.9);
        let coarse = Array::zeros(vec![1, 4, 4]);
        let good = Array::from_fn(vec![4, 4], |i| if i / 4 < 2 && i % 4 < 2 { 1.0 } else { 0.1 });
        let reversed = good.map(|v| 1.0 - v);
        let a = delete_insert_auc(&p, &img, &coarse, &good, 0, 0.25, CurveMode::Insert).unwrap();
        let b =
            delete_insert_auc(&p, &img, &coarse, &reversed, 0, 0.25, CurveMode::Insert).unwrap();
        assert!(a > b, "informative map {a} should beat reversed {b}");
    }

    #[test]
    fn degenerate_equal_map_still_produces_a_curve() {
        let p = linear_predictor(2, vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0]);
        let img = Array::from_fn(vec![1, 2, 2], |i| i as f64 / 3.0);
        let coarse = Array::zeros(vec![1, 2, 2]);
        let flat = Array::filled(vec![2, 2], 0.5);
        // Row-major tie-break makes this exactly the oracle's order.
        let auc = delete_insert_auc(&p, &img, &coarse, &flat, 0, 0.25, CurveMode::Delete).unwrap();
        let oracle = curve_oracle(&p, &img, &coarse, &flat, 0, CurveMode::Delete);
        assert!((auc - oracle).abs() <= 1e-12);
    }

    #[test]
    fn ebpg_trivial_cases() {
        let mut inside = Array::zeros(vec![4, 4]);
        inside.set2(1, 1, 0.7);
        inside.set2(1, 2, 0.3);
        let b = BoundingBox { top: 1, left: 1, height: 1, width: 2 };
        assert_eq!(ebpg(&inside, &[b]).unwrap(), 1.0);

        let uniform = Array::filled(vec![8, 8], 1.0);
        let quarter = BoundingBox { top: 0, left: 0, height: 4, width: 4 };
        assert_eq!(ebpg(&uniform, &[quarter]).unwrap(), 0.25);

        let zero: Array<f64> = Array::zeros(vec![4, 4]);
        assert_eq!(ebpg(&zero, &[b]).unwrap(), 0.0);
    }

    #[test]
    fn ebpg_overlapping_boxes_match_membership_oracle() {
        let map = random_map(6, 6, 9);
        let boxes = [
            BoundingBox { top: 0, left: 0, height: 3, width: 3 },
            BoundingBox { top: 1, left: 1, height: 4, width: 2 },
        ];
        let got = ebpg(&map, &boxes).unwrap();
        let mut inside = 0.0;
        let mut total = 0.0;
        for r in 0..6 {
            for c in 0..6 {
                let member = (r < 3 && c < 3) || ((1..5).contains(&r) && (1..3).contains(&c));
                total += map.at2(r, c);
                if member {
                    inside += map.at2(r, c);
                }
            }
        }
        assert!((got - inside / total).abs() < 1e-12);
    }

    #[test]
    fn ebpg_rejects_out_of_bounds_boxes() {
        let map: Array<f64> = Array::zeros(vec![4, 4]);
        let b = BoundingBox { top: 2, left: 2, height: 3, width: 1 };
        assert!(matches!(ebpg(&map, &[b]), Err(MetricError::BoxOutOfBounds(..))));
        assert!(matches!(ebpg(&map, &[]), Err(MetricError::NoBoxes)));
    }

    #[test]
    fn nss_constant_map_is_zero() {
        let map = Array::filled(vec![3, 3], 0.4);
        let gt = FixationGroundTruth { pixels: vec![(1, 1)], image_id: "x".into() };
        assert_eq!(nss(&map, &gt).unwrap(), 0.0);
    }

    #[test]
    fn nss_matches_the_worked_example() {
        let map = Array::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]);
        let gt = FixationGroundTruth { pixels: vec![(0, 0)], image_id: "x".into() };
        let got = nss(&map, &gt).unwrap();
        let expected = 0.75 / 0.1875f64.sqrt(); // = sqrt(3)
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nss_is_negative_at_the_minima() {
        let map = Array::new(vec![2, 2], vec![0.0, 1.0, 1.0, 1.0]);
        let gt = FixationGroundTruth { pixels: vec![(0, 0)], image_id: "x".into() };
        assert!(nss(&map, &gt).unwrap() < 0.0);
    }

    #[test]
    fn aucj_perfect_ranking_is_nearly_one() {
        // With fixated pixels counted in the false-positive denominator, a
        // perfect ranking scores 1 - n_fix/(2 n_pix); keep the fixation
        // fraction small enough for the endpoint handling to stay above 0.99.
        let mut map = Array::zeros(vec![16, 16]);
        let fixated = [(1usize, 1usize), (3, 4), (6, 2)];
        for &(r, c) in &fixated {
            map.set2(r, c, 0.9);
        }
        let gt = FixationGroundTruth { pixels: fixated.to_vec(), image_id: "x".into() };
        let auc = aucj(&map, &gt).unwrap();
        assert!(auc >= 0.99, "auc {auc}");
        assert!(auc <= 1.0);
        let expected = 1.0 - fixated.len() as f64 / (2.0 * 256.0);
        assert!((auc - expected).abs() < 1e-12);
    }

    #[test]
    fn aucj_constant_map_is_chance() {
        let map: Array<f64> = Array::filled(vec![5, 5], 0.3);
        let gt = FixationGroundTruth { pixels: vec![(0, 0), (2, 2)], image_id: "x".into() };
        assert!((aucj(&map, &gt).unwrap() - 0.5).abs() < 1e-15);
    }

    /// Plain-loop re-implementation of the AUC-Judd definition.
    fn aucj_oracle(map: &Array<f64>, fixations: &[(usize, usize)]) -> f64 {
        let mut thresholds: Vec<f64> = fixations.iter().map(|&(r, c)| map.at2(r, c)).collect();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut pts = vec![(0.0f64, 0.0f64)];
        for &th in &thresholds {
            let tp = fixations.iter().filter(|&&(r, c)| map.at2(r, c) >= th).count() as f64
                / fixations.len() as f64;
            let fp = map.data().iter().filter(|&&v| v >= th).count() as f64 / map.numel() as f64;
            pts.push((fp, tp));
        }
        pts.push((1.0, 1.0));
        (1..pts.len()).map(|i| (pts[i].0 - pts[i - 1].0) * (pts[i].1 + pts[i - 1].1) / 2.0).sum()
    }

    #[test]
    fn aucj_matches_threshold_enumeration_oracle() {
        let map = random_map(8, 8, 31);
        let fixations = vec![(0, 3), (2, 7), (4, 4), (7, 1), (5, 5)];
        let gt = FixationGroundTruth { pixels: fixations.clone(), image_id: "x".into() };
        let got = aucj(&map, &gt).unwrap();
        let expected = aucj_oracle(&map, &fixations);
        assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(20))]

            #[test]
            fn curve_metrics_are_invariant_under_monotone_rescaling(
                seed in 0u64..10_000,
                scale in 0.05f64..20.0,
                shift in -5.0f64..5.0,
            ) {
                let map = random_map(4, 4, seed);
                let rescaled = map.map(|v| scale * v + shift);
                let mut s = seed.wrapping_add(1);
                let w: Vec<f64> = (0..32).map(|_| splitmix(&mut s) - 0.5).collect();
                let p = linear_predictor(4, w, [0.0, 0.2]);
                let img = Array::from_fn(vec![1, 4, 4], |_| splitmix(&mut s));
                let coarse = Array::from_fn(vec![1, 4, 4], |_| 0.25 * splitmix(&mut s));
                for mode in [CurveMode::Delete, CurveMode::Insert] {
                    let a = delete_insert_auc(&p, &img, &coarse, &map, 0, 0.25, mode).unwrap();
                    let b = delete_insert_auc(&p, &img, &coarse, &rescaled, 0, 0.25, mode).unwrap();
                    prop_assert!((a - b).abs() <= 1e-9);
                    prop_assert!((0.0..=1.0).contains(&a));
                }
            }

            #[test]
            fn aucj_is_invariant_and_bounded(
                seed in 0u64..10_000,
                scale in 0.05f64..20.0,
                shift in -5.0f64..5.0,
            ) {
                let map = random_map(6, 6, seed);
                let rescaled = map.map(|v| scale * v + shift);
                let gt = FixationGroundTruth {
                    pixels: vec![(0, 0), (2, 3), (5, 5), (4, 1)],
                    image_id: "p".into(),
                };
                let a = aucj(&map, &gt).unwrap();
                let b = aucj(&rescaled, &gt).unwrap();
                prop_assert!((a - b).abs() <= 1e-9);
                prop_assert!((0.0..=1.0).contains(&a));
            }

            #[test]
            fn nss_is_affine_invariant(
                seed in 0u64..10_000,
                scale in 0.05f64..20.0,
                shift in -5.0f64..5.0,
            ) {
                let map = random_map(6, 6, seed);
                let rescaled = map.map(|v| scale * v + shift);
                let gt = FixationGroundTruth {
                    pixels: vec![(1, 1), (3, 2)],
                    image_id: "p".into(),
                };
                let a = nss(&map, &gt).unwrap();
                let b = nss(&rescaled, &gt).unwrap();
                prop_assert!((a - b).abs() <= 1e-9);
            }

            #[test]
            fn ebpg_is_scale_invariant(
                seed in 0u64..10_000,
                scale in 0.05f64..20.0,
            ) {
                let map = random_map(6, 6, seed);
                let rescaled = map.map(|v| scale * v);
                let boxes = [BoundingBox { top: 1, left: 2, height: 3, width: 2 }];
                let a = ebpg(&map, &boxes).unwrap();
                let b = ebpg(&rescaled, &boxes).unwrap();
                prop_assert!((a - b).abs() <= 1e-9);
                prop_assert!((0.0..=1.0).contains(&a));
            }

            #[test]
            fn drop_and_increase_stay_in_percent_range(seed in 0u64..10_000) {
                let mut s = seed;
                let w: Vec<f64> = (0..8).map(|_| splitmix(&mut s) * 4.0 - 2.0).collect();
                let p = linear_predictor(2, w, [0.0, 0.0]);
                let images = vec![Array::from_fn(vec![1, 2, 2], |_| splitmix(&mut s))];
                let maps = vec![random_map(2, 2, seed.wrapping_add(7))];
                let out = avg_drop_increase(&p, &images, &maps, &[0]).unwrap();
                prop_assert!((0.0..=100.0).contains(&out.drop));
                prop_assert!((0.0..=100.0).contains(&out.increase));
            }
        }
    }
}
