//! Finite-difference validation of the fixation gradient through the full
//! pipeline: candidate rendering -> predictor -> cross-entropy.

use fovex::foveation::{self, FoveationConfig, FoveationState};
use fovex::predictor::{generate_synthetic, Predictor};
use fovex::tensor::{Array, Graph};

/// Loss of the candidate rendering at a fixation, forward only.
fn pipeline_loss(
    predictor: &Predictor<f64>,
    image: &Array<f64>,
    coarse: &Array<f64>,
    state: &FoveationState<f64>,
    fov: &FoveationConfig<f64>,
    fixation: (f64, f64),
    target: usize,
) -> f64 {
    let mut g = Graph::new();
    let x = g.constant_array(image);
    let xb = g.constant_array(coarse);
    let f = g.leaf(vec![2], vec![fixation.0, fixation.1]).unwrap();
    let rendered = foveation::render_candidate(&mut g, x, xb, state, f, fov).unwrap();
    let (logits, _) = predictor.forward_graph(&mut g, rendered, false).unwrap();
    let loss = g.softmax_cross_entropy(logits, target).unwrap();
    g.scalar_value(loss)
}

/// Analytic gradient of the same scalar.
fn pipeline_grad(
    predictor: &Predictor<f64>,
    image: &Array<f64>,
    coarse: &Array<f64>,
    state: &FoveationState<f64>,
    fov: &FoveationConfig<f64>,
    fixation: (f64, f64),
    target: usize,
) -> [f64; 2] {
    let mut g = Graph::new();
    let x = g.constant_array(image);
    let xb = g.constant_array(coarse);
    let f = g.leaf(vec![2], vec![fixation.0, fixation.1]).unwrap();
    let rendered = foveation::render_candidate(&mut g, x, xb, state, f, fov).unwrap();
    let (logits, _) = predictor.forward_graph(&mut g, rendered, false).unwrap();
    let loss = g.softmax_cross_entropy(logits, target).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(f).unwrap();
    [grad[0], grad[1]]
}

/// Deterministic pseudo-random fixation coordinates off the pixel grid.
fn fixation_for(seed: u64, side: usize) -> (f64, f64) {
    let mix = |k: u64| {
        let mut z = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(k);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        (z ^ (z >> 31)) as f64 / u64::MAX as f64
    };
    let hi = (side - 1) as f64;
    (0.5 + mix(1) * (hi - 1.0), 0.5 + mix(2) * (hi - 1.0))
}

#[test]
fn fixation_gradient_matches_finite_differences_over_seeds() {
    let side = 32;
    let fov = FoveationConfig::<f64>::for_width(side);
    let h = 1e-5;
    for seed in 0..20u64 {
        let image =
            generate_synthetic::<f64>(1_000 + seed, 1, side, 2).samples()[0].image.clone();
        let predictor = Predictor::<f64>::toy(side, 2, 2_000 + seed);
        let coarse = foveation::coarse(&image, fov.blur_sigma, fov.blur_radius);
        // One committed fixation, then check the gradient of the candidate.
        let state = foveation::update_state(
            &FoveationState::new(side, side),
            fixation_for(seed.wrapping_add(77), side),
            fov.fovea_sigma,
            fov.forgetting,
        );
        let fixation = fixation_for(seed, side);
        let target = (seed % 2) as usize;
        let analytic = pipeline_grad(&predictor, &image, &coarse, &state, &fov, fixation, target);
        for coord in 0..2 {
            let mut plus = fixation;
            let mut minus = fixation;
            if coord == 0 {
                plus.0 += h;
                minus.0 -= h;
            } else {
                plus.1 += h;
                minus.1 -= h;
            }
            let fd = (pipeline_loss(&predictor, &image, &coarse, &state, &fov, plus, target)
                - pipeline_loss(&predictor, &image, &coarse, &state, &fov, minus, target))
                / (2.0 * h);
            let a = analytic[coord];
            if a.abs() < 1e-12 && fd.abs() < 1e-12 {
                continue;
            }
            let rel = (a - fd).abs() / a.abs().max(fd.abs());
            assert!(
                rel < 1e-4,
                "seed {seed} coord {coord}: analytic {a:e} vs fd {fd:e} (rel {rel:e})"
            );
        }
    }
}
