//! End-to-end library behavior on the synthetic task: does the gradient
//! scanpath find the evidence, and do informative maps win the curves?

use fovex::attribution::{build_map, fixation_weights, WeightingMode};
use fovex::foveation::{self, FoveationConfig};
use fovex::metrics::{delete_insert_auc, CurveMode};
use fovex::predictor::{accuracy, generate_synthetic, train_toy, Predictor, TrainConfig};
use fovex::scanpath::{generate_scanpath, InitPolicy, ScanpathConfig, TargetPolicy};
use fovex::tensor::Array;

const SIDE: usize = 32;

fn trained() -> Predictor<f64> {
    let data = generate_synthetic::<f64>(21, 600, SIDE, 2);
    let cfg = TrainConfig { epochs: 2, batch_size: 16, learning_rate: 0.05, seed: 7 };
    let (p, _) = train_toy(&cfg, &data).unwrap();
    let held_out = generate_synthetic::<f64>(22, 200, SIDE, 2);
    let acc = accuracy(&p, &held_out).unwrap();
    assert!(acc >= 0.9, "held-out accuracy {acc}");
    p
}

fn tuned_fov() -> FoveationConfig<f64> {
    FoveationConfig { fovea_sigma: 4.0, blur_sigma: 4.0, forgetting: 0.0, blur_radius: 12 }
}

fn tuned_scan() -> ScanpathConfig<f64> {
    ScanpathConfig {
        fixation_count: 6,
        step_size: 50.0,
        inner_steps: 10,
        init: InitPolicy::Center,
        target: TargetPolicy::Predicted,
    }
}

#[test]
fn scanpath_fixations_beat_uniform_random_fixations() {
    let p = trained();
    let test = generate_synthetic::<f64>(23, 120, SIDE, 2);
    let fov = tuned_fov();
    let scan = tuned_scan();
    let mut rng_state = 4242u64;
    let mut uniform = move || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 * (SIDE - 1) as f64
    };
    let mut fovex_dist = 0.0;
    let mut random_dist = 0.0;
    let mut used = 0;
    for sample in test.samples() {
        if used >= 50 {
            break;
        }
        if p.predict(&sample.image).unwrap() != sample.label {
            continue;
        }
        used += 1;
        let bb = sample.bbox;
        let (cr, cc) =
            (bb.top as f64 + bb.height as f64 / 2.0, bb.left as f64 + bb.width as f64 / 2.0);
        let sp = generate_scanpath(&p, &sample.image, &scan, &fov).unwrap();
        for &(r, c) in sp.fixations() {
            fovex_dist += ((r - cr).powi(2) + (c - cc).powi(2)).sqrt();
        }
        for _ in 0..sp.len() {
            let (r, c) = (uniform(), uniform());
            random_dist += ((r - cr).powi(2) + (c - cc).powi(2)).sqrt();
        }
    }
    assert!(used >= 50, "not enough correctly classified images ({used})");
    assert!(
        fovex_dist < random_dist,
        "scanpath fixations ({fovex_dist:.1}) should sit closer to the blob than uniform \
         fixations ({random_dist:.1})"
    );
}

#[test]
fn informative_maps_win_the_insert_curve_on_the_toy_predictor() {
    let p = trained();
    let test = generate_synthetic::<f64>(24, 30, SIDE, 2);
    let fov = tuned_fov();
    let mut wins = 0;
    let mut used = 0;
    for sample in test.samples() {
        if used >= 10 {
            break;
        }
        if p.predict(&sample.image).unwrap() != sample.label {
            continue;
        }
        used += 1;
        let bb = sample.bbox;
        let (cr, cc) =
            (bb.top as f64 + bb.height as f64 / 2.0, bb.left as f64 + bb.width as f64 / 2.0);
        let good = foveation::blob_array((cr, cc), 3.0, SIDE, SIDE);
        let reversed = good.map(|v| 1.0 - v);
        let coarse = foveation::coarse(&sample.image, fov.blur_sigma, fov.blur_radius);
        let a = delete_insert_auc(&p, &sample.image, &coarse, &good, sample.label, 0.01, CurveMode::Insert)
            .unwrap();
        let b = delete_insert_auc(
            &p,
            &sample.image,
            &coarse,
            &reversed,
            sample.label,
            0.01,
            CurveMode::Insert,
        )
        .unwrap();
        if a > b {
            wins += 1;
        }
    }
    assert!(used >= 10);
    assert!(wins >= 8, "blob-first ranking won only {wins}/{used} insert comparisons");
}

#[test]
fn scanpath_maps_localize_the_blob() {
    let p = trained();
    let test = generate_synthetic::<f64>(25, 40, SIDE, 2);
    let fov = tuned_fov();
    let scan = tuned_scan();
    let mut total = 0.0;
    let mut used = 0;
    for sample in test.samples() {
        if used >= 15 {
            break;
        }
        if p.predict(&sample.image).unwrap() != sample.label {
            continue;
        }
        used += 1;
        let sp = generate_scanpath(&p, &sample.image, &scan, &fov).unwrap();
        let weights = fixation_weights(&sp, WeightingMode::Uniform);
        let map = build_map(&sp, &weights, 2.0, SIDE, SIDE).unwrap();
        total += fovex::metrics::ebpg(map.grid(), &[sample.bbox]).unwrap();
    }
    let mean = total / used as f64;
    assert!(mean > 0.1, "mean EBPG {mean} too low for localized maps");
}

#[test]
fn f32_instantiation_runs_the_pipeline() {
    // The core is generic over the scalar; a single-precision smoke pass
    // keeps that path honest.
    let data = generate_synthetic::<f32>(31, 60, 16, 2);
    let cfg = TrainConfig::<f32> { epochs: 1, batch_size: 8, learning_rate: 0.05, seed: 2 };
    let (p, losses) = train_toy(&cfg, &data).unwrap();
    assert!(losses[0].is_finite());
    let fov = FoveationConfig::<f32>::for_width(16);
    let scan = ScanpathConfig::<f32> {
        fixation_count: 2,
        step_size: 4.0,
        inner_steps: 2,
        init: InitPolicy::Center,
        target: TargetPolicy::Predicted,
    };
    let sp = generate_scanpath(&p, &data.samples()[0].image, &scan, &fov).unwrap();
    assert_eq!(sp.len(), 2);
    let weights = fixation_weights(&sp, WeightingMode::Uniform);
    let map = build_map(&sp, &weights, 2.0f32, 16, 16).unwrap();
    assert!(map.grid().data().iter().all(|v| (0.0..=1.0).contains(v)));
    let _: Array<f32> = map.grid().clone();
}
