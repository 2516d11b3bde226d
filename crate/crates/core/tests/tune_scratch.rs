//! Scratch experiment (not part of the suite): parameter sweep.

use std::time::Instant;

use fovex::attribution::{build_map, fixation_weights, random_cam, WeightingMode};
use fovex::foveation::FoveationConfig;
use fovex::metrics::ebpg;
use fovex::predictor::{accuracy, generate_synthetic, train_toy, TrainConfig};
use fovex::rng::{derive_seed, STREAM_DATA_TEST, STREAM_DATA_TRAIN, STREAM_RANDOM_CAM_BASE};
use fovex::scanpath::{generate_scanpath, InitPolicy, ScanpathConfig, TargetPolicy};

#[test]
#[ignore]
fn probe() {
    let seed = 42u64;
    let train = generate_synthetic::<f64>(derive_seed(seed, STREAM_DATA_TRAIN), 2000, 64, 2);
    let test = generate_synthetic::<f64>(derive_seed(seed, STREAM_DATA_TEST), 500, 64, 2);
    let t0 = Instant::now();
    let tcfg = TrainConfig { epochs: 2, batch_size: 16, learning_rate: 0.05, seed };
    let (p, losses) = train_toy(&tcfg, &train).unwrap();
    println!("train: {:?} losses {:?}", t0.elapsed(), losses);
    println!("test accuracy: {}", accuracy(&p, &test).unwrap());

    // (sigma_f, sigma_b, lambda, inner, n, beta, sigma_eps)
    let combos: Vec<(f64, f64, f64, usize, usize, f64, f64)> = vec![
        (10.0, 8.0, 60.0, 20, 8, 0.0, 4.0),
        (8.0, 8.0, 60.0, 20, 8, 0.0, 4.0),
        (10.0, 8.0, 100.0, 20, 8, 0.0, 4.0),
        (8.0, 8.0, 100.0, 20, 8, 0.0, 4.0),
        (10.0, 8.0, 60.0, 20, 8, 0.0, 3.0),
        (10.0, 8.0, 60.0, 20, 8, 0.0, 5.0),
        (12.0, 8.0, 60.0, 10, 12, 0.0, 4.0),
    ];
    for (sf, sb, lam, inner, n, beta, se) in combos {
        let fov = FoveationConfig { fovea_sigma: sf, blur_sigma: sb, forgetting: beta, blur_radius: (3.0 * sb).ceil() as usize };
        let scfg = ScanpathConfig { fixation_count: n, step_size: lam, inner_steps: inner, init: InitPolicy::Center, target: TargetPolicy::Predicted };
        let t0 = Instant::now();
        let mut final_dist = 0.0;
        let mut frac_in_box = 0.0;
        let mut ebpg_u = 0.0;
        let mut ebpg_c = 0.0;
        let mut ebpg_r = 0.0;
        let mut drop_u = 0.0;
        let mut drop_c = 0.0;
        let mut drop_r = 0.0;
        let mut used = 0;
        for s in test.samples() {
            if used >= 20 { break; }
            if p.predict(&s.image).unwrap() != s.label { continue; }
            used += 1;
            let bb = s.bbox;
            let (cr, cc) = (bb.top as f64 + bb.height as f64 / 2.0, bb.left as f64 + bb.width as f64 / 2.0);
            let sp = generate_scanpath(&p, &s.image, &scfg, &fov).unwrap();
            if false {
                let dists: Vec<f64> = sp.fixations().iter().map(|&(r, c)| (((r - cr).powi(2) + (c - cc).powi(2)).sqrt() * 10.0).round() / 10.0).collect();
                println!("  img {used}: dists {dists:?} losses {:?}", sp.losses().iter().map(|l| (l * 100.0).round() / 100.0).collect::<Vec<f64>>());
            }
            let (lr, lc) = *sp.fixations().last().unwrap();
            final_dist += ((lr - cr).powi(2) + (lc - cc).powi(2)).sqrt();
            frac_in_box += sp.fixations().iter().filter(|&&(r, c)| bb.contains(r.round() as usize, c.round() as usize)).count() as f64 / sp.len() as f64;
            for (mode, acc_e, acc_d) in [
                (WeightingMode::Uniform, &mut ebpg_u, &mut drop_u),
                (WeightingMode::ConfidenceGain, &mut ebpg_c, &mut drop_c),
            ] {
                let w = fixation_weights(&sp, mode);
                let map = build_map(&sp, &w, se, 64, 64).unwrap();
                *acc_e += ebpg(map.grid(), &[bb]).unwrap();
                let d = fovex::metrics::avg_drop_increase(&p, std::slice::from_ref(&s.image), std::slice::from_ref(map.grid()), &[s.label]).unwrap();
                *acc_d += d.drop;
            }
            let rmap = random_cam::<f64>(derive_seed(seed, STREAM_RANDOM_CAM_BASE + used as u64), 64, 64, (1, 5), (4.0, 16.0)).unwrap();
            ebpg_r += ebpg(rmap.grid(), &[bb]).unwrap();
            let dr = fovex::metrics::avg_drop_increase(&p, std::slice::from_ref(&s.image), std::slice::from_ref(rmap.grid()), &[s.label]).unwrap();
            drop_r += dr.drop;
        }
        let n_f = used as f64;
        println!(
            "sf={sf:<3} sb={sb:<3} lam={lam:<4} in={inner:<2} n={n} b={beta} se={se}: final_d={:.1} inbox={:.2} ebpg U={:.3} C={:.3} R={:.3} drop U={:.0} C={:.0} R={:.0} ({:.1?})",
            final_dist / n_f, frac_in_box / n_f, ebpg_u / n_f, ebpg_c / n_f, ebpg_r / n_f, drop_u / n_f, drop_c / n_f, drop_r / n_f, t0.elapsed()
        );
    }
}
