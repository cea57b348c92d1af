//! Randomized oracle checks: gradients, the forward model and statistics.

use std::time::Instant;

use cortiplan_core::anatomy::{nearest_sites, synth_anatomy};
use cortiplan_core::constraints::{cortex_penalty, total_objective, vascular_penalty};
use cortiplan_core::eval::{ssim, wilcoxon_signed_rank};
use cortiplan_core::forward::{batch_percept, map_electrodes, render_percept, Raster};
use cortiplan_core::{
    AnatomyModel, ElectrodeLayout, ObjectiveBreakdown, ObjectiveConfig, SpreadModel, SynthParams, TargetImage, Thread,
    Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{oracles, Outcome};

fn small_anatomies() -> Vec<AnatomyModel> {
    let params =
        SynthParams { visual_extent: [3.0, 3.0], sites: 600, vessels: 8, voxel_mm: 0.4, ..SynthParams::default() };
    (0..4).map(|seed| synth_anatomy(&params, seed).expect("synthetic anatomy")).collect()
}

fn random_target(rng: &mut impl Rng, w: usize, h: usize, extent: f64) -> TargetImage {
    let values = (0..w * h).map(|_| rng.random::<f64>()).collect();
    TargetImage::new(w, h, [extent, extent], values).expect("valid target")
}

fn near_sites(anatomy: &AnatomyModel, rng: &mut impl Rng, n: usize, jitter: f64) -> Vec<Vec3> {
    let sites = anatomy.sites();
    (0..n)
        .map(|_| {
            let c = sites[rng.random_range(0..sites.len())].cortical_pos;
            [0, 1, 2].map(|a| c[a] + rng.random_range(-jitter..jitter))
        })
        .collect()
}

/// A point within a few tenths of a millimeter of a vessel centerline.
fn near_vessel(anatomy: &AnatomyModel, rng: &mut impl Rng) -> Vec3 {
    let segs = &anatomy.vessels().segments;
    let s = &segs[rng.random_range(0..segs.len())];
    let t: f64 = rng.random();
    [0, 1, 2].map(|a| s.a[a] + t * (s.b[a] - s.a[a]) + rng.random_range(-0.2..0.2))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative error of the analytic total-objective gradient against
/// central differences. Each electrode's phosphene width is held at its
/// value at the probe point, as the model freezes it per evaluation.
fn gradient_probe(anatomies: &[AnatomyModel], probe: u64) -> (f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000 + probe);
    let anatomy = &anatomies[probe as usize % anatomies.len()];
    let batch: Vec<TargetImage> = (0..2).map(|_| random_target(&mut rng, 12, 12, 3.0)).collect();
    let mut positions = near_sites(anatomy, &mut rng, 5, 0.6);
    positions.push(near_vessel(anatomy, &mut rng));
    let layout = if probe % 4 == 3 {
        let threads = positions[..2]
            .iter()
            .map(|&entry| Thread {
                entry,
                direction: [0, 1, 2].map(|_| rng.random_range(-1.0..1.0)),
                spacing: 0.2,
                count: 3,
            })
            .collect();
        ElectrodeLayout::Threads(threads)
    } else {
        ElectrodeLayout::Free(positions)
    };
    let spread = if probe.is_multiple_of(2) {
        SpreadModel::visual_deg(rng.random_range(0.3..1.0))
    } else {
        SpreadModel::cortical_um(rng.random_range(500.0..2000.0))
    };
    let config = ObjectiveConfig {
        lambda_vasc: rng.random_range(0.0..20.0),
        lambda_cortex: rng.random_range(0.0..20.0),
        spread,
        ..ObjectiveConfig::default()
    };

    let (_, analytic) = total_objective(&layout, anatomy, &batch, &config).expect("objective");
    let base = map_electrodes(&layout.positions().expect("positions"), anatomy, &config).expect("maps");
    let refs: Vec<&TargetImage> = batch.iter().collect();
    let objective = |x: &[f64]| {
        let mut l = layout.clone();
        l.set_params(x);
        let pos = l.positions().expect("positions");
        let mut maps = map_electrodes(&pos, anatomy, &config).expect("maps");
        for (m, b) in maps.iter_mut().zip(&base) {
            m.sigma = b.sigma;
        }
        let (percept, _) = batch_percept(&maps, &refs, &config).expect("percept");
        let free = ElectrodeLayout::Free(pos);
        let (vasc, _) = vascular_penalty(&free, anatomy, config.tau).expect("vascular");
        let (cortex, _) = cortex_penalty(&free, anatomy).expect("cortex");
        ObjectiveBreakdown::compose(percept, vasc, cortex, &config).total
    };
    let h = 1e-4;
    let mut x = layout.params();
    let fd: Vec<f64> = (0..x.len())
        .map(|i| {
            let x0 = x[i];
            x[i] = x0 + h;
            let fp = objective(&x);
            x[i] = x0 - h;
            let fm = objective(&x);
            x[i] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect();
    let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let err = norm(&diff) / norm(&analytic).max(norm(&fd)).max(1e-8);
    (err, near_switch(anatomy, &layout.positions().expect("positions"), config.knn_k))
}

/// Whether any electrode's k-th and (k+1)-th nearest sites are within
/// 1e-3 mm of equidistant, where the neighbor set can switch.
fn near_switch(anatomy: &AnatomyModel, positions: &[Vec3], k: usize) -> bool {
    positions.iter().any(|&p| {
        let nb = nearest_sites(anatomy, p, k + 1).expect("neighbors");
        nb.len() > k && nb[k].1 - nb[k - 1].1 < 1e-3
    })
}

pub fn gradient() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    let start = Instant::now();
    let probes: Vec<(f64, bool)> = pool.install(|| {
        let anatomies = small_anatomies();
        (0..100).map(|p| gradient_probe(&anatomies, p)).collect()
    });
    let secs = start.elapsed().as_secs_f64();
    let good = probes.iter().filter(|p| p.0 <= 1e-4).count();
    let at_switch = probes.iter().filter(|p| p.0 > 1e-4 && p.1).count();
    let mut sorted: Vec<f64> = probes.iter().map(|p| p.0).collect();
    sorted.sort_by(f64::total_cmp);
    Outcome {
        pass: good >= 95 && secs < 60.0,
        summary: format!(
            "gradient vs central differences: {good}/100 probes within rel. err. 1e-4 (need 95), median {:.1e}, worst {:.1e}; {secs:.1} s on one thread (limit 60 s)",
            sorted[50],
            sorted[99]
        ),
        details: vec![format!("{at_switch} of {} failing probes lie within 1e-3 mm of a neighbor-set switch", 100 - good)],
    }
}

pub fn forward_model() -> Outcome {
    let anatomies = small_anatomies();
    let mut rng = ChaCha8Rng::seed_from_u64(20_000);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let anatomy = &anatomies[case % anatomies.len()];
        let target = random_target(&mut rng, 16, 16, 3.0);
        let positions = near_sites(anatomy, &mut rng, 16, 0.5);
        let spread = if case % 2 == 0 {
            SpreadModel::cortical_um(rng.random_range(300.0..2000.0))
        } else {
            SpreadModel::visual_deg(rng.random_range(0.1..1.0))
        };
        let config = ObjectiveConfig { spread, ..ObjectiveConfig::default() };
        let p = render_percept(&ElectrodeLayout::Free(positions.clone()), anatomy, &target, &config).expect("render");
        let naive = oracles::render(anatomy, &positions, &target, &config);
        for (a, b) in p.values.iter().zip(&naive) {
            worst = worst.max((a - b).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        summary: format!("render vs naive double loop: max |Δ| {worst:.1e} over 50 cases of 16×16 (limit 1e-10)"),
        details: Vec::new(),
    }
}

fn random_raster(rng: &mut impl Rng, w: usize, h: usize) -> Raster {
    Raster::new(w, h, [2.0, 2.0], (0..w * h).map(|_| rng.random::<f64>()).collect()).expect("raster")
}

pub fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30_000);
    let mut w_worst: f64 = 0.0;
    let mut w_bad = 0;
    for i in 0..50 {
        let n = 1 + i % 12;
        // Half the inputs use coarse values so magnitudes tie.
        let draw = |rng: &mut ChaCha8Rng| {
            if i % 2 == 0 {
                rng.random_range(-4i32..=4) as f64 * 0.5
            } else {
                rng.random_range(-1.0..1.0)
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let res = wilcoxon_signed_rank(&x, &y).expect("wilcoxon");
        match oracles::wilcoxon_p(&x, &y) {
            None => w_bad += usize::from(!(res.degenerate && res.p_value == 1.0)),
            Some(p) => {
                w_bad += usize::from(!res.exact);
                w_worst = w_worst.max((res.p_value - p).abs());
            }
        }
    }
    let mut s_worst: f64 = 0.0;
    for i in 0..20 {
        let (w, h) = (16 + i % 3 * 4, 16 + i % 2 * 8);
        let a = random_raster(&mut rng, w, h);
        // Correlated pairs keep the structure term away from zero.
        let b = if i % 2 == 0 {
            random_raster(&mut rng, w, h)
        } else {
            let values = a.values.iter().map(|v| (0.7 * v + 0.3 * rng.random::<f64>()).min(1.0)).collect();
            Raster::new(w, h, a.extent, values).expect("raster")
        };
        s_worst = s_worst.max((ssim(&a, &b).expect("ssim") - oracles::ssim(&a, &b)).abs());
    }
    Outcome {
        pass: w_bad == 0 && w_worst <= 1e-12 && s_worst <= 1e-6,
        summary: format!(
            "statistics oracles: Wilcoxon exact p max |Δ| {w_worst:.1e} on 50 inputs with n ≤ 12 (limit 1e-12, {w_bad} mislabelled); SSIM max |Δ| {s_worst:.1e} on 20 pairs (limit 1e-6)"
        ),
        details: Vec::new(),
    }
}
