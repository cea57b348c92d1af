#![allow(dead_code)]

use cortiplan_core::anatomy::{synth_anatomy, AnatomyModel, SynthParams};
use cortiplan_core::forward::TargetImage;
use cortiplan_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_params() -> SynthParams {
    SynthParams { visual_extent: [3.0, 3.0], sites: 600, vessels: 8, voxel_mm: 0.4, ..SynthParams::default() }
}

pub fn small_anatomy(seed: u64) -> AnatomyModel {
    synth_anatomy(&small_params(), seed).unwrap()
}

pub fn random_target(rng: &mut impl Rng, w: usize, h: usize, extent: f64) -> TargetImage {
    let values = (0..w * h).map(|_| rng.random::<f64>()).collect();
    TargetImage::new(w, h, [extent, extent], values).unwrap()
}

/// Gaussian blob target centered at `c` with width `s` degrees.
pub fn blob_target(w: usize, h: usize, extent: f64, c: [f64; 2], s: f64) -> TargetImage {
    let mut values = Vec::with_capacity(w * h);
    for i in 0..h {
        for j in 0..w {
            let x = (j as f64 + 0.5) / w as f64 * 2.0 * extent - extent;
            let y = extent - (i as f64 + 0.5) / h as f64 * 2.0 * extent;
            values.push((-((x - c[0]).powi(2) + (y - c[1]).powi(2)) / (2.0 * s * s)).exp());
        }
    }
    TargetImage::new(w, h, [extent, extent], values).unwrap()
}

/// Random points near gray matter: a site's cortical position plus a
/// jitter of up to `jitter` mm per axis.
pub fn points_near_sites(anatomy: &AnatomyModel, rng: &mut impl Rng, n: usize, jitter: f64) -> Vec<Vec3> {
    let sites = anatomy.sites();
    (0..n)
        .map(|_| {
            let c = sites[rng.random_range(0..sites.len())].cortical_pos;
            [0, 1, 2].map(|a| c[a] + rng.random_range(-jitter..jitter))
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are
/// below `floor`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / na.max(nb).max(floor)
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
