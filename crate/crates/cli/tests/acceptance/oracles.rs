//! Independent transcriptions used as references. Nothing here calls the
//! library code it is compared against.

use cortiplan_core::forward::{Raster, SpreadMode};
use cortiplan_core::{AnatomyModel, ObjectiveConfig, TargetImage, Vec3};

fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Exhaustive k nearest sites, ties broken by id.
fn knn(anatomy: &AnatomyModel, p: Vec3, k: usize) -> Vec<(Vec3, [f64; 2], f64)> {
    let mut all: Vec<(f64, u64, Vec3, [f64; 2])> =
        anatomy.sites().iter().map(|s| (dist(p, s.cortical_pos), s.id, s.cortical_pos, s.visual_pos)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(d, _, c, v)| (c, v, d)).collect()
}

/// Inverse-distance visual position over the k nearest sites.
pub fn visual_position(anatomy: &AnatomyModel, p: Vec3, k: usize) -> [f64; 2] {
    let nb = knn(anatomy, p, k);
    if let Some((_, v, _)) = nb.iter().find(|(_, _, d)| *d < 1e-9) {
        return *v;
    }
    let (mut num, mut den) = ([0.0; 2], 0.0);
    for (_, v, d) in &nb {
        num[0] += v[0] / d;
        num[1] += v[1] / d;
        den += 1.0 / d;
    }
    [num[0] / den, num[1] / den]
}

/// Mean visual-over-cortical distance ratio to the k nearest sites.
pub fn magnification(anatomy: &AnatomyModel, p: Vec3, k: usize) -> f64 {
    let s = visual_position(anatomy, p, k);
    let nb = knn(anatomy, p, k);
    let total: f64 =
        nb.iter().map(|(c, v, _)| ((v[0] - s[0]).powi(2) + (v[1] - s[1]).powi(2)).sqrt() / dist(*c, p).max(1e-6)).sum();
    total / nb.len() as f64
}

/// Bilinear sample with border clamping; pixel centers on integer
/// coordinates.
pub fn bilinear(t: &TargetImage, s: [f64; 2]) -> f64 {
    let (w, h) = (t.width as f64, t.height as f64);
    let fx = ((s[0] + t.extent[0]) / (2.0 * t.extent[0]) * w - 0.5).clamp(0.0, w - 1.0);
    let fy = ((t.extent[1] - s[1]) / (2.0 * t.extent[1]) * h - 0.5).clamp(0.0, h - 1.0);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(t.width - 1), (y0 + 1).min(t.height - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let v = |i: usize, j: usize| t.values[i * t.width + j];
    (1.0 - ty) * ((1.0 - tx) * v(y0, x0) + tx * v(y0, x1)) + ty * ((1.0 - tx) * v(y1, x0) + tx * v(y1, x1))
}

/// Sum of isotropic Gaussians evaluated pixel by pixel, electrode by
/// electrode.
pub fn render(anatomy: &AnatomyModel, positions: &[Vec3], target: &TargetImage, config: &ObjectiveConfig) -> Vec<f64> {
    let k = config.knn_k;
    let phosphenes: Vec<([f64; 2], f64, f64)> = positions
        .iter()
        .map(|&p| {
            let s = visual_position(anatomy, p, k);
            let sigma = match config.spread.mode {
                SpreadMode::Visual => config.spread.rho,
                SpreadMode::Cortical => config.spread.rho * 1e-3 * magnification(anatomy, p, k),
            };
            (s, bilinear(target, s), sigma)
        })
        .collect();
    let (w, h) = (target.width, target.height);
    let mut out = vec![0.0; w * h];
    for i in 0..h {
        for j in 0..w {
            let x = (j as f64 + 0.5) / w as f64 * 2.0 * target.extent[0] - target.extent[0];
            let y = target.extent[1] - (i as f64 + 0.5) / h as f64 * 2.0 * target.extent[1];
            for (s, a, sigma) in &phosphenes {
                out[i * w + j] += a * (-((x - s[0]).powi(2) + (y - s[1]).powi(2)) / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    out
}

/// Mean SSIM over valid 11×11 windows, Gaussian σ = 1.5, data range 1.
pub fn ssim(x: &Raster, y: &Raster) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (mut sum, mut count) = (0.0, 0usize);
    for i0 in 0..=x.height - 11 {
        for j0 in 0..=x.width - 11 {
            let at = |r: &Raster, di: usize, dj: usize| r.values[(i0 + di) * r.width + j0 + dj];
            let w = |di: usize, dj: usize| g[di] * g[dj] / norm;
            let (mut mx, mut my) = (0.0, 0.0);
            for di in 0..11 {
                for dj in 0..11 {
                    mx += w(di, dj) * at(x, di, dj);
                    my += w(di, dj) * at(y, di, dj);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for di in 0..11 {
                for dj in 0..11 {
                    let (a, b) = (at(x, di, dj) - mx, at(y, di, dj) - my);
                    vx += w(di, dj) * a * a;
                    vy += w(di, dj) * b * b;
                    cxy += w(di, dj) * a * b;
                }
            }
            sum += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    sum / count as f64
}

/// Two-sided signed-rank p-value by enumerating every sign pattern of the
/// nonzero differences. `None` when all differences are zero.
pub fn wilcoxon_p(x: &[f64], y: &[f64]) -> Option<f64> {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return None;
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|a| {
            let below = abs.iter().filter(|b| *b < a).count() as f64;
            let equal = abs.iter().filter(|b| *b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let mean = ranks.iter().sum::<f64>() / 2.0;
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let observed = (w_plus - mean).abs();
    let n = d.len();
    let extreme = (0u64..1 << n)
        .filter(|mask| {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            (w - mean).abs() >= observed - 1e-9
        })
        .count();
    Some(extreme as f64 / (1u64 << n) as f64)
}
