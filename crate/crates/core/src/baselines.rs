//! Reference placements: uniform visual-field tiling and dataset-weighted
//! visual-field coverage.

use crate::anatomy::AnatomyModel;
use crate::constraints::{self, ObjectiveBreakdown, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::forward::{self, Raster, TargetImage};
use crate::geom::Vec2;
use crate::layout::ElectrodeLayout;
use crate::optimize::{self, Evaluation, OptimizationTrace};

/// Cell centers of the most-square `rows × cols` grid holding `n` points
/// over `[-hw, hw] × [-hh, hh]`, row-major from the top-left, truncated to
/// `n`.
pub fn tiling_points(n: usize, extent: Vec2) -> Vec<Vec2> {
    if n == 0 {
        return Vec::new();
    }
    let rows = (n as f64).sqrt().floor() as usize;
    let cols = n.div_ceil(rows);
    let (hw, hh) = (extent[0], extent[1]);
    let mut out = Vec::with_capacity(n);
    'outer: for r in 0..rows {
        for c in 0..cols {
            if out.len() == n {
                break 'outer;
            }
            out.push([-hw + (c as f64 + 0.5) * 2.0 * hw / cols as f64, hh - (r as f64 + 0.5) * 2.0 * hh / rows as f64]);
        }
    }
    out
}

/// Index of the site whose visual position is nearest `v`; ties go to the
/// smaller site id.
pub fn nearest_visual_site(anatomy: &AnatomyModel, v: Vec2) -> usize {
    let sites = anatomy.sites();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in sites.iter().enumerate() {
        let d = (s.visual_pos[0] - v[0]).powi(2) + (s.visual_pos[1] - v[1]).powi(2);
        if d < best_d || (d == best_d && s.id < sites[best].id) {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Tile the visual field with `n` points and place one electrode at the
/// cortical position of the site visually nearest each.
pub fn tiling_layout(anatomy: &AnatomyModel, n: usize) -> Result<ElectrodeLayout> {
    if n == 0 {
        return Err(Error::invalid("electrode count must be >= 1"));
    }
    let pts = tiling_points(n, anatomy.visual_extent());
    Ok(ElectrodeLayout::Free(
        pts.into_iter().map(|v| anatomy.sites()[nearest_visual_site(anatomy, v)].cortical_pos).collect(),
    ))
}

/// Pixelwise mean of the dataset.
pub fn mean_image(dataset: &[TargetImage]) -> Result<TargetImage> {
    let first = dataset.first().ok_or_else(|| Error::EmptyInput("dataset".into()))?;
    let mut acc = vec![0.0; first.values.len()];
    for t in dataset {
        if !t.same_grid(first) {
            return Err(Error::invalid("dataset images differ in shape or extent"));
        }
        for (a, v) in acc.iter_mut().zip(&t.values) {
            *a += v;
        }
    }
    let n = dataset.len() as f64;
    TargetImage::new(
        first.width,
        first.height,
        first.extent,
        acc.into_iter().map(|a| (a / n).clamp(0.0, 1.0)).collect(),
    )
}

/// `-T·log Σ_e exp(-d_e/T)` and its derivative in each `d_e` (a softmax),
/// computed with the minimum factored out.
pub fn softmin(d: &[f64], temperature: f64) -> (f64, Vec<f64>) {
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = d.iter().map(|x| (-(x - dmin) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    (dmin - temperature * z.ln(), e.into_iter().map(|x| x / z).collect())
}

/// Coverage loss `Σ_px m̄·softmin_e ‖x − s_e‖²` and its gradient in each
/// visual position `s_e`.
pub fn coverage_loss(points: &[Vec2], mass: &Raster, temperature: f64) -> (f64, Vec<Vec2>) {
    let mut loss = 0.0;
    let mut grads = vec![[0.0; 2]; points.len()];
    let mut d = vec![0.0; points.len()];
    for i in 0..mass.height {
        for j in 0..mass.width {
            let m = mass.get(i, j);
            if m == 0.0 {
                continue;
            }
            let x = mass.pixel_center(i, j);
            for (de, s) in d.iter_mut().zip(points) {
                *de = (x[0] - s[0]).powi(2) + (x[1] - s[1]).powi(2);
            }
            let (sm, w) = softmin(&d, temperature);
            loss += m * sm;
            for ((g, s), we) in grads.iter_mut().zip(points).zip(&w) {
                g[0] -= m * we * 2.0 * (x[0] - s[0]);
                g[1] -= m * we * 2.0 * (x[1] - s[1]);
            }
        }
    }
    (loss, grads)
}

/// Optimize `n` electrodes so their phosphene centers cover the mass of
/// the dataset's mean image. Uses the same initialization and Adam loop
/// as percept-aware placement; penalties follow `config`.
pub fn coverage_layout(
    anatomy: &AnatomyModel,
    dataset: &[TargetImage],
    n: usize,
    config: &ObjectiveConfig,
) -> Result<(ElectrodeLayout, OptimizationTrace)> {
    config.validate()?;
    let mass = mean_image(dataset)?;
    let mut layout = optimize::init_layout(anatomy, n, config.seed)?;
    let (params, trace) = optimize::run_adam(layout.params(), std::slice::from_ref(&mass), config, |p, _| {
        let mut l = layout.clone();
        l.set_params(p);
        let positions = l.positions()?;
        let maps = forward::map_electrodes(&positions, anatomy, config)?;
        let s: Vec<Vec2> = maps.iter().map(|m| m.mapping.s).collect();
        let (cov, mut gs) = coverage_loss(&s, mass.raster(), config.coverage_temperature);
        // Per-pixel scale, matching the percept term of the total objective.
        let px = 1.0 / mass.values.len() as f64;
        for g in gs.iter_mut() {
            g[0] *= px;
            g[1] *= px;
        }
        let cov = cov * px;
        let mut g = forward::chain_to_cortex(&maps, &gs);
        let (vasc, gv) = constraints::vascular_terms(&positions, anatomy, config.tau)?;
        let (cortex, gc) = constraints::cortex_terms(&positions, anatomy)?;
        for ((g, v), c) in g.iter_mut().zip(&gv).zip(&gc) {
            for a in 0..3 {
                g[a] += config.lambda_vasc * v[a] + config.lambda_cortex * c[a];
            }
        }
        Ok(Evaluation {
            breakdown: ObjectiveBreakdown::compose(cov, vasc, cortex, config),
            grads: l.chain_gradient(&g)?,
            violations: constraints::violations_at(&positions, anatomy, config.tau).0,
        })
    })?;
    layout.set_params(&params);
    Ok((layout, trace))
}
