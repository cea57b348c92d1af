//! Differentiable forward model: cortical electrode coordinates to a
//! simulated phosphene percept, and the foveally weighted loss against a
//! target image.
//!
//! Each electrode is mapped to the visual field by inverse-distance
//! interpolation over its `k` nearest retinotopy sites. Its amplitude is
//! read from the target at that location (bilinear), and it contributes an
//! isotropic Gaussian whose width is either given in degrees or converted
//! from a cortical spread in µm through the local magnification.
//!
//! Gradients are analytic. Within one evaluation the neighbor set and the
//! magnification of every electrode are held fixed, so the model is
//! piecewise smooth in the electrode positions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anatomy::AnatomyModel;
use crate::constraints::ObjectiveConfig;
use crate::error::{Error, Result};
use crate::geom::{dist, Vec2, Vec3};
use crate::layout::ElectrodeLayout;

/// Gaussians are evaluated within this many standard deviations; beyond
/// it a unit-amplitude phosphene is below 3e-18.
const GAUSS_CUTOFF: f64 = 9.0;
/// Sites closer than this (mm) are treated as coincident.
const COINCIDENT_MM: f64 = 1e-9;
const MIN_SIGMA_DEG: f64 = 1e-6;

/// Row-major raster over a visual field `[-hw, hw] × [-hh, hh]` degrees.
/// Row 0 is the top of the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Half-width and half-height, degrees.
    pub extent: Vec2,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, extent: Vec2, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("raster dimensions must be positive"));
        }
        if !(extent[0] > 0.0 && extent[1] > 0.0) {
            return Err(Error::invalid(format!("raster extent must be positive, got {extent:?}")));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!("raster has {} values, expected {}×{}", values.len(), height, width)));
        }
        Ok(Self { width, height, extent, values })
    }

    pub fn zeros(width: usize, height: usize, extent: Vec2) -> Self {
        Self { width, height, extent, values: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }

    pub fn pixel_width(&self) -> f64 {
        2.0 * self.extent[0] / self.width as f64
    }

    pub fn pixel_height(&self) -> f64 {
        2.0 * self.extent[1] / self.height as f64
    }

    #[inline]
    pub fn col_x(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.width as f64 * 2.0 * self.extent[0] - self.extent[0]
    }

    #[inline]
    pub fn row_y(&self, i: usize) -> f64 {
        self.extent[1] - (i as f64 + 0.5) / self.height as f64 * 2.0 * self.extent[1]
    }

    /// Visual coordinate (degrees) of the center of pixel `(i, j)`.
    pub fn pixel_center(&self, i: usize, j: usize) -> Vec2 {
        [self.col_x(j), self.row_y(i)]
    }

    pub fn same_grid(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.extent == other.extent
    }
}

/// Target image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetImage(Raster);

impl TargetImage {
    pub fn new(width: usize, height: usize, extent: Vec2, values: Vec<f64>) -> Result<Self> {
        let r = Raster::new(width, height, extent, values)?;
        if let Some(v) = r.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("target value {v} outside [0, 1]")));
        }
        Ok(Self(r))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }
}

impl std::ops::Deref for TargetImage {
    type Target = Raster;
    fn deref(&self) -> &Raster {
        &self.0
    }
}

/// Rendered percept: an unclamped, non-negative sum of Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptImage(Raster);

impl PerceptImage {
    pub fn from_raster(r: Raster) -> Self {
        Self(r)
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }
}

impl std::ops::Deref for PerceptImage {
    type Target = Raster;
    fn deref(&self) -> &Raster {
        &self.0
    }
}

/// Per-pixel loss weights, all ≥ 1, peaking at the fovea.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap(Raster);

impl WeightMap {
    pub fn raster(&self) -> &Raster {
        &self.0
    }
}

impl std::ops::Deref for WeightMap {
    type Target = Raster;
    fn deref(&self) -> &Raster {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpreadMode {
    /// `rho` is a cortical spread in µm, converted with the local
    /// magnification.
    Cortical,
    /// `rho` is the phosphene standard deviation in degrees.
    Visual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadModel {
    pub mode: SpreadMode,
    pub rho: f64,
}

impl SpreadModel {
    pub fn cortical_um(rho: f64) -> Self {
        Self { mode: SpreadMode::Cortical, rho }
    }

    pub fn visual_deg(rho: f64) -> Self {
        Self { mode: SpreadMode::Visual, rho }
    }
}

/// Interpolated visual position of a cortical point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualMapping {
    pub s: Vec2,
    /// `∂s/∂p`, rows are visual x and y.
    pub jacobian: [Vec3; 2],
}

fn idw_mapping(anatomy: &AnatomyModel, p: Vec3, neighbors: &[(usize, f64)]) -> VisualMapping {
    let sites = anatomy.sites();
    if let Some(&(j, _)) = neighbors.iter().find(|(_, d)| *d < COINCIDENT_MM) {
        return VisualMapping { s: sites[j].visual_pos, jacobian: [[0.0; 3]; 2] };
    }
    let mut wsum = 0.0;
    let mut s = [0.0; 2];
    for &(j, d) in neighbors {
        let w = 1.0 / d;
        wsum += w;
        s[0] += w * sites[j].visual_pos[0];
        s[1] += w * sites[j].visual_pos[1];
    }
    s[0] /= wsum;
    s[1] /= wsum;
    // ∂w_j/∂p = −(p − c_j)/r_j³ ; ∂s/∂p = Σ_j (v_j − s) ∂w_j/∂p / W
    let mut jac = [[0.0; 3]; 2];
    for &(j, d) in neighbors {
        let c = sites[j].cortical_pos;
        let v = sites[j].visual_pos;
        let inv_r3 = 1.0 / (d * d * d);
        for a in 0..3 {
            let dw = -(p[a] - c[a]) * inv_r3;
            jac[0][a] += (v[0] - s[0]) * dw;
            jac[1][a] += (v[1] - s[1]) * dw;
        }
    }
    for row in jac.iter_mut() {
        for x in row.iter_mut() {
            *x /= wsum;
        }
    }
    VisualMapping { s, jacobian: jac }
}

/// Inverse-distance interpolation of visual position over the `k` nearest
/// retinotopy sites, with the analytic Jacobian for a fixed neighbor set.
pub fn map_to_visual_field(anatomy: &AnatomyModel, p: Vec3, k: usize) -> Result<VisualMapping> {
    let nb = anatomy.nearest_site_indices(p, k)?;
    Ok(idw_mapping(anatomy, p, &nb))
}

fn magnification_from(anatomy: &AnatomyModel, p: Vec3, neighbors: &[(usize, f64)], s: Vec2) -> f64 {
    let sites = anatomy.sites();
    let total: f64 = neighbors
        .iter()
        .map(|&(j, _)| {
            let v = sites[j].visual_pos;
            let dv = (v[0] - s[0]).hypot(v[1] - s[1]);
            dv / dist(sites[j].cortical_pos, p).max(1e-6)
        })
        .sum();
    total / neighbors.len() as f64
}

/// Local cortical magnification (deg/mm) around `p`.
pub fn local_magnification(anatomy: &AnatomyModel, p: Vec3, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("local magnification needs k >= 2"));
    }
    let nb = anatomy.nearest_site_indices(p, k)?;
    let m = idw_mapping(anatomy, p, &nb);
    Ok(magnification_from(anatomy, p, &nb, m.s))
}

/// Bilinear sample of the target at visual coordinate `s`, with border
/// clamping. Returns the amplitude and `[∂a/∂x, ∂a/∂y]`.
pub fn sample_amplitude(target: &TargetImage, s: Vec2) -> (f64, Vec2) {
    let r = target.raster();
    let (w, h) = (r.width, r.height);
    // Continuous pixel coordinates; pixel centers sit on integers.
    let fj = (s[0] + r.extent[0]) / (2.0 * r.extent[0]) * w as f64 - 0.5;
    let fi = (r.extent[1] - s[1]) / (2.0 * r.extent[1]) * h as f64 - 0.5;
    let dfj_dx = w as f64 / (2.0 * r.extent[0]);
    let dfi_dy = -(h as f64) / (2.0 * r.extent[1]);

    let axis = |f: f64, n: usize| -> (usize, usize, f64, bool) {
        if n == 1 {
            return (0, 0, 0.0, false);
        }
        let max = (n - 1) as f64;
        let (fc, live) = if f < 0.0 {
            (0.0, false)
        } else if f > max {
            (max, false)
        } else {
            (f, true)
        };
        let i0 = (fc.floor() as usize).min(n - 2);
        (i0, i0 + 1, fc - i0 as f64, live)
    };
    let (j0, j1, tx, live_x) = axis(fj, w);
    let (i0, i1, ty, live_y) = axis(fi, h);
    let v00 = r.get(i0, j0);
    let v01 = r.get(i0, j1);
    let v10 = r.get(i1, j0);
    let v11 = r.get(i1, j1);
    let top = v00 + (v01 - v00) * tx;
    let bottom = v10 + (v11 - v10) * tx;
    let a = top + (bottom - top) * ty;
    let da_dtx = (v01 - v00) * (1.0 - ty) + (v11 - v10) * ty;
    let da_dty = bottom - top;
    let gx = if live_x { da_dtx * dfj_dx } else { 0.0 };
    let gy = if live_y { da_dty * dfi_dy } else { 0.0 };
    (a, [gx, gy])
}

/// `w(x, y) = 1 + beta·exp(−(x² + y²)/(2·sigma_f²))` at pixel centers.
pub fn foveal_weights(height: usize, width: usize, extent: Vec2, beta: f64, sigma_f: f64) -> Result<WeightMap> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("foveal beta must be >= 0, got {beta}")));
    }
    if !(sigma_f > 0.0) {
        return Err(Error::invalid(format!("foveal sigma must be > 0, got {sigma_f}")));
    }
    let mut r = Raster::new(width, height, extent, vec![0.0; width * height])?;
    let inv = 1.0 / (2.0 * sigma_f * sigma_f);
    for i in 0..height {
        let y = r.row_y(i);
        for j in 0..width {
            let x = r.col_x(j);
            r.values[i * width + j] = 1.0 + beta * (-(x * x + y * y) * inv).exp();
        }
    }
    Ok(WeightMap(r))
}

/// Weight map for a target under `config`.
pub fn weights_for(target: &Raster, config: &ObjectiveConfig) -> Result<WeightMap> {
    foveal_weights(
        target.height,
        target.width,
        target.extent,
        config.foveal_beta,
        config.foveal_sigma_for(target.extent),
    )
}

/// `Σ w·(P − T)²` over all pixels.
pub fn percept_loss(p: &Raster, t: &Raster, w: &Raster) -> Result<f64> {
    if p.width != t.width || p.height != t.height || w.width != t.width || w.height != t.height {
        return Err(Error::invalid(format!(
            "shape mismatch: percept {}×{}, target {}×{}, weights {}×{}",
            p.height, p.width, t.height, t.width, w.height, w.width
        )));
    }
    Ok(p.values.iter().zip(&t.values).zip(&w.values).map(|((p, t), w)| w * (p - t) * (p - t)).sum())
}

/// Image-independent part of the forward model for one electrode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrodeMap {
    pub mapping: VisualMapping,
    /// Phosphene standard deviation, degrees.
    pub sigma: f64,
}

/// Map every electrode to the visual field and fix its phosphene width.
pub fn map_electrodes(
    positions: &[Vec3],
    anatomy: &AnatomyModel,
    config: &ObjectiveConfig,
) -> Result<Vec<ElectrodeMap>> {
    if positions.is_empty() {
        return Err(Error::invalid("layout has no electrodes"));
    }
    if !(config.spread.rho > 0.0) {
        return Err(Error::invalid(format!("spread rho must be > 0, got {}", config.spread.rho)));
    }
    if config.spread.mode == SpreadMode::Cortical && config.knn_k < 2 {
        return Err(Error::invalid("cortical spread needs knn_k >= 2 for the magnification estimate"));
    }
    positions
        .iter()
        .map(|&p| {
            if !crate::geom::is_finite3(p) {
                return Err(Error::invalid("electrode position is not finite"));
            }
            let nb = anatomy.nearest_site_indices(p, config.knn_k)?;
            let mapping = idw_mapping(anatomy, p, &nb);
            let sigma = match config.spread.mode {
                SpreadMode::Visual => config.spread.rho,
                SpreadMode::Cortical => config.spread.rho * 1e-3 * magnification_from(anatomy, p, &nb, mapping.s),
            };
            Ok(ElectrodeMap { mapping, sigma: sigma.max(MIN_SIGMA_DEG) })
        })
        .collect()
}

/// Inclusive index range of pixels whose center lies within `radius` of
/// `center` along one axis, for `coord(i) = offset + sign·(i + 0.5)·step`.
fn window(center: f64, radius: f64, n: usize, start: f64, step: f64, descending: bool) -> Option<(usize, usize)> {
    // coord(i) = start ± (i + 0.5)·step
    let (lo_c, hi_c) = (center - radius, center + radius);
    let (a, b) = if descending {
        ((start - hi_c) / step - 0.5, (start - lo_c) / step - 0.5)
    } else {
        ((lo_c - start) / step - 0.5, (hi_c - start) / step - 0.5)
    };
    let lo = a.ceil().max(0.0);
    let hi = b.floor().min(n as f64 - 1.0);
    if lo > hi || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    Some((lo as usize, hi as usize))
}

struct Footprint {
    i0: usize,
    j0: usize,
    gy: Vec<f64>,
    gx: Vec<f64>,
    dy: Vec<f64>,
    dx: Vec<f64>,
}

fn footprint(r: &Raster, s: Vec2, sigma: f64) -> Option<Footprint> {
    let radius = GAUSS_CUTOFF * sigma;
    let (j0, j1) = window(s[0], radius, r.width, -r.extent[0], r.pixel_width(), false)?;
    let (i0, i1) = window(s[1], radius, r.height, r.extent[1], r.pixel_height(), true)?;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let dx: Vec<f64> = (j0..=j1).map(|j| r.col_x(j) - s[0]).collect();
    let dy: Vec<f64> = (i0..=i1).map(|i| r.row_y(i) - s[1]).collect();
    Some(Footprint {
        i0,
        j0,
        gx: dx.iter().map(|d| (-d * d * inv).exp()).collect(),
        gy: dy.iter().map(|d| (-d * d * inv).exp()).collect(),
        dx,
        dy,
    })
}

/// Render a percept from pre-mapped electrodes and their amplitudes.
pub fn render_mapped(maps: &[ElectrodeMap], amplitudes: &[f64], grid: &Raster) -> Raster {
    let mut out = Raster::zeros(grid.width, grid.height, grid.extent);
    for (m, &a) in maps.iter().zip(amplitudes) {
        if a == 0.0 {
            continue;
        }
        let Some(fp) = footprint(grid, m.mapping.s, m.sigma) else {
            continue;
        };
        for (di, gy) in fp.gy.iter().enumerate() {
            let row = (fp.i0 + di) * grid.width + fp.j0;
            let ag = a * gy;
            for (dj, gx) in fp.gx.iter().enumerate() {
                out.values[row + dj] += ag * gx;
            }
        }
    }
    out
}

/// Loss of one target plus `∂L/∂s_e` for every electrode.
pub fn percept_loss_and_visual_grad(
    maps: &[ElectrodeMap],
    target: &TargetImage,
    weights: &WeightMap,
) -> Result<(f64, Vec<Vec2>)> {
    let amps: Vec<(f64, Vec2)> = maps.iter().map(|m| sample_amplitude(target, m.mapping.s)).collect();
    let a: Vec<f64> = amps.iter().map(|x| x.0).collect();
    let percept = render_mapped(maps, &a, target.raster());
    let loss = percept_loss(&percept, target.raster(), weights.raster())?;
    let resid: Vec<f64> =
        percept.values.iter().zip(&target.values).zip(&weights.values).map(|((p, t), w)| 2.0 * w * (p - t)).collect();
    let width = target.width;
    let grads = maps
        .iter()
        .zip(&amps)
        .map(|(m, &(amp, da))| {
            let Some(fp) = footprint(target.raster(), m.mapping.s, m.sigma) else {
                return [0.0, 0.0];
            };
            let (mut s0, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for (di, (gy, dy)) in fp.gy.iter().zip(&fp.dy).enumerate() {
                let row = (fp.i0 + di) * width + fp.j0;
                let (mut r0, mut rx) = (0.0, 0.0);
                for (dj, (gx, dx)) in fp.gx.iter().zip(&fp.dx).enumerate() {
                    let rg = resid[row + dj] * gx;
                    r0 += rg;
                    rx += rg * dx;
                }
                s0 += r0 * gy;
                sx += rx * gy;
                sy += r0 * gy * dy;
            }
            let inv_var = 1.0 / (m.sigma * m.sigma);
            [da[0] * s0 + amp * sx * inv_var, da[1] * s0 + amp * sy * inv_var]
        })
        .collect();
    Ok((loss, grads))
}

/// Pull visual-space gradients back to cortical positions.
pub fn chain_to_cortex(maps: &[ElectrodeMap], visual_grads: &[Vec2]) -> Vec<Vec3> {
    maps.iter()
        .zip(visual_grads)
        .map(|(m, g)| {
            let j = &m.mapping.jacobian;
            [0, 1, 2].map(|a| j[0][a] * g[0] + j[1][a] * g[1])
        })
        .collect()
}

/// Render the percept elicited by `layout` for `target`.
pub fn render_percept(
    layout: &ElectrodeLayout,
    anatomy: &AnatomyModel,
    target: &TargetImage,
    config: &ObjectiveConfig,
) -> Result<PerceptImage> {
    let positions = layout.positions()?;
    let maps = map_electrodes(&positions, anatomy, config)?;
    let amps: Vec<f64> = maps.iter().map(|m| sample_amplitude(target, m.mapping.s).0).collect();
    Ok(PerceptImage(render_mapped(&maps, &amps, target.raster())))
}

/// `∂L/∂p_e` of the perceptual loss for every electrode.
pub fn loss_gradient(
    layout: &ElectrodeLayout,
    anatomy: &AnatomyModel,
    target: &TargetImage,
    config: &ObjectiveConfig,
) -> Result<Vec<Vec3>> {
    let positions = layout.positions()?;
    let maps = map_electrodes(&positions, anatomy, config)?;
    let weights = weights_for(target.raster(), config)?;
    let (_, gs) = percept_loss_and_visual_grad(&maps, target, &weights)?;
    Ok(chain_to_cortex(&maps, &gs))
}

/// Perceptual-loss gradient with respect to the layout's parameters
/// (thread entries and directions for thread layouts).
pub fn loss_param_gradient(
    layout: &ElectrodeLayout,
    anatomy: &AnatomyModel,
    target: &TargetImage,
    config: &ObjectiveConfig,
) -> Result<Vec<f64>> {
    let g = loss_gradient(layout, anatomy, target, config)?;
    layout.chain_gradient(&g)
}

/// Batch mean of the per-pixel perceptual loss, `percept_loss / (W·H)`,
/// and its per-electrode gradient. The pixel normalization keeps penalty
/// weights independent of raster size. Per-image terms run in parallel
/// and are reduced in index order.
pub fn batch_percept(
    maps: &[ElectrodeMap],
    batch: &[&TargetImage],
    config: &ObjectiveConfig,
) -> Result<(f64, Vec<Vec3>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let per_image: Vec<(f64, Vec<Vec2>)> = batch
        .par_iter()
        .map(|t| {
            let w = weights_for(t.raster(), config)?;
            let (l, mut g) = percept_loss_and_visual_grad(maps, t, &w)?;
            let px = 1.0 / t.values.len() as f64;
            for x in g.iter_mut() {
                x[0] *= px;
                x[1] *= px;
            }
            Ok((l * px, g))
        })
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut gs = vec![[0.0; 2]; maps.len()];
    for (l, g) in &per_image {
        loss += l;
        for (acc, x) in gs.iter_mut().zip(g) {
            acc[0] += x[0];
            acc[1] += x[1];
        }
    }
    for g in gs.iter_mut() {
        g[0] /= n;
        g[1] /= n;
    }
    Ok((loss / n, chain_to_cortex(maps, &gs)))
}
