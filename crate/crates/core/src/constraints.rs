//! Safety and feasibility penalties and the total placement objective.

use serde::{Deserialize, Serialize};

use crate::anatomy::AnatomyModel;
use crate::error::{Error, Result};
use crate::forward::{self, SpreadModel, TargetImage};
use crate::geom::{scale, Vec2, Vec3};
use crate::layout::ElectrodeLayout;

/// Every knob of the objective and of the optimizer that minimizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub lambda_vasc: f64,
    pub lambda_cortex: f64,
    /// Vascular safety margin, mm.
    pub tau: f64,
    pub spread: SpreadModel,
    pub knn_k: usize,
    pub foveal_beta: f64,
    /// Foveal weight width in degrees; `None` means a quarter of the
    /// target's half-width.
    pub foveal_sigma_f: Option<f64>,
    pub batch_size: usize,
    pub lr: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Softmin temperature of the coverage baseline, deg².
    pub coverage_temperature: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            lambda_vasc: 10.0,
            lambda_cortex: 10.0,
            tau: 0.3,
            spread: SpreadModel::cortical_um(1000.0),
            knn_k: 5,
            foveal_beta: 4.0,
            foveal_sigma_f: None,
            batch_size: 32,
            lr: 0.05,
            max_iters: 5000,
            tol: 1e-5,
            seed: 0,
            coverage_temperature: 0.1,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.lambda_vasc >= 0.0 && self.lambda_cortex >= 0.0) {
            return bad("penalty weights must be >= 0".into());
        }
        if self.knn_k < 1 {
            return bad("knn_k must be >= 1".into());
        }
        if !(self.spread.rho > 0.0) {
            return bad(format!("spread rho must be > 0, got {}", self.spread.rho));
        }
        if !(self.foveal_beta >= 0.0) {
            return bad("foveal beta must be >= 0".into());
        }
        if let Some(s) = self.foveal_sigma_f {
            if !(s > 0.0) {
                return bad("foveal sigma must be > 0".into());
            }
        }
        if self.batch_size < 1 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.lr));
        }
        if !(self.tol >= 0.0) {
            return bad("tolerance must be >= 0".into());
        }
        if !(self.coverage_temperature > 0.0) {
            return bad("coverage temperature must be > 0".into());
        }
        Ok(())
    }

    pub fn foveal_sigma_for(&self, extent: Vec2) -> f64 {
        self.foveal_sigma_f.unwrap_or(0.25 * extent[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub percept: f64,
    pub vasc: f64,
    pub cortex: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn compose(percept: f64, vasc: f64, cortex: f64, config: &ObjectiveConfig) -> Self {
        Self { percept, vasc, cortex, total: percept + config.lambda_vasc * vasc + config.lambda_cortex * cortex }
    }
}

fn require_nonempty(positions: &[Vec3]) -> Result<()> {
    if positions.is_empty() {
        return Err(Error::invalid("layout has no electrodes"));
    }
    Ok(())
}

/// Margin hinge `((τ − d)/τ)²` for `d ≤ τ` and its derivative in `d`.
#[inline]
pub fn vascular_hinge(d: f64, tau: f64) -> (f64, f64) {
    if d > tau {
        return (0.0, 0.0);
    }
    let r = (tau - d) / tau;
    (r * r, -2.0 * r / tau)
}

pub(crate) fn vascular_terms(positions: &[Vec3], anatomy: &AnatomyModel, tau: f64) -> Result<(f64, Vec<Vec3>)> {
    require_nonempty(positions)?;
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be > 0, got {tau}")));
    }
    let inv_n = 1.0 / positions.len() as f64;
    let mut total = 0.0;
    let grads = positions
        .iter()
        .map(|&p| {
            let hit = anatomy.vessel_hit(p);
            let (phi, dphi) = vascular_hinge(hit.distance, tau);
            total += phi;
            scale(hit.gradient, dphi * inv_n)
        })
        .collect();
    Ok((total * inv_n, grads))
}

pub(crate) fn cortex_terms(positions: &[Vec3], anatomy: &AnatomyModel) -> Result<(f64, Vec<Vec3>)> {
    require_nonempty(positions)?;
    let inv_n = 1.0 / positions.len() as f64;
    let mut total = 0.0;
    let grads = positions
        .iter()
        .map(|&p| {
            let (d, g) = anatomy.sdf(p);
            if d <= 0.0 {
                return [0.0; 3];
            }
            total += d * d;
            scale(g, 2.0 * d * inv_n)
        })
        .collect();
    Ok((total * inv_n, grads))
}

/// Mean margin hinge over electrodes and per-electrode gradients.
pub fn vascular_penalty(layout: &ElectrodeLayout, anatomy: &AnatomyModel, tau: f64) -> Result<(f64, Vec<Vec3>)> {
    vascular_terms(&layout.positions()?, anatomy, tau)
}

/// Mean squared outside distance to gray matter and per-electrode gradients.
pub fn cortex_penalty(layout: &ElectrodeLayout, anatomy: &AnatomyModel) -> Result<(f64, Vec<Vec3>)> {
    cortex_terms(&layout.positions()?, anatomy)
}

/// Objective value and gradient with respect to electrode positions.
pub fn objective_at_positions(
    positions: &[Vec3],
    anatomy: &AnatomyModel,
    batch: &[&TargetImage],
    config: &ObjectiveConfig,
) -> Result<(ObjectiveBreakdown, Vec<Vec3>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    require_nonempty(positions)?;
    let maps = forward::map_electrodes(positions, anatomy, config)?;
    let (percept, mut grads) = forward::batch_percept(&maps, batch, config)?;
    let (vasc, gv) = vascular_terms(positions, anatomy, config.tau)?;
    let (cortex, gc) = cortex_terms(positions, anatomy)?;
    for ((g, v), c) in grads.iter_mut().zip(&gv).zip(&gc) {
        for a in 0..3 {
            g[a] += config.lambda_vasc * v[a] + config.lambda_cortex * c[a];
        }
    }
    Ok((ObjectiveBreakdown::compose(percept, vasc, cortex, config), grads))
}

/// Total objective over a batch and its gradient with respect to the
/// layout's parameter vector.
pub fn total_objective(
    layout: &ElectrodeLayout,
    anatomy: &AnatomyModel,
    batch: &[TargetImage],
    config: &ObjectiveConfig,
) -> Result<(ObjectiveBreakdown, Vec<f64>)> {
    let refs: Vec<&TargetImage> = batch.iter().collect();
    let (b, g) = objective_at_positions(&layout.positions()?, anatomy, &refs, config)?;
    Ok((b, layout.chain_gradient(&g)?))
}

/// Electrodes within the margin (`d ≤ τ`, inclusive) and the minimum
/// vessel distance over the layout.
pub fn count_violations(layout: &ElectrodeLayout, anatomy: &AnatomyModel, tau: f64) -> Result<(usize, f64)> {
    Ok(violations_at(&layout.positions()?, anatomy, tau))
}

pub(crate) fn violations_at(positions: &[Vec3], anatomy: &AnatomyModel, tau: f64) -> (usize, f64) {
    positions.iter().fold((0, f64::INFINITY), |(n, m), &p| {
        let d = anatomy.vessel_hit(p).distance;
        (n + (d <= tau) as usize, m.min(d))
    })
}

/// Largest gray-matter signed distance over the layout (> 0 means some
/// electrode is outside).
pub fn max_sdf(layout: &ElectrodeLayout, anatomy: &AnatomyModel) -> Result<f64> {
    Ok(layout.positions()?.iter().map(|&p| anatomy.sdf(p).0).fold(f64::NEG_INFINITY, f64::max))
}
