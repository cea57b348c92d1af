//! Electrode layouts: free 3D points or multi-electrode threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{add, dot, norm, scale, Vec3};

/// A thread inserted once at `entry` and carrying `count` electrodes spaced
/// `spacing` mm apart along `direction` (normalized on use).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub entry: Vec3,
    pub direction: Vec3,
    pub spacing: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "electrodes", rename_all = "lowercase")]
pub enum ElectrodeLayout {
    Free(Vec<Vec3>),
    Threads(Vec<Thread>),
}

const MIN_DIRECTION_NORM: f64 = 1e-9;

impl ElectrodeLayout {
    pub fn mode_name(&self) -> &'static str {
        match self {
            ElectrodeLayout::Free(_) => "free",
            ElectrodeLayout::Threads(_) => "threads",
        }
    }

    /// Total number of stimulation sites.
    pub fn electrode_count(&self) -> usize {
        match self {
            ElectrodeLayout::Free(p) => p.len(),
            ElectrodeLayout::Threads(t) => t.iter().map(|t| t.count).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.electrode_count() == 0
    }

    /// Electrode positions in mm.
    pub fn positions(&self) -> Result<Vec<Vec3>> {
        match self {
            ElectrodeLayout::Free(p) => Ok(p.clone()),
            ElectrodeLayout::Threads(_) => derive_thread_electrodes(self),
        }
    }

    /// Thread index of each electrode, for thread layouts.
    pub fn thread_ids(&self) -> Option<Vec<usize>> {
        match self {
            ElectrodeLayout::Free(_) => None,
            ElectrodeLayout::Threads(t) => {
                Some(t.iter().enumerate().flat_map(|(i, th)| std::iter::repeat_n(i, th.count)).collect())
            }
        }
    }

    /// Flat optimizable parameter vector: electrode coordinates for free
    /// layouts, `entry ‖ direction` per thread otherwise.
    pub fn params(&self) -> Vec<f64> {
        match self {
            ElectrodeLayout::Free(p) => p.iter().flatten().copied().collect(),
            ElectrodeLayout::Threads(t) => t.iter().flat_map(|th| th.entry.into_iter().chain(th.direction)).collect(),
        }
    }

    pub fn param_len(&self) -> usize {
        match self {
            ElectrodeLayout::Free(p) => 3 * p.len(),
            ElectrodeLayout::Threads(t) => 6 * t.len(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_len());
        match self {
            ElectrodeLayout::Free(p) => {
                for (e, c) in p.iter_mut().zip(params.chunks_exact(3)) {
                    *e = [c[0], c[1], c[2]];
                }
            }
            ElectrodeLayout::Threads(t) => {
                for (th, c) in t.iter_mut().zip(params.chunks_exact(6)) {
                    th.entry = [c[0], c[1], c[2]];
                    th.direction = [c[3], c[4], c[5]];
                }
            }
        }
    }

    /// Chain per-electrode position gradients onto the parameter vector.
    pub fn chain_gradient(&self, electrode_grads: &[Vec3]) -> Result<Vec<f64>> {
        assert_eq!(electrode_grads.len(), self.electrode_count());
        match self {
            ElectrodeLayout::Free(_) => Ok(electrode_grads.iter().flatten().copied().collect()),
            ElectrodeLayout::Threads(threads) => {
                let mut out = Vec::with_capacity(6 * threads.len());
                let mut e = 0;
                for (ti, th) in threads.iter().enumerate() {
                    let n = norm(th.direction);
                    if !(n > MIN_DIRECTION_NORM) {
                        return Err(Error::DegenerateDirection(ti));
                    }
                    let unit = scale(th.direction, 1.0 / n);
                    let mut g_entry = [0.0; 3];
                    let mut g_dir = [0.0; 3];
                    for i in 0..th.count {
                        let g = electrode_grads[e];
                        e += 1;
                        g_entry = add(g_entry, g);
                        // d(i·s·d/|d|)/dd = i·s·(I − û ûᵀ)/|d|
                        let c = i as f64 * th.spacing / n;
                        let proj = dot(g, unit);
                        for a in 0..3 {
                            g_dir[a] += c * (g[a] - proj * unit[a]);
                        }
                    }
                    out.extend(g_entry);
                    out.extend(g_dir);
                }
                Ok(out)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ElectrodeLayout::Free(p) => {
                if p.iter().any(|e| !crate::geom::is_finite3(*e)) {
                    return Err(Error::invalid("layout has non-finite coordinates"));
                }
            }
            ElectrodeLayout::Threads(t) => {
                for (i, th) in t.iter().enumerate() {
                    if !(th.spacing > 0.0) {
                        return Err(Error::invalid(format!("thread {i} spacing must be positive")));
                    }
                    if !(norm(th.direction) > MIN_DIRECTION_NORM) {
                        return Err(Error::DegenerateDirection(i));
                    }
                }
            }
        }
        if self.is_empty() {
            return Err(Error::invalid("layout has no electrodes"));
        }
        Ok(())
    }
}

/// Positions `entry + i·spacing·normalize(direction)`, `i = 0..count`.
pub fn derive_thread_electrodes(layout: &ElectrodeLayout) -> Result<Vec<Vec3>> {
    let ElectrodeLayout::Threads(threads) = layout else {
        return Err(Error::invalid("derive_thread_electrodes needs a thread layout"));
    };
    let mut out = Vec::with_capacity(layout.electrode_count());
    for (ti, th) in threads.iter().enumerate() {
        let n = norm(th.direction);
        if !(n > MIN_DIRECTION_NORM) {
            return Err(Error::DegenerateDirection(ti));
        }
        let unit = scale(th.direction, 1.0 / n);
        for i in 0..th.count {
            out.push(add(th.entry, scale(unit, i as f64 * th.spacing)));
        }
    }
    Ok(out)
}
