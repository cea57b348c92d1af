//! Cortical geometry, retinotopy and vasculature.
//!
//! An [`AnatomyModel`] bundles everything the forward model and the
//! penalties query: retinotopy sites (cortical position in mm paired with a
//! visual-field position in degrees), a gray-matter signed distance field,
//! vessel centerlines, and spatial indices over both point sets. It is
//! immutable once built and can be shared freely between threads.

pub mod io;
pub mod kdtree;
pub mod mesh;
pub mod sdf;
pub mod synth;
pub mod vessels;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};

pub use kdtree::KdTree;
pub use sdf::{build_sdf, sample_sdf, ScalarField3D, VoxelMask};
pub use synth::{synth_anatomy, SynthParams};
pub use vessels::{Segment, VesselHit, VesselIndex, VesselSet};

/// Sites may sit at most this far outside gray matter (mm).
pub const SITE_SDF_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetinotopySite {
    pub id: u64,
    /// Cortical position, mm.
    pub cortical_pos: Vec3,
    /// Visual-field position, degrees.
    pub visual_pos: Vec2,
}

#[derive(Debug, Clone)]
pub struct AnatomyModel {
    sites: Vec<RetinotopySite>,
    gm_sdf: ScalarField3D,
    vessels: VesselSet,
    site_index: KdTree,
    vessel_index: VesselIndex,
    /// Half-width and half-height of the visual field, degrees.
    visual_extent: Vec2,
}

impl PartialEq for AnatomyModel {
    fn eq(&self, other: &Self) -> bool {
        self.sites == other.sites
            && self.gm_sdf == other.gm_sdf
            && self.vessels == other.vessels
            && self.visual_extent == other.visual_extent
    }
}

impl AnatomyModel {
    pub fn new(
        sites: Vec<RetinotopySite>,
        gm_sdf: ScalarField3D,
        vessels: VesselSet,
        visual_extent: Vec2,
    ) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::EmptyInput("anatomy needs at least one retinotopy site".into()));
        }
        if !(visual_extent[0] > 0.0 && visual_extent[1] > 0.0) {
            return Err(Error::invalid(format!("visual extent must be positive, got {visual_extent:?}")));
        }
        let tol = 1e-9;
        for s in &sites {
            if !crate::geom::is_finite3(s.cortical_pos) {
                return Err(Error::invalid(format!("site {} has a non-finite cortical position", s.id)));
            }
            if !(s.visual_pos[0].abs() <= visual_extent[0] + tol && s.visual_pos[1].abs() <= visual_extent[1] + tol) {
                return Err(Error::invalid(format!(
                    "site {} visual position {:?} lies outside the extent ±{:?}",
                    s.id, s.visual_pos, visual_extent
                )));
            }
            let (d, _) = gm_sdf.sample(s.cortical_pos);
            if d > SITE_SDF_TOLERANCE {
                return Err(Error::invalid(format!("site {} lies {d:.3} mm outside gray matter", s.id)));
            }
        }
        let site_index =
            KdTree::build(sites.iter().map(|s| s.cortical_pos).collect(), sites.iter().map(|s| s.id).collect());
        let vessel_index = VesselIndex::build(&vessels);
        Ok(Self { sites, gm_sdf, vessels, site_index, vessel_index, visual_extent })
    }

    pub fn sites(&self) -> &[RetinotopySite] {
        &self.sites
    }

    pub fn gm_sdf(&self) -> &ScalarField3D {
        &self.gm_sdf
    }

    pub fn vessels(&self) -> &VesselSet {
        &self.vessels
    }

    pub fn visual_extent(&self) -> Vec2 {
        self.visual_extent
    }

    /// Positions into [`Self::sites`] of the `k` nearest sites, with
    /// distances in mm.
    pub(crate) fn nearest_site_indices(&self, p: Vec3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 || k > self.sites.len() {
            return Err(Error::invalid(format!("k = {k} must be in 1..={} (site count)", self.sites.len())));
        }
        Ok(self.site_index.nearest(p, k).into_iter().map(|n| (n.index, n.dist2.sqrt())).collect())
    }

    /// Gray-matter signed distance and its gradient at `p`.
    pub fn sdf(&self, p: Vec3) -> (f64, Vec3) {
        self.gm_sdf.sample(p)
    }

    pub fn vessel_hit(&self, p: Vec3) -> VesselHit {
        self.vessel_index.nearest(&self.vessels, p)
    }
}

/// The `k` sites nearest to `p` as `(site id, distance mm)`, ascending by
/// distance with ties broken by smaller id.
pub fn nearest_sites(anatomy: &AnatomyModel, p: Vec3, k: usize) -> Result<Vec<(u64, f64)>> {
    Ok(anatomy.nearest_site_indices(p, k)?.into_iter().map(|(i, d)| (anatomy.sites[i].id, d)).collect())
}

/// Distance from `p` to the vasculature, its gradient, and the nearest
/// segment. An empty vessel set yields `+∞` with a zero gradient.
pub fn vessel_distance(anatomy: &AnatomyModel, p: Vec3) -> (f64, Vec3, Option<usize>) {
    let hit = anatomy.vessel_hit(p);
    (hit.distance, hit.gradient, hit.segment)
}
