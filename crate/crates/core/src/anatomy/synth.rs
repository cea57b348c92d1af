//! Synthetic cortical anatomy with an analytically known retinotopy.
//!
//! Each visual hemifield maps onto its own sheet through the complex-log
//! wedge map `w = k·log(z + a)`, where `z = |x| + i·y` is the visual
//! coordinate in degrees folded into the hemifield. The sheet coordinates
//! `(u, v) = (Re w, Im w)` are then embedded in 3D with a sinusoidal fold
//! `Z = A·sin(2πu/λ)`; the hemifield with `x < 0` sits on a second sheet
//! shifted along −Y. Gray matter is a slab of fixed thickness around the
//! folded sheet. Retinotopy is columnar: sites share the visual position
//! of the sheet point below or above them. Vessels are random walks on the
//! sheet.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_sdf, AnatomyModel, RetinotopySite, Segment, VesselSet, VoxelMask};
use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Half-width and half-height of the represented visual field, degrees.
    pub visual_extent: Vec2,
    pub sites: usize,
    /// Number of vessel polylines.
    pub vessels: usize,
    /// Segments per vessel polyline.
    pub vessel_segments: usize,
    /// Sheet-space length of each vessel segment, mm.
    pub vessel_step_mm: f64,
    pub vessel_radius_mm: f64,
    pub thickness_mm: f64,
    /// Sites are spread vertically over this fraction of the slab
    /// thickness around the mid-surface; 0 keeps them on the surface.
    pub site_depth_fraction: f64,
    /// Map scale `k`, mm.
    pub k_map: f64,
    /// Foveal offset `a`, degrees.
    pub a_map: f64,
    pub fold_amplitude_mm: f64,
    pub fold_wavelength_mm: f64,
    pub voxel_mm: f64,
    /// Padding around the cortical patch in the voxel grid, mm.
    pub patch_margin_mm: f64,
    /// Separation between the two hemifield sheets, mm.
    pub hemisphere_gap_mm: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            visual_extent: [5.0, 5.0],
            sites: 4000,
            vessels: 40,
            vessel_segments: 16,
            vessel_step_mm: 1.0,
            vessel_radius_mm: 0.0,
            thickness_mm: 2.5,
            site_depth_fraction: 0.9,
            k_map: 6.0,
            a_map: 0.75,
            fold_amplitude_mm: 1.5,
            fold_wavelength_mm: 12.0,
            voxel_mm: 0.25,
            patch_margin_mm: 2.0,
            hemisphere_gap_mm: 4.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("visual_extent[0]", self.visual_extent[0]),
            ("visual_extent[1]", self.visual_extent[1]),
            ("vessel_step_mm", self.vessel_step_mm),
            ("thickness_mm", self.thickness_mm),
            ("k_map", self.k_map),
            ("a_map", self.a_map),
            ("fold_wavelength_mm", self.fold_wavelength_mm),
            ("voxel_mm", self.voxel_mm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("fold_amplitude_mm", self.fold_amplitude_mm),
            ("patch_margin_mm", self.patch_margin_mm),
            ("hemisphere_gap_mm", self.hemisphere_gap_mm),
            ("vessel_radius_mm", self.vessel_radius_mm),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.site_depth_fraction) {
            return Err(Error::invalid(format!(
                "site_depth_fraction must be in [0, 1], got {}",
                self.site_depth_fraction
            )));
        }
        if self.sites == 0 {
            return Err(Error::invalid("site count must be positive"));
        }
        if self.vessels > 0 && self.vessel_segments == 0 {
            return Err(Error::invalid("vessel_segments must be positive when vessels are requested"));
        }
        Ok(())
    }

    pub fn map(&self) -> SynthMap {
        SynthMap::new(self)
    }
}

/// Which sheet a point belongs to: `Right` carries the `x ≥ 0` hemifield.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemifield {
    Right,
    Left,
}

impl Hemifield {
    fn sign(self) -> f64 {
        match self {
            Hemifield::Right => 1.0,
            Hemifield::Left => -1.0,
        }
    }
}

/// The analytic map between visual coordinates and the folded sheets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthMap {
    pub k: f64,
    pub a: f64,
    pub amplitude: f64,
    pub wavelength: f64,
    /// Y offset of each sheet's `v = 0` line.
    pub y_offset: f64,
    pub extent: Vec2,
}

impl SynthMap {
    fn new(p: &SynthParams) -> Self {
        let v_max = p.k_map * p.visual_extent[1].atan2(p.a_map);
        Self {
            k: p.k_map,
            a: p.a_map,
            amplitude: p.fold_amplitude_mm,
            wavelength: p.fold_wavelength_mm,
            y_offset: v_max + 0.5 * p.hemisphere_gap_mm,
            extent: p.visual_extent,
        }
    }

    /// Sheet coordinates `(u, v)` in mm of a visual coordinate.
    pub fn visual_to_sheet(&self, vis: Vec2) -> (Hemifield, Vec2) {
        let hemi = if vis[0] >= 0.0 { Hemifield::Right } else { Hemifield::Left };
        let re = vis[0].abs() + self.a;
        let im = vis[1];
        let u = self.k * re.hypot(im).ln();
        let v = self.k * im.atan2(re);
        (hemi, [u, v])
    }

    pub fn sheet_to_visual(&self, hemi: Hemifield, uv: Vec2) -> Vec2 {
        let r = (uv[0] / self.k).exp();
        let phi = uv[1] / self.k;
        let x = r * phi.cos() - self.a;
        let y = r * phi.sin();
        [hemi.sign() * x, y]
    }

    pub fn fold_height(&self, u: f64) -> f64 {
        self.amplitude * (std::f64::consts::TAU * u / self.wavelength).sin()
    }

    pub fn fold_slope(&self, u: f64) -> f64 {
        self.amplitude * std::f64::consts::TAU / self.wavelength * (std::f64::consts::TAU * u / self.wavelength).cos()
    }

    pub fn sheet_to_cortex(&self, hemi: Hemifield, uv: Vec2) -> Vec3 {
        [uv[0], uv[1] + hemi.sign() * self.y_offset, self.fold_height(uv[0])]
    }

    pub fn visual_to_cortex(&self, vis: Vec2) -> Vec3 {
        let (h, uv) = self.visual_to_sheet(vis);
        self.sheet_to_cortex(h, uv)
    }

    /// Sheet coordinates of a cortical point, projecting along Z onto the
    /// fold.
    pub fn cortex_to_sheet(&self, p: Vec3) -> (Hemifield, Vec2) {
        let hemi = if p[1] >= 0.0 { Hemifield::Right } else { Hemifield::Left };
        (hemi, [p[0], p[1] - hemi.sign() * self.y_offset])
    }

    /// Analytic inverse of [`Self::visual_to_cortex`] for points on the
    /// sheet.
    pub fn cortex_to_visual(&self, p: Vec3) -> Vec2 {
        let (h, uv) = self.cortex_to_sheet(p);
        self.sheet_to_visual(h, uv)
    }

    /// Areal-root magnification of the log map, degrees per sheet mm.
    pub fn magnification(&self, vis: Vec2) -> f64 {
        (vis[0].abs() + self.a).hypot(vis[1]) / self.k
    }

    /// Areal-root magnification of the embedded map, degrees per mm of
    /// folded surface. The fold stretches the surface along X by
    /// `sqrt(1 + h'(x)²)`.
    pub fn surface_magnification(&self, vis: Vec2) -> f64 {
        let x = self.visual_to_cortex(vis)[0];
        self.magnification(vis) / (1.0 + self.fold_slope(x).powi(2)).powf(0.25)
    }

    fn in_patch(&self, vis: Vec2, hemi: Hemifield, slack: f64) -> bool {
        let hx = hemi.sign() * vis[0];
        hx >= -slack && vis[0].abs() <= self.extent[0] + slack && vis[1].abs() <= self.extent[1] + slack
    }

    fn sheet_bounds(&self) -> (f64, f64, f64) {
        let u_min = self.k * self.a.ln();
        let u_max = self.k * (self.extent[0] + self.a).hypot(self.extent[1]).ln();
        let v_max = self.k * self.extent[1].atan2(self.a);
        (u_min, u_max, v_max)
    }
}

/// Build a synthetic anatomy. Deterministic for a given `(params, seed)`.
pub fn synth_anatomy(params: &SynthParams, seed: u64) -> Result<AnatomyModel> {
    params.validate()?;
    let map = params.map();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u_min, u_max, v_max) = map.sheet_bounds();

    // Sites: uniform over sheet area, kept if inside the visual extent, and
    // uniform in height within their column.
    let mut sites = Vec::with_capacity(params.sites);
    let mut attempts = 0usize;
    while sites.len() < params.sites {
        attempts += 1;
        if attempts > 1000 * params.sites + 100_000 {
            return Err(Error::InfeasibleRegion("could not place retinotopy sites inside the extent".into()));
        }
        let hemi = if rng.random_bool(0.5) { Hemifield::Right } else { Hemifield::Left };
        let uv = [rng.random_range(u_min..u_max), rng.random_range(-v_max..v_max)];
        let vis = map.sheet_to_visual(hemi, uv);
        if !map.in_patch(vis, hemi, 0.0) || (hemi == Hemifield::Left && vis[0] == 0.0) {
            continue;
        }
        let mut cortical_pos = map.sheet_to_cortex(hemi, uv);
        let depth = params.site_depth_fraction * 0.5 * params.thickness_mm;
        if depth > 0.0 {
            cortical_pos[2] += rng.random_range(-depth..depth);
        }
        sites.push(RetinotopySite { id: sites.len() as u64, cortical_pos, visual_pos: vis });
    }

    // Gray-matter slab.
    let margin = params.patch_margin_mm;
    let half_t = 0.5 * params.thickness_mm;
    let lo = [u_min - margin, -(map.y_offset + v_max) - margin, -(params.fold_amplitude_mm + half_t) - margin];
    let hi = [u_max + margin, map.y_offset + v_max + margin, params.fold_amplitude_mm + half_t + margin];
    let h = params.voxel_mm;
    let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / h).ceil() as usize + 1);
    let mut mask = VoxelMask::filled(dims, false);
    let slack_deg = 0.25;
    for i in 0..dims[0] {
        let x = lo[0] + i as f64 * h;
        let z0 = map.fold_height(x);
        let cos_slope = 1.0 / (1.0 + map.fold_slope(x).powi(2)).sqrt();
        for j in 0..dims[1] {
            let y = lo[1] + j as f64 * h;
            let (hemi, uv) = map.cortex_to_sheet([x, y, 0.0]);
            if uv[1].abs() > v_max + 0.5 * h {
                continue;
            }
            let vis = map.sheet_to_visual(hemi, uv);
            if !map.in_patch(vis, hemi, slack_deg) {
                continue;
            }
            for k in 0..dims[2] {
                let z = lo[2] + k as f64 * h;
                if ((z - z0) * cos_slope).abs() <= half_t {
                    mask.set(i, j, k, true);
                }
            }
        }
    }
    let sdf = build_sdf(&mask, lo, [h; 3])?;

    // Voxelization can leave a jittered site just outside the slab; pull it
    // back toward the mid-surface along its column.
    for s in sites.iter_mut() {
        let mid = map.fold_height(s.cortical_pos[0]);
        for _ in 0..60 {
            if sdf.sample(s.cortical_pos).0 <= 0.0 {
                break;
            }
            s.cortical_pos[2] = mid + 0.5 * (s.cortical_pos[2] - mid);
        }
        if sdf.sample(s.cortical_pos).0 > 0.0 {
            return Err(Error::InfeasibleRegion(format!("site {} lies outside the voxelized slab", s.id)));
        }
    }

    // Vessels: random walks in sheet space.
    let mut segments = Vec::with_capacity(params.vessels * params.vessel_segments);
    for _ in 0..params.vessels {
        let start = &sites[rng.random_range(0..sites.len())];
        let (hemi, mut uv) = map.cortex_to_sheet(start.cortical_pos);
        let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut prev = map.sheet_to_cortex(hemi, uv);
        for _ in 0..params.vessel_segments {
            heading += rng.random_range(-0.4..0.4);
            let next_uv =
                [uv[0] + params.vessel_step_mm * heading.cos(), uv[1] + params.vessel_step_mm * heading.sin()];
            let vis = map.sheet_to_visual(hemi, next_uv);
            if next_uv[1].abs() > v_max || !map.in_patch(vis, hemi, 0.0) {
                break;
            }
            let next = map.sheet_to_cortex(hemi, next_uv);
            segments.push(Segment { a: prev, b: next });
            prev = next;
            uv = next_uv;
        }
    }
    let vessels = VesselSet::new(segments, params.vessel_radius_mm)?;
    AnatomyModel::new(sites, sdf, vessels, params.visual_extent)
}
