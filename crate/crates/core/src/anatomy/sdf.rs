//! Voxel masks and signed distance fields over a regular grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Boolean occupancy grid, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelMask {
    pub dims: [usize; 3],
    pub data: Vec<bool>,
}

impl VoxelMask {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("mask dims must be positive, got {dims:?}")));
        }
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid(format!(
                "mask has {} voxels but dims {:?} require {}",
                data.len(),
                dims,
                dims[0] * dims[1] * dims[2]
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 3], value: bool) -> Self {
        Self { dims, data: vec![value; dims[0] * dims[1] * dims[2]] }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn complement(&self) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|v| !v).collect() }
    }
}

/// Signed distance samples on a regular grid (mm). Positive outside gray
/// matter, negative inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField3D {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl ScalarField3D {
    pub fn new(origin: Vec3, spacing: Vec3, dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("spacing must be positive, got {spacing:?}")));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("dims must be positive, got {dims:?}")));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid(format!(
                "field has {} values but dims {:?} require {}",
                values.len(),
                dims,
                dims[0] * dims[1] * dims[2]
            )));
        }
        Ok(Self { origin, spacing, dims, values })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Axis-aligned bounds spanned by the grid nodes.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let hi = self.node_position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1);
        (self.origin, hi)
    }

    /// Trilinear value and analytic gradient at `p`.
    ///
    /// The cell index is clamped to the grid while the local coordinate is
    /// not, so points outside the grid extrapolate the boundary cell.
    pub fn sample(&self, p: Vec3) -> (f64, Vec3) {
        let mut cell = [0usize; 3];
        let mut t = [0.0f64; 3];
        let mut has_second = [false; 3];
        for a in 0..3 {
            let f = (p[a] - self.origin[a]) / self.spacing[a];
            if self.dims[a] < 2 {
                cell[a] = 0;
                t[a] = 0.0;
                continue;
            }
            has_second[a] = true;
            let max_cell = (self.dims[a] - 2) as f64;
            let c = f.floor().clamp(0.0, max_cell);
            cell[a] = c as usize;
            t[a] = f - c;
        }
        let step = |a: usize, b: usize| if b == 1 && has_second[a] { 1 } else { 0 };
        let mut corner = [[[0.0f64; 2]; 2]; 2];
        for (dz, plane) in corner.iter_mut().enumerate() {
            for (dy, row) in plane.iter_mut().enumerate() {
                for (dx, v) in row.iter_mut().enumerate() {
                    *v = self.node(cell[0] + step(0, dx), cell[1] + step(1, dy), cell[2] + step(2, dz));
                }
            }
        }
        let [tx, ty, tz] = t;
        // Interpolate along x, then y, then z; keep partials of each stage.
        let c00 = corner[0][0][0] * (1.0 - tx) + corner[0][0][1] * tx;
        let c10 = corner[0][1][0] * (1.0 - tx) + corner[0][1][1] * tx;
        let c01 = corner[1][0][0] * (1.0 - tx) + corner[1][0][1] * tx;
        let c11 = corner[1][1][0] * (1.0 - tx) + corner[1][1][1] * tx;
        let dc00 = corner[0][0][1] - corner[0][0][0];
        let dc10 = corner[0][1][1] - corner[0][1][0];
        let dc01 = corner[1][0][1] - corner[1][0][0];
        let dc11 = corner[1][1][1] - corner[1][1][0];

        let c0 = c00 * (1.0 - ty) + c10 * ty;
        let c1 = c01 * (1.0 - ty) + c11 * ty;
        let value = c0 * (1.0 - tz) + c1 * tz;

        let dx0 = dc00 * (1.0 - ty) + dc10 * ty;
        let dx1 = dc01 * (1.0 - ty) + dc11 * ty;
        let d_dtx = dx0 * (1.0 - tz) + dx1 * tz;
        let d_dty = (c10 - c00) * (1.0 - tz) + (c11 - c01) * tz;
        let d_dtz = c1 - c0;

        let grad = [
            if has_second[0] { d_dtx / self.spacing[0] } else { 0.0 },
            if has_second[1] { d_dty / self.spacing[1] } else { 0.0 },
            if has_second[2] { d_dtz / self.spacing[2] } else { 0.0 },
        ];
        (value, grad)
    }
}

/// Trilinear sample of `field` at `p`: value and gradient.
pub fn sample_sdf(field: &ScalarField3D, p: Vec3) -> (f64, Vec3) {
    field.sample(p)
}

/// Exact Euclidean signed distance transform of a voxel mask.
///
/// Outside nodes take `d_out − h/2` where `d_out` is the distance to the
/// nearest inside voxel center; inside nodes take `−(d_in − h/2)`, and `h`
/// is the smallest grid spacing. The zero level set therefore passes
/// through the faces between opposite voxels, and complementing the mask
/// flips the sign of every node.
pub fn build_sdf(mask: &VoxelMask, origin: Vec3, spacing: Vec3) -> Result<ScalarField3D> {
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing:?}")));
    }
    let inside = mask.data.iter().filter(|&&v| v).count();
    if inside == 0 {
        return Err(Error::DegenerateMask("mask has no gray-matter voxel".into()));
    }
    if inside == mask.data.len() {
        return Err(Error::DegenerateMask("mask has no voxel outside gray matter".into()));
    }
    let to_inside = squared_edt(mask, spacing, true);
    let to_outside = squared_edt(mask, spacing, false);
    let half = 0.5 * spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let values = mask
        .data
        .iter()
        .zip(to_inside.iter().zip(&to_outside))
        .map(|(&m, (&din2, &dout2))| if m { -(dout2.sqrt() - half) } else { din2.sqrt() - half })
        .collect();
    ScalarField3D::new(origin, spacing, mask.dims, values)
}

/// Squared Euclidean distance (mm²) from every node to the nearest voxel
/// whose mask value equals `feature`.
fn squared_edt(mask: &VoxelMask, spacing: Vec3, feature: bool) -> Vec<f64> {
    let [nx, ny, nz] = mask.dims;
    let mut grid: Vec<f64> = mask.data.iter().map(|&m| if m == feature { 0.0 } else { f64::INFINITY }).collect();
    let longest = nx.max(ny).max(nz);
    let mut f = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut scratch = EnvelopeScratch::new(longest);

    // x rows
    for k in 0..nz {
        for j in 0..ny {
            let base = (k * ny + j) * nx;
            f[..nx].copy_from_slice(&grid[base..base + nx]);
            edt_1d(&f[..nx], spacing[0], &mut out[..nx], &mut scratch);
            grid[base..base + nx].copy_from_slice(&out[..nx]);
        }
    }
    // y columns
    for k in 0..nz {
        for i in 0..nx {
            for j in 0..ny {
                f[j] = grid[(k * ny + j) * nx + i];
            }
            edt_1d(&f[..ny], spacing[1], &mut out[..ny], &mut scratch);
            for j in 0..ny {
                grid[(k * ny + j) * nx + i] = out[j];
            }
        }
    }
    // z columns
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                f[k] = grid[(k * ny + j) * nx + i];
            }
            edt_1d(&f[..nz], spacing[2], &mut out[..nz], &mut scratch);
            for k in 0..nz {
                grid[(k * ny + j) * nx + i] = out[k];
            }
        }
    }
    grid
}

struct EnvelopeScratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl EnvelopeScratch {
    fn new(n: usize) -> Self {
        Self { v: vec![0; n], z: vec![0.0; n + 1] }
    }
}

/// Lower envelope of parabolas `(h·(q − p))² + f(p)` (Felzenszwalb and
/// Huttenlocher), skipping infinite samples.
fn edt_1d(f: &[f64], h: f64, out: &mut [f64], s: &mut EnvelopeScratch) {
    let n = f.len();
    let pos = |q: usize| q as f64 * h;
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            if k < 0 {
                k = 0;
                s.v[0] = q;
                s.z[0] = f64::NEG_INFINITY;
                s.z[1] = f64::INFINITY;
                break;
            }
            let p = s.v[k as usize];
            let (xq, xp) = (pos(q), pos(p));
            let inter = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
            if inter <= s.z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            s.v[k as usize] = q;
            s.z[k as usize] = inter;
            s.z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        let xq = pos(q);
        while s.z[j + 1] < xq {
            j += 1;
        }
        let p = s.v[j];
        let d = xq - pos(p);
        *o = d * d + f[p];
    }
}
