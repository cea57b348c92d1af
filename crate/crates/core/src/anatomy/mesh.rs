//! ASCII PLY surface loading and scanline voxelization of closed meshes.

use std::path::Path;

use super::VoxelMask;
use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

/// Parse the ASCII PLY subset used for gray-matter surfaces: a vertex
/// element whose first three properties are `x y z`, and a face element of
/// vertex-index lists (polygons are fan-triangulated).
pub fn parse_ply(path: &Path, text: &str) -> Result<TriMesh> {
    let fmt_err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::Format(format!("{} is not a PLY file", path.display()))),
    }
    let (mut n_vert, mut n_face) = (None, None);
    let mut ascii = false;
    for (ln, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", ..] => ascii = true,
            ["format", other, ..] => return Err(fmt_err(ln, format!("unsupported PLY format `{other}`"))),
            ["element", "vertex", n] => {
                n_vert = Some(n.parse::<usize>().map_err(|_| fmt_err(ln, "bad vertex count".into()))?)
            }
            ["element", "face", n] => {
                n_face = Some(n.parse::<usize>().map_err(|_| fmt_err(ln, "bad face count".into()))?)
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    if !ascii {
        return Err(Error::Format(format!("{} has no ascii format line", path.display())));
    }
    let n_vert = n_vert.ok_or_else(|| Error::Format("PLY header lacks a vertex element".into()))?;
    let n_face = n_face.unwrap_or(0);
    let mut vertices = Vec::with_capacity(n_vert);
    let mut triangles = Vec::with_capacity(n_face);
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let nums: Vec<&str> = line.split_whitespace().collect();
        if vertices.len() < n_vert {
            if nums.len() < 3 {
                return Err(fmt_err(ln, "vertex needs x y z".into()));
            }
            let mut v = [0.0; 3];
            for (o, s) in v.iter_mut().zip(&nums) {
                *o = s.parse().map_err(|_| fmt_err(ln, format!("`{s}` is not a number")))?;
            }
            vertices.push(v);
        } else {
            let idx: Vec<usize> = nums
                .iter()
                .map(|s| s.parse::<usize>().map_err(|_| fmt_err(ln, format!("`{s}` is not an index"))))
                .collect::<Result<_>>()?;
            let count = *idx.first().ok_or_else(|| fmt_err(ln, "empty face".into()))?;
            if idx.len() != count + 1 || count < 3 {
                return Err(fmt_err(ln, "face list length mismatch".into()));
            }
            for &i in &idx[1..] {
                if i >= n_vert {
                    return Err(fmt_err(ln, format!("vertex index {i} out of range")));
                }
            }
            for t in 1..count - 1 {
                triangles.push([idx[1], idx[t + 1], idx[t + 2]]);
            }
        }
    }
    if vertices.len() != n_vert {
        return Err(Error::Format(format!("expected {n_vert} vertices, found {}", vertices.len())));
    }
    Ok(TriMesh { vertices, triangles })
}

pub fn load_ply(path: &Path) -> Result<TriMesh> {
    let text = super::io::read_text(path)?;
    parse_ply(path, &text)
}

/// Voxelize the interior of a closed mesh at `spacing` mm, padding the
/// bounding box by `pad` mm. Returns the mask and the grid origin.
pub fn voxelize(mesh: &TriMesh, spacing: f64, pad: f64) -> Result<(VoxelMask, Vec3)> {
    if !(spacing > 0.0) {
        return Err(Error::invalid("voxel spacing must be positive"));
    }
    if mesh.triangles.is_empty() {
        return Err(Error::invalid("mesh has no faces"));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &mesh.vertices {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let origin = lo.map(|l| l - pad);
    let dims = [0, 1, 2].map(|a| ((hi[a] + pad - origin[a]) / spacing).ceil() as usize + 1);
    let mut mask = VoxelMask::filled(dims, false);
    // Nudge rays off exact vertex/edge coordinates.
    let (ey, ez) = (1.234_567e-7 * spacing, 7.654_321e-8 * spacing);
    let mut hits = Vec::new();
    for k in 0..dims[2] {
        let z = origin[2] + k as f64 * spacing + ez;
        for j in 0..dims[1] {
            let y = origin[1] + j as f64 * spacing + ey;
            hits.clear();
            for t in &mesh.triangles {
                if let Some(x) = ray_x_hit(y, z, t.map(|i| mesh.vertices[i])) {
                    hits.push(x);
                }
            }
            hits.sort_by(f64::total_cmp);
            for pair in hits.chunks_exact(2) {
                for i in 0..dims[0] {
                    let x = origin[0] + i as f64 * spacing;
                    if x >= pair[0] && x <= pair[1] {
                        mask.set(i, j, k, true);
                    }
                }
            }
        }
    }
    Ok((mask, origin))
}

/// X coordinate where the line `{(t, y, z)}` crosses triangle `tri`.
fn ray_x_hit(y: f64, z: f64, tri: [Vec3; 3]) -> Option<f64> {
    let [a, b, c] = tri;
    let d = (b[1] - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (b[2] - a[2]);
    if d == 0.0 {
        return None;
    }
    let w1 = ((y - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (z - a[2])) / d;
    let w2 = ((b[1] - a[1]) * (z - a[2]) - (y - a[1]) * (b[2] - a[2])) / d;
    let w0 = 1.0 - w1 - w2;
    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
        return None;
    }
    Some(w0 * a[0] + w1 * b[0] + w2 * c[0])
}
