//! On-disk anatomy formats.
//!
//! An anatomy directory holds:
//!
//! - `retinotopy.csv`: `id,cx,cy,cz,vx,vy` (mm, mm, mm, deg, deg)
//! - `vessels.csv`: `ax,ay,az,bx,by,bz` (mm)
//! - `gm_mask.raw` + `gm_mask.txt`: 8-bit voxel mask (x fastest) and a
//!   sidecar with `dims`, `origin`, `spacing` lines; alternatively
//!   `gm_mesh.ply`, a closed ASCII PLY surface voxelized on load
//! - `anatomy.txt`: `visual_extent <hw> <hh>`, optional `vessel_radius`
//!   and `voxel_mm` (mesh voxelization resolution)

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{build_sdf, mesh, AnatomyModel, RetinotopySite, Segment, VesselSet, VoxelMask};
use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};

pub const RETINOTOPY_FILE: &str = "retinotopy.csv";
pub const VESSELS_FILE: &str = "vessels.csv";
pub const MASK_FILE: &str = "gm_mask.raw";
pub const MASK_SIDECAR: &str = "gm_mask.txt";
pub const MESH_FILE: &str = "gm_mesh.ply";
pub const META_FILE: &str = "anatomy.txt";

const RETINOTOPY_HEADER: &str = "id,cx,cy,cz,vx,vy";
const VESSELS_HEADER: &str = "ax,ay,az,bx,by,bz";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Numeric data rows of a CSV with the given header, as `(line, fields)`.
fn csv_rows<'a>(path: &Path, text: &'a str, header: &str, allow_empty: bool) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        None => return Err(Error::EmptyInput(format!("{} is empty", path.display()))),
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => {
            return Err(parse_err(path, 1, format!("expected header `{header}`, found `{}`", h.trim())));
        }
    }
    let ncols = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != ncols {
            return Err(parse_err(path, i + 1, format!("expected {ncols} fields, found {}", fields.len())));
        }
        rows.push((i + 1, fields));
    }
    if rows.is_empty() && !allow_empty {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }
    Ok(rows)
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| parse_err(path, line, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("`{s}` is not finite")));
    }
    Ok(v)
}

pub fn load_retinotopy(path: &Path) -> Result<Vec<RetinotopySite>> {
    let text = read_text(path)?;
    csv_rows(path, &text, RETINOTOPY_HEADER, false)?
        .into_iter()
        .map(|(line, f)| {
            let id = f[0].parse::<u64>().map_err(|_| parse_err(path, line, format!("`{}` is not a site id", f[0])))?;
            let n = |i: usize| parse_f64(path, line, f[i]);
            Ok(RetinotopySite { id, cortical_pos: [n(1)?, n(2)?, n(3)?], visual_pos: [n(4)?, n(5)?] })
        })
        .collect()
}

pub fn save_retinotopy(path: &Path, sites: &[RetinotopySite]) -> Result<()> {
    let mut out = String::with_capacity(64 * sites.len() + 32);
    out.push_str(RETINOTOPY_HEADER);
    out.push('\n');
    for s in sites {
        let [cx, cy, cz] = s.cortical_pos;
        let [vx, vy] = s.visual_pos;
        let _ = writeln!(out, "{},{cx},{cy},{cz},{vx},{vy}", s.id);
    }
    write_text(path, &out)
}

/// Load vessel segments. A header-only file is an empty vessel set.
pub fn load_vessels(path: &Path, radius: f64) -> Result<VesselSet> {
    let text = read_text(path)?;
    let segments = csv_rows(path, &text, VESSELS_HEADER, true)?
        .into_iter()
        .map(|(line, f)| {
            let n = |i: usize| parse_f64(path, line, f[i]);
            let seg = Segment { a: [n(0)?, n(1)?, n(2)?], b: [n(3)?, n(4)?, n(5)?] };
            if seg.a == seg.b {
                return Err(parse_err(path, line, "vessel segment has zero length"));
            }
            Ok(seg)
        })
        .collect::<Result<Vec<_>>>()?;
    VesselSet::new(segments, radius)
}

pub fn save_vessels(path: &Path, vessels: &VesselSet) -> Result<()> {
    let mut out = String::with_capacity(96 * vessels.len() + 32);
    out.push_str(VESSELS_HEADER);
    out.push('\n');
    for s in &vessels.segments {
        let [ax, ay, az] = s.a;
        let [bx, by, bz] = s.b;
        let _ = writeln!(out, "{ax},{ay},{az},{bx},{by},{bz}");
    }
    write_text(path, &out)
}

/// Key/value lines `key v1 v2 ...`, `#` comments allowed.
fn parse_kv(path: &Path, text: &str) -> Result<Vec<(usize, String, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or_default().to_string();
        let vals: Vec<String> = it.map(str::to_string).collect();
        if vals.is_empty() {
            return Err(parse_err(path, i + 1, format!("`{key}` has no value")));
        }
        out.push((i + 1, key, vals));
    }
    Ok(out)
}

fn kv_floats<const N: usize>(path: &Path, line: usize, vals: &[String]) -> Result<[f64; N]> {
    if vals.len() != N {
        return Err(parse_err(path, line, format!("expected {N} values, found {}", vals.len())));
    }
    let mut out = [0.0; N];
    for (o, v) in out.iter_mut().zip(vals) {
        *o = parse_f64(path, line, v)?;
    }
    Ok(out)
}

/// Grid geometry from a mask or field sidecar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSidecar {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: Vec3,
}

pub fn read_sidecar(path: &Path) -> Result<GridSidecar> {
    let text = read_text(path)?;
    let (mut dims, mut origin, mut spacing) = (None, None, None);
    for (line, key, vals) in parse_kv(path, &text)? {
        match key.as_str() {
            "dims" => {
                let d: [f64; 3] = kv_floats(path, line, &vals)?;
                if d.iter().any(|&x| x < 1.0 || x.fract() != 0.0) {
                    return Err(parse_err(path, line, "dims must be positive integers"));
                }
                dims = Some(d.map(|x| x as usize));
            }
            "origin" => origin = Some(kv_floats(path, line, &vals)?),
            "spacing" => spacing = Some(kv_floats(path, line, &vals)?),
            _ => {}
        }
    }
    let missing = |k: &str| Error::Format(format!("{} is missing `{k}`", path.display()));
    Ok(GridSidecar {
        dims: dims.ok_or_else(|| missing("dims"))?,
        origin: origin.ok_or_else(|| missing("origin"))?,
        spacing: spacing.ok_or_else(|| missing("spacing"))?,
    })
}

pub fn write_sidecar(path: &Path, g: &GridSidecar) -> Result<()> {
    let text = format!(
        "dims {} {} {}\norigin {} {} {}\nspacing {} {} {}\n",
        g.dims[0],
        g.dims[1],
        g.dims[2],
        g.origin[0],
        g.origin[1],
        g.origin[2],
        g.spacing[0],
        g.spacing[1],
        g.spacing[2]
    );
    write_text(path, &text)
}

/// Load an 8-bit voxel mask (nonzero = gray matter) and its sidecar.
pub fn load_mask(raw: &Path, sidecar: &Path) -> Result<(VoxelMask, GridSidecar)> {
    let g = read_sidecar(sidecar)?;
    let bytes = fs::read(raw).map_err(|e| Error::io(raw, e))?;
    let n = g.dims[0] * g.dims[1] * g.dims[2];
    if bytes.len() != n {
        return Err(Error::Format(format!(
            "{} has {} bytes but dims {:?} require {n}",
            raw.display(),
            bytes.len(),
            g.dims
        )));
    }
    let mask = VoxelMask::new(g.dims, bytes.iter().map(|&b| b != 0).collect())?;
    Ok((mask, g))
}

pub fn save_mask(raw: &Path, sidecar: &Path, mask: &VoxelMask, origin: Vec3, spacing: Vec3) -> Result<()> {
    let bytes: Vec<u8> = mask.data.iter().map(|&b| b as u8).collect();
    fs::write(raw, bytes).map_err(|e| Error::io(raw, e))?;
    write_sidecar(sidecar, &GridSidecar { dims: mask.dims, origin, spacing })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnatomyMeta {
    pub visual_extent: Vec2,
    pub vessel_radius: f64,
    pub voxel_mm: f64,
}

pub fn read_meta(path: &Path) -> Result<AnatomyMeta> {
    let text = read_text(path)?;
    let mut meta = AnatomyMeta { visual_extent: [0.0, 0.0], vessel_radius: 0.0, voxel_mm: 0.25 };
    let mut have_extent = false;
    for (line, key, vals) in parse_kv(path, &text)? {
        match key.as_str() {
            "visual_extent" => {
                meta.visual_extent = kv_floats(path, line, &vals)?;
                have_extent = true;
            }
            "vessel_radius" => meta.vessel_radius = kv_floats::<1>(path, line, &vals)?[0],
            "voxel_mm" => meta.voxel_mm = kv_floats::<1>(path, line, &vals)?[0],
            _ => {}
        }
    }
    if !have_extent {
        return Err(Error::Format(format!("{} is missing `visual_extent`", path.display())));
    }
    Ok(meta)
}

/// Write an anatomy directory. The mask is recovered from the sign of the
/// stored field, which [`super::build_sdf`] reproduces exactly on reload.
pub fn save_anatomy_dir(dir: &Path, anatomy: &AnatomyModel) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sdf = anatomy.gm_sdf();
    let mask = VoxelMask::new(sdf.dims, sdf.values.iter().map(|&v| v < 0.0).collect())?;
    let files = [RETINOTOPY_FILE, VESSELS_FILE, MASK_FILE, MASK_SIDECAR, META_FILE].map(|f| dir.join(f));
    save_retinotopy(&files[0], anatomy.sites())?;
    save_vessels(&files[1], anatomy.vessels())?;
    save_mask(&files[2], &files[3], &mask, sdf.origin, sdf.spacing)?;
    let [hw, hh] = anatomy.visual_extent();
    write_text(
        &files[4],
        &format!("visual_extent {hw} {hh}\nvessel_radius {}\nvoxel_mm {}\n", anatomy.vessels().radius, sdf.spacing[0]),
    )?;
    Ok(files.to_vec())
}

pub fn load_anatomy_dir(dir: &Path) -> Result<AnatomyModel> {
    let meta = read_meta(&dir.join(META_FILE))?;
    let sites = load_retinotopy(&dir.join(RETINOTOPY_FILE))?;
    let vessels_path = dir.join(VESSELS_FILE);
    let vessels = if vessels_path.exists() {
        load_vessels(&vessels_path, meta.vessel_radius)?
    } else {
        VesselSet::new(Vec::new(), meta.vessel_radius)?
    };
    let raw = dir.join(MASK_FILE);
    let sdf = if raw.exists() {
        let (mask, g) = load_mask(&raw, &dir.join(MASK_SIDECAR))?;
        build_sdf(&mask, g.origin, g.spacing)?
    } else {
        let ply = dir.join(MESH_FILE);
        let m = mesh::load_ply(&ply)?;
        let (mask, origin) = mesh::voxelize(&m, meta.voxel_mm, 2.0 * meta.voxel_mm)?;
        build_sdf(&mask, origin, [meta.voxel_mm; 3])?
    };
    AnatomyModel::new(sites, sdf, vessels, meta.visual_extent)
}
