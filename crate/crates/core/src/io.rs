//! On-disk formats for layouts, optimization traces and percepts.

use std::fmt::Write as _;
use std::path::Path;

use crate::anatomy::io::{read_text, write_text};
use crate::error::{Error, Result};
use crate::forward::Raster;
use crate::layout::ElectrodeLayout;
use crate::optimize::OptimizationTrace;

pub fn layout_csv(layout: &ElectrodeLayout) -> Result<String> {
    let positions = layout.positions()?;
    let ids = layout.thread_ids();
    let mut out = String::from(if ids.is_some() { "e,x,y,z,thread_id\n" } else { "e,x,y,z\n" });
    for (e, p) in positions.iter().enumerate() {
        write!(out, "{e},{},{},{}", p[0], p[1], p[2]).unwrap();
        if let Some(ids) = &ids {
            write!(out, ",{}", ids[e]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_layout_csv(path: &Path, layout: &ElectrodeLayout) -> Result<()> {
    write_text(path, &layout_csv(layout)?)
}

/// Electrode positions from a layout CSV, as a free layout.
pub fn read_layout_csv(path: &Path) -> Result<ElectrodeLayout> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "e,x,y,z" || h.trim() == "e,x,y,z,thread_id" => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "expected header `e,x,y,z[,thread_id]`".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 4 {
            return Err(parse_err(format!("expected at least 4 fields, got {}", f.len())));
        }
        let mut p = [0.0; 3];
        for (o, s) in p.iter_mut().zip(&f[1..4]) {
            *o = s.parse().map_err(|_| parse_err(format!("`{s}` is not a number")))?;
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no electrodes", path.display())));
    }
    Ok(ElectrodeLayout::Free(out))
}

pub fn trace_csv(trace: &OptimizationTrace) -> String {
    let mut out = String::from("iter,percept,vasc,cortex,total,violations,step_norm,ms\n");
    for r in &trace.records {
        let b = r.breakdown;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3}",
            r.iter, b.percept, b.vasc, b.cortex, b.total, r.violations, r.step_norm, r.ms
        )
        .unwrap();
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &OptimizationTrace) -> Result<()> {
    write_text(path, &trace_csv(trace))
}

/// Binary PGM with values clamped to `[0, 1]` and scaled to 0–255.
pub fn write_pgm(path: &Path, raster: &Raster) -> Result<()> {
    let px: Vec<u8> = raster.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::ImageEncoder;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&px, raster.width as u32, raster.height as u32, image::ExtendedColorType::L8)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other}", path.display())),
        })
}

/// Little-endian f32 grid plus a `key = value` sidecar at `path.txt`.
pub fn write_raw_f32(path: &Path, raster: &Raster) -> Result<()> {
    let bytes: Vec<u8> = raster.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = format!(
        "width = {}\nheight = {}\nhalf_width_deg = {}\nhalf_height_deg = {}\ndtype = f32le\norder = row-major, top row first\n",
        raster.width, raster.height, raster.extent[0], raster.extent[1]
    );
    write_text(&sidecar_path(path), &sidecar)
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    s.into()
}
