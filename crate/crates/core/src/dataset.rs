//! Target image ingestion (IDX containers, PGM/PNG directories) and a
//! synthetic handwritten-digit generator for offline use.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::TargetImage;
use crate::geom::Vec2;

const IDX_UBYTE_3D: [u8; 4] = [0, 0, 8, 3];
const IMAGE_EXTENSIONS: [&str; 3] = ["pgm", "png", "pnm"];
pub const DIGIT_SIZE: usize = 28;

/// 8-bit grayscale images of equal size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<GrayImages> {
    let fmt = |m: String| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 16 {
        return Err(fmt("truncated IDX header".into()));
    }
    if bytes[..4] != IDX_UBYTE_3D {
        return Err(fmt(format!("bad IDX magic {:02x?}, expected unsigned-byte 3D", &bytes[..4])));
    }
    let dim = |i: usize| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (n, rows, cols) = (dim(0), dim(1), dim(2));
    let size = rows * cols;
    if size == 0 {
        return Err(fmt("zero image dimension".into()));
    }
    let body = &bytes[16..];
    if body.len() != n * size {
        return Err(fmt(format!("{} data bytes for {n}×{rows}×{cols} images", body.len())));
    }
    Ok(GrayImages { rows, cols, pixels: body.chunks_exact(size).map(<[u8]>::to_vec).collect() })
}

pub fn read_idx_images(path: &Path) -> Result<GrayImages> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_images(path, &bytes)
}

pub fn encode_idx_images(images: &GrayImages) -> Vec<u8> {
    let mut out = IDX_UBYTE_3D.to_vec();
    for d in [images.pixels.len(), images.rows, images.cols] {
        out.extend((d as u32).to_be_bytes());
    }
    for p in &images.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn write_idx_images(path: &Path, images: &GrayImages) -> Result<()> {
    fs::write(path, encode_idx_images(images)).map_err(|e| Error::io(path, e))
}

/// Decode a PGM or PNG file to 8-bit gray; color is reduced by averaging
/// the RGB channels.
pub fn read_gray_image(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let px = rgb.pixels().map(|p| ((p[0] as u32 + p[1] as u32 + p[2] as u32 + 1) / 3) as u8).collect();
    Ok((h as usize, w as usize, px))
}

/// Image files in `dir` with a recognized extension, sorted by name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Convert 8-bit gray pixels to a target. The half-width is `extent`
/// degrees; the half-height keeps pixels square.
pub fn to_target(rows: usize, cols: usize, pixels: &[u8], extent: f64) -> Result<TargetImage> {
    let hh = extent * rows as f64 / cols as f64;
    TargetImage::new(cols, rows, [extent, hh], pixels.iter().map(|&v| v as f64 / 255.0).collect())
}

/// Load targets from an IDX image file, a single PGM/PNG file, or a
/// directory of them, keeping at most `limit` images.
pub fn load_dataset(path: &Path, extent: f64, limit: Option<usize>) -> Result<Vec<TargetImage>> {
    if !(extent > 0.0) {
        return Err(Error::invalid(format!("extent must be > 0, got {extent}")));
    }
    let limit = limit.unwrap_or(usize::MAX);
    let images = if path.is_dir() {
        let files = image_files(path)?;
        let mut out = GrayImages { rows: 0, cols: 0, pixels: Vec::new() };
        for f in files.iter().take(limit) {
            let (r, c, px) = read_gray_image(f)?;
            if out.pixels.is_empty() {
                (out.rows, out.cols) = (r, c);
            } else if (r, c) != (out.rows, out.cols) {
                return Err(Error::Format(format!("{} is {r}×{c}, expected {}×{}", f.display(), out.rows, out.cols)));
            }
            out.pixels.push(px);
        }
        out
    } else {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() >= 4 && bytes[0] == 0 && bytes[1] == 0 {
            let mut g = parse_idx_images(path, &bytes)?;
            g.pixels.truncate(limit);
            g
        } else {
            let (rows, cols, px) = read_gray_image(path)?;
            GrayImages { rows, cols, pixels: vec![px] }
        }
    };
    if images.pixels.is_empty() {
        return Err(Error::EmptyInput(format!("no images in {}", path.display())));
    }
    images.pixels.iter().map(|p| to_target(images.rows, images.cols, p, extent)).collect()
}

fn arc(c: Vec2, r: Vec2, a0: f64, a1: f64, n: usize) -> Vec<Vec2> {
    (0..=n)
        .map(|i| {
            let a = a0 + (a1 - a0) * i as f64 / n as f64;
            [c[0] + r[0] * a.cos(), c[1] + r[1] * a.sin()]
        })
        .collect()
}

/// Stroke polylines of each digit in a unit box, y pointing down.
fn glyph(digit: u8) -> Vec<Vec<Vec2>> {
    use std::f64::consts::PI;
    match digit {
        0 => vec![arc([0.5, 0.5], [0.3, 0.42], 0.0, 2.0 * PI, 24)],
        1 => vec![vec![[0.35, 0.25], [0.55, 0.08], [0.55, 0.92]]],
        2 => {
            let mut s = arc([0.5, 0.32], [0.3, 0.24], PI, 2.2 * PI, 12);
            s.extend([[0.18, 0.9], [0.85, 0.9]]);
            vec![s]
        }
        3 => {
            let mut s = arc([0.48, 0.3], [0.28, 0.21], 1.1 * PI, 2.5 * PI, 12);
            s.extend(arc([0.48, 0.7], [0.32, 0.21], 1.5 * PI, 2.9 * PI, 12));
            vec![s]
        }
        4 => vec![vec![[0.68, 0.92], [0.68, 0.08], [0.15, 0.66], [0.88, 0.66]]],
        5 => {
            let mut s = vec![[0.8, 0.1], [0.3, 0.1], [0.25, 0.45]];
            s.extend(arc([0.5, 0.65], [0.32, 0.26], 1.2 * PI, 2.85 * PI, 14));
            vec![s]
        }
        6 => {
            let mut s = arc([0.6, 0.5], [0.42, 0.42], 1.55 * PI, 0.95 * PI, 10);
            s.extend(arc([0.5, 0.68], [0.28, 0.23], PI, 3.0 * PI, 18));
            vec![s]
        }
        7 => vec![vec![[0.15, 0.1], [0.85, 0.1], [0.42, 0.92]]],
        8 => vec![arc([0.5, 0.29], [0.24, 0.2], 0.0, 2.0 * PI, 18), arc([0.5, 0.7], [0.3, 0.22], 0.0, 2.0 * PI, 18)],
        _ => {
            let mut s = arc([0.48, 0.32], [0.28, 0.23], 0.0, 2.0 * PI, 18);
            s.extend([[0.72, 0.6], [0.62, 0.92]]);
            vec![s]
        }
    }
}

fn seg_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0) };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Render one digit with random affine jitter into a 28×28 raster.
pub fn render_digit(digit: u8, rng: &mut impl Rng) -> Vec<u8> {
    let n = DIGIT_SIZE as f64;
    let angle = rng.random_range(-0.25..0.25);
    let scale = rng.random_range(0.85..1.1) * 20.0;
    let shear = rng.random_range(-0.2..0.2);
    let shift = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
    let half_width = rng.random_range(0.9..1.5);
    let (c, s) = (f64::cos(angle), f64::sin(angle));
    let strokes: Vec<Vec<Vec2>> = glyph(digit % 10)
        .into_iter()
        .map(|poly| {
            poly.into_iter()
                .map(|[gx, gy]| {
                    let (x, y) = ((gx - 0.5) * scale, (gy - 0.5) * scale);
                    let x = x + shear * y;
                    [c * x - s * y + n / 2.0 + shift[0], s * x + c * y + n / 2.0 + shift[1]]
                })
                .collect()
        })
        .collect();
    let mut out = vec![0u8; DIGIT_SIZE * DIGIT_SIZE];
    for i in 0..DIGIT_SIZE {
        for j in 0..DIGIT_SIZE {
            let p = [j as f64 + 0.5, i as f64 + 0.5];
            let d = strokes
                .iter()
                .flat_map(|poly| poly.windows(2).map(move |w| seg_dist(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let v = (half_width + 0.5 - d).clamp(0.0, 1.0);
            out[i * DIGIT_SIZE + j] = (v * 255.0).round() as u8;
        }
    }
    out
}

/// `count` synthetic 28×28 digits with labels, deterministic per seed.
pub fn synth_digit_pixels(count: usize, seed: u64) -> (Vec<u8>, GrayImages) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(count);
    let mut pixels = Vec::with_capacity(count);
    for _ in 0..count {
        let d = rng.random_range(0..10u8);
        labels.push(d);
        pixels.push(render_digit(d, &mut rng));
    }
    (labels, GrayImages { rows: DIGIT_SIZE, cols: DIGIT_SIZE, pixels })
}

/// Synthetic digit targets over a `±extent` degree field.
pub fn synth_digits(count: usize, seed: u64, extent: f64) -> Result<Vec<TargetImage>> {
    let (_, g) = synth_digit_pixels(count, seed);
    g.pixels.iter().map(|p| to_target(g.rows, g.cols, p, extent)).collect()
}
