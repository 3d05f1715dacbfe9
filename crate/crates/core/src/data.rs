//! Grayscale images, corpus preprocessing, dataset splits, synthetic
//! phantoms, and the PNG/PGM/manifest file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Brightest representable intensity.
pub const I_MAX: f64 = 255.0;

/// Smallest accepted side length: the encoders downsample twice.
pub const MIN_SIDE: usize = 8;

/// Row-major grayscale raster with intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidImage(format!("{width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        let max = T::lit(I_MAX);
        if let Some(p) = pixels.iter().find(|&&p| !(p >= T::zero() && p <= max)) {
            return Err(Error::InvalidImage(format!("pixel value {p} outside [0, 255]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    pub fn max_value(&self) -> T {
        self.pixels.iter().copied().fold(T::zero(), T::max)
    }

    /// Pixels mapped to `[0, 1]`.
    pub fn to_unit(&self) -> Vec<T> {
        let s = T::lit(I_MAX);
        self.pixels.iter().map(|&p| p / s).collect()
    }

    /// Inverse of [`Image::to_unit`], clamping into range.
    pub fn from_unit(width: usize, height: usize, unit: &[T]) -> Result<Self> {
        let s = T::lit(I_MAX);
        let px = unit.iter().map(|&u| (u * s).max(T::zero()).min(s)).collect();
        Self::new(width, height, px)
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| U::lit(p.as_f64())).collect(),
        }
    }

    /// Mean absolute difference in `[0, 1]` pixel units.
    pub fn mae(&self, other: &Self) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::shape(
                "mae",
                format!("{}x{} vs {}x{}", self.width, self.height, other.width, other.height),
            ));
        }
        let total: f64 = self.pixels.iter().zip(&other.pixels).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum();
        Ok(total / (self.pixels.len() as f64 * I_MAX))
    }
}

/// Pixel values at rank `ceil(0.99 n)` (1-based) of the pooled sorted corpus.
fn clamp_threshold(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Clamps the brightest 1 % of the pooled corpus to 255 and stretches the
/// rest linearly so the corpus minimum lands on 0.
pub fn preprocess_corpus<T: Scalar>(raw: &[RawImage]) -> Result<Vec<Image<T>>> {
    if raw.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut pooled: Vec<f64> = Vec::with_capacity(raw.iter().map(|r| r.pixels.len()).sum());
    for r in raw {
        if let Some(v) = r.pixels.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidImage(format!("raw intensity {v} is negative or not finite")));
        }
        pooled.extend_from_slice(&r.pixels);
    }
    if pooled.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    pooled.sort_by(f64::total_cmp);
    let lo = pooled[0];
    let thr = clamp_threshold(&pooled);
    if thr <= lo {
        return Err(Error::DegenerateRange);
    }
    raw.iter()
        .map(|r| {
            let px = r
                .pixels
                .iter()
                .map(|&v| if v >= thr { T::lit(I_MAX) } else { T::lit((v - lo) / (thr - lo) * I_MAX) })
                .collect();
            Image::new(r.width, r.height, px)
        })
        .collect()
}

/// Unvalidated intensities as read from disk, before corpus preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl<T: Scalar> From<&Image<T>> for RawImage {
    fn from(img: &Image<T>) -> Self {
        Self { width: img.width, height: img.height, pixels: img.pixels.iter().map(|p| p.as_f64()).collect() }
    }
}

/// Deterministic anatomical-looking test image: a dark background, a soft
/// elliptical body and several smooth blobs of varying brightness.
pub fn generate_phantom<T: Scalar>(seed: u64, size: usize) -> Result<Image<T>> {
    if size < 16 {
        return Err(Error::invalid(format!("phantom size {size} is below 16")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9a7e_11f0_u64);
    let s = size as f64;
    let mut field = vec![0.0f64; size * size];

    // body outline
    let (bcx, bcy) = (s * rng.random_range(0.45..0.55), s * rng.random_range(0.45..0.55));
    let (brx, bry) = (s * rng.random_range(0.30..0.42), s * rng.random_range(0.26..0.40));
    let body_level = rng.random_range(0.25..0.45);
    let edge = s * 0.03;

    let blobs: Vec<(f64, f64, f64, f64, f64, f64)> = (0..rng.random_range(4..8))
        .map(|_| {
            let a = rng.random_range(0.0..std::f64::consts::PI);
            let r = rng.random_range(0.0..0.7);
            let cx = bcx + brx * r * a.cos() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let cy = bcy + bry * r * a.sin() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let sx = s * rng.random_range(0.04..0.12);
            let sy = s * rng.random_range(0.04..0.12);
            let level = rng.random_range(-0.2..0.65);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            (cx, cy, sx, sy, level, theta)
        })
        .collect();

    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d = (((px - bcx) / brx).powi(2) + ((py - bcy) / bry).powi(2)).sqrt();
            // smooth step across the body boundary
            let inside = 1.0 / (1.0 + ((d - 1.0) * brx.min(bry) / edge).exp());
            let mut v = body_level * inside;
            for &(cx, cy, sx, sy, level, th) in &blobs {
                let (dx, dy) = (px - cx, py - cy);
                let (u, w) = (dx * th.cos() + dy * th.sin(), -dx * th.sin() + dy * th.cos());
                v += level * inside * (-(u * u / (2.0 * sx * sx) + w * w / (2.0 * sy * sy))).exp();
            }
            field[y * size + x] = v.max(0.0);
        }
    }
    let hi = field.iter().copied().fold(f64::MIN, f64::max);
    let scale = if hi > 0.0 { 250.0 / hi } else { 0.0 };
    let px = field.iter().map(|&v| T::lit((v * scale).clamp(0.0, I_MAX))).collect();
    Image::new(size, size, px)
}

/// Disjoint train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<I> {
    pub train: Vec<I>,
    pub validation: Vec<I>,
    pub test: Vec<I>,
    pub seed: u64,
}

/// Split sizes for `n` items: validation and test are rounded, train takes the rest.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(r.is_finite() && *r >= 0.0)) || ((a + b + c) - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let val = (n as f64 * b).round() as usize;
    let test = (n as f64 * c).round() as usize;
    let train = n.saturating_sub(val + test);
    if train == 0 || val == 0 || test == 0 || train + val + test != n {
        return Err(Error::invalid(format!("{n} items cannot fill splits {ratios:?} with non-empty parts")));
    }
    Ok((train, val, test))
}

/// Seeded shuffle followed by a cut into (train, validation, test).
pub fn split_dataset<I: Clone>(items: &[I], ratios: (f64, f64, f64), seed: u64) -> Result<Dataset<I>> {
    let (ntr, nva, _) = split_sizes(items.len(), ratios)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Dataset {
        train: pick(&order[..ntr]),
        validation: pick(&order[ntr..ntr + nva]),
        test: pick(&order[ntr + nva..]),
        seed,
    })
}

// ---------------------------------------------------------------------------
// file formats

fn format_err(what: &'static str, message: impl Into<String>) -> Error {
    Error::Format { what, message: message.into() }
}

/// Parses binary PGM (`P5`, maxval < 256).
pub fn decode_pgm(bytes: &[u8]) -> Result<RawImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("pgm", "truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| format_err("pgm", "non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(format_err("pgm", format!("expected P5 magic, found {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format_err("pgm", format!("bad header number `{s}`")));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(format_err("pgm", format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..pos + w * h).ok_or_else(|| format_err("pgm", "truncated raster"))?;
    Ok(RawImage { width: w, height: h, pixels: raster.iter().map(|&b| b as f64).collect() })
}

/// Encodes as binary PGM, rounding to the nearest 8-bit level.
pub fn encode_pgm<T: Scalar>(img: &Image<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|p| p.as_f64().round().clamp(0.0, 255.0) as u8));
    out
}

/// Reads an 8-bit grayscale PNG or a binary PGM, chosen by content.
pub fn read_raw_image(path: &Path) -> Result<RawImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes);
    }
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Decode { path: path.to_path_buf(), cause: e })?;
    let gray = img.to_luma8();
    Ok(RawImage {
        width: gray.width() as usize,
        height: gray.height() as usize,
        pixels: gray.into_raw().into_iter().map(f64::from).collect(),
    })
}

/// Reads one image without corpus preprocessing; intensities must already be in range.
pub fn read_image<T: Scalar>(path: &Path) -> Result<Image<T>> {
    let raw = read_raw_image(path)?;
    Image::new(raw.width, raw.height, raw.pixels.iter().map(|&p| T::lit(p)).collect())
}

pub fn write_pgm<T: Scalar>(path: &Path, img: &Image<T>) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Writes PNG when the extension says so, binary PGM otherwise.
pub fn write_image<T: Scalar>(path: &Path, img: &Image<T>) -> Result<()> {
    let png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if !png {
        return write_pgm(path, img);
    }
    let bytes: Vec<u8> = img.pixels.iter().map(|p| p.as_f64().round().clamp(0.0, 255.0) as u8).collect();
    image::save_buffer(path, &bytes, img.width as u32, img.height as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::Decode { path: path.to_path_buf(), cause: e })
}

/// PNG and PGM files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Which split a manifest line belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format_err("manifest", format!("unknown split `{other}`"))),
        }
    }
}

/// `path<TAB>split` lines.
pub fn format_manifest(dataset: &Dataset<PathBuf>) -> String {
    let mut out = String::new();
    for (split, paths) in [
        (Split::Train, &dataset.train),
        (Split::Validation, &dataset.validation),
        (Split::Test, &dataset.test),
    ] {
        for p in paths {
            let _ = writeln!(out, "{}\t{}", p.display(), split.as_str());
        }
    }
    out
}

pub fn parse_manifest(text: &str, seed: u64) -> Result<Dataset<PathBuf>> {
    let mut ds = Dataset { train: vec![], validation: vec![], test: vec![], seed };
    for (no, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, split) = line
            .rsplit_once('\t')
            .ok_or_else(|| format_err("manifest", format!("line {}: expected `path<TAB>split`", no + 1)))?;
        let target = match split.trim().parse::<Split>()? {
            Split::Train => &mut ds.train,
            Split::Validation => &mut ds.validation,
            Split::Test => &mut ds.test,
        };
        target.push(PathBuf::from(path));
    }
    Ok(ds)
}
