//! Grayscale image files, masks, noise injection and λ-map heatmaps.
//!
//! Binary PGM (`P5`) is the canonical format: written byte-exactly and read
//! back losslessly. ASCII PGM (`P2`) and single-channel PNG are accepted on
//! input. Intensities are normalized to `[0, 1]` by dividing by the maxval.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, Mask};
use crate::lambda::{LambdaBounds, LambdaMap};

/// Integer samples as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    /// Largest representable sample (255 for 8-bit, 65535 for 16-bit).
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 || samples.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} image with {} samples",
                samples.len()
            )));
        }
        if maxval == 0 {
            return Err(Error::UnsupportedFormat("maxval 0".into()));
        }
        if let Some(s) = samples.iter().find(|&&s| s > maxval) {
            return Err(Error::UnsupportedFormat(format!("sample {s} exceeds maxval {maxval}")));
        }
        Ok(Self { width, height, maxval, samples })
    }

    /// Bits per sample on disk.
    pub fn depth(&self) -> u8 {
        if self.maxval < 256 {
            8
        } else {
            16
        }
    }

    pub fn to_grid(&self) -> ImageGrid {
        let scale = f64::from(self.maxval);
        let data = self.samples.iter().map(|&s| f64::from(s) / scale).collect();
        ImageGrid::new(self.height, self.width, data).expect("validated dimensions")
    }

    /// 8-bit quantization of a `[0, 1]` field, rounding half away from zero.
    pub fn from_unit_grid(g: &ImageGrid) -> Self {
        let samples = g.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u16).collect();
        Self { width: g.cols(), height: g.rows(), maxval: 255, samples }
    }
}

/// Encode as binary PGM: `P5\n<w> <h>\n<maxval>\n` followed by row-major
/// samples (one byte each, or two bytes big-endian when maxval > 255).
pub fn encode_pgm(img: &RawImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.depth() == 8 {
        out.extend(img.samples.iter().map(|&s| s as u8));
    } else {
        for &s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&str> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            None
        } else {
            std::str::from_utf8(&self.bytes[start..self.pos]).ok()
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        let tok = self.token().ok_or_else(|| format!("missing {what}"))?;
        tok.parse().map_err(|_| format!("bad {what} {tok:?}"))
    }
}

/// Decode a `P5` or `P2` graymap. Colour Netpbm variants are rejected.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<RawImage, Error> {
    let fail = |msg: String| Error::Parse { path: "<pgm>".into(), msg };
    let mut h = HeaderReader { bytes, pos: 0 };
    let magic = h.token().unwrap_or_default().to_owned();
    match magic.as_str() {
        "P5" | "P2" => {}
        "P3" | "P6" => {
            return Err(Error::UnsupportedFormat(
                "colour PPM input; only single-channel images are supported".into(),
            ))
        }
        other => return Err(fail(format!("not a PGM file (magic {other:?})"))),
    }
    let width = h.number("width").map_err(fail)?;
    let height = h.number("height").map_err(fail)?;
    let maxval = h.number("maxval").map_err(fail)?;
    if maxval == 0 || maxval > 65535 {
        return Err(fail(format!("maxval {maxval} out of range")));
    }
    let count = width
        .checked_mul(height)
        .filter(|&c| c > 0)
        .ok_or_else(|| fail(format!("bad dimensions {width}x{height}")))?;
    let samples = if magic == "P5" {
        // exactly one whitespace byte separates the header from the raster
        let start = h.pos + 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(start..start + need)
            .ok_or_else(|| fail(format!("truncated raster: need {need} bytes")))?;
        if wide {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            raster.iter().map(|&b| u16::from(b)).collect()
        }
    } else {
        (0..count)
            .map(|_| h.number("sample").map(|v| v as u16).map_err(fail))
            .collect::<Result<Vec<_>>>()?
    };
    RawImage::new(width, height, maxval as u16, samples).map_err(|e| fail(e.to_string()))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P") {
        return decode_pgm(&bytes).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { path: path.to_owned(), msg },
            other => other,
        });
    }
    decode_other(path, &bytes)
}

fn decode_other(path: &Path, bytes: &[u8]) -> Result<RawImage> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::Parse { path: path.to_owned(), msg: e.to_string() })?;
    use image::ColorType;
    match img.color() {
        ColorType::L8 => {
            let g = img.into_luma8();
            let (w, h) = g.dimensions();
            RawImage::new(w as usize, h as usize, 255, g.into_raw().into_iter().map(u16::from).collect())
        }
        ColorType::L16 => {
            let g = img.into_luma16();
            let (w, h) = g.dimensions();
            RawImage::new(w as usize, h as usize, 65535, g.into_raw())
        }
        other => Err(Error::UnsupportedFormat(format!(
            "{}: {other:?} input; only single-channel images are supported",
            path.display()
        ))),
    }
}

pub fn write_raw(img: &RawImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_pgm(img)).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Load a grayscale image normalized to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    Ok(read_raw(path)?.to_grid())
}

/// Save a `[0, 1]` field as an 8-bit PGM.
pub fn save_image(g: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    write_raw(&RawImage::from_unit_grid(g), path)
}

/// Foreground 255, background 0.
pub fn mask_to_raw(mask: &Mask) -> RawImage {
    let samples = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    RawImage { width: mask.cols(), height: mask.rows(), maxval: 255, samples }
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_raw(&mask_to_raw(mask), path)
}

/// Any sample above half the maxval counts as foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let raw = read_raw(path)?;
    let half = raw.maxval / 2;
    Mask::new(raw.height, raw.width, raw.samples.iter().map(|&s| s > half).collect())
}

/// `clamp(u + η, 0, 1)` with `η ~ N(0, (σ/255)²)` i.i.d. from a seeded
/// ChaCha8 stream; `sigma_255` is on the 0–255 intensity scale.
pub fn add_gaussian_noise(u: &ImageGrid, sigma_255: f64, seed: u64) -> Result<ImageGrid> {
    if !(sigma_255 >= 0.0 && sigma_255.is_finite()) {
        return Err(Error::param(format!("noise sigma must be nonnegative, got {sigma_255}")));
    }
    if sigma_255 == 0.0 {
        return Ok(u.clone());
    }
    let normal = Normal::new(0.0, sigma_255 / 255.0).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = u.iter().map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0)).collect();
    ImageGrid::new(u.rows(), u.cols(), data)
}

/// 8-bit heatmap of `(λ − λ_min)/(λ_max − λ_min)`, rounding half away from zero.
pub fn lambda_heatmap(lam: &LambdaMap, bounds: LambdaBounds) -> RawImage {
    RawImage::from_unit_grid(&lam.normalized(bounds))
}

pub fn save_lambda_heatmap(lam: &LambdaMap, bounds: LambdaBounds, path: impl AsRef<Path>) -> Result<()> {
    write_raw(&lambda_heatmap(lam, bounds), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normalization_endpoints() {
        let raw = RawImage::new(3, 1, 255, vec![0, 128, 255]).unwrap();
        let g = raw.to_grid();
        assert_eq!(g.get(0, 0), 0.0);
        assert_abs_diff_eq!(g.get(0, 1), 0.50196, epsilon = 1e-5);
        assert_eq!(g.get(0, 1), 128.0 / 255.0);
        assert_eq!(g.get(0, 2), 1.0);
    }

    #[test]
    fn pgm_header_layout() {
        let raw = RawImage::new(2, 2, 255, vec![255, 0, 0, 255]).unwrap();
        assert_eq!(encode_pgm(&raw), b"P5\n2 2\n255\n\xff\x00\x00\xff".to_vec());
    }

    #[test]
    fn decodes_comments_ascii_and_sixteen_bit() {
        let p2 = b"P2\n# made by hand\n3 1\n# max\n15\n0 7 15\n";
        let raw = decode_pgm(p2).unwrap();
        assert_eq!(raw.samples, vec![0, 7, 15]);
        assert_eq!(raw.to_grid().get(0, 2), 1.0);

        let wide = RawImage::new(2, 1, 65535, vec![1, 65535]).unwrap();
        assert_eq!(wide.depth(), 16);
        assert_eq!(decode_pgm(&encode_pgm(&wide)).unwrap(), wide);
    }

    #[test]
    fn rejects_colour_and_garbage() {
        assert!(matches!(decode_pgm(b"P6\n1 1\n255\n\0\0\0"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_pgm(b"P5\n4 4\n255\n\0\0"), Err(Error::Parse { .. })));
        assert!(decode_pgm(b"hello").is_err());
    }

    #[test]
    fn mask_mapping() {
        let m = Mask::new(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(mask_to_raw(&m).samples, vec![255, 0, 0, 255]);
        let all = Mask::from_fn(3, 2, |_, _| true);
        assert!(mask_to_raw(&all).samples.iter().all(|&s| s == 255));
    }

    #[test]
    fn noise_contract() {
        let u = ImageGrid::filled(4, 4, 0.3);
        assert_eq!(add_gaussian_noise(&u, 0.0, 9).unwrap(), u);
        assert_eq!(add_gaussian_noise(&u, 15.0, 9).unwrap(), add_gaussian_noise(&u, 15.0, 9).unwrap());
        assert_ne!(add_gaussian_noise(&u, 15.0, 9).unwrap(), add_gaussian_noise(&u, 15.0, 10).unwrap());
        assert!(add_gaussian_noise(&u, -1.0, 0).is_err());
        assert!(add_gaussian_noise(&u, 25.0, 3).unwrap().is_unit_range());
    }

    #[test]
    fn noise_moments() {
        let u = ImageGrid::filled(128, 128, 0.5);
        let noisy = add_gaussian_noise(&u, 15.0, 2024).unwrap();
        let n = noisy.len() as f64;
        let mean = noisy.mean();
        let sd = (noisy.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let target = 15.0 / 255.0;
        assert!((sd - target).abs() <= 0.05 * target, "sd = {sd}");
        // mean shift within three standard errors
        assert!((mean - 0.5).abs() < 3.0 * target / n.sqrt(), "mean = {mean}");
    }

    #[test]
    fn heatmap_levels() {
        let bounds = LambdaBounds::new(170.0, 800.0).unwrap();
        let lo = LambdaMap::uniform(2, 2, 170.0).unwrap();
        let hi = LambdaMap::uniform(2, 2, 800.0).unwrap();
        let mid = LambdaMap::uniform(2, 2, 485.0).unwrap();
        assert!(lambda_heatmap(&lo, bounds).samples.iter().all(|&s| s == 0));
        assert!(lambda_heatmap(&hi, bounds).samples.iter().all(|&s| s == 255));
        // 127.5 rounds half away from zero
        assert!(lambda_heatmap(&mid, bounds).samples.iter().all(|&s| s == 128));
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.pgm");
        let raw = RawImage::new(3, 2, 255, vec![0, 1, 2, 128, 254, 255]).unwrap();
        write_raw(&raw, &p).unwrap();
        assert_eq!(read_raw(&p).unwrap(), raw);
        assert!(matches!(load_image(dir.path().join("missing.pgm")), Err(Error::Io { .. })));
        assert!(save_mask(&Mask::from_fn(1, 1, |_, _| true), dir.path().join("no/such/dir.pgm")).is_err());
    }

    #[test]
    fn png_input_is_accepted_and_colour_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let gray = dir.path().join("g.png");
        image::GrayImage::from_raw(2, 1, vec![0, 255]).unwrap().save(&gray).unwrap();
        assert_eq!(load_image(&gray).unwrap().as_slice(), &[0.0, 1.0]);
        let rgb = dir.path().join("c.png");
        image::RgbImage::from_raw(1, 1, vec![1, 2, 3]).unwrap().save(&rgb).unwrap();
        assert!(matches!(load_image(&rgb), Err(Error::UnsupportedFormat(_))));
    }

    proptest! {
        #[test]
        fn pgm_and_mask_round_trip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = RawImage::new(w, h, 255, (0..w * h).map(|_| rng.random_range(0..=255u16)).collect()).unwrap();
            prop_assert_eq!(decode_pgm(&encode_pgm(&raw)).unwrap(), raw.clone());
            prop_assert_eq!(RawImage::from_unit_grid(&raw.to_grid()), raw);

            let mask = Mask::from_fn(h, w, |_, _| rng.random_bool(0.5));
            let back = decode_pgm(&encode_pgm(&mask_to_raw(&mask))).unwrap();
            let back = Mask::new(h, w, back.samples.iter().map(|&s| s > 127).collect()).unwrap();
            prop_assert_eq!(back, mask);
        }
    }
}
