//! Grayscale image container, PGM/PNG file I/O, and PSNR.
//!
//! Pixels are held as `f64` end to end: the denoising pipeline never
//! clips intermediate values (doing so would bias the risk estimates),
//! so quantization to the declared bit depth happens only when a file
//! is written.

use ndarray::Array2;
use std::fmt;
use std::path::Path;

/// Declared sample depth of an image file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    /// Largest representable intensity (the PSNR peak by default).
    pub fn peak(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Grayscale image with floating-point intensities, stored row-major as
/// a `(height, width)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array2<f64>,
    bit_depth: BitDepth,
}

impl Image {
    pub fn new(data: Array2<f64>, bit_depth: BitDepth) -> Self {
        Image { data, bit_depth }
    }

    /// Constant-valued image, mostly useful for tests and noisemaps.
    pub fn constant(height: usize, width: usize, value: f64, bit_depth: BitDepth) -> Self {
        Image::new(Array2::from_elem((height, width), value), bit_depth)
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn peak(&self) -> f64 {
        self.bit_depth.peak()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    /// Replaces the pixel grid, keeping the bit depth tag.
    pub fn with_data(&self, data: Array2<f64>) -> Self {
        Image::new(data, self.bit_depth)
    }
}

/// Errors from image I/O and comparisons.
#[derive(Debug)]
pub enum ImageError {
    IoFailure(String),
    UnsupportedFormat(String),
    CorruptHeader(String),
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

impl fmt::Display for ImageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageError::IoFailure(msg) => write!(f, "I/O failure: {msg}"),
            ImageError::UnsupportedFormat(msg) => write!(f, "unsupported format: {msg}"),
            ImageError::CorruptHeader(msg) => write!(f, "corrupt header: {msg}"),
            ImageError::ShapeMismatch { expected, got } => write!(
                f,
                "shape mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
        }
    }
}

impl std::error::Error for ImageError {}

// ============================================================================
// Reading
// ============================================================================

/// Reads a PGM (P2/P5, maxval 255 or 65535) or grayscale PNG (8/16-bit)
/// file. The format is detected from the file content.
pub fn read_image(path: &Path) -> Result<Image, ImageError> {
    let bytes = std::fs::read(path).map_err(|e| ImageError::IoFailure(format!("{path:?}: {e}")))?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(&bytes)
    } else {
        parse_png(&bytes)
    }
}

/// Cursor over the PGM header: skips whitespace and `#` comments.
struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn next_number(&mut self) -> Result<u64, ImageError> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(ImageError::CorruptHeader(
                "expected an unsigned integer".to_string(),
            ));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::CorruptHeader("unreadable integer".to_string()))
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<Image, ImageError> {
    let binary = bytes.starts_with(b"P5");
    let mut cursor = PgmCursor { bytes, pos: 2 };
    let width = cursor.next_number()? as usize;
    let height = cursor.next_number()? as usize;
    let maxval = cursor.next_number()?;
    if width == 0 || height == 0 {
        return Err(ImageError::CorruptHeader("zero image dimension".to_string()));
    }
    let bit_depth = match maxval {
        255 => BitDepth::Eight,
        65535 => BitDepth::Sixteen,
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "PGM maxval {other} (only 255 and 65535 are supported)"
            )))
        }
    };
    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let data_start = cursor.pos + 1;
        let sample_bytes = if maxval > 255 { 2 } else { 1 };
        let needed = count * sample_bytes;
        if bytes.len() < data_start + needed {
            return Err(ImageError::CorruptHeader(format!(
                "raster truncated: need {needed} bytes"
            )));
        }
        let raster = &bytes[data_start..data_start + needed];
        if sample_bytes == 1 {
            pixels.extend(raster.iter().map(|&b| f64::from(b)));
        } else {
            // 16-bit PGM samples are big-endian.
            pixels.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]]))),
            );
        }
    } else {
        for _ in 0..count {
            let v = cursor.next_number()?;
            if v > maxval {
                return Err(ImageError::CorruptHeader(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            pixels.push(v as f64);
        }
    }
    let data = Array2::from_shape_vec((height, width), pixels)
        .map_err(|e| ImageError::CorruptHeader(e.to_string()))?;
    Ok(Image::new(data, bit_depth))
}

fn parse_png(bytes: &[u8]) -> Result<Image, ImageError> {
    let decoded = image::load_from_memory(bytes)
        .map_err(|e| ImageError::UnsupportedFormat(e.to_string()))?;
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let pixels: Vec<f64> = buf.into_raw().into_iter().map(f64::from).collect();
            let data = Array2::from_shape_vec((h, w), pixels)
                .map_err(|e| ImageError::CorruptHeader(e.to_string()))?;
            Ok(Image::new(data, BitDepth::Eight))
        }
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let pixels: Vec<f64> = buf.into_raw().into_iter().map(f64::from).collect();
            let data = Array2::from_shape_vec((h, w), pixels)
                .map_err(|e| ImageError::CorruptHeader(e.to_string()))?;
            Ok(Image::new(data, BitDepth::Sixteen))
        }
        other => Err(ImageError::UnsupportedFormat(format!(
            "PNG color type {:?} (grayscale only)",
            other.color()
        ))),
    }
}

// ============================================================================
// Writing
// ============================================================================

/// Writes an image as binary PGM (`.pgm`) or PNG (`.png`), chosen by the
/// file extension. Values are rounded and clipped to the bit depth here
/// and nowhere else.
pub fn write_image(image: &Image, path: &Path) -> Result<(), ImageError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => write_pgm(image, path),
        "png" => write_png(image, path),
        other => Err(ImageError::UnsupportedFormat(format!(
            "output extension {other:?} (use .pgm or .png)"
        ))),
    }
}

fn quantize(value: f64, peak: f64) -> u64 {
    value.round().clamp(0.0, peak) as u64
}

fn write_pgm(image: &Image, path: &Path) -> Result<(), ImageError> {
    let peak = image.peak();
    let header = format!(
        "P5\n{} {}\n{}\n",
        image.width(),
        image.height(),
        peak as u64
    );
    let mut out = header.into_bytes();
    match image.bit_depth() {
        BitDepth::Eight => {
            out.extend(image.data().iter().map(|&v| quantize(v, peak) as u8));
        }
        BitDepth::Sixteen => {
            for &v in image.data().iter() {
                out.extend_from_slice(&(quantize(v, peak) as u16).to_be_bytes());
            }
        }
    }
    std::fs::write(path, out).map_err(|e| ImageError::IoFailure(format!("{path:?}: {e}")))
}

fn write_png(image: &Image, path: &Path) -> Result<(), ImageError> {
    let peak = image.peak();
    let (w, h) = (image.width() as u32, image.height() as u32);
    let dynamic = match image.bit_depth() {
        BitDepth::Eight => {
            let raw: Vec<u8> = image.data().iter().map(|&v| quantize(v, peak) as u8).collect();
            image::DynamicImage::ImageLuma8(
                image::ImageBuffer::from_raw(w, h, raw).expect("buffer sized to image"),
            )
        }
        BitDepth::Sixteen => {
            let raw: Vec<u16> = image.data().iter().map(|&v| quantize(v, peak) as u16).collect();
            image::DynamicImage::ImageLuma16(
                image::ImageBuffer::from_raw(w, h, raw).expect("buffer sized to image"),
            )
        }
    };
    dynamic
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ImageError::IoFailure(format!("{path:?}: {e}")))
}

// ============================================================================
// PSNR
// ============================================================================

/// Peak signal-to-noise ratio `10·log10(peak²/MSE)` in dB. Identical
/// images return `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64, ImageError> {
    if a.data().dim() != b.data().dim() {
        return Err(ImageError::ShapeMismatch {
            expected: a.data().dim(),
            got: b.data().dim(),
        });
    }
    let n = (a.height() * a.width()) as f64;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (peak * peak / mse).log10())
    }
}
