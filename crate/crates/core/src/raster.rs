//! Document loading (PDF, PNG, JPEG) and grayscale conversion.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::pdf;

pub const DEFAULT_DPI: u32 = 300;
pub const MIN_DPI: u32 = 72;
pub const MAX_DPI: u32 = 1_200;

const INCHES_PER_METER: f64 = 39.370_078_740_157_48;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("unreadable document {path}: {reason}")]
    UnreadableDocument { path: String, reason: String },
    #[error("document {0} has no pages")]
    EmptyDocument(String),
    #[error("page {index} requested but document has {count} pages")]
    PageOutOfRange { index: usize, count: usize },
    #[error("dpi {0} outside [72, 1200]")]
    InvalidDpi(u32),
    #[error("invalid page geometry: {0}")]
    InvalidGeometry(String),
    #[error("i/o error writing {path}: {reason}")]
    Write { path: String, reason: String },
}

/// RGB page, row-major, three bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterPage {
    width: usize,
    height: usize,
    dpi: u32,
    pixels: Vec<u8>,
}

impl RasterPage {
    pub fn new(width: usize, height: usize, dpi: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidGeometry(format!("{width}x{height}")));
        }
        if dpi < MIN_DPI {
            return Err(RasterError::InvalidDpi(dpi));
        }
        if pixels.len() != width * height * 3 {
            return Err(RasterError::InvalidGeometry(format!(
                "{} bytes for {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(RasterPage { width, height, dpi, pixels })
    }

    /// Uniformly colored page.
    pub fn filled(width: usize, height: usize, dpi: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        RasterPage::new(width, height, dpi.max(MIN_DPI), pixels).expect("nonzero page")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dpi(&self) -> u32 {
        self.dpi
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Writes an 8-bit RGB PNG carrying the page DPI in its pHYs chunk.
    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let werr = |e: &dyn std::fmt::Display| RasterError::Write {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        let file = File::create(path).map_err(|e| werr(&e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let ppm = (self.dpi as f64 * INCHES_PER_METER).round() as u32;
        encoder.set_pixel_dims(Some(png::PixelDimensions {
            xppu: ppm,
            yppu: ppm,
            unit: png::Unit::Meter,
        }));
        let mut writer = encoder.write_header().map_err(|e| werr(&e))?;
        writer.write_image_data(&self.pixels).map_err(|e| werr(&e))?;
        writer.finish().map_err(|e| werr(&e))
    }

    pub fn save_jpeg(&self, path: &Path, quality: u8) -> Result<(), RasterError> {
        let werr = |e: &dyn std::fmt::Display| RasterError::Write {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        let file = File::create(path).map_err(|e| werr(&e))?;
        let mut out = BufWriter::new(file);
        let mut encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality);
        encoder.set_pixel_density(image::codecs::jpeg::PixelDensity::dpi(self.dpi.min(u16::MAX as u32) as u16));
        encoder
            .encode(&self.pixels, self.width as u32, self.height as u32, image::ExtendedColorType::Rgb8)
            .map_err(|e| werr(&e))
    }
}

/// 8-bit luminance image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Self {
        assert_eq!(values.len(), width * height, "gray image size mismatch");
        GrayImage { width, height, values }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }
}

/// BT.601 luma, rounded and clamped.
pub fn luma(rgb: [u8; 3]) -> u8 {
    let y = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
    y.round().clamp(0.0, 255.0) as u8
}

pub fn to_gray(page: &RasterPage) -> GrayImage {
    let values = page
        .pixels
        .chunks_exact(3)
        .map(|p| luma([p[0], p[1], p[2]]))
        .collect();
    GrayImage::new(page.width, page.height, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Pdf,
    Png,
    Jpeg,
}

fn sniff(bytes: &[u8]) -> Option<Format> {
    if bytes.len() >= 5 && bytes.windows(5).take(1024).any(|w| w == b"%PDF-") {
        Some(Format::Pdf)
    } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        Some(Format::Png)
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        Some(Format::Jpeg)
    } else {
        None
    }
}

/// Loads the first page of `path` at `dpi`.
pub fn load_document(path: &Path, dpi: u32) -> Result<RasterPage, RasterError> {
    load_document_page(path, dpi, 0)
}

/// Loads page `page_index` (zero-based) of a PDF, or the single image of a PNG/JPEG.
///
/// Raster inputs keep their native resolution; their dpi comes from the file's
/// density metadata when present, otherwise from `dpi`.
pub fn load_document_page(path: &Path, dpi: u32, page_index: usize) -> Result<RasterPage, RasterError> {
    if !(MIN_DPI..=MAX_DPI).contains(&dpi) {
        return Err(RasterError::InvalidDpi(dpi));
    }
    let unreadable = |reason: String| RasterError::UnreadableDocument {
        path: path.display().to_string(),
        reason,
    };
    let bytes = std::fs::read(path).map_err(|e| unreadable(e.to_string()))?;
    match sniff(&bytes) {
        Some(Format::Pdf) => {
            let doc = pdf::Document::parse(&bytes).map_err(|e| unreadable(e.to_string()))?;
            let count = doc.page_count();
            if count == 0 {
                return Err(RasterError::EmptyDocument(path.display().to_string()));
            }
            if page_index >= count {
                return Err(RasterError::PageOutOfRange { index: page_index, count });
            }
            let scene = doc.page_scene(page_index).map_err(|e| unreadable(e.to_string()))?;
            Ok(scene.rasterize(dpi))
        }
        Some(Format::Png) => {
            if page_index != 0 {
                return Err(RasterError::PageOutOfRange { index: page_index, count: 1 });
            }
            let meta_dpi = png_dpi(path).filter(|d| (MIN_DPI..=MAX_DPI).contains(d));
            decode_image(&bytes, meta_dpi.unwrap_or(dpi)).map_err(unreadable)
        }
        Some(Format::Jpeg) => {
            if page_index != 0 {
                return Err(RasterError::PageOutOfRange { index: page_index, count: 1 });
            }
            let meta_dpi = jpeg_dpi(&bytes).filter(|d| (MIN_DPI..=MAX_DPI).contains(d));
            decode_image(&bytes, meta_dpi.unwrap_or(dpi)).map_err(unreadable)
        }
        None => Err(unreadable("not a PDF, PNG or JPEG file".into())),
    }
}

pub(crate) fn decode_image(bytes: &[u8], dpi: u32) -> Result<RasterPage, String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    RasterPage::new(w as usize, h as usize, dpi, rgb.into_raw()).map_err(|e| e.to_string())
}

fn png_dpi(path: &Path) -> Option<u32> {
    let file = File::open(path).ok()?;
    let reader = png::Decoder::new(BufReader::new(file)).read_info().ok()?;
    let dims = reader.info().pixel_dims?;
    (dims.unit == png::Unit::Meter && dims.xppu > 0).then(|| (dims.xppu as f64 / INCHES_PER_METER).round() as u32)
}

/// Density from a JFIF APP0 segment, if it is expressed in dots per inch or per cm.
fn jpeg_dpi(bytes: &[u8]) -> Option<u32> {
    let app0 = bytes.get(2..4)?;
    if app0 != [0xFF, 0xE0] || bytes.get(6..11)? != b"JFIF\0" {
        return None;
    }
    let units = *bytes.get(13)?;
    let x = u16::from_be_bytes([*bytes.get(14)?, *bytes.get(15)?]) as f64;
    match units {
        1 => Some(x as u32),
        2 => Some((x * 2.54).round() as u32),
        _ => None,
    }
}
