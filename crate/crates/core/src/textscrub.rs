//! Printed-text detection and removal.
//!
//! Detected boxes are blanked with the mean colour of the pixels surrounding
//! them, and whatever text was recognized is kept as page metadata.

use std::fmt;
use std::io::Write as _;
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::components;
use crate::raster::{to_gray, RasterPage};
use crate::tracefind::{binarize, detect_bands, otsu_threshold, BandConfig, BandCount, TraceBand};

pub const OCR_CMD_ENV: &str = "ECGTIZE_OCR_CMD";

/// Pixel bounding box with exclusive `x1`/`y1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TextBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub text: String,
    pub confidence: f64,
}

impl TextBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn intersects_band(&self, band: &TraceBand) -> bool {
        band.intersects(self.x0, self.y0, self.x1, self.y1)
    }

    pub fn iou(&self, other: &TextBox) -> f64 {
        let ix = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let iy = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        let inter = (ix * iy) as f64;
        let union = (self.width() * self.height() + other.width() * other.height()) as f64 - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataEntry {
    pub text: String,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Recognized page text in detection order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageMetadata {
    pub entries: Vec<MetadataEntry>,
}

impl PageMetadata {
    pub fn from_boxes(boxes: &[TextBox]) -> Self {
        let entries = boxes
            .iter()
            .filter(|b| !b.text.is_empty())
            .map(|b| MetadataEntry {
                text: b.text.clone(),
                x0: b.x0,
                y0: b.y0,
                x1: b.x1,
                y1: b.y1,
            })
            .collect();
        PageMetadata { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn strings(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.text.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("external OCR requested but {0}")]
    OcrUnavailable(String),
    #[error("OCR command failed: {0}")]
    OcrFailed(String),
    #[error("malformed OCR output line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcrMode {
    Off,
    #[default]
    Heuristic,
    External,
}

impl fmt::Display for OcrMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OcrMode::Off => "off",
            OcrMode::Heuristic => "heuristic",
            OcrMode::External => "external",
        })
    }
}

impl FromStr for OcrMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(OcrMode::Off),
            "heuristic" => Ok(OcrMode::Heuristic),
            "external" => Ok(OcrMode::External),
            other => Err(format!("unknown OCR mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcrConfig {
    pub mode: OcrMode,
    /// Executable plus leading arguments; the PNG path is appended.
    pub command: Option<String>,
    /// Components at least this tall (fraction of page height) are not glyphs.
    pub glyph_height_fraction: f64,
}

impl Default for OcrConfig {
    fn default() -> Self {
        OcrConfig {
            mode: OcrMode::Heuristic,
            command: None,
            glyph_height_fraction: 0.012,
        }
    }
}

impl OcrConfig {
    /// Command from the config, else from `ECGTIZE_OCR_CMD`.
    pub fn resolved_command(&self) -> Option<String> {
        self.command
            .clone()
            .or_else(|| std::env::var(OCR_CMD_ENV).ok())
            .filter(|c| !c.trim().is_empty())
    }
}

pub fn detect_text(page: &RasterPage, cfg: &OcrConfig) -> Result<Vec<TextBox>, TextError> {
    match cfg.mode {
        OcrMode::Off => Ok(Vec::new()),
        OcrMode::Heuristic => {
            let bands = provisional_bands(page);
            Ok(detect_text_heuristic(page, &bands, cfg.glyph_height_fraction))
        }
        OcrMode::External => {
            let cmd = cfg
                .resolved_command()
                .ok_or_else(|| TextError::OcrUnavailable(format!("no command configured (set --ocr-cmd or {OCR_CMD_ENV})")))?;
            run_external_ocr(page, &cmd)
        }
    }
}

/// Trace bands from a quick binarize-and-profile pass; empty when none are found.
pub fn provisional_bands(page: &RasterPage) -> Vec<TraceBand> {
    let gray = to_gray(page);
    let bin = binarize(&gray, otsu_threshold(&gray));
    detect_bands(&bin, BandCount::Auto, &BandConfig::default()).unwrap_or_default()
}

/// Glyph-sized dark components outside `bands`, merged into word boxes.
pub fn detect_text_heuristic(page: &RasterPage, bands: &[TraceBand], glyph_height_fraction: f64) -> Vec<TextBox> {
    let gray = to_gray(page);
    let bin = binarize(&gray, otsu_threshold(&gray));
    let (w, h) = (bin.width, bin.height);
    let ceiling = glyph_height_fraction * h as f64;
    let (_, comps) = components::label(&bin.ink_mask(), w, h);
    let mut glyphs: Vec<TextBox> = comps
        .into_iter()
        .filter(|c| (c.height() as f64) < ceiling && (c.width() as f64) < 2.0 * ceiling && c.pixels >= 4)
        .map(|c| TextBox {
            x0: c.x0,
            y0: c.y0,
            x1: c.x1,
            y1: c.y1,
            text: String::new(),
            confidence: 0.5,
        })
        .collect();
    glyphs.sort_by_key(|g| (g.x0, g.y0));

    // Greedy left-to-right merge of glyphs that share a line and sit close together.
    let mut words: Vec<TextBox> = Vec::new();
    for g in glyphs {
        let joined = words.iter_mut().rev().find(|word| {
            let overlap = word.y1.min(g.y1).saturating_sub(word.y0.max(g.y0));
            let line_h = word.height().min(g.height()).max(1);
            let gap = g.x0.saturating_sub(word.x1);
            overlap * 2 >= line_h && (gap as f64) <= 0.6 * word.height().max(g.height()) as f64
        });
        match joined {
            Some(word) => {
                word.x0 = word.x0.min(g.x0);
                word.y0 = word.y0.min(g.y0);
                word.x1 = word.x1.max(g.x1);
                word.y1 = word.y1.max(g.y1);
            }
            None => words.push(g),
        }
    }
    words.retain(|b| (b.height() as f64) < ceiling && !bands.iter().any(|band| b.intersects_band(band)));
    words.sort_by_key(|b| (b.y0, b.x0));
    words
}

/// Writes the page as PNG, runs `command <png>` and parses its stdout.
pub fn run_external_ocr(page: &RasterPage, command: &str) -> Result<Vec<TextBox>, TextError> {
    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or_else(|| TextError::OcrUnavailable("empty OCR command".into()))?;
    let mut tmp = tempfile::Builder::new()
        .prefix("ecgtize-ocr-")
        .suffix(".png")
        .tempfile()
        .map_err(|e| TextError::OcrFailed(format!("temp file: {e}")))?;
    page.save_png(tmp.path())
        .map_err(|e| TextError::OcrFailed(e.to_string()))?;
    tmp.flush().ok();
    let output = Command::new(program)
        .args(parts)
        .arg(tmp.path())
        .output()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                TextError::OcrUnavailable(format!("{program}: {e}"))
            }
            _ => TextError::OcrFailed(format!("{program}: {e}")),
        })?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(TextError::OcrFailed(format!("{program} exited with {}: {}", output.status, stderr.trim())));
    }
    parse_ocr_output(&String::from_utf8_lossy(&output.stdout), page.width(), page.height())
}

/// Parses `x0 y0 x1 y1 confidence text...` lines. Boxes are clipped to the
/// page; boxes that end up empty are dropped. Confidences above 1 are read as percentages.
pub fn parse_ocr_output(text: &str, width: usize, height: usize) -> Result<Vec<TextBox>, TextError> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| TextError::MalformedLine { line: i + 1, reason };
        let mut fields = line.splitn(6, char::is_whitespace).filter(|s| !s.is_empty());
        let mut nums = [0.0f64; 5];
        for (k, slot) in nums.iter_mut().enumerate() {
            let tok = fields.next().ok_or_else(|| bad(format!("expected 5 numeric fields, got {k}")))?;
            *slot = tok.parse().map_err(|_| bad(format!("not a number: {tok:?}")))?;
            if !slot.is_finite() {
                return Err(bad(format!("not finite: {tok:?}")));
            }
        }
        let words = fields.next().unwrap_or("").trim().to_string();
        let clip = |v: f64, max: usize| v.clamp(0.0, max as f64);
        let x0 = clip(nums[0].floor(), width) as usize;
        let y0 = clip(nums[1].floor(), height) as usize;
        let x1 = clip(nums[2].ceil(), width) as usize;
        let y1 = clip(nums[3].ceil(), height) as usize;
        if x0 >= x1 || y0 >= y1 {
            log::debug!("dropping empty OCR box on line {}", i + 1);
            continue;
        }
        let mut confidence = nums[4];
        if confidence > 1.0 {
            confidence /= 100.0;
        }
        boxes.push(TextBox {
            x0,
            y0,
            x1,
            y1,
            text: words,
            confidence: confidence.clamp(0.0, 1.0),
        });
    }
    Ok(boxes)
}

/// Replaces each box interior, per channel, with the rounded mean of its
/// one-pixel border ring. Ring pixels covered by any box are skipped (the ring
/// grows outward until it finds uncovered pixels), so the result depends only
/// on pixels scrub never touches and a second application changes nothing.
pub fn scrub(page: &RasterPage, boxes: &[TextBox]) -> (RasterPage, PageMetadata) {
    let metadata = PageMetadata::from_boxes(boxes);
    if boxes.is_empty() {
        return (page.clone(), metadata);
    }
    let (w, h) = (page.width(), page.height());
    let mut covered = vec![false; w * h];
    for b in boxes {
        for y in b.y0..b.y1.min(h) {
            covered[y * w + b.x0.min(w)..y * w + b.x1.min(w)].fill(true);
        }
    }
    let mut out = page.clone();
    for b in boxes {
        let Some(fill) = ring_mean(page, &covered, b) else {
            continue;
        };
        for y in b.y0..b.y1.min(h) {
            for x in b.x0..b.x1.min(w) {
                out.set(x, y, fill);
            }
        }
    }
    (out, metadata)
}

fn ring_mean(page: &RasterPage, covered: &[bool], b: &TextBox) -> Option<[u8; 3]> {
    let (w, h) = (page.width() as i64, page.height() as i64);
    let (x0, y0, x1, y1) = (b.x0 as i64, b.y0 as i64, b.x1 as i64, b.y1 as i64);
    let max_d = w.max(h);
    for d in 1..=max_d {
        let mut sum = [0u64; 3];
        let mut n = 0u64;
        let mut visit = |x: i64, y: i64| {
            if x < 0 || y < 0 || x >= w || y >= h || covered[(y * w + x) as usize] {
                return;
            }
            let p = page.get(x as usize, y as usize);
            for c in 0..3 {
                sum[c] += p[c] as u64;
            }
            n += 1;
        };
        for x in x0 - d..x1 + d {
            visit(x, y0 - d);
            visit(x, y1 - 1 + d);
        }
        for y in y0 - d + 1..y1 - 1 + d {
            visit(x0 - d, y);
            visit(x1 - 1 + d, y);
        }
        if n > 0 {
            return Some(sum.map(|s| ((s as f64) / (n as f64)).round() as u8));
        }
        if x0 - d < 0 && y0 - d < 0 && x1 - 1 + d >= w && y1 - 1 + d >= h {
            break;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tb(x0: usize, y0: usize, x1: usize, y1: usize, text: &str) -> TextBox {
        TextBox {
            x0,
            y0,
            x1,
            y1,
            text: text.into(),
            confidence: 1.0,
        }
    }

    #[test]
    fn blank_page_has_no_text() {
        let page = RasterPage::filled(200, 150, 300, [255; 3]);
        assert!(detect_text(&page, &OcrConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn horizontal_line_is_not_text() {
        let mut page = RasterPage::filled(400, 300, 300, [255; 3]);
        for x in 20..380 {
            page.set(x, 150, [0; 3]);
            page.set(x, 151, [0; 3]);
        }
        assert!(detect_text_heuristic(&page, &[], 0.05).is_empty());
    }

    #[test]
    fn nearby_glyphs_merge_into_one_word() {
        let mut page = RasterPage::filled(400, 300, 300, [255; 3]);
        for (gx, gw) in [(100, 6), (110, 3), (118, 5)] {
            for y in 50..60 {
                for x in gx..gx + gw {
                    page.set(x, y, [0; 3]);
                }
            }
        }
        for y in 200..210 {
            for x in 300..306 {
                page.set(x, y, [0; 3]);
            }
        }
        let boxes = detect_text_heuristic(&page, &[], 0.05);
        assert_eq!(boxes.len(), 2);
        assert_eq!((boxes[0].x0, boxes[0].y0, boxes[0].x1, boxes[0].y1), (100, 50, 123, 60));
        let band = TraceBand { row_start: 195, row_end: 220, col_start: 0, col_end: 400 };
        assert_eq!(detect_text_heuristic(&page, &[band], 0.05).len(), 1);
    }

    #[test]
    fn empty_box_list_is_identity() {
        let mut page = RasterPage::filled(10, 10, 72, [9, 8, 7]);
        page.set(3, 3, [1, 2, 3]);
        let (out, meta) = scrub(&page, &[]);
        assert_eq!(out, page);
        assert!(meta.is_empty());
    }

    #[test]
    fn uniform_ring_fills_interior() {
        let mut page = RasterPage::filled(12, 12, 72, [255; 3]);
        for y in 4..8 {
            for x in 4..8 {
                page.set(x, y, [0; 3]);
            }
        }
        let (out, meta) = scrub(&page, &[tb(4, 4, 8, 8, "Name")]);
        assert!(out.pixels().iter().all(|&v| v == 255));
        assert_eq!(meta.strings().collect::<Vec<_>>(), vec!["Name"]);
    }

    #[test]
    fn mixed_ring_takes_channel_mean() {
        // 2x2 box at (2,2); its ring has 12 pixels. Blacken the 6 ring pixels with x < 3.
        let mut page = RasterPage::filled(8, 8, 72, [255; 3]);
        let ring: Vec<(usize, usize)> = (1..5)
            .flat_map(|y| (1..5).map(move |x| (x, y)))
            .filter(|&(x, y)| !(2..4).contains(&x) || !(2..4).contains(&y))
            .collect();
        assert_eq!(ring.len(), 12);
        let black: Vec<_> = ring.iter().filter(|&&(x, _)| x < 3).copied().collect();
        assert_eq!(black.len(), 6);
        for &(x, y) in &black {
            page.set(x, y, [0; 3]);
        }
        let (out, _) = scrub(&page, &[tb(2, 2, 4, 4, "")]);
        let expected = (255.0 * (12 - black.len()) as f64 / 12.0).round() as u8;
        assert_eq!(expected, 128);
        assert_eq!(out.get(2, 2), [expected; 3]);
        assert_eq!(out.get(3, 3), [expected; 3]);
        assert_eq!(out.get(1, 1), [0; 3]);
    }

    #[test]
    fn overlapping_boxes_scrub_idempotently() {
        let mut page = RasterPage::filled(30, 20, 72, [200, 100, 50]);
        for x in 0..30 {
            page.set(x, 10, [(x * 8) as u8, 0, 255]);
        }
        let boxes = [tb(5, 8, 12, 13, "a"), tb(10, 9, 20, 12, "b"), tb(0, 0, 3, 3, "c")];
        let (once, _) = scrub(&page, &boxes);
        let (twice, _) = scrub(&once, &boxes);
        assert_eq!(once, twice);
        for y in 0..20 {
            for x in 0..30 {
                let inside = boxes.iter().any(|b| (b.x0..b.x1).contains(&x) && (b.y0..b.y1).contains(&y));
                if !inside {
                    assert_eq!(once.get(x, y), page.get(x, y));
                }
            }
        }
    }

    #[test]
    fn parses_ocr_lines() {
        let out = "10 20 50 40 0.93 John Smith\n\n# comment\n-5 0 12.4 3 87 DOB 01/02/1960\n5 5 5 9 1 empty\n";
        let boxes = parse_ocr_output(out, 100, 100).unwrap();
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0], tb(10, 20, 50, 40, "John Smith").with_conf(0.93));
        assert_eq!((boxes[1].x0, boxes[1].x1), (0, 13));
        assert!((boxes[1].confidence - 0.87).abs() < 1e-12);
        assert_eq!(boxes[1].text, "DOB 01/02/1960");
        assert!(matches!(
            parse_ocr_output("1 2 x 4 1 t", 10, 10),
            Err(TextError::MalformedLine { line: 1, .. })
        ));
    }

    impl TextBox {
        fn with_conf(mut self, c: f64) -> Self {
            self.confidence = c;
            self
        }
    }

    #[test]
    fn missing_external_tool_is_unavailable() {
        let page = RasterPage::filled(4, 4, 72, [255; 3]);
        let err = run_external_ocr(&page, "/nonexistent/ocr-tool --flag").unwrap_err();
        assert!(matches!(err, TextError::OcrUnavailable(_)));
    }

    #[cfg(unix)]
    #[test]
    fn external_tool_receives_png_path() {
        let page = RasterPage::filled(40, 30, 72, [255; 3]);
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("ocr.sh");
        std::fs::write(&script, "#!/bin/sh\ntest -s \"$1\" || exit 9\necho 1 2 10 8 0.5 Jane Doe\n").unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let got = run_external_ocr(&page, script.to_str().unwrap()).unwrap();
        assert_eq!(got, vec![tb(1, 2, 10, 8, "Jane Doe").with_conf(0.5)]);
    }
}
