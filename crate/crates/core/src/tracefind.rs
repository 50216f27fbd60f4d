//! Binarization and trace band detection.
//!
//! A page is thresholded with Otsu's method, then row and column ink profiles
//! locate the horizontal bands that each hold one drawn trace.

use std::cmp::Ordering;

use crate::components;
use crate::raster::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceFindError {
    #[error("no trace bands found on the page")]
    NoBandsFound,
    #[error("expected at least {expected} trace bands, found {found}")]
    BandCountMismatch { expected: usize, found: usize },
}

/// Thresholded page: `0` marks ink, `1` background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Self {
        assert_eq!(bits.len(), width * height, "binary image size mismatch");
        BinaryImage { width, height, bits }
    }

    /// Builds an image from rows of `'#'` (ink) and anything else (background).
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let bits = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), width, "ragged ascii image");
                r.bytes().map(|b| if b == b'#' { 0 } else { 1 })
            })
            .collect();
        BinaryImage::new(width, height, bits)
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x] == 0
    }

    pub fn ink_mask(&self) -> Vec<bool> {
        self.bits.iter().map(|&b| b == 0).collect()
    }

    /// Copy of the rectangle `[x0, x1) x [y0, y1)`.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryImage {
        let (w, h) = (x1 - x0, y1 - y0);
        let mut bits = Vec::with_capacity(w * h);
        for y in y0..y1 {
            bits.extend_from_slice(&self.bits[y * self.width + x0..y * self.width + x1]);
        }
        BinaryImage::new(w, h, bits)
    }

    pub fn band(&self, band: &TraceBand) -> BinaryImage {
        self.crop(band.col_start, band.row_start, band.col_end, band.row_end)
    }

    fn row_ink_counts(&self) -> Vec<usize> {
        self.bits
            .chunks_exact(self.width)
            .map(|row| row.iter().filter(|&&b| b == 0).count())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Columns,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    pub axis: Axis,
    pub values: Vec<f64>,
}

/// Row or column band of the page holding one trace. Row and column ends are exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceBand {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl TraceBand {
    pub fn height(&self) -> usize {
        self.row_end - self.row_start
    }

    pub fn width(&self) -> usize {
        self.col_end - self.col_start
    }

    pub fn intersects(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> bool {
        x0 < self.col_end && self.col_start < x1 && y0 < self.row_end && self.row_start < y1
    }
}

/// Otsu threshold over the 256-bin histogram; ties go to the smallest threshold.
///
/// Between-class variance for threshold `t` (class 0 is `v <= t`) is compared
/// exactly as the rational `(N*S0 - S*N0)^2 / (N0*N1)`.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &v in &img.values {
        hist[v as usize] += 1;
    }
    otsu_from_histogram(&hist)
}

pub fn otsu_from_histogram(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let sum_all: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();
    let mut best_t = 0u8;
    let mut best: (u128, u128) = (0, 1);
    let (mut n0, mut s0) = (0u64, 0u128);
    for t in 0..256usize {
        n0 += hist[t];
        s0 += t as u128 * hist[t] as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let a = total as u128 * s0;
        let b = sum_all * n0 as u128;
        let diff = a.abs_diff(b);
        let num = diff * diff;
        let den = n0 as u128 * n1 as u128;
        if cmp_fractions(num, den, best.0, best.1) == Ordering::Greater {
            best = (num, den);
            best_t = t as u8;
        }
    }
    best_t
}

/// Exact comparison of `a/b` with `c/d` for positive denominators.
fn cmp_fractions(mut a: u128, mut b: u128, mut c: u128, mut d: u128) -> Ordering {
    let mut flipped = false;
    loop {
        let (q1, q2) = (a / b, c / d);
        if q1 != q2 {
            let o = q1.cmp(&q2);
            return if flipped { o.reverse() } else { o };
        }
        let (r1, r2) = (a % b, c % d);
        let o = match (r1 == 0, r2 == 0) {
            (true, true) => return Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => {
                // Equal integer parts: compare r1/b with r2/d via the reciprocals b/r1 and d/r2.
                (a, b, c, d) = (b, r1, d, r2);
                flipped = !flipped;
                continue;
            }
        };
        return if flipped { o.reverse() } else { o };
    }
}

/// Ink (bit 0) where luminance is at or below `t`.
pub fn binarize(img: &GrayImage, t: u8) -> BinaryImage {
    let bits = img.values.iter().map(|&v| if v <= t { 0 } else { 1 }).collect();
    BinaryImage::new(img.width, img.height, bits)
}

/// Population variance of the 0/1 bits along each row or column.
pub fn variance_profile(bin: &BinaryImage, axis: Axis) -> VarianceProfile {
    let values = ink_fraction_profile(bin, axis)
        .into_iter()
        .map(|p| p * (1.0 - p))
        .collect();
    VarianceProfile { axis, values }
}

/// Fraction of ink pixels along each row or column.
pub fn ink_fraction_profile(bin: &BinaryImage, axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Rows => bin
            .row_ink_counts()
            .into_iter()
            .map(|c| c as f64 / bin.width as f64)
            .collect(),
        Axis::Columns => {
            let mut counts = vec![0usize; bin.width];
            for row in bin.bits.chunks_exact(bin.width) {
                for (c, &b) in counts.iter_mut().zip(row) {
                    *c += (b == 0) as usize;
                }
            }
            counts.into_iter().map(|c| c as f64 / bin.height as f64).collect()
        }
    }
}

/// Removes 8-connected ink components smaller than `min_pixels`.
pub fn despeckle(bin: &BinaryImage, min_pixels: usize) -> BinaryImage {
    if min_pixels <= 1 {
        return bin.clone();
    }
    let (labels, comps) = components::label(&bin.ink_mask(), bin.width, bin.height);
    let bits = labels
        .iter()
        .map(|&l| match l {
            u32::MAX => 1,
            id if comps[id as usize].pixels < min_pixels => 1,
            _ => 0,
        })
        .collect();
    BinaryImage::new(bin.width, bin.height, bits)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BandCount {
    Auto,
    /// Keep at most `max` bands (by integrated activity); fail below `min`.
    Between { min: usize, max: usize },
}

impl BandCount {
    pub fn exactly(k: usize) -> Self {
        BandCount::Between { min: k, max: k }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandConfig {
    /// A row seeds a band when its ink fraction exceeds this.
    pub activity_threshold: f64,
    /// Seed regions closer than this fraction of page height are merged.
    pub merge_gap_fraction: f64,
    /// Bands narrower than this fraction of page width are discarded (labels, stray marks).
    pub min_width_fraction: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            activity_threshold: 0.005,
            merge_gap_fraction: 0.01,
            min_width_fraction: 0.2,
        }
    }
}

/// Finds trace bands, sorted top to bottom.
///
/// When a layout asks for more bands than were found, detection is repeated
/// without merging across inactive rows, so tightly packed traces split at
/// any empty row between them.
pub fn detect_bands(bin: &BinaryImage, expected: BandCount, cfg: &BandConfig) -> Result<Vec<TraceBand>, TraceFindError> {
    let merge_gap = (cfg.merge_gap_fraction * bin.height as f64).round() as usize;
    match find_bands(bin, expected, cfg, merge_gap) {
        Err(TraceFindError::BandCountMismatch { .. }) if merge_gap > 0 => find_bands(bin, expected, cfg, 0),
        other => other,
    }
}

fn find_bands(bin: &BinaryImage, expected: BandCount, cfg: &BandConfig, merge_gap: usize) -> Result<Vec<TraceBand>, TraceFindError> {
    let counts = bin.row_ink_counts();
    let width = bin.width as f64;

    // Seed runs of active rows, merged across small gaps.
    let mut regions: Vec<(usize, usize)> = Vec::new();
    let mut r = 0;
    while r < counts.len() {
        if counts[r] as f64 / width > cfg.activity_threshold {
            let start = r;
            while r < counts.len() && counts[r] as f64 / width > cfg.activity_threshold {
                r += 1;
            }
            match regions.last_mut() {
                Some(last) if start - last.1 < merge_gap => last.1 = r,
                _ => regions.push((start, r)),
            }
        } else {
            r += 1;
        }
    }

    // Grow each region over adjacent rows that still carry ink above the noise floor.
    let floor = median(&counts);
    for region in regions.iter_mut() {
        while region.0 > 0 && counts[region.0 - 1] > floor {
            region.0 -= 1;
        }
        while region.1 < counts.len() && counts[region.1] > floor {
            region.1 += 1;
        }
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for reg in regions {
        match merged.last_mut() {
            Some(last) if reg.0 <= last.1 => last.1 = last.1.max(reg.1),
            _ => merged.push(reg),
        }
    }

    let mut bands: Vec<(TraceBand, usize)> = Vec::new();
    for (row_start, row_end) in merged {
        let mut col_start = usize::MAX;
        let mut col_end = 0;
        for y in row_start..row_end {
            let row = &bin.bits[y * bin.width..(y + 1) * bin.width];
            if let Some(first) = row.iter().position(|&b| b == 0) {
                col_start = col_start.min(first);
                let last = row.iter().rposition(|&b| b == 0).expect("row has ink");
                col_end = col_end.max(last + 1);
            }
        }
        if col_start >= col_end {
            continue;
        }
        if ((col_end - col_start) as f64) < cfg.min_width_fraction * width {
            continue;
        }
        let activity = counts[row_start..row_end].iter().sum();
        bands.push((
            TraceBand {
                row_start,
                row_end,
                col_start,
                col_end,
            },
            activity,
        ));
    }

    if bands.is_empty() {
        return Err(TraceFindError::NoBandsFound);
    }
    if let BandCount::Between { min, max } = expected {
        if bands.len() > max {
            bands.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.row_start.cmp(&b.0.row_start)));
            bands.truncate(max);
            bands.sort_by_key(|b| b.0.row_start);
        }
        if bands.len() < min {
            return Err(TraceFindError::BandCountMismatch {
                expected: min,
                found: bands.len(),
            });
        }
    }
    Ok(bands.into_iter().map(|b| b.0).collect())
}

fn median(counts: &[usize]) -> usize {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    sorted.get(sorted.len() / 2).copied().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(width: usize, height: usize, values: Vec<u8>) -> GrayImage {
        GrayImage::new(width, height, values)
    }

    #[test]
    fn otsu_degenerate_and_symmetric_cases() {
        assert_eq!(otsu_threshold(&gray(4, 4, vec![128; 16])), 0);
        let half: Vec<u8> = (0..16).map(|i| if i < 8 { 0 } else { 255 }).collect();
        assert_eq!(otsu_threshold(&gray(4, 4, half)), 0);
    }

    #[test]
    fn otsu_separates_two_clusters() {
        let mut values = Vec::new();
        for i in 0..50u8 {
            values.push(45 + i % 10);
            values.push(195 + i % 10);
        }
        let t = otsu_threshold(&gray(10, 10, values));
        assert!((54..195).contains(&t), "t = {t}");
    }

    #[test]
    fn fraction_comparison_is_exact() {
        assert_eq!(cmp_fractions(1, 3, 2, 6), Ordering::Equal);
        assert_eq!(cmp_fractions(1, 3, 1, 4), Ordering::Greater);
        assert_eq!(cmp_fractions(355, 113, 22, 7), Ordering::Less);
        assert_eq!(cmp_fractions(0, 5, 0, 9), Ordering::Equal);
        assert_eq!(cmp_fractions(u128::MAX - 1, u128::MAX, u128::MAX - 2, u128::MAX - 1), Ordering::Greater);
    }

    #[test]
    fn binarize_rules() {
        let img = gray(2, 2, vec![0, 255, 255, 0]);
        assert_eq!(binarize(&img, 255).bits, vec![0, 0, 0, 0]);
        let light = gray(2, 1, vec![10, 200]);
        assert_eq!(binarize(&light, 0).bits, vec![1, 1]);
        assert_eq!(binarize(&img, 100).bits, vec![0, 1, 1, 0]);
    }

    #[test]
    fn variance_profiles() {
        let blank = BinaryImage::new(4, 3, vec![1; 12]);
        assert!(variance_profile(&blank, Axis::Rows).values.iter().all(|&v| v == 0.0));

        let full_row = BinaryImage::from_ascii(&["....", "####", "...."]);
        let v = variance_profile(&full_row, Axis::Rows);
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert_eq!(ink_fraction_profile(&full_row, Axis::Rows), vec![0.0, 1.0, 0.0]);

        let quarter = BinaryImage::from_ascii(&["#..."]);
        assert_eq!(variance_profile(&quarter, Axis::Rows).values, vec![0.1875]);
        let cols = variance_profile(&full_row, Axis::Columns);
        assert_eq!(cols.values.len(), 4);
        assert!((cols.values[0] - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn blank_page_has_no_bands() {
        let blank = BinaryImage::new(50, 40, vec![1; 2000]);
        assert_eq!(
            detect_bands(&blank, BandCount::Auto, &BandConfig::default()),
            Err(TraceFindError::NoBandsFound)
        );
    }

    #[test]
    fn expected_count_too_high_is_a_mismatch() {
        let mut rows = vec![".".repeat(40); 30];
        rows[10] = format!("{}{}", "#".repeat(30), ".".repeat(10));
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let img = BinaryImage::from_ascii(&refs);
        assert_eq!(
            detect_bands(&img, BandCount::exactly(2), &BandConfig::default()),
            Err(TraceFindError::BandCountMismatch { expected: 2, found: 1 })
        );
        let bands = detect_bands(&img, BandCount::exactly(1), &BandConfig::default()).unwrap();
        assert_eq!(
            bands,
            vec![TraceBand {
                row_start: 10,
                row_end: 11,
                col_start: 0,
                col_end: 30
            }]
        );
    }

    #[test]
    fn packed_traces_split_when_the_layout_needs_them() {
        // Two strokes 4 rows apart; the merge gap on a 1000-row page is 10 rows.
        let mut rows = vec![".".repeat(50); 1000];
        for r in (100..103).chain(107..110) {
            rows[r] = "#".repeat(50);
        }
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let img = BinaryImage::from_ascii(&refs);
        assert_eq!(detect_bands(&img, BandCount::Auto, &BandConfig::default()).unwrap().len(), 1);
        let two = detect_bands(&img, BandCount::exactly(2), &BandConfig::default()).unwrap();
        assert_eq!(two.iter().map(|b| (b.row_start, b.row_end)).collect::<Vec<_>>(), [(100, 103), (107, 110)]);
    }

    #[test]
    fn narrow_marks_are_not_bands_and_top_k_keeps_heaviest() {
        let mut rows = vec![".".repeat(100); 60];
        rows[5] = format!("{}{}", "#".repeat(4), ".".repeat(96));
        for r in 20..23 {
            rows[r] = "#".repeat(100);
        }
        rows[40] = format!("{}{}", ".".repeat(10), "#".repeat(60)) + &".".repeat(30);
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let img = BinaryImage::from_ascii(&refs);
        let all = detect_bands(&img, BandCount::Auto, &BandConfig::default()).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!((all[1].col_start, all[1].col_end), (10, 70));
        let top = detect_bands(&img, BandCount::exactly(1), &BandConfig::default()).unwrap();
        assert_eq!(top[0].row_start, 20);
    }

    #[test]
    fn despeckle_drops_small_components() {
        let img = BinaryImage::from_ascii(&["#.....", "......", "..####"]);
        let clean = despeckle(&img, 2);
        assert_eq!(clean, BinaryImage::from_ascii(&["......", "......", "..####"]));
    }
}
