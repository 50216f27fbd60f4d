//! Column-wise trace extraction, lead separation and amplitude calibration.
//!
//! A band's binary sub-matrix becomes one vertical coordinate per column. The
//! vector is resampled to 5,140 points: 140 for the reference pulse followed
//! by 5,000 samples (10 s at 500 Hz) that are cut into lead windows and scaled
//! to millivolts against the pulse.

use std::fmt;
use std::str::FromStr;

use crate::layout::{BandRole, LayoutSpec};
use crate::lead::{Lead, LEAD_COUNT, RECORD_SAMPLES, SAMPLE_RATE};
use crate::record::EcgRecord;
use crate::textscrub::PageMetadata;
use crate::tracefind::BinaryImage;

pub const PULSE_POINTS: usize = 140;
pub const TRACE_POINTS: usize = PULSE_POINTS + RECORD_SAMPLES;
/// Edge samples on each side of the pulse used to estimate its baseline.
const BASELINE_EDGE: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("every column of the band is empty")]
    AllColumnsEmpty,
    #[error("expected {expected} points, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("reference pulse is flat; amplitude calibration impossible")]
    FlatPulse,
    #[error("no window for lead {0}")]
    MissingLead(Lead),
    #[error("band {0} is not part of the layout")]
    BandOutOfLayout(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    Full,
    #[default]
    Fragmented,
    Lazy,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Full => "full",
            Method::Fragmented => "fragmented",
            Method::Lazy => "lazy",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Method::Full),
            "fragmented" | "frag" => Ok(Method::Fragmented),
            "lazy" => Ok(Method::Lazy),
            other => Err(format!("unknown extraction method {other:?}")),
        }
    }
}

/// One vertical coordinate (band row units) per column.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnTrace {
    pub values: Vec<f64>,
    /// True for columns without lit pixels; their `values` entry is meaningless.
    pub empty_mask: Vec<bool>,
}

impl ColumnTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_filled(&self) -> bool {
        !self.empty_mask.iter().any(|&e| e)
    }

    /// Values with empty columns as `None`.
    pub fn as_options(&self) -> Vec<Option<f64>> {
        self.values
            .iter()
            .zip(&self.empty_mask)
            .map(|(&v, &e)| (!e).then_some(v))
            .collect()
    }
}

fn lit_rows(band: &BinaryImage, col: usize) -> Vec<usize> {
    (0..band.height).filter(|&r| band.is_ink(col, r)).collect()
}

fn mean(rows: &[usize]) -> f64 {
    rows.iter().sum::<usize>() as f64 / rows.len() as f64
}

fn per_column(band: &BinaryImage, pick: impl Fn(&[usize]) -> f64) -> Result<ColumnTrace, ExtractError> {
    let mut values = vec![0.0; band.width];
    let mut empty_mask = vec![true; band.width];
    for j in 0..band.width {
        let lit = lit_rows(band, j);
        if !lit.is_empty() {
            values[j] = pick(&lit);
            empty_mask[j] = false;
        }
    }
    if empty_mask.iter().all(|&e| e) {
        return Err(ExtractError::AllColumnsEmpty);
    }
    Ok(ColumnTrace { values, empty_mask })
}

/// Mean row of all lit pixels in each column.
pub fn extract_full(band: &BinaryImage) -> Result<ColumnTrace, ExtractError> {
    per_column(band, mean)
}

/// Mean row of the bottom-most contiguous run of lit pixels in each column.
pub fn extract_fragmented(band: &BinaryImage) -> Result<ColumnTrace, ExtractError> {
    per_column(band, |lit| {
        let mut end = lit.len() - 1;
        let mut expected = lit[end];
        let mut group = Vec::new();
        loop {
            group.push(lit[end]);
            if end == 0 || lit[end - 1] + 1 != expected {
                break;
            }
            end -= 1;
            expected -= 1;
        }
        mean(&group)
    })
}

/// Anchor-following extraction. The anchor starts at the mean lit row of the
/// first column (half the band height if that column is empty); in each later
/// column it stays put when the pixel under it is lit, otherwise it jumps to
/// the nearest lit pixel, probing `+i` before `-i`. Never yields empty columns.
///
/// Only the first column can hold a fractional anchor; lookups use its integer part.
pub fn extract_lazy(band: &BinaryImage) -> Result<ColumnTrace, ExtractError> {
    let (n, m) = (band.height, band.width);
    if n == 0 || m == 0 {
        return Err(ExtractError::AllColumnsEmpty);
    }
    let first = lit_rows(band, 0);
    let mut anchor = if first.is_empty() { n as f64 / 2.0 } else { mean(&first) };
    let mut values = Vec::with_capacity(m);
    values.push(anchor);
    for j in 1..m {
        let row = anchor as usize;
        if !band.is_ink(j, row) {
            for i in 0..n {
                if row + i < n && band.is_ink(j, row + i) {
                    anchor = (row + i) as f64;
                    break;
                } else if row >= i && band.is_ink(j, row - i) {
                    anchor = (row - i) as f64;
                    break;
                }
            }
        }
        values.push(anchor);
    }
    Ok(ColumnTrace {
        values,
        empty_mask: vec![false; m],
    })
}

pub fn extract(band: &BinaryImage, method: Method) -> Result<ColumnTrace, ExtractError> {
    match method {
        Method::Full => extract_full(band),
        Method::Fragmented => extract_fragmented(band),
        Method::Lazy => extract_lazy(band),
    }
}

/// Linear interpolation across empty columns; leading and trailing gaps take the nearest value.
pub fn fill_empty(trace: &ColumnTrace) -> Result<ColumnTrace, ExtractError> {
    let known: Vec<usize> = (0..trace.len()).filter(|&j| !trace.empty_mask[j]).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return Err(ExtractError::AllColumnsEmpty);
    };
    let mut values = trace.values.clone();
    for v in &mut values[..first] {
        *v = trace.values[first];
    }
    for v in &mut values[last + 1..] {
        *v = trace.values[last];
    }
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (trace.values[a], trace.values[b]);
        for (j, v) in values.iter_mut().enumerate().take(b).skip(a + 1) {
            let t = (j - a) as f64 / (b - a) as f64;
            *v = va + (vb - va) * t;
        }
    }
    Ok(ColumnTrace {
        values,
        empty_mask: vec![false; trace.len()],
    })
}

/// Samples `values` at `n` evenly spaced positions spanning `[0, len-1]`.
/// Endpoints are reproduced exactly; an input of length `n` is returned unchanged.
pub fn resample_linear(values: &[f64], n: usize) -> Vec<f64> {
    let m = values.len();
    if m == 0 || n == 0 {
        return Vec::new();
    }
    if m == 1 || n == 1 {
        return vec![values[0]; n];
    }
    (0..n)
        .map(|k| {
            let num = k * (m - 1);
            let i = num / (n - 1);
            let rem = num % (n - 1);
            if rem == 0 || i >= m - 1 {
                values[i.min(m - 1)]
            } else {
                let t = rem as f64 / (n - 1) as f64;
                values[i] + (values[i + 1] - values[i]) * t
            }
        })
        .collect()
}

pub fn resample_5140(trace: &ColumnTrace) -> Vec<f64> {
    debug_assert!(trace.is_filled(), "resample expects a filled trace");
    resample_linear(&trace.values, TRACE_POINTS)
}

/// Reference pulse samples (image row coordinates).
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationPulse {
    pub samples: Vec<f64>,
}

impl CalibrationPulse {
    /// Baseline and plateau in flipped (upward-positive) coordinates.
    ///
    /// The baseline is the most frequent value among the first and last ten
    /// samples, ties going to the lowest; the plateau is the maximum.
    pub fn levels(&self) -> Result<(f64, f64), ExtractError> {
        let flipped: Vec<f64> = self.samples.iter().map(|&r| -r).collect();
        if flipped.is_empty() {
            return Err(ExtractError::FlatPulse);
        }
        let k = BASELINE_EDGE.min(flipped.len());
        let mut edge: Vec<f64> = flipped[..k].iter().chain(&flipped[flipped.len() - k..]).copied().collect();
        edge.sort_by(f64::total_cmp);
        let mut baseline = edge[0];
        let mut best_run = 0;
        let mut i = 0;
        while i < edge.len() {
            let run = edge[i..].iter().take_while(|&&v| v == edge[i]).count();
            if run > best_run {
                best_run = run;
                baseline = edge[i];
            }
            i += run;
        }
        let plateau = flipped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(plateau > baseline) || !plateau.is_finite() {
            return Err(ExtractError::FlatPulse);
        }
        Ok((baseline, plateau))
    }
}

/// Splits a 5,140-point trace into the 140-point pulse and the 5,000-point body.
pub fn split_reference(v: &[f64]) -> Result<(CalibrationPulse, Vec<f64>), ExtractError> {
    if v.len() != TRACE_POINTS {
        return Err(ExtractError::LengthMismatch {
            expected: TRACE_POINTS,
            found: v.len(),
        });
    }
    Ok((
        CalibrationPulse {
            samples: v[..PULSE_POINTS].to_vec(),
        },
        v[PULSE_POINTS..].to_vec(),
    ))
}

/// One lead's slice of a band body.
#[derive(Clone, Debug, PartialEq)]
pub struct LeadWindow {
    pub lead: Lead,
    /// First sample of the window within the 5,000-sample record.
    pub offset: usize,
    pub values: Vec<f64>,
}

/// Cuts a band body into the windows the layout assigns to `band_index`.
pub fn split_leads(body: &[f64], layout: &LayoutSpec, band_index: usize) -> Result<Vec<LeadWindow>, ExtractError> {
    if body.len() != RECORD_SAMPLES {
        return Err(ExtractError::LengthMismatch {
            expected: RECORD_SAMPLES,
            found: body.len(),
        });
    }
    match layout.band_role(band_index).ok_or(ExtractError::BandOutOfLayout(band_index))? {
        BandRole::Windows(leads) => Ok(leads
            .iter()
            .zip(body.chunks(layout.window_points))
            .enumerate()
            .map(|(w, (&lead, chunk))| LeadWindow {
                lead,
                offset: w * layout.window_points,
                values: chunk.to_vec(),
            })
            .collect()),
        BandRole::Rhythm(lead) => Ok(vec![LeadWindow {
            lead,
            offset: 0,
            values: body.to_vec(),
        }]),
    }
}

/// Scales row coordinates to millivolts: rows are negated (image rows grow
/// downward), then `(x - baseline) / (plateau - baseline)` maps the pulse to [0, 1] mV.
pub fn calibrate(window: &[f64], pulse: &CalibrationPulse) -> Result<Vec<f64>, ExtractError> {
    let (baseline, plateau) = pulse.levels()?;
    let span = plateau - baseline;
    Ok(window.iter().map(|&r| (-r - baseline) / span).collect())
}

/// Fallback scaling with a fixed gain when the pulse is unusable.
pub fn calibrate_with_gain(window: &[f64], pulse: &CalibrationPulse, px_per_mv: f64) -> Vec<f64> {
    let baseline = pulse.levels().map(|l| l.0).unwrap_or_else(|_| {
        -pulse.samples.iter().sum::<f64>() / pulse.samples.len().max(1) as f64
    });
    window.iter().map(|&r| (-r - baseline) / px_per_mv).collect()
}

/// Pixels per millivolt for the standard 10 mm/mV gain at `dpi`.
pub fn standard_px_per_mv(dpi: u32) -> f64 {
    dpi as f64 / 25.4 * 10.0
}

/// Calibrated samples of one lead window.
#[derive(Clone, Debug, PartialEq)]
pub struct LeadSignal {
    pub lead: Lead,
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    /// Seconds from record start.
    pub window_offset: f64,
}

/// Places lead windows into a 12 x 5,000 record; later windows overwrite earlier ones.
pub fn assemble_record(leads: &[LeadSignal], layout: &LayoutSpec, metadata: PageMetadata) -> Result<EcgRecord, ExtractError> {
    let mut record = EcgRecord::empty();
    record.metadata = metadata;
    let mut seen = [false; LEAD_COUNT];
    for sig in leads {
        let start = (sig.window_offset * SAMPLE_RATE).round() as usize;
        let duration = sig.samples.len() as f64 / sig.sample_rate;
        let n = ((duration * SAMPLE_RATE).round() as usize).min(RECORD_SAMPLES.saturating_sub(start));
        let samples = if sig.samples.len() == n {
            sig.samples.clone()
        } else {
            resample_linear(&sig.samples, n)
        };
        let is_window = n == layout.window_points || n == RECORD_SAMPLES;
        if !is_window {
            log::warn!("lead {} window has {n} samples, layout expects {}", sig.lead, layout.window_points);
        }
        let idx = sig.lead.index();
        record.leads[idx][start..start + n].copy_from_slice(&samples);
        record.observed_mask[idx][start..start + n].fill(true);
        seen[idx] |= n > 0;
    }
    if let Some(missing) = Lead::ALL.iter().find(|l| !seen[l.index()]) {
        return Err(ExtractError::MissingLead(*missing));
    }
    Ok(record)
}
