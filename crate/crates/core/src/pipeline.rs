//! Page-to-record digitization.

use crate::extract::{
    self, assemble_record, calibrate, calibrate_with_gain, fill_empty, resample_5140, split_leads, split_reference,
    standard_px_per_mv, ExtractError, LeadSignal, Method,
};
use crate::layout::LayoutSpec;
use crate::lead::SAMPLE_RATE;
use crate::raster::{to_gray, RasterPage};
use crate::record::EcgRecord;
use crate::textscrub::{self, OcrConfig, OcrMode, PageMetadata, TextBox, TextError};
use crate::tracefind::{binarize, despeckle, detect_bands, otsu_threshold, BandConfig, BandCount, TraceBand, TraceFindError};

#[derive(Debug, thiserror::Error)]
pub enum DigitizeError {
    #[error(transparent)]
    Bands(#[from] TraceFindError),
    #[error("band {band}: {source}")]
    Extract { band: usize, source: ExtractError },
    #[error(transparent)]
    Assemble(ExtractError),
    #[error("{0} bands found; no layout matches")]
    UnknownLayout(usize),
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DigitizeConfig {
    pub method: Method,
    /// `None` infers the layout from the number of detected bands.
    pub layout: Option<LayoutSpec>,
    pub ocr: OcrConfig,
    pub bands: BandConfig,
    /// Ink components smaller than this many pixels are removed before band detection.
    pub despeckle_min_pixels: usize,
}

impl Default for DigitizeConfig {
    fn default() -> Self {
        DigitizeConfig {
            method: Method::Fragmented,
            layout: Some(LayoutSpec::standard_3x4()),
            ocr: OcrConfig::default(),
            bands: BandConfig::default(),
            despeckle_min_pixels: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Digitized {
    pub record: EcgRecord,
    pub layout: LayoutSpec,
    pub bands: Vec<TraceBand>,
    pub text_boxes: Vec<TextBox>,
    /// Non-fatal problems (OCR fallback, flat pulse, ...).
    pub warnings: Vec<String>,
}

/// Detected text: boxes to scrub and boxes left on the page because they touch a trace.
fn find_text(page: &RasterPage, cfg: &OcrConfig, warnings: &mut Vec<String>) -> Result<(Vec<TextBox>, Vec<TextBox>), DigitizeError> {
    let boxes = match textscrub::detect_text(page, cfg) {
        Ok(b) => b,
        Err(TextError::OcrUnavailable(why)) if cfg.mode == OcrMode::External => {
            warnings.push(format!("external OCR unavailable ({why}); using heuristic detection"));
            let fallback = OcrConfig {
                mode: OcrMode::Heuristic,
                ..cfg.clone()
            };
            textscrub::detect_text(page, &fallback)?
        }
        Err(e) => return Err(e.into()),
    };
    if boxes.is_empty() {
        return Ok((boxes, Vec::new()));
    }
    let bands = textscrub::provisional_bands(page);
    Ok(boxes.into_iter().partition(|b| !bands.iter().any(|band| b.intersects_band(band))))
}

pub fn digitize_page(page: &RasterPage, cfg: &DigitizeConfig) -> Result<Digitized, DigitizeError> {
    let mut warnings = Vec::new();
    let (scrubbable, on_trace) = find_text(page, &cfg.ocr, &mut warnings)?;
    let (clean, _) = textscrub::scrub(page, &scrubbable);
    let mut all_boxes = scrubbable;
    all_boxes.extend(on_trace);
    all_boxes.sort_by_key(|b| (b.y0, b.x0));
    let metadata = PageMetadata::from_boxes(&all_boxes);

    let gray = to_gray(&clean);
    let mut bin = binarize(&gray, otsu_threshold(&gray));
    if cfg.despeckle_min_pixels > 1 {
        bin = despeckle(&bin, cfg.despeckle_min_pixels);
    }
    let expected = match &cfg.layout {
        Some(layout) => {
            let (min, max) = layout.band_range();
            BandCount::Between { min, max }
        }
        None => BandCount::Auto,
    };
    let bands = detect_bands(&bin, expected, &cfg.bands)?;
    let layout = match &cfg.layout {
        Some(l) => l.clone(),
        None => LayoutSpec::infer_from_band_count(bands.len()).ok_or(DigitizeError::UnknownLayout(bands.len()))?,
    };

    let mut signals = Vec::new();
    for (b, band) in bands.iter().enumerate() {
        let ctx = |source| DigitizeError::Extract { band: b, source };
        let trace = extract::extract(&bin.band(band), cfg.method).map_err(ctx)?;
        let filled = fill_empty(&trace).map_err(ctx)?;
        let points = resample_5140(&filled);
        let (pulse, body) = split_reference(&points).map_err(ctx)?;
        let windows = split_leads(&body, &layout, b).map_err(ctx)?;
        for w in windows {
            let mv = match calibrate(&w.values, &pulse) {
                Ok(v) => v,
                Err(ExtractError::FlatPulse) => {
                    warnings.push(format!("band {b}: flat calibration pulse; assuming 10 mm/mV"));
                    calibrate_with_gain(&w.values, &pulse, standard_px_per_mv(page.dpi()))
                }
                Err(e) => return Err(ctx(e)),
            };
            signals.push(LeadSignal {
                lead: w.lead,
                samples: mv,
                sample_rate: SAMPLE_RATE,
                window_offset: w.offset as f64 / SAMPLE_RATE,
            });
        }
    }
    warnings.sort();
    warnings.dedup();
    let record = assemble_record(&signals, &layout, metadata).map_err(DigitizeError::Assemble)?;
    Ok(Digitized {
        record,
        layout,
        bands,
        text_boxes: all_boxes,
        warnings,
    })
}
