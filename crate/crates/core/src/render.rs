//! Paper-style page generation from numeric records.
//!
//! Each band is drawn as one polyline: a 1 mV calibration pulse followed by
//! the band's lead windows. The polyline vertices sit on pixel centres so that
//! the digitizer's 5,140-point resampling lands back on the drawn samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::extract::{PULSE_POINTS, TRACE_POINTS};
use crate::font;
use crate::layout::{BandRole, LayoutSpec};
use crate::lead::{Lead, RECORD_SAMPLES, SAMPLE_RATE};
use crate::raster::RasterPage;
use crate::record::EcgRecord;
use crate::scene::{Point, Scene};

pub const MM_PER_INCH: f64 = 25.4;
const PT_PER_MM: f64 = 72.0 / MM_PER_INCH;
/// US Letter, landscape.
const PAGE_W_PT: f64 = 792.0;
const PAGE_H_PT: f64 = 612.0;
const TOP_MARGIN_MM: f64 = 25.0;
const BOTTOM_MARGIN_MM: f64 = 10.0;
const MAX_BAND_PITCH_MM: f64 = 45.0;
/// Pulse shape in pulse-sample units: baseline, plateau from 20 to 120, baseline.
const PULSE_RISE: usize = 20;
const PULSE_FALL: usize = 120;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("lead {lead} has unobserved or non-finite samples in its displayed window starting at {start}")]
    IncompleteRecord { lead: Lead, start: usize },
    #[error("invalid render style: {0}")]
    InvalidStyle(String),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseStyle {
    /// Standard deviation of additive Gaussian noise, grey levels.
    pub sigma: f64,
    /// Fraction of pixels replaced by black or white specks.
    pub speckle: f64,
    pub seed: u64,
}

impl Default for NoiseStyle {
    fn default() -> Self {
        NoiseStyle {
            sigma: 8.0,
            speckle: 0.0005,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    pub dpi: u32,
    pub grid: bool,
    pub grid_thin_px: f64,
    pub grid_thick_px: f64,
    pub grid_thin_color: [u8; 3],
    pub grid_thick_color: [u8; 3],
    pub trace_thickness_px: f64,
    pub trace_color: [u8; 3],
    pub labels: bool,
    pub label_size_pt: f64,
    /// mm per mV.
    pub gain: f64,
    /// mm per second.
    pub paper_speed: f64,
    /// Free text lines printed in the top margin (patient name, date, ...).
    pub header: Vec<String>,
    /// Draw the vertical connector where a band switches leads, instead of lifting the pen.
    pub join_windows: bool,
    pub noise: Option<NoiseStyle>,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            dpi: 300,
            grid: true,
            grid_thin_px: 1.0,
            grid_thick_px: 2.0,
            grid_thin_color: [255, 225, 225],
            grid_thick_color: [255, 195, 195],
            trace_thickness_px: 3.0,
            trace_color: [0, 0, 0],
            labels: true,
            label_size_pt: 10.0,
            gain: 10.0,
            paper_speed: 25.0,
            header: Vec::new(),
            join_windows: false,
            noise: None,
        }
    }
}

impl RenderStyle {
    pub fn from_toml(text: &str) -> Result<Self, RenderError> {
        let style: RenderStyle = toml::from_str(text).map_err(|e| RenderError::InvalidStyle(e.to_string()))?;
        style.validate()?;
        Ok(style)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidStyle(m.into()));
        if self.dpi == 0 {
            return bad("dpi must be positive");
        }
        if !(self.gain > 0.0) {
            return bad("gain must be positive");
        }
        if !(self.paper_speed > 0.0) {
            return bad("paper speed must be positive");
        }
        if !(self.trace_thickness_px >= 1.0) {
            return bad("trace thickness must be at least 1 px");
        }
        if !(self.label_size_pt > 0.0) {
            return bad("label size must be positive");
        }
        if trace_width_mm(self) > PAGE_W_PT / PT_PER_MM {
            return bad("paper speed too high for the page width");
        }
        Ok(())
    }

    fn px_per_mm(&self) -> f64 {
        self.dpi as f64 / MM_PER_INCH
    }
}

fn trace_width_mm(style: &RenderStyle) -> f64 {
    let signal_mm = RECORD_SAMPLES as f64 / SAMPLE_RATE * style.paper_speed;
    signal_mm * TRACE_POINTS as f64 / RECORD_SAMPLES as f64
}

/// Pixel geometry of a rendered page.
#[derive(Clone, Debug, PartialEq)]
pub struct PageGeometry {
    pub width_px: usize,
    pub height_px: usize,
    /// First pixel column of every trace.
    pub trace_col: usize,
    /// Number of pixel columns a trace spans.
    pub trace_cols: usize,
    /// Baseline (0 mV) row of each band, top to bottom, in pixels (may be fractional).
    pub baselines: Vec<f64>,
    pub px_per_mv: f64,
    dpi: u32,
}

impl PageGeometry {
    pub fn new(layout: &LayoutSpec, style: &RenderStyle) -> Self {
        let (_, bands) = layout.band_range();
        let px_mm = style.px_per_mm();
        let width_px = (PAGE_W_PT * style.dpi as f64 / 72.0).round() as usize;
        let height_px = (PAGE_H_PT * style.dpi as f64 / 72.0).round() as usize;
        let trace_cols = (trace_width_mm(style) * px_mm).round() as usize;
        let trace_col = (width_px - trace_cols) / 2;
        let page_h_mm = PAGE_H_PT / PT_PER_MM;
        let pitch = ((page_h_mm - TOP_MARGIN_MM - BOTTOM_MARGIN_MM) / bands.max(1) as f64).min(MAX_BAND_PITCH_MM);
        let baselines = (0..bands)
            .map(|b| (TOP_MARGIN_MM + pitch * (b as f64 + 0.6)) * px_mm)
            .collect();
        PageGeometry {
            width_px,
            height_px,
            trace_col,
            trace_cols,
            baselines,
            px_per_mv: style.gain * px_mm,
            dpi: style.dpi,
        }
    }

    /// Pixel x of trace point `k` (0..5,140): pixel centres spread evenly over the trace columns.
    pub fn point_x(&self, k: usize) -> f64 {
        self.trace_col as f64 + 0.5 + (k * (self.trace_cols - 1)) as f64 / (TRACE_POINTS - 1) as f64
    }

    pub fn row_of(&self, band: usize, mv: f64) -> f64 {
        self.baselines[band] - mv * self.px_per_mv
    }

    fn to_pt(&self, px: f64) -> f64 {
        px * 72.0 / self.dpi as f64
    }
}

/// Band signal (5,000 samples) shown on `band`, or an error naming the first incomplete window.
fn band_signal(record: &EcgRecord, layout: &LayoutSpec, band: usize) -> Result<Vec<f64>, RenderError> {
    let check = |lead: Lead, start: usize, end: usize| {
        let ok = (start..end).all(|t| record.mask(lead)[t] && record.lead(lead)[t].is_finite());
        if ok {
            Ok(())
        } else {
            Err(RenderError::IncompleteRecord { lead, start })
        }
    };
    match layout.band_role(band).expect("band within layout") {
        BandRole::Windows(leads) => {
            let wp = layout.window_points;
            let mut out = Vec::with_capacity(RECORD_SAMPLES);
            for (w, &lead) in leads.iter().enumerate() {
                let (s, e) = (w * wp, ((w + 1) * wp).min(RECORD_SAMPLES));
                check(lead, s, e)?;
                out.extend_from_slice(&record.lead(lead)[s..e]);
            }
            out.resize(RECORD_SAMPLES, *out.last().unwrap_or(&0.0));
            Ok(out)
        }
        BandRole::Rhythm(lead) => {
            check(lead, 0, RECORD_SAMPLES)?;
            Ok(record.lead(lead).to_vec())
        }
    }
}

fn pulse_mv(k: usize) -> f64 {
    if (PULSE_RISE..PULSE_FALL).contains(&k) {
        1.0
    } else {
        0.0
    }
}

/// Vector rendering of `record`; coordinates in points.
pub fn render_scene(record: &EcgRecord, layout: &LayoutSpec, style: &RenderStyle) -> Result<Scene, RenderError> {
    style.validate()?;
    let geo = PageGeometry::new(layout, style);
    let mut scene = Scene::new(PAGE_W_PT, PAGE_H_PT);
    if style.grid {
        draw_grid(&mut scene, style);
    }
    let header_px = style.label_size_pt * 1.4 * style.dpi as f64 / 72.0;
    for (i, line) in style.header.iter().enumerate() {
        let y = 5.0 * style.px_per_mm() + i as f64 * header_px;
        draw_text(&mut scene, &geo, line, geo.trace_col as f64, y, style);
    }
    let trace_w = geo.to_pt(style.trace_thickness_px);
    for band in 0..geo.baselines.len() {
        let signal = band_signal(record, layout, band)?;
        let pt = |x: f64, y: f64| (geo.to_pt(x), geo.to_pt(y));
        let mut pts: Vec<Point> = Vec::with_capacity(TRACE_POINTS + 2);
        for k in 0..PULSE_POINTS {
            if k == PULSE_RISE || k == PULSE_FALL {
                pts.push(pt(geo.point_x(k), geo.row_of(band, pulse_mv(k - 1))));
            }
            pts.push(pt(geo.point_x(k), geo.row_of(band, pulse_mv(k))));
        }
        let windowed = matches!(layout.band_role(band), Some(BandRole::Windows(_)));
        for (t, &v) in signal.iter().enumerate() {
            let lead_switch = t == 0 || (windowed && t % layout.window_points == 0);
            if lead_switch && !style.join_windows {
                scene.stroke_polyline(std::mem::take(&mut pts), trace_w, style.trace_color);
            }
            pts.push(pt(geo.point_x(PULSE_POINTS + t), geo.row_of(band, v)));
        }
        scene.stroke_polyline(pts, trace_w, style.trace_color);

        if style.labels {
            let labels: Vec<(Lead, usize)> = match layout.band_role(band).expect("band within layout") {
                BandRole::Windows(leads) => leads.iter().enumerate().map(|(w, &l)| (l, w * layout.window_points)).collect(),
                BandRole::Rhythm(l) => vec![(l, 0)],
            };
            for (lead, start) in labels {
                let (x, top) = label_position(&geo, style, band, &signal, start, lead.name());
                draw_text(&mut scene, &geo, lead.name(), x, top, style);
            }
        }
    }
    Ok(scene)
}

/// Top-left pixel of a window label: 1 mm after the window start, at least
/// 3 mm above the baseline and clear of the trace beneath it.
fn label_position(geo: &PageGeometry, style: &RenderStyle, band: usize, signal: &[f64], start: usize, text: &str) -> (f64, f64) {
    let mm = style.px_per_mm();
    let x = geo.point_x(PULSE_POINTS + start) + mm;
    let width = (text.chars().count() * font::ADVANCE) as f64 * font_px(style);
    let mut highest = geo.baselines[band];
    for t in start..signal.len() {
        let px = geo.point_x(PULSE_POINTS + t);
        if px > x + width + mm {
            break;
        }
        if px >= x - mm {
            highest = highest.min(geo.row_of(band, signal[t]));
        }
    }
    let bottom = (geo.baselines[band] - 3.0 * mm).min(highest - style.trace_thickness_px - 1.5 * mm);
    (x, bottom - label_cap_px(style))
}

/// Height of a capital letter in pixels.
pub fn label_cap_px(style: &RenderStyle) -> f64 {
    font::GLYPH_HEIGHT as f64 * font_px(style)
}

fn font_px(style: &RenderStyle) -> f64 {
    style.label_size_pt / 10.0 * style.dpi as f64 / 72.0
}

/// Draws `text` with its top-left glyph cell at pixel `(x, y)`.
fn draw_text(scene: &mut Scene, geo: &PageGeometry, text: &str, x: f64, y: f64, style: &RenderStyle) {
    let p = font_px(style);
    for (row, c0, c1) in font::runs(text) {
        scene.fill_rect(
            geo.to_pt(x + c0 as f64 * p),
            geo.to_pt(y + row as f64 * p),
            geo.to_pt((c1 - c0) as f64 * p),
            geo.to_pt(p),
            style.trace_color,
        );
    }
}

/// Pixel box `(x0, y0, x1, y1)` covered by `text` drawn at `(x, y)` at `style`'s font size.
pub fn text_pixel_box(text: &str, x: f64, y: f64, style: &RenderStyle) -> Option<(usize, usize, usize, usize)> {
    let p = font_px(style);
    let (bx0, by0, bx1, by1) = font::ink_bounds(text)?;
    // Pixel centres inside [a, b): first = ceil(a - 0.5), end = ceil(b - 0.5).
    let edge = |v: f64| (v - 0.5).ceil().max(0.0) as usize;
    Some((
        edge(x + bx0 as f64 * p),
        edge(y + by0 as f64 * p),
        edge(x + bx1 as f64 * p),
        edge(y + by1 as f64 * p),
    ))
}

/// Draws `text` in the trace colour at pixel position `(x, y)` on an existing scene.
pub fn annotate(scene: &mut Scene, text: &str, x: f64, y: f64, style: &RenderStyle) {
    let geo = PageGeometry {
        width_px: 0,
        height_px: 0,
        trace_col: 0,
        trace_cols: 2,
        baselines: Vec::new(),
        px_per_mv: 1.0,
        dpi: style.dpi,
    };
    draw_text(scene, &geo, text, x, y, style);
}

fn draw_grid(scene: &mut Scene, style: &RenderStyle) {
    let step = PT_PER_MM;
    let nx = (PAGE_W_PT / step).floor() as usize;
    let ny = (PAGE_H_PT / step).floor() as usize;
    let to_pt = |px: f64| px * 72.0 / style.dpi as f64;
    for thick in [false, true] {
        let (w, color) = if thick {
            (to_pt(style.grid_thick_px), style.grid_thick_color)
        } else {
            (to_pt(style.grid_thin_px), style.grid_thin_color)
        };
        for i in (0..=nx).filter(|i| (i % 5 == 0) == thick) {
            let x = i as f64 * step;
            scene.stroke_polyline(vec![(x, 0.0), (x, PAGE_H_PT)], w, color);
        }
        for j in (0..=ny).filter(|j| (j % 5 == 0) == thick) {
            let y = j as f64 * step;
            scene.stroke_polyline(vec![(0.0, y), (PAGE_W_PT, y)], w, color);
        }
    }
}

/// Rasterized page, with noise applied when the style asks for it.
pub fn render_page(record: &EcgRecord, layout: &LayoutSpec, style: &RenderStyle) -> Result<RasterPage, RenderError> {
    let scene = render_scene(record, layout, style)?;
    let mut page = scene.rasterize(style.dpi);
    if let Some(noise) = &style.noise {
        add_noise(&mut page, noise);
    }
    Ok(page)
}

/// Gaussian grey noise on every channel plus salt-and-pepper specks.
pub fn add_noise(page: &mut RasterPage, noise: &NoiseStyle) {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, noise.sigma.max(0.0)).expect("finite sigma");
    for y in 0..page.height() {
        for x in 0..page.width() {
            let mut px = page.get(x, y);
            if noise.sigma > 0.0 {
                let n: f64 = normal.sample(&mut rng);
                px = px.map(|c| (c as f64 + n).round().clamp(0.0, 255.0) as u8);
            }
            if noise.speckle > 0.0 && rng.random::<f64>() < noise.speckle {
                px = if rng.random::<bool>() { [0; 3] } else { [255; 3] };
            }
            page.set(x, y, px);
        }
    }
}
