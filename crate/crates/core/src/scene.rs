//! Vector page description and its scan conversion.
//!
//! Coordinates are PostScript points (1/72 in) with the origin at the top-left
//! corner of the page and y growing downward. Rasterization samples pixel
//! centers with no anti-aliasing, so output is bit-reproducible.

use crate::raster::RasterPage;

pub type Point = (f64, f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillRule {
    NonZero,
    EvenOdd,
}

/// Affine map `[a b c d e f]`: `(x, y) -> (a x + c y + e, b x + d y + f)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine(pub [f64; 6]);

impl Affine {
    pub const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);

    pub fn apply(&self, p: Point) -> Point {
        let [a, b, c, d, e, f] = self.0;
        (a * p.0 + c * p.1 + e, b * p.0 + d * p.1 + f)
    }

    /// `self` applied after `first`.
    pub fn then(&self, first: &Affine) -> Affine {
        let [a1, b1, c1, d1, e1, f1] = first.0;
        let [a2, b2, c2, d2, e2, f2] = self.0;
        Affine([
            a1 * a2 + b1 * c2,
            a1 * b2 + b1 * d2,
            c1 * a2 + d1 * c2,
            c1 * b2 + d1 * d2,
            e1 * a2 + f1 * c2 + e2,
            e1 * b2 + f1 * d2 + f2,
        ])
    }

    pub fn inverse(&self) -> Option<Affine> {
        let [a, b, c, d, e, f] = self.0;
        let det = a * d - b * c;
        if det.abs() < 1e-12 {
            return None;
        }
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Some(Affine([ia, ib, ic, id, -(ia * e + ic * f), -(ib * e + id * f)]))
    }

    /// Geometric mean scale factor, used for line widths.
    pub fn scale(&self) -> f64 {
        let [a, b, c, d, _, _] = self.0;
        (a * d - b * c).abs().sqrt()
    }
}

/// Decoded RGB image placed through `transform`, which maps the unit square
/// (u right, v down, v=0 being the first image row) onto the page.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
    pub transform: Affine,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Fill {
        subpaths: Vec<Vec<Point>>,
        rule: FillRule,
        color: [u8; 3],
    },
    Stroke {
        subpaths: Vec<Vec<Point>>,
        closed: Vec<bool>,
        width: f64,
        color: [u8; 3],
    },
    Image(PlacedImage),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub width_pt: f64,
    pub height_pt: f64,
    pub background: [u8; 3],
    pub shapes: Vec<Shape>,
}

impl Scene {
    pub fn new(width_pt: f64, height_pt: f64) -> Self {
        Scene {
            width_pt,
            height_pt,
            background: [255, 255, 255],
            shapes: Vec::new(),
        }
    }

    pub fn fill_rect(&mut self, x: f64, y: f64, w: f64, h: f64, color: [u8; 3]) {
        self.shapes.push(Shape::Fill {
            subpaths: vec![vec![(x, y), (x + w, y), (x + w, y + h), (x, y + h)]],
            rule: FillRule::NonZero,
            color,
        });
    }

    pub fn stroke_polyline(&mut self, points: Vec<Point>, width: f64, color: [u8; 3]) {
        self.shapes.push(Shape::Stroke {
            subpaths: vec![points],
            closed: vec![false],
            width,
            color,
        });
    }

    /// Pixel dimensions of the page at `dpi`.
    pub fn pixel_size(&self, dpi: u32) -> (usize, usize) {
        let s = dpi as f64 / 72.0;
        (
            ((self.width_pt * s).round() as usize).max(1),
            ((self.height_pt * s).round() as usize).max(1),
        )
    }

    pub fn rasterize(&self, dpi: u32) -> RasterPage {
        let (w, h) = self.pixel_size(dpi);
        let mut canvas = Canvas::new(w, h, self.background);
        let s = dpi as f64 / 72.0;
        let to_px = Affine([s, 0.0, 0.0, s, 0.0, 0.0]);
        for shape in &self.shapes {
            match shape {
                Shape::Fill { subpaths, rule, color } => {
                    let paths: Vec<Vec<Point>> = subpaths
                        .iter()
                        .map(|sp| sp.iter().map(|&p| to_px.apply(p)).collect())
                        .collect();
                    canvas.fill_paths(&paths, *rule, *color);
                }
                Shape::Stroke {
                    subpaths,
                    closed,
                    width,
                    color,
                } => {
                    for (sp, &is_closed) in subpaths.iter().zip(closed) {
                        let pts: Vec<Point> = sp.iter().map(|&p| to_px.apply(p)).collect();
                        canvas.stroke(&pts, is_closed, width * s, *color);
                    }
                }
                Shape::Image(img) => canvas.draw_image(img, &img.transform.then_scale(s)),
            }
        }
        RasterPage::new(w, h, dpi, canvas.pixels).expect("canvas dimensions are valid")
    }
}

impl Affine {
    fn then_scale(&self, s: f64) -> Affine {
        Affine([s, 0.0, 0.0, s, 0.0, 0.0]).then(self)
    }
}

struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize, background: [u8; 3]) -> Self {
        let pixels = background.iter().copied().cycle().take(width * height * 3).collect();
        Canvas { width, height, pixels }
    }

    fn put(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    /// Scanline fill sampling pixel centers.
    fn fill_paths(&mut self, paths: &[Vec<Point>], rule: FillRule, color: [u8; 3]) {
        let mut edges: Vec<(Point, Point)> = Vec::new();
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for path in paths.iter().filter(|p| p.len() >= 2) {
            for i in 0..path.len() {
                let a = path[i];
                let b = path[(i + 1) % path.len()];
                if a.1 != b.1 {
                    edges.push((a, b));
                }
                ymin = ymin.min(a.1);
                ymax = ymax.max(a.1);
            }
        }
        if edges.is_empty() || !ymin.is_finite() {
            return;
        }
        let row_lo = ((ymin - 0.5).ceil().max(0.0)) as usize;
        let row_hi = ((ymax - 0.5).ceil().min(self.height as f64)).max(0.0) as usize;
        let mut crossings: Vec<(f64, i32)> = Vec::new();
        for row in row_lo..row_hi {
            let y = row as f64 + 0.5;
            crossings.clear();
            for &((x0, y0), (x1, y1)) in &edges {
                let (dir, lo, hi) = if y0 < y1 { (1, y0, y1) } else { (-1, y1, y0) };
                if y >= lo && y < hi {
                    let x = x0 + (y - y0) * (x1 - x0) / (y1 - y0);
                    crossings.push((x, dir));
                }
            }
            crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut winding = 0;
            for k in 0..crossings.len().saturating_sub(1) {
                winding += crossings[k].1;
                let inside = match rule {
                    FillRule::NonZero => winding != 0,
                    FillRule::EvenOdd => (k + 1) % 2 == 1,
                };
                if inside {
                    self.fill_span(row, crossings[k].0, crossings[k + 1].0, color);
                }
            }
        }
    }

    /// Pixels with centers in `[x_start, x_end)`.
    fn fill_span(&mut self, row: usize, x_start: f64, x_end: f64, color: [u8; 3]) {
        let c0 = (x_start - 0.5).ceil().max(0.0) as usize;
        let c1 = ((x_end - 0.5).ceil().min(self.width as f64)).max(0.0) as usize;
        for c in c0..c1 {
            self.put(c, row, color);
        }
    }

    /// Butt-capped stroke with round joins. Device widths below one pixel are widened to one.
    fn stroke(&mut self, pts: &[Point], closed: bool, width: f64, color: [u8; 3]) {
        let half = width.max(1.0) / 2.0;
        let n = pts.len();
        if n == 0 {
            return;
        }
        if n == 1 {
            self.fill_paths(&[disc(pts[0], half)], FillRule::NonZero, color);
            return;
        }
        let segs = if closed { n } else { n - 1 };
        for i in 0..segs {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len = (dx * dx + dy * dy).sqrt();
            if len < 1e-9 {
                continue;
            }
            let (nx, ny) = (-dy / len * half, dx / len * half);
            let quad = vec![
                (a.0 + nx, a.1 + ny),
                (b.0 + nx, b.1 + ny),
                (b.0 - nx, b.1 - ny),
                (a.0 - nx, a.1 - ny),
            ];
            self.fill_paths(&[quad], FillRule::NonZero, color);
        }
        let joins: Box<dyn Iterator<Item = usize>> = if closed { Box::new(0..n) } else { Box::new(1..n - 1) };
        if half > 0.75 {
            for i in joins {
                let (prev, next) = (pts[(i + n - 1) % n], pts[(i + 1) % n]);
                if let Some(wedge) = join_wedge(prev, pts[i], next, half) {
                    self.fill_paths(&[wedge], FillRule::NonZero, color);
                }
            }
        }
    }

    fn draw_image(&mut self, img: &PlacedImage, to_device: &Affine) {
        if img.width == 0 || img.height == 0 {
            return;
        }
        let Some(inv) = to_device.inverse() else { return };
        let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)].map(|p| to_device.apply(p));
        let xs = corners.iter().map(|p| p.0);
        let ys = corners.iter().map(|p| p.1);
        let x0 = xs.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (xs.fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(self.width);
        let y0 = ys.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (ys.fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(self.height);
        for y in y0..y1 {
            for x in x0..x1 {
                let (u, v) = inv.apply((x as f64 + 0.5, y as f64 + 0.5));
                if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
                    continue;
                }
                let sx = ((u * img.width as f64) as usize).min(img.width - 1);
                let sy = ((v * img.height as f64) as usize).min(img.height - 1);
                let i = (sy * img.width + sx) * 3;
                self.put(x, y, [img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]]);
            }
        }
    }
}

/// Outer sector of a round join at `p`: the arc between the offset edges of the
/// two segments, on the side where they diverge. `None` for straight or degenerate joins.
fn join_wedge(prev: Point, p: Point, next: Point, half: f64) -> Option<Vec<Point>> {
    let d1 = (p.0 - prev.0, p.1 - prev.1);
    let d2 = (next.0 - p.0, next.1 - p.1);
    let cross = d1.0 * d2.1 - d1.1 * d2.0;
    if cross.abs() < 1e-12 || d1 == (0.0, 0.0) || d2 == (0.0, 0.0) {
        return None;
    }
    let side = -cross.signum();
    let a0 = (-side * d1.1).atan2(side * d1.0);
    let mut a1 = (-side * d2.1).atan2(side * d2.0);
    // Sweep the short way round; the turn is always less than half a circle.
    while a1 - a0 > std::f64::consts::PI {
        a1 -= std::f64::consts::TAU;
    }
    while a0 - a1 > std::f64::consts::PI {
        a1 += std::f64::consts::TAU;
    }
    let steps = 8;
    let mut out = vec![p];
    out.extend((0..=steps).map(|k| {
        let t = a0 + (a1 - a0) * k as f64 / steps as f64;
        (p.0 + half * t.sin(), p.1 + half * t.cos())
    }));
    Some(out)
}

fn disc(center: Point, radius: f64) -> Vec<Point> {
    (0..16)
        .map(|k| {
            let t = k as f64 * std::f64::consts::TAU / 16.0;
            (center.0 + radius * t.cos(), center.1 + radius * t.sin())
        })
        .collect()
}
