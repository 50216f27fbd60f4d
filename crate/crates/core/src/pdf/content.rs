use super::object::{Dict, Document, Lexer, Object, Page, PdfError};
use crate::scene::{Affine, FillRule, PlacedImage, Point, Scene, Shape};

const MAX_FORM_DEPTH: usize = 12;
const CURVE_STEPS: usize = 12;

#[derive(Clone)]
struct GState {
    ctm: Affine,
    stroke: [u8; 3],
    fill: [u8; 3],
    line_width: f64,
}

struct PathBuilder {
    subpaths: Vec<Vec<Point>>,
    closed: Vec<bool>,
    current: Option<Point>,
    /// Start of the open subpath, in user space.
    start_user: Option<Point>,
    current_user: Option<Point>,
}

impl PathBuilder {
    fn new() -> Self {
        PathBuilder {
            subpaths: Vec::new(),
            closed: Vec::new(),
            current: None,
            start_user: None,
            current_user: None,
        }
    }

    fn move_to(&mut self, ctm: &Affine, p: Point) {
        self.subpaths.push(vec![ctm.apply(p)]);
        self.closed.push(false);
        self.current = Some(ctm.apply(p));
        self.start_user = Some(p);
        self.current_user = Some(p);
    }

    fn line_to(&mut self, ctm: &Affine, p: Point) {
        if self.subpaths.is_empty() {
            self.move_to(ctm, p);
            return;
        }
        let d = ctm.apply(p);
        self.subpaths.last_mut().expect("nonempty").push(d);
        self.current = Some(d);
        self.current_user = Some(p);
    }

    fn curve_to(&mut self, ctm: &Affine, c1: Point, c2: Point, p: Point) {
        let Some(p0) = self.current_user else {
            self.move_to(ctm, p);
            return;
        };
        for k in 1..=CURVE_STEPS {
            let t = k as f64 / CURVE_STEPS as f64;
            let mt = 1.0 - t;
            let x = mt * mt * mt * p0.0 + 3.0 * mt * mt * t * c1.0 + 3.0 * mt * t * t * c2.0 + t * t * t * p.0;
            let y = mt * mt * mt * p0.1 + 3.0 * mt * mt * t * c1.1 + 3.0 * mt * t * t * c2.1 + t * t * t * p.1;
            self.line_to(ctm, (x, y));
        }
    }

    fn close(&mut self) {
        if let Some(c) = self.closed.last_mut() {
            *c = true;
        }
        if let Some(s) = self.start_user {
            self.current_user = Some(s);
            self.current = self.subpaths.last().and_then(|p| p.first().copied());
        }
    }

    fn take(&mut self) -> (Vec<Vec<Point>>, Vec<bool>) {
        self.current = None;
        self.current_user = None;
        self.start_user = None;
        (std::mem::take(&mut self.subpaths), std::mem::take(&mut self.closed))
    }
}

pub(crate) fn interpret_page(doc: &Document, page: &Page) -> Result<Scene, PdfError> {
    let [x0, y0, x1, y1] = page.media_box;
    let mut scene = Scene::new(x1 - x0, y1 - y0);
    // PDF user space (y up, origin bottom-left) to scene space (y down, origin top-left).
    let base = Affine([1.0, 0.0, 0.0, -1.0, -x0, y1]);
    let state = GState {
        ctm: base,
        stroke: [0, 0, 0],
        fill: [0, 0, 0],
        line_width: 1.0,
    };
    run(doc, &page.content, &page.resources, state, &mut scene.shapes, 0)?;
    Ok(scene)
}

fn nums(ops: &[Object]) -> Vec<f64> {
    ops.iter().filter_map(Object::as_f64).collect()
}

fn color_from(ops: &[Object]) -> Option<[u8; 3]> {
    let v = nums(ops);
    let to8 = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    match v.len() {
        1 => Some([to8(v[0]); 3]),
        3 => Some([to8(v[0]), to8(v[1]), to8(v[2])]),
        4 => {
            let k = v[3];
            Some([
                to8((1.0 - v[0]) * (1.0 - k)),
                to8((1.0 - v[1]) * (1.0 - k)),
                to8((1.0 - v[2]) * (1.0 - k)),
            ])
        }
        _ => None,
    }
}

fn run(
    doc: &Document,
    content: &[u8],
    resources: &Dict,
    initial: GState,
    out: &mut Vec<Shape>,
    depth: usize,
) -> Result<(), PdfError> {
    let mut lx = Lexer::new(content, 0, false);
    let mut operands: Vec<Object> = Vec::new();
    let mut gs = initial;
    let mut stack: Vec<GState> = Vec::new();
    let mut path = PathBuilder::new();
    let mut in_text = false;

    while !lx.at_end() {
        let Some(obj) = lx.next()? else {
            lx.pos += 1;
            continue;
        };
        let Object::Keyword(op) = obj else {
            operands.push(obj);
            continue;
        };
        let n = nums(&operands);
        let pt = |i: usize| (n[i], n[i + 1]);
        match op.as_str() {
            "BT" => in_text = true,
            "ET" => in_text = false,
            _ if in_text => {}
            "q" => stack.push(gs.clone()),
            "Q" => {
                if let Some(s) = stack.pop() {
                    gs = s;
                }
            }
            "cm" if n.len() == 6 => {
                let m = Affine([n[0], n[1], n[2], n[3], n[4], n[5]]);
                gs.ctm = gs.ctm.then(&m);
            }
            "w" if !n.is_empty() => gs.line_width = n[0],
            "g" | "rg" | "k" | "sc" | "scn" => {
                if let Some(c) = color_from(&operands) {
                    gs.fill = c;
                }
            }
            "G" | "RG" | "K" | "SC" | "SCN" => {
                if let Some(c) = color_from(&operands) {
                    gs.stroke = c;
                }
            }
            "m" if n.len() >= 2 => path.move_to(&gs.ctm, pt(0)),
            "l" if n.len() >= 2 => path.line_to(&gs.ctm, pt(0)),
            "c" if n.len() >= 6 => path.curve_to(&gs.ctm, pt(0), pt(2), pt(4)),
            "v" if n.len() >= 4 => {
                let c1 = path.current_user.unwrap_or(pt(0));
                path.curve_to(&gs.ctm, c1, pt(0), pt(2));
            }
            "y" if n.len() >= 4 => path.curve_to(&gs.ctm, pt(0), pt(2), pt(2)),
            "h" => path.close(),
            "re" if n.len() >= 4 => {
                let (x, y, w, h) = (n[0], n[1], n[2], n[3]);
                path.move_to(&gs.ctm, (x, y));
                path.line_to(&gs.ctm, (x + w, y));
                path.line_to(&gs.ctm, (x + w, y + h));
                path.line_to(&gs.ctm, (x, y + h));
                path.close();
            }
            "S" | "s" | "f" | "F" | "f*" | "B" | "B*" | "b" | "b*" | "n" => {
                if matches!(op.as_str(), "s" | "b" | "b*") {
                    path.close();
                }
                let (subpaths, closed) = path.take();
                let fill_rule = match op.as_str() {
                    "f" | "F" | "B" | "b" => Some(FillRule::NonZero),
                    "f*" | "B*" | "b*" => Some(FillRule::EvenOdd),
                    _ => None,
                };
                if let Some(rule) = fill_rule {
                    out.push(Shape::Fill {
                        subpaths: subpaths.clone(),
                        rule,
                        color: gs.fill,
                    });
                }
                if matches!(op.as_str(), "S" | "s" | "B" | "B*" | "b" | "b*") {
                    out.push(Shape::Stroke {
                        subpaths,
                        closed,
                        width: gs.line_width * gs.ctm.scale(),
                        color: gs.stroke,
                    });
                }
            }
            "Do" => {
                if let Some(Object::Name(name)) = operands.last() {
                    draw_xobject(doc, resources, name, &gs, out, depth)?;
                }
            }
            "BI" => skip_inline_image(&mut lx),
            _ => {}
        }
        operands.clear();
    }
    Ok(())
}

fn skip_inline_image(lx: &mut Lexer<'_>) {
    let bytes = lx.bytes;
    let mut i = lx.pos;
    while i + 2 <= bytes.len() {
        if &bytes[i..i + 2] == b"ID" {
            i += 3;
            break;
        }
        i += 1;
    }
    while i + 2 <= bytes.len() {
        let ws_before = i == 0 || bytes[i - 1].is_ascii_whitespace();
        let ws_after = bytes.get(i + 2).is_none_or(|c| c.is_ascii_whitespace());
        if &bytes[i..i + 2] == b"EI" && ws_before && ws_after {
            lx.pos = i + 2;
            return;
        }
        i += 1;
    }
    lx.pos = bytes.len();
}

fn draw_xobject(
    doc: &Document,
    resources: &Dict,
    name: &str,
    gs: &GState,
    out: &mut Vec<Shape>,
    depth: usize,
) -> Result<(), PdfError> {
    let Some(xobjects) = resources.get("XObject") else { return Ok(()) };
    let xobjects = doc.resolve(xobjects)?;
    let Some(entry) = xobjects.as_dict().and_then(|d| d.get(name)) else {
        return Ok(());
    };
    let Object::Stream(dict, raw) = doc.resolve(entry)? else {
        return Ok(());
    };
    match dict.get("Subtype").and_then(Object::as_name) {
        Some("Image") => {
            let (width, height, rgb) = decode_image(doc, &dict, &raw)?;
            // Image space has its first row at the top of the unit square.
            let flip = Affine([1.0, 0.0, 0.0, -1.0, 0.0, 1.0]);
            out.push(Shape::Image(PlacedImage {
                width,
                height,
                rgb,
                transform: gs.ctm.then(&flip),
            }));
        }
        Some("Form") if depth < MAX_FORM_DEPTH => {
            let data = doc.decode_stream(&dict, &raw)?;
            let mut inner = gs.clone();
            if let Some(Object::Array(m)) = dict.get("Matrix") {
                let v = nums(m);
                if v.len() == 6 {
                    inner.ctm = inner.ctm.then(&Affine([v[0], v[1], v[2], v[3], v[4], v[5]]));
                }
            }
            let res = match dict.get("Resources") {
                Some(r) => doc.resolve(r)?.as_dict().cloned().unwrap_or_default(),
                None => resources.clone(),
            };
            run(doc, &data, &res, inner, out, depth + 1)?;
        }
        _ => {}
    }
    Ok(())
}

fn decode_image(doc: &Document, dict: &Dict, raw: &[u8]) -> Result<(usize, usize, Vec<u8>), PdfError> {
    let get_int = |k: &str| dict.get(k).and_then(|o| doc.resolve(o).ok()).and_then(|o| o.as_i64());
    let width = get_int("Width").unwrap_or(0).max(0) as usize;
    let height = get_int("Height").unwrap_or(0).max(0) as usize;
    let data = doc.decode_stream(dict, raw)?;
    let is_dct = match dict.get("Filter").map(|f| doc.resolve(f)).transpose()? {
        Some(Object::Name(n)) => n == "DCTDecode" || n == "DCT",
        Some(Object::Array(items)) => items
            .last()
            .and_then(Object::as_name)
            .is_some_and(|n| n == "DCTDecode" || n == "DCT"),
        _ => false,
    };
    if is_dct {
        let page = crate::raster::decode_image(&data, 72).map_err(PdfError::Decode)?;
        return Ok((page.width(), page.height(), page.pixels().to_vec()));
    }
    if dict.get("ImageMask").is_some_and(|o| *o == Object::Bool(true)) {
        return Err(PdfError::Unsupported("image masks".into()));
    }
    let bpc = get_int("BitsPerComponent").unwrap_or(8);
    let cs = match dict.get("ColorSpace") {
        Some(c) => doc.resolve(c)?,
        None => Object::Name("DeviceGray".into()),
    };
    let (components, palette) = color_space(doc, &cs)?;
    let mut rgb = Vec::with_capacity(width * height * 3);
    match (bpc, components, &palette) {
        (8, _, Some(pal)) => {
            for &idx in data.iter().take(width * height) {
                let i = idx as usize * 3;
                rgb.extend_from_slice(pal.get(i..i + 3).unwrap_or(&[0, 0, 0]));
            }
        }
        (8, 1, None) => rgb.extend(data.iter().take(width * height).flat_map(|&g| [g, g, g])),
        (8, 3, None) => rgb.extend_from_slice(&data[..(width * height * 3).min(data.len())]),
        (8, 4, None) => {
            for px in data.chunks_exact(4).take(width * height) {
                let k = px[3] as f64 / 255.0;
                let c = |v: u8| ((1.0 - v as f64 / 255.0) * (1.0 - k) * 255.0).round() as u8;
                rgb.extend_from_slice(&[c(px[0]), c(px[1]), c(px[2])]);
            }
        }
        (1, 1, None) => {
            let row_bytes = width.div_ceil(8);
            for y in 0..height {
                for x in 0..width {
                    let byte = data.get(y * row_bytes + x / 8).copied().unwrap_or(0);
                    let bit = (byte >> (7 - (x % 8))) & 1;
                    let v = if bit == 1 { 255 } else { 0 };
                    rgb.extend_from_slice(&[v, v, v]);
                }
            }
        }
        _ => return Err(PdfError::Unsupported(format!("{bpc}-bit images with {components} components"))),
    }
    rgb.resize(width * height * 3, 255);
    Ok((width, height, rgb))
}

/// Component count and, for indexed spaces, an RGB palette.
fn color_space(doc: &Document, cs: &Object) -> Result<(usize, Option<Vec<u8>>), PdfError> {
    match cs {
        Object::Name(n) => Ok(match n.as_str() {
            "DeviceRGB" | "RGB" | "CalRGB" => (3, None),
            "DeviceCMYK" | "CMYK" => (4, None),
            _ => (1, None),
        }),
        Object::Array(items) => match items.first().and_then(Object::as_name) {
            Some("ICCBased") => {
                let stream = items.get(1).map(|o| doc.resolve(o)).transpose()?;
                let n = stream
                    .as_ref()
                    .and_then(|s| s.as_dict())
                    .and_then(|d| d.get("N"))
                    .and_then(Object::as_i64)
                    .unwrap_or(3);
                Ok((n as usize, None))
            }
            Some("Indexed") | Some("I") => {
                let base = items.get(1).map(|o| doc.resolve(o)).transpose()?.unwrap_or(Object::Null);
                let (base_n, _) = color_space(doc, &base)?;
                let lookup = match items.get(3).map(|o| doc.resolve(o)).transpose()? {
                    Some(Object::Str(s)) => s,
                    Some(Object::Stream(d, raw)) => doc.decode_stream(&d, &raw)?,
                    _ => Vec::new(),
                };
                let pal = lookup
                    .chunks(base_n.max(1))
                    .flat_map(|c| match c.len() {
                        3 => [c[0], c[1], c[2]],
                        1 => [c[0]; 3],
                        _ => [0, 0, 0],
                    })
                    .collect();
                Ok((1, Some(pal)))
            }
            Some("CalRGB") | Some("Lab") => Ok((3, None)),
            _ => Ok((1, None)),
        },
        _ => Ok((1, None)),
    }
}
