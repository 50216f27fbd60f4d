use std::fmt::Write as _;
use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::scene::{Affine, FillRule, Scene, Shape};

fn num(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" || s.is_empty() {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn color(c: [u8; 3]) -> String {
    format!(
        "{} {} {}",
        num(c[0] as f64 / 255.0),
        num(c[1] as f64 / 255.0),
        num(c[2] as f64 / 255.0)
    )
}

fn deflate(data: &[u8]) -> Vec<u8> {
    let mut z = ZlibEncoder::new(Vec::new(), Compression::default());
    z.write_all(data).expect("in-memory write");
    z.finish().expect("in-memory write")
}

/// Serializes `scene` as a single-page PDF whose media box matches the scene size.
pub fn write_scene(scene: &Scene) -> Vec<u8> {
    let h = scene.height_pt;
    let flip_y = |y: f64| h - y;
    let mut content = String::new();
    let mut images: Vec<Vec<u8>> = Vec::new();
    let _ = writeln!(content, "0 J 1 j");
    if scene.background != [255, 255, 255] {
        let _ = writeln!(
            content,
            "{} rg 0 0 {} {} re f",
            color(scene.background),
            num(scene.width_pt),
            num(h)
        );
    }
    for shape in &scene.shapes {
        match shape {
            Shape::Fill { subpaths, rule, color: c } => {
                let _ = writeln!(content, "{} rg", color(*c));
                for sp in subpaths.iter().filter(|s| !s.is_empty()) {
                    for (i, p) in sp.iter().enumerate() {
                        let op = if i == 0 { "m" } else { "l" };
                        let _ = writeln!(content, "{} {} {op}", num(p.0), num(flip_y(p.1)));
                    }
                    content.push_str("h\n");
                }
                content.push_str(if *rule == FillRule::EvenOdd { "f*\n" } else { "f\n" });
            }
            Shape::Stroke {
                subpaths,
                closed,
                width,
                color: c,
            } => {
                let _ = writeln!(content, "{} RG {} w", color(*c), num(*width));
                for (sp, &is_closed) in subpaths.iter().zip(closed) {
                    for (i, p) in sp.iter().enumerate() {
                        let op = if i == 0 { "m" } else { "l" };
                        let _ = writeln!(content, "{} {} {op}", num(p.0), num(flip_y(p.1)));
                    }
                    if is_closed {
                        content.push_str("h\n");
                    }
                }
                content.push_str("S\n");
            }
            Shape::Image(img) => {
                // Unit square (y up, first row on top) -> scene space -> PDF user space.
                let to_scene_unit = Affine([1.0, 0.0, 0.0, -1.0, 0.0, 1.0]);
                let to_pdf = Affine([1.0, 0.0, 0.0, -1.0, 0.0, h]);
                let m = to_pdf.then(&img.transform.then(&to_scene_unit));
                let name = format!("Im{}", images.len());
                let _ = writeln!(
                    content,
                    "q {} cm /{name} Do Q",
                    m.0.iter().map(|&v| num(v)).collect::<Vec<_>>().join(" ")
                );
                let mut obj = Vec::new();
                let data = deflate(&img.rgb);
                let _ = write!(
                    obj,
                    "<< /Type /XObject /Subtype /Image /Width {} /Height {} /ColorSpace /DeviceRGB \
                     /BitsPerComponent 8 /Filter /FlateDecode /Length {} >>\nstream\n",
                    img.width,
                    img.height,
                    data.len()
                );
                obj.extend_from_slice(&data);
                obj.extend_from_slice(b"\nendstream");
                images.push(obj);
            }
        }
    }

    let content_data = deflate(content.as_bytes());
    let mut objects: Vec<Vec<u8>> = Vec::new();
    objects.push(b"<< /Type /Catalog /Pages 2 0 R >>".to_vec());
    objects.push(b"<< /Type /Pages /Kids [3 0 R] /Count 1 >>".to_vec());
    let xobjects: String = (0..images.len())
        .map(|i| format!("/Im{i} {} 0 R ", 5 + i))
        .collect();
    objects.push(
        format!(
            "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {} {}] /Resources << /XObject << {xobjects}>> >> /Contents 4 0 R >>",
            num(scene.width_pt),
            num(h)
        )
        .into_bytes(),
    );
    let mut content_obj = format!("<< /Length {} /Filter /FlateDecode >>\nstream\n", content_data.len()).into_bytes();
    content_obj.extend_from_slice(&content_data);
    content_obj.extend_from_slice(b"\nendstream");
    objects.push(content_obj);
    objects.extend(images);

    let mut out = b"%PDF-1.4\n%\xE2\xE3\xCF\xD3\n".to_vec();
    let mut offsets = Vec::with_capacity(objects.len());
    for (i, body) in objects.iter().enumerate() {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n", i + 1).as_bytes());
        out.extend_from_slice(body);
        out.extend_from_slice(b"\nendobj\n");
    }
    let xref_at = out.len();
    let mut xref = format!("xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1);
    for off in offsets {
        let _ = writeln!(xref, "{off:010} 00000 n ");
    }
    let _ = write!(
        xref,
        "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{xref_at}\n%%EOF\n",
        objects.len() + 1
    );
    out.extend_from_slice(xref.as_bytes());
    out
}
