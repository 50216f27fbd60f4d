//! Record files: XML with integer microvolts, or plain CSV.
//!
//! ```xml
//! <ecg version="1" sample_rate="500">
//!   <lead id="I" unit="uV">12 15 19 ...</lead>
//!   <mask lead="I">1*1250 0*3750</mask>
//!   ...
//!   <metadata><text x0="10" y0="12" x1="80" y1="30">25 mm/s</text></metadata>
//! </ecg>
//! ```
//!
//! CSV holds the samples only: a header of lead names and 5,000 rows of
//! microvolts. It carries no mask, so a CSV record reads back fully observed.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::lead::{Lead, LEAD_COUNT, RECORD_SAMPLES, SAMPLE_RATE};
use crate::record::EcgRecord;
use crate::textscrub::{MetadataEntry, PageMetadata};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RecordIoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}, <{element}>: {reason}")]
    SchemaViolation { line: usize, element: String, reason: String },
    #[error("cannot tell the record format of {}", .0.display())]
    UnknownFormat(PathBuf),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RecordFormat {
    #[default]
    Xml,
    Csv,
}

impl RecordFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RecordFormat::Xml => "xml",
            RecordFormat::Csv => "csv",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?;
        ext.parse().ok()
    }
}

impl fmt::Display for RecordFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "xml" => Ok(RecordFormat::Xml),
            "csv" => Ok(RecordFormat::Csv),
            _ => Err(format!("unknown record format {s:?} (expected xml or csv)")),
        }
    }
}

/// Millivolts to integer microvolts, halves rounded away from zero.
pub fn to_microvolts(mv: f64) -> i64 {
    (mv * 1000.0).round() as i64
}

pub fn from_microvolts(uv: i64) -> f64 {
    uv as f64 / 1000.0
}

/// Run-length mask: `1*1250 0*3750`.
pub fn encode_mask(mask: &[bool]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        let v = mask[i];
        let start = i;
        while i < mask.len() && mask[i] == v {
            i += 1;
        }
        parts.push(format!("{}*{}", v as u8, i - start));
    }
    parts.join(" ")
}

pub fn decode_mask(text: &str, len: usize) -> Result<Vec<bool>, String> {
    let mut out = Vec::with_capacity(len);
    for token in text.split_whitespace() {
        let (v, n) = token.split_once('*').ok_or_else(|| format!("mask run {token:?} is not value*count"))?;
        let v = match v {
            "0" => false,
            "1" => true,
            _ => return Err(format!("mask value {v:?} is not 0 or 1")),
        };
        let n: usize = n.parse().map_err(|_| format!("mask count {n:?} is not a number"))?;
        if out.len() + n > len {
            return Err(format!("mask covers more than {len} samples"));
        }
        out.extend(std::iter::repeat_n(v, n));
    }
    if out.len() != len {
        return Err(format!("mask covers {} of {len} samples", out.len()));
    }
    Ok(out)
}

/// XML text of `record`. With `anonymize` the page metadata is left out.
pub fn to_xml(record: &EcgRecord, anonymize: bool) -> String {
    let mut s = String::with_capacity(LEAD_COUNT * RECORD_SAMPLES * 6);
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!("<ecg version=\"{FORMAT_VERSION}\" sample_rate=\"{}\">\n", SAMPLE_RATE as u32));
    for lead in Lead::ALL {
        s.push_str(&format!("  <lead id=\"{lead}\" unit=\"uV\">"));
        let values: Vec<String> = record.lead(lead).iter().map(|&v| to_microvolts(v).to_string()).collect();
        s.push_str(&values.join(" "));
        s.push_str("</lead>\n");
        s.push_str(&format!("  <mask lead=\"{lead}\">{}</mask>\n", encode_mask(record.mask(lead))));
    }
    if !anonymize && !record.metadata.is_empty() {
        s.push_str("  <metadata>\n");
        for e in &record.metadata.entries {
            s.push_str(&format!(
                "    <text x0=\"{}\" y0=\"{}\" x1=\"{}\" y1=\"{}\">{}</text>\n",
                e.x0,
                e.y0,
                e.x1,
                e.y1,
                escape(e.text.as_str())
            ));
        }
        s.push_str("  </metadata>\n");
    }
    s.push_str("</ecg>\n");
    s
}

/// CSV text: header of lead names, then one row of microvolts per sample.
pub fn to_csv(record: &EcgRecord) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(Lead::ALL.iter().map(|l| l.name())).expect("in-memory write");
    for t in 0..RECORD_SAMPLES {
        w.write_record(record.leads.iter().map(|lead| to_microvolts(lead[t]).to_string()))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

pub fn serialize(record: &EcgRecord, format: RecordFormat, anonymize: bool) -> String {
    match format {
        RecordFormat::Xml => to_xml(record, anonymize),
        RecordFormat::Csv => to_csv(record),
    }
}

pub fn write_record(path: &Path, record: &EcgRecord, format: RecordFormat, anonymize: bool) -> Result<(), RecordIoError> {
    fs::write(path, serialize(record, format, anonymize)).map_err(|source| RecordIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_record(path: &Path) -> Result<EcgRecord, RecordIoError> {
    let format = RecordFormat::from_path(path).ok_or_else(|| RecordIoError::UnknownFormat(path.to_path_buf()))?;
    let text = fs::read_to_string(path).map_err(|source| RecordIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        RecordFormat::Xml => parse_xml(&text),
        RecordFormat::Csv => parse_csv(&text),
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

struct XmlCtx<'a> {
    text: &'a str,
}

impl XmlCtx<'_> {
    fn err(&self, offset: usize, element: &str, reason: impl Into<String>) -> RecordIoError {
        RecordIoError::SchemaViolation {
            line: line_at(self.text, offset),
            element: element.to_string(),
            reason: reason.into(),
        }
    }

    fn attr(&self, e: &BytesStart, name: &str, offset: usize) -> Result<Option<String>, RecordIoError> {
        let element = String::from_utf8_lossy(e.name().as_ref()).into_owned();
        for a in e.attributes() {
            let a = a.map_err(|err| self.err(offset, &element, err.to_string()))?;
            if a.key.as_ref() == name.as_bytes() {
                let v = a.unescape_value().map_err(|err| self.err(offset, &element, err.to_string()))?;
                return Ok(Some(v.into_owned()));
            }
        }
        Ok(None)
    }

    fn required(&self, e: &BytesStart, name: &str, offset: usize) -> Result<String, RecordIoError> {
        let element = String::from_utf8_lossy(e.name().as_ref()).into_owned();
        self.attr(e, name, offset)?
            .ok_or_else(|| self.err(offset, &element, format!("missing attribute {name:?}")))
    }
}

/// The element whose text content is being collected.
enum Open {
    Lead(Lead),
    Mask(Lead),
    Text(MetadataEntry),
    Other,
}

pub fn parse_xml(text: &str) -> Result<EcgRecord, RecordIoError> {
    let ctx = XmlCtx { text };
    let mut reader = Reader::from_str(text);
    let mut leads: Vec<Option<Vec<f64>>> = vec![None; LEAD_COUNT];
    let mut masks: Vec<Option<Vec<bool>>> = vec![None; LEAD_COUNT];
    let mut metadata = PageMetadata::default();
    let mut stack: Vec<String> = Vec::new();
    let mut open = Open::Other;
    let mut content = String::new();
    let mut closed_root = false;

    loop {
        let offset = reader.buffer_position() as usize;
        let event = reader.read_event().map_err(|e| {
            let at = reader.error_position() as usize;
            ctx.err(at, stack.last().map_or("document", |s| s.as_str()), e.to_string())
        })?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let parent = stack.last().map(String::as_str);
                open = match (parent, name.as_str()) {
                    (None, "ecg") => {
                        if closed_root {
                            return Err(ctx.err(offset, &name, "second root element"));
                        }
                        let version = ctx.required(&e, "version", offset)?;
                        if version != FORMAT_VERSION.to_string() {
                            return Err(ctx.err(offset, &name, format!("unsupported version {version:?}")));
                        }
                        let rate = ctx.required(&e, "sample_rate", offset)?;
                        if rate.parse::<f64>().ok() != Some(SAMPLE_RATE) {
                            return Err(ctx.err(offset, &name, format!("sample_rate {rate:?} is not 500")));
                        }
                        Open::Other
                    }
                    (None, _) => return Err(ctx.err(offset, &name, "root element must be <ecg>")),
                    (Some("ecg"), "lead") => {
                        let id = ctx.required(&e, "id", offset)?;
                        let lead: Lead = id.parse().map_err(|_| ctx.err(offset, &name, format!("unknown lead {id:?}")))?;
                        if let Some(unit) = ctx.attr(&e, "unit", offset)? {
                            if unit != "uV" {
                                return Err(ctx.err(offset, &name, format!("unit {unit:?} is not uV")));
                            }
                        }
                        if leads[lead.index()].is_some() {
                            return Err(ctx.err(offset, &name, format!("lead {lead} appears twice")));
                        }
                        Open::Lead(lead)
                    }
                    (Some("ecg"), "mask") => {
                        let id = ctx.required(&e, "lead", offset)?;
                        let lead: Lead = id.parse().map_err(|_| ctx.err(offset, &name, format!("unknown lead {id:?}")))?;
                        Open::Mask(lead)
                    }
                    (Some("ecg"), "metadata") => Open::Other,
                    (Some("metadata"), "text") => {
                        let num = |k: &str| -> Result<usize, RecordIoError> {
                            let v = ctx.required(&e, k, offset)?;
                            v.parse().map_err(|_| ctx.err(offset, "text", format!("{k}={v:?} is not a number")))
                        };
                        Open::Text(MetadataEntry {
                            text: String::new(),
                            x0: num("x0")?,
                            y0: num("y0")?,
                            x1: num("x1")?,
                            y1: num("y1")?,
                        })
                    }
                    (Some(p), _) => return Err(ctx.err(offset, &name, format!("unexpected inside <{p}>"))),
                };
                content.clear();
                stack.push(name);
            }
            Event::Empty(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                match (stack.last().map(String::as_str), name.as_str()) {
                    (Some("ecg"), "metadata") => {}
                    _ => return Err(ctx.err(offset, &name, "unexpected empty element")),
                }
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| ctx.err(offset, stack.last().map_or("document", |s| s.as_str()), e.to_string()))?;
                content.push_str(&s);
            }
            Event::CData(t) => content.push_str(&String::from_utf8_lossy(&t)),
            Event::End(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                stack.pop();
                match std::mem::replace(&mut open, Open::Other) {
                    Open::Lead(lead) => {
                        let mut values = Vec::with_capacity(RECORD_SAMPLES);
                        for tok in content.split_whitespace() {
                            let v: i64 = tok
                                .parse()
                                .map_err(|_| ctx.err(offset, &name, format!("lead {lead}: {tok:?} is not an integer")))?;
                            values.push(from_microvolts(v));
                        }
                        if values.len() != RECORD_SAMPLES {
                            return Err(ctx.err(
                                offset,
                                &name,
                                format!("lead {lead} has {} samples, expected {RECORD_SAMPLES}", values.len()),
                            ));
                        }
                        leads[lead.index()] = Some(values);
                    }
                    Open::Mask(lead) => {
                        let m = decode_mask(&content, RECORD_SAMPLES).map_err(|r| ctx.err(offset, &name, format!("lead {lead}: {r}")))?;
                        masks[lead.index()] = Some(m);
                    }
                    Open::Text(mut entry) => {
                        entry.text = content.trim().to_string();
                        metadata.entries.push(entry);
                    }
                    Open::Other => {}
                }
                content.clear();
                if stack.is_empty() {
                    closed_root = true;
                }
            }
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }

    let end = text.len();
    if !closed_root {
        let element = stack.last().cloned().unwrap_or_else(|| "ecg".into());
        return Err(ctx.err(end, &element, "document ends before the element is closed"));
    }
    let mut record = EcgRecord::empty();
    for lead in Lead::ALL {
        let i = lead.index();
        record.leads[i] = leads[i]
            .take()
            .ok_or_else(|| ctx.err(end, "ecg", format!("lead {lead} is missing")))?;
        record.observed_mask[i] = masks[i].take().unwrap_or_else(|| vec![true; RECORD_SAMPLES]);
    }
    record.metadata = metadata;
    Ok(record)
}

pub fn parse_csv(text: &str) -> Result<EcgRecord, RecordIoError> {
    let violation = |line: usize, reason: String| RecordIoError::SchemaViolation {
        line,
        element: "csv".into(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| violation(1, e.to_string()))?.clone();
    if headers.len() != LEAD_COUNT {
        return Err(violation(1, format!("header has {} columns, expected {LEAD_COUNT}", headers.len())));
    }
    let mut order = Vec::with_capacity(LEAD_COUNT);
    for h in headers.iter() {
        let lead: Lead = h.trim().parse().map_err(|_| violation(1, format!("unknown lead column {h:?}")))?;
        if order.contains(&lead) {
            return Err(violation(1, format!("lead column {lead} appears twice")));
        }
        order.push(lead);
    }
    let mut record = EcgRecord::fully_observed(vec![vec![0.0; RECORD_SAMPLES]; LEAD_COUNT]);
    let mut rows = 0;
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| violation(line, e.to_string()))?;
        if row.len() != LEAD_COUNT {
            return Err(violation(line, format!("{} columns, expected {LEAD_COUNT}", row.len())));
        }
        if rows == RECORD_SAMPLES {
            return Err(violation(line, format!("more than {RECORD_SAMPLES} rows")));
        }
        for (lead, cell) in order.iter().zip(row.iter()) {
            let v: i64 = cell
                .trim()
                .parse()
                .map_err(|_| violation(line, format!("{lead}: {cell:?} is not an integer")))?;
            record.leads[lead.index()][rows] = from_microvolts(v);
        }
        rows += 1;
    }
    if rows != RECORD_SAMPLES {
        return Err(violation(rows + 1, format!("{rows} rows, expected {RECORD_SAMPLES}")));
    }
    Ok(record)
}
