//! Filling the unobserved parts of a record.
//!
//! Three sources, applied in order: the limb-lead identities (exact), tiling
//! of a median beat at R-peak anchors, and an optional external backend that
//! speaks a small binary frame protocol over a child process or TCP.

use std::fmt;
use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Duration;

use crate::features::detect_r_peaks;
use crate::lead::{Lead, LEAD_COUNT, RECORD_SAMPLES, SAMPLE_RATE};
use crate::record::EcgRecord;

/// Seam cross-fade: 40 ms at 500 Hz.
pub const CROSSFADE_SAMPLES: usize = 20;

pub const REQUEST_MAGIC: &[u8; 4] = b"ECGC";
pub const RESPONSE_MAGIC: &[u8; 4] = b"ECGR";
/// Error frame: magic, version, u32 LE byte length, UTF-8 message.
pub const ERROR_MAGIC: &[u8; 4] = b"ECGE";
pub const PROTOCOL_VERSION: u16 = 1;

const FRAME_VALUES: usize = LEAD_COUNT * RECORD_SAMPLES;
const DEFAULT_RR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompletionError {
    #[error("lead {0} has no observed samples to complete from")]
    NoObservedSamples(Lead),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend returned malformed output: {0}")]
    BackendMalformedOutput(String),
    #[error("backend reported an error: {0}")]
    BackendRejected(String),
}

/// Where a completed sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Observed,
    Algebra,
    Tiled,
    Backend,
    /// Not filled by the paths that ran (only after algebra-only completion).
    Unfilled,
}

impl Provenance {
    fn is_known(self) -> bool {
        matches!(self, Provenance::Observed | Provenance::Algebra)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CompletionMode {
    Off,
    Algebra,
    #[default]
    Tiled,
    Backend,
}

impl fmt::Display for CompletionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompletionMode::Off => "off",
            CompletionMode::Algebra => "algebra",
            CompletionMode::Tiled => "tiled",
            CompletionMode::Backend => "backend",
        })
    }
}

impl FromStr for CompletionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(CompletionMode::Off),
            "algebra" => Ok(CompletionMode::Algebra),
            "tiled" => Ok(CompletionMode::Tiled),
            "backend" => Ok(CompletionMode::Backend),
            _ => Err(format!("unknown completion mode {s:?} (expected off, algebra, tiled or backend)")),
        }
    }
}

/// Completed leads plus one provenance tag per sample. The record's
/// `observed_mask` is left as it was.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionResult {
    pub record: EcgRecord,
    pub provenance: Vec<Vec<Provenance>>,
    pub warnings: Vec<String>,
}

impl CompletionResult {
    fn start(record: &EcgRecord) -> Self {
        let provenance = record
            .observed_mask
            .iter()
            .map(|m| m.iter().map(|&o| if o { Provenance::Observed } else { Provenance::Unfilled }).collect())
            .collect();
        CompletionResult {
            record: record.clone(),
            provenance,
            warnings: Vec::new(),
        }
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().flatten().filter(|&&q| q == p).count()
    }

    pub fn is_complete(&self) -> bool {
        self.count(Provenance::Unfilled) == 0
    }
}

/// `lead = a * I + b * II` for each limb lead.
fn limb_coefficients(lead: Lead) -> (f64, f64) {
    match lead {
        Lead::I => (1.0, 0.0),
        Lead::II => (0.0, 1.0),
        Lead::III => (-1.0, 1.0),
        Lead::AVR => (-0.5, -0.5),
        Lead::AVL => (1.0, -0.5),
        Lead::AVF => (-0.5, 1.0),
        _ => unreachable!("not a limb lead"),
    }
}

/// Pairs tried in order; the first pair observed at a sample determines it.
const LIMB_PAIRS: [(Lead, Lead); 15] = [
    (Lead::I, Lead::II),
    (Lead::II, Lead::III),
    (Lead::I, Lead::III),
    (Lead::I, Lead::AVR),
    (Lead::I, Lead::AVL),
    (Lead::I, Lead::AVF),
    (Lead::II, Lead::AVR),
    (Lead::II, Lead::AVL),
    (Lead::II, Lead::AVF),
    (Lead::III, Lead::AVR),
    (Lead::III, Lead::AVL),
    (Lead::III, Lead::AVF),
    (Lead::AVR, Lead::AVL),
    (Lead::AVR, Lead::AVF),
    (Lead::AVL, Lead::AVF),
];

/// Fills unobserved limb-lead samples wherever two limb leads are observed
/// at the same index. Any two of the six determine the rest.
pub fn complete_algebra(record: &EcgRecord) -> CompletionResult {
    let mut out = CompletionResult::start(record);
    let observed = |lead: Lead, t: usize| record.observed_mask[lead.index()][t];
    for t in 0..RECORD_SAMPLES {
        if Lead::LIMB.iter().all(|&l| observed(l, t)) {
            continue;
        }
        let Some(&(p, q)) = LIMB_PAIRS.iter().find(|(p, q)| observed(*p, t) && observed(*q, t)) else {
            continue;
        };
        let (ap, bp) = limb_coefficients(p);
        let (aq, bq) = limb_coefficients(q);
        let (vp, vq) = (record.leads[p.index()][t], record.leads[q.index()][t]);
        let det = ap * bq - aq * bp;
        let i = (vp * bq - vq * bp) / det;
        let ii = (ap * vq - aq * vp) / det;
        for lead in Lead::LIMB {
            if observed(lead, t) {
                continue;
            }
            let v = match lead {
                Lead::I => i,
                Lead::II => ii,
                Lead::III => ii - i,
                Lead::AVR => -(i + ii) / 2.0,
                Lead::AVL => i - ii / 2.0,
                Lead::AVF => ii - i / 2.0,
                _ => unreachable!(),
            };
            out.record.leads[lead.index()][t] = v;
            out.provenance[lead.index()][t] = Provenance::Algebra;
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Longest run of `true`, as a half-open range.
fn longest_run(flags: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut t = 0;
    while t < flags.len() {
        if !flags[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < flags.len() && flags[t] {
            t += 1;
        }
        if best.is_none_or(|(a, b)| t - start > b - a) {
            best = Some((start, t));
        }
    }
    best
}

fn median_rr(peaks: &[usize]) -> Option<f64> {
    let mut rr: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    (!rr.is_empty()).then(|| median(&mut rr))
}

/// Extends `peaks` by whole periods of `rr` until they cover `[0, RECORD_SAMPLES)`.
fn extend_anchors(peaks: &[usize], rr: f64) -> Vec<f64> {
    let mut anchors: Vec<f64> = peaks.iter().map(|&p| p as f64).collect();
    let Some(&first) = anchors.first() else {
        return Vec::new();
    };
    let mut before = Vec::new();
    let mut a = first - rr;
    while a > -rr {
        before.push(a);
        a -= rr;
    }
    before.reverse();
    let mut a = *anchors.last().expect("non-empty") + rr;
    let mut after = Vec::new();
    while a < RECORD_SAMPLES as f64 + rr {
        after.push(a);
        a += rr;
    }
    before.extend(anchors.drain(..));
    before.extend(after);
    before
}

/// Beat-synchronous template for one lead.
struct Template {
    /// Samples before the anchor.
    pre: usize,
    values: Vec<f64>,
}

impl Template {
    fn at(&self, offset: f64) -> f64 {
        let k = (offset.round() + self.pre as f64).clamp(0.0, (self.values.len() - 1) as f64);
        self.values[k as usize]
    }
}

/// Per-offset median over the beats of `signal` whose anchors fall in `run`.
fn build_template(signal: &[f64], run: (usize, usize), anchors: &[f64], rr: f64) -> Option<Template> {
    let pre = (0.4 * rr).round() as usize;
    let post = (0.6 * rr).round() as usize;
    let len = pre + post;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); len];
    let mut any = false;
    for &a in anchors {
        let a = a.round();
        if a < run.0 as f64 || a >= run.1 as f64 {
            continue;
        }
        any = true;
        for (k, column) in columns.iter_mut().enumerate() {
            let t = a + k as f64 - pre as f64;
            if t >= run.0 as f64 && t < run.1 as f64 {
                column.push(signal[t as usize]);
            }
        }
    }
    if !any {
        return None;
    }
    let mut values: Vec<Option<f64>> = columns.iter_mut().map(|c| (!c.is_empty()).then(|| median(c))).collect();
    // Offsets no beat covered take the nearest covered value.
    let known: Vec<usize> = (0..len).filter(|&k| values[k].is_some()).collect();
    for k in 0..len {
        if values[k].is_none() {
            let nearest = *known.iter().min_by_key(|&&j| j.abs_diff(k)).expect("anchor column is covered");
            values[k] = values[nearest];
        }
    }
    Some(Template {
        pre,
        values: values.into_iter().map(|v| v.expect("filled")).collect(),
    })
}

/// Template tiled at every anchor. Neighbouring tiles meet at the point
/// splitting the interval 40/60 and blend linearly over the cross-fade width.
fn tile(template: &Template, anchors: &[f64]) -> Vec<f64> {
    let half = CROSSFADE_SAMPLES as f64 / 2.0;
    let mut out = vec![0.0; RECORD_SAMPLES];
    for (t, slot) in out.iter_mut().enumerate() {
        let t = t as f64;
        // Index of the tile that owns t.
        let k = anchors
            .windows(2)
            .position(|w| t < w[0] + 0.6 * (w[1] - w[0]))
            .unwrap_or(anchors.len() - 1);
        let own = template.at(t - anchors[k]);
        let mut value = own;
        if k + 1 < anchors.len() {
            let boundary = anchors[k] + 0.6 * (anchors[k + 1] - anchors[k]);
            if t > boundary - half {
                let w = (t - (boundary - half)) / (2.0 * half);
                value = (1.0 - w) * own + w * template.at(t - anchors[k + 1]);
            }
        }
        if k > 0 {
            let boundary = anchors[k - 1] + 0.6 * (anchors[k] - anchors[k - 1]);
            if t < boundary + half {
                let w = ((boundary + half) - t) / (2.0 * half);
                value = (1.0 - w) * own + w * template.at(t - anchors[k - 1]);
            }
        }
        *slot = value;
    }
    out
}

/// R-peak anchors from a fully known lead (II preferred).
fn rhythm_anchors(result: &CompletionResult) -> Option<(Lead, Vec<usize>)> {
    let order = std::iter::once(Lead::II).chain(Lead::ALL.into_iter().filter(|&l| l != Lead::II));
    for lead in order {
        if result.provenance[lead.index()].iter().all(|p| p.is_known()) {
            let peaks = detect_r_peaks(&result.record.leads[lead.index()], SAMPLE_RATE);
            if peaks.len() >= 2 {
                return Some((lead, peaks));
            }
        }
    }
    None
}

/// Algebra, then tiling of each lead's median beat over what is still missing.
pub fn complete_tiled(record: &EcgRecord) -> Result<CompletionResult, CompletionError> {
    let mut out = complete_algebra(record);
    if out.is_complete() {
        return Ok(out);
    }
    let global = rhythm_anchors(&out);
    if global.is_none() {
        out.warnings.push("no full-length lead with detectable beats; tiling on each lead's own beats".into());
    }
    for lead in Lead::ALL {
        let li = lead.index();
        let known: Vec<bool> = out.provenance[li].iter().map(|p| p.is_known()).collect();
        if known.iter().all(|&k| k) {
            continue;
        }
        let run = longest_run(&known).ok_or(CompletionError::NoObservedSamples(lead))?;
        let signal = &out.record.leads[li];
        let (peaks, rr) = match &global {
            Some((_, peaks)) => (peaks.clone(), median_rr(peaks).expect("two peaks")),
            None => {
                let local: Vec<usize> = detect_r_peaks(&signal[run.0..run.1], SAMPLE_RATE)
                    .into_iter()
                    .map(|p| p + run.0)
                    .collect();
                let rr = median_rr(&local).unwrap_or(DEFAULT_RR * SAMPLE_RATE);
                (local, rr)
            }
        };
        let anchors = extend_anchors(&peaks, rr);
        let fill = match build_template(signal, run, &anchors, rr) {
            Some(template) => tile(&template, &anchors),
            None => {
                out.warnings.push(format!("lead {lead}: no beat inside the observed window; filling with its median"));
                let mut v = signal[run.0..run.1].to_vec();
                vec![median(&mut v); RECORD_SAMPLES]
            }
        };
        let filled = align_to_seams(signal, &known, &fill);
        for t in 0..RECORD_SAMPLES {
            if !known[t] {
                out.record.leads[li][t] = filled[t];
                out.provenance[li][t] = Provenance::Tiled;
            }
        }
    }
    Ok(out)
}

/// Shifts `fill` so it meets the known signal at each seam, the offset decaying
/// linearly over the cross-fade width into the unknown region.
fn align_to_seams(signal: &[f64], known: &[bool], fill: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mut out = fill.to_vec();
    let mut t = 0;
    while t < n {
        if known[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && !known[t] {
            t += 1;
        }
        let end = t;
        let left = (start > 0).then(|| signal[start - 1] - fill[start - 1]);
        let right = (end < n).then(|| signal[end] - fill[end]);
        for (k, slot) in out[start..end].iter_mut().enumerate() {
            let from_left = k + 1;
            let from_right = end - start - k;
            let mut shift = 0.0;
            if let Some(d) = left {
                shift += d * ramp(from_left);
            }
            if let Some(d) = right {
                shift += d * ramp(from_right);
            }
            *slot += shift;
        }
    }
    out
}

fn ramp(distance: usize) -> f64 {
    if distance > CROSSFADE_SAMPLES {
        0.0
    } else {
        1.0 - distance as f64 / (CROSSFADE_SAMPLES + 1) as f64
    }
}

/// Where to send completion requests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    /// `host:port`, one connection per request.
    Tcp(String),
    /// Program and arguments; one child per request, frame on stdin, reply on stdout.
    Subprocess(Vec<String>),
}

impl Backend {
    /// `exec:<command line>` or `tcp://host:port` / `host:port`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        if let Some(cmd) = spec.strip_prefix("exec:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err("empty backend command".into());
            }
            return Ok(Backend::Subprocess(argv));
        }
        let addr = spec.strip_prefix("tcp://").unwrap_or(spec);
        match addr.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(Backend::Tcp(addr.to_string())),
            _ => Err(format!("backend address {spec:?} is neither host:port nor exec:<command>")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BackendConfig {
    pub backend: Backend,
    pub timeout: Duration,
}

impl BackendConfig {
    pub fn new(backend: Backend) -> Self {
        BackendConfig {
            backend,
            timeout: Duration::from_secs(120),
        }
    }
}

/// Request frame: observed samples as f32, NaN elsewhere, then one mask byte per sample.
pub fn encode_request(record: &EcgRecord) -> Vec<u8> {
    let mut buf = Vec::with_capacity(6 + FRAME_VALUES * 5);
    buf.extend_from_slice(REQUEST_MAGIC);
    buf.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    for (lead, mask) in record.leads.iter().zip(&record.observed_mask) {
        for (&v, &m) in lead.iter().zip(mask) {
            let x = if m { v as f32 } else { f32::NAN };
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    for mask in &record.observed_mask {
        buf.extend(mask.iter().map(|&m| m as u8));
    }
    buf
}

/// Reads one response frame. Returns the 12 x 5,000 values, row-major.
pub fn read_response(reader: &mut impl Read) -> Result<Vec<f32>, CompletionError> {
    let malformed = |what: String| CompletionError::BackendMalformedOutput(what);
    let mut header = [0u8; 6];
    reader
        .read_exact(&mut header)
        .map_err(|e| malformed(format!("reading frame header: {e}")))?;
    let version = u16::from_le_bytes([header[4], header[5]]);
    if &header[..4] == ERROR_MAGIC {
        let mut len = [0u8; 4];
        reader
            .read_exact(&mut len)
            .map_err(|e| malformed(format!("reading error frame: {e}")))?;
        let len = u32::from_le_bytes(len).min(1 << 16) as usize;
        let mut msg = vec![0u8; len];
        reader
            .read_exact(&mut msg)
            .map_err(|e| malformed(format!("reading error frame: {e}")))?;
        return Err(CompletionError::BackendRejected(String::from_utf8_lossy(&msg).into_owned()));
    }
    if &header[..4] != RESPONSE_MAGIC {
        return Err(malformed(format!("bad magic {:?}", String::from_utf8_lossy(&header[..4]))));
    }
    if version != PROTOCOL_VERSION {
        return Err(malformed(format!("unsupported protocol version {version}")));
    }
    let mut body = vec![0u8; FRAME_VALUES * 4];
    reader
        .read_exact(&mut body)
        .map_err(|e| malformed(format!("expected {FRAME_VALUES} floats: {e}")))?;
    let values: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(malformed(format!(
            "non-finite value at lead {} sample {}",
            Lead::ALL[k / RECORD_SAMPLES],
            k % RECORD_SAMPLES
        )));
    }
    Ok(values)
}

fn exchange_tcp(addr: &str, request: &[u8], timeout: Duration) -> Result<Vec<f32>, CompletionError> {
    let unavailable = |e: std::io::Error| CompletionError::BackendUnavailable(format!("{addr}: {e}"));
    let sock = addr
        .to_socket_addrs()
        .map_err(unavailable)?
        .next()
        .ok_or_else(|| CompletionError::BackendUnavailable(format!("{addr}: no address")))?;
    let mut stream = TcpStream::connect_timeout(&sock, timeout.min(Duration::from_secs(10))).map_err(unavailable)?;
    stream.set_read_timeout(Some(timeout)).map_err(unavailable)?;
    stream.set_write_timeout(Some(timeout)).map_err(unavailable)?;
    stream.write_all(request).map_err(unavailable)?;
    stream.flush().map_err(unavailable)?;
    read_response(&mut stream)
}

fn exchange_subprocess(argv: &[String], request: Vec<u8>, timeout: Duration) -> Result<Vec<f32>, CompletionError> {
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| CompletionError::BackendUnavailable(format!("{}: {e}", argv[0])))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    // Write and read concurrently: the child may answer before draining its input.
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(&request);
    });
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(read_response(&mut stdout));
    });
    let outcome = rx
        .recv_timeout(timeout)
        .unwrap_or_else(|_| Err(CompletionError::BackendUnavailable(format!("{}: no reply within {timeout:?}", argv[0]))));
    let _ = child.kill();
    let _ = child.wait();
    let _ = writer.join();
    outcome
}

/// Sends the record to the backend and merges its answer under the observed
/// and algebra samples, which are never replaced.
pub fn complete_backend(record: &EcgRecord, cfg: &BackendConfig) -> Result<CompletionResult, CompletionError> {
    let request = encode_request(record);
    let values = match &cfg.backend {
        Backend::Tcp(addr) => exchange_tcp(addr, &request, cfg.timeout)?,
        Backend::Subprocess(argv) => exchange_subprocess(argv, request, cfg.timeout)?,
    };
    let mut out = complete_algebra(record);
    for (li, row) in values.chunks_exact(RECORD_SAMPLES).enumerate() {
        for (t, &v) in row.iter().enumerate() {
            if !out.provenance[li][t].is_known() {
                out.record.leads[li][t] = v as f64;
                out.provenance[li][t] = Provenance::Backend;
            }
        }
    }
    Ok(out)
}

/// Runs the configured completion path. Backend failures fall back to tiling
/// with a warning; the returned error is only for records tiling cannot handle.
pub fn complete(record: &EcgRecord, mode: CompletionMode, backend: Option<&BackendConfig>) -> Result<CompletionResult, CompletionError> {
    match mode {
        CompletionMode::Off => Ok(CompletionResult::start(record)),
        CompletionMode::Algebra => Ok(complete_algebra(record)),
        CompletionMode::Tiled => complete_tiled(record),
        CompletionMode::Backend => {
            let attempt = match backend {
                Some(cfg) => complete_backend(record, cfg),
                None => Err(CompletionError::BackendUnavailable("no backend address configured".into())),
            };
            match attempt {
                Ok(r) => Ok(r),
                Err(e) => {
                    let mut r = complete_tiled(record)?;
                    r.warnings.insert(0, format!("{e}; fell back to tiled completion"));
                    Ok(r)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_record, SynthConfig};

    fn only_observed(full: &EcgRecord, mask: impl Fn(Lead, usize) -> bool) -> EcgRecord {
        let mut r = full.clone();
        for lead in Lead::ALL {
            for t in 0..RECORD_SAMPLES {
                let m = mask(lead, t);
                r.observed_mask[lead.index()][t] = m;
                if !m {
                    r.leads[lead.index()][t] = 0.0;
                }
            }
        }
        r
    }

    #[test]
    fn algebra_example_values() {
        let mut r = EcgRecord::empty();
        r.leads[Lead::I.index()][7] = 0.3;
        r.leads[Lead::II.index()][7] = 0.8;
        r.observed_mask[Lead::I.index()][7] = true;
        r.observed_mask[Lead::II.index()][7] = true;
        r.leads[Lead::V3.index()][9] = 1.0;
        r.observed_mask[Lead::V3.index()][9] = true;
        let out = complete_algebra(&r);
        let at = |l: Lead| out.record.leads[l.index()][7];
        assert!((at(Lead::III) - 0.5).abs() < 1e-12);
        assert!((at(Lead::AVR) + 0.55).abs() < 1e-12);
        assert!((at(Lead::AVL) + 0.1).abs() < 1e-12);
        assert!((at(Lead::AVF) - 0.65).abs() < 1e-12);
        assert_eq!(out.provenance[Lead::AVF.index()][7], Provenance::Algebra);
        // Index 9 has only V3: nothing else changes.
        for lead in Lead::ALL {
            let expect = if lead == Lead::V3 { Provenance::Observed } else { Provenance::Unfilled };
            assert_eq!(out.provenance[lead.index()][9], expect);
        }
    }

    #[test]
    fn algebra_from_any_pair() {
        let full = synth_record(3, &SynthConfig::default()).record;
        for &(p, q) in &LIMB_PAIRS {
            let r = only_observed(&full, |l, _| l == p || l == q || !Lead::LIMB.contains(&l));
            let out = complete_algebra(&r);
            assert!(out.is_complete(), "{p}/{q}");
            for lead in Lead::LIMB {
                let err = out.record.lead(lead).iter().zip(full.lead(lead)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-9, "{p}/{q} -> {lead}: {err}");
            }
        }
    }

    #[test]
    fn tiled_fully_observed_is_identity() {
        let full = synth_record(5, &SynthConfig::default()).record;
        let out = complete_tiled(&full).unwrap();
        assert_eq!(out.record, full);
        assert_eq!(out.count(Provenance::Observed), FRAME_VALUES);
    }

    #[test]
    fn tiled_reconstructs_periodic_record() {
        let cfg = SynthConfig {
            rr_jitter: 0.0,
            ..SynthConfig::beats_only()
        };
        let s = synth_record(11, &cfg);
        let layout = crate::layout::LayoutSpec::standard_3x4();
        let r = only_observed(&s.record, |l, t| {
            l == Lead::II || layout.window_of(l).is_some_and(|w| (w * 1250..(w + 1) * 1250).contains(&t))
        });
        let out = complete_tiled(&r).unwrap();
        assert!(out.is_complete());
        for lead in Lead::ALL {
            for &rp in &s.r_peaks {
                let (lo, hi) = (rp.saturating_sub(200), (rp + 300).min(RECORD_SAMPLES));
                if hi - lo < 500 || (lo..hi).any(|t| r.observed_mask[lead.index()][t]) {
                    continue;
                }
                let c = crate::features::pcc(&out.record.leads[lead.index()][lo..hi], &s.record.leads[lead.index()][lo..hi]).unwrap();
                assert!(c >= 0.9, "{lead} beat at {rp}: {c}");
            }
        }
    }

    #[test]
    fn single_beat_window_repeats_at_anchors() {
        let s = synth_record(2, &SynthConfig::beats_only());
        let r0 = s.r_peaks[4];
        let r = only_observed(&s.record, |l, t| l != Lead::V1 || (t + 250 >= r0 && t < r0 + 250));
        let out = complete_tiled(&r).unwrap();
        let v1 = out.record.lead(Lead::V1);
        let anchors = detect_r_peaks(r.lead(Lead::II), SAMPLE_RATE);
        let here = anchors.iter().copied().min_by_key(|a| a.abs_diff(r0)).unwrap();
        for &a in &anchors {
            if a != here && a >= 50 && a + 50 < RECORD_SAMPLES {
                // Tile interior: the R sample equals the observed one at the same phase.
                assert!((v1[a] - v1[here]).abs() < 0.1, "anchor {a}");
            }
        }
    }

    #[test]
    fn pass_through_is_bit_identical() {
        let s = synth_record(8, &SynthConfig::default());
        let layout = crate::layout::LayoutSpec::standard_3x4();
        let r = only_observed(&s.record, |l, t| {
            l == Lead::II || layout.window_of(l).is_some_and(|w| (w * 1250..(w + 1) * 1250).contains(&t))
        });
        for out in [complete_algebra(&r), complete_tiled(&r).unwrap()] {
            for l in 0..LEAD_COUNT {
                for t in 0..RECORD_SAMPLES {
                    if r.observed_mask[l][t] {
                        assert_eq!(out.record.leads[l][t].to_bits(), r.leads[l][t].to_bits());
                    }
                }
            }
            let again = complete_tiled(&out.record).unwrap();
            assert_eq!(out.record.observed_mask, again.record.observed_mask);
        }
    }

    #[test]
    fn no_rhythm_lead_tiles_on_own_beats() {
        let s = synth_record(4, &SynthConfig::beats_only());
        let r = only_observed(&s.record, |_, t| t < 2500);
        let out = complete_tiled(&r).unwrap();
        assert!(out.is_complete());
        assert!(out.warnings.iter().any(|w| w.contains("own beats")));
        let c = crate::features::pcc(&out.record.lead(Lead::V5)[2500..], &s.record.lead(Lead::V5)[2500..]).unwrap();
        assert!(c > 0.7, "{c}");
    }

    #[test]
    fn empty_lead_is_an_error() {
        let s = synth_record(4, &SynthConfig::beats_only());
        let r = only_observed(&s.record, |l, _| l != Lead::V2);
        assert_eq!(complete_tiled(&r), Err(CompletionError::NoObservedSamples(Lead::V2)));
    }

    #[test]
    fn request_frame_layout() {
        let mut r = EcgRecord::empty();
        r.leads[0][0] = 1.5;
        r.observed_mask[0][0] = true;
        let f = encode_request(&r);
        assert_eq!(f.len(), 6 + FRAME_VALUES * 5);
        assert_eq!(&f[..4], b"ECGC");
        assert_eq!(u16::from_le_bytes([f[4], f[5]]), 1);
        assert_eq!(f32::from_le_bytes(f[6..10].try_into().unwrap()), 1.5);
        assert!(f32::from_le_bytes(f[10..14].try_into().unwrap()).is_nan());
        assert_eq!(f[6 + FRAME_VALUES * 4], 1);
        assert_eq!(f[6 + FRAME_VALUES * 4 + 1], 0);
    }

    #[test]
    fn response_validation() {
        let mut ok = Vec::new();
        ok.extend_from_slice(RESPONSE_MAGIC);
        ok.extend_from_slice(&1u16.to_le_bytes());
        ok.extend(std::iter::repeat_n(0.25f32.to_le_bytes(), FRAME_VALUES).flatten());
        assert_eq!(read_response(&mut ok.as_slice()).unwrap().len(), FRAME_VALUES);

        let mut nan = ok.clone();
        nan[6..10].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_response(&mut nan.as_slice()), Err(CompletionError::BackendMalformedOutput(_))));
        let short = &ok[..ok.len() - 4];
        assert!(matches!(read_response(&mut &short[..]), Err(CompletionError::BackendMalformedOutput(_))));
        let echo = encode_request(&EcgRecord::empty());
        assert!(matches!(read_response(&mut echo.as_slice()), Err(CompletionError::BackendMalformedOutput(_))));

        let mut err = Vec::new();
        err.extend_from_slice(ERROR_MAGIC);
        err.extend_from_slice(&1u16.to_le_bytes());
        err.extend_from_slice(&4u32.to_le_bytes());
        err.extend_from_slice(b"busy");
        assert_eq!(read_response(&mut err.as_slice()), Err(CompletionError::BackendRejected("busy".into())));
    }

    #[test]
    fn backend_address_parsing() {
        assert_eq!(Backend::parse("127.0.0.1:7000"), Ok(Backend::Tcp("127.0.0.1:7000".into())));
        assert_eq!(Backend::parse("tcp://localhost:9"), Ok(Backend::Tcp("localhost:9".into())));
        assert_eq!(
            Backend::parse("exec:python serve.py --stdio"),
            Ok(Backend::Subprocess(vec!["python".into(), "serve.py".into(), "--stdio".into()]))
        );
        assert!(Backend::parse("localhost").is_err());
        assert!(Backend::parse("exec:").is_err());
    }
}
