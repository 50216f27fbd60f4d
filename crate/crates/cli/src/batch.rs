//! File-by-file batch runs for `digitize` and `complete`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use ecgtize::completion::{complete, CompletionMode};
use ecgtize::pipeline::{digitize_page, DigitizeConfig, Digitized};
use ecgtize::raster::load_document;
use ecgtize::record::EcgRecord;
use ecgtize::recordio::{read_record, write_record};
use ecgtize::textscrub::OcrConfig;

use crate::config::RunConfig;

pub const PAGE_EXTENSIONS: &[&str] = &["pdf", "png", "jpg", "jpeg"];
pub const RECORD_EXTENSIONS: &[&str] = &["xml", "csv"];
pub const FAILURE_LOG: &str = "failures.log";

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Files named on the command line plus matching files directly inside named
/// directories, sorted within each directory.
pub fn collect_inputs(paths: &[PathBuf], exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && has_extension(f, exts))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            bail!("input {} does not exist", p.display());
        }
    }
    if out.is_empty() {
        bail!("no input files (looked for {})", exts.join(", "));
    }
    let mut stems: HashMap<String, &PathBuf> = HashMap::new();
    for p in &out {
        let stem = file_stem(p);
        if let Some(prev) = stems.insert(stem.clone(), p) {
            bail!("{} and {} would both write {stem}.*", prev.display(), p.display());
        }
    }
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug)]
pub struct BatchSummary {
    pub inputs: usize,
    pub ok: usize,
    pub failures: Vec<(PathBuf, String)>,
    pub wall: Duration,
}

impl BatchSummary {
    pub fn line(&self, verb: &str) -> String {
        let per = if self.inputs > 0 {
            self.wall.as_secs_f64() / self.inputs as f64
        } else {
            0.0
        };
        format!(
            "{verb} {} files: {} ok, {} failed; {per:.3} s per ECG ({:.3} s wall)",
            self.inputs,
            self.ok,
            self.failures.len(),
            self.wall.as_secs_f64()
        )
    }
}

/// Runs `work` over every input on `jobs` threads, then writes the failure log.
fn run_batch<F>(inputs: &[PathBuf], cfg: &RunConfig, work: F) -> Result<BatchSummary>
where
    F: Fn(&Path) -> Result<Vec<String>> + Sync,
{
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("starting worker threads")?;
    let start = Instant::now();
    let results: Vec<Result<Vec<String>>> = pool.install(|| inputs.par_iter().map(|p| work(p)).collect());
    let wall = start.elapsed();

    let mut failures = Vec::new();
    for (path, result) in inputs.iter().zip(results) {
        match result {
            Ok(warnings) => {
                for w in warnings {
                    log::warn!("{}: {w}", path.display());
                }
            }
            Err(e) => {
                log::error!("{}: {e:#}", path.display());
                failures.push((path.clone(), format!("{e:#}")));
            }
        }
    }
    let log: String = failures
        .iter()
        .map(|(p, e)| format!("{}\t{}\n", p.display(), e.replace('\n', " ")))
        .collect();
    let log_path = cfg.out_dir.join(FAILURE_LOG);
    fs::write(&log_path, log).with_context(|| format!("writing {}", log_path.display()))?;
    Ok(BatchSummary {
        inputs: inputs.len(),
        ok: inputs.len() - failures.len(),
        failures,
        wall,
    })
}

fn digitize_config(cfg: &RunConfig) -> DigitizeConfig {
    DigitizeConfig {
        method: cfg.method,
        layout: cfg.layout.clone(),
        ocr: OcrConfig {
            mode: cfg.ocr,
            command: cfg.ocr_cmd.clone(),
            ..OcrConfig::default()
        },
        ..DigitizeConfig::default()
    }
}

fn finish_record(record: &EcgRecord, cfg: &RunConfig, warnings: &mut Vec<String>) -> Result<EcgRecord> {
    if cfg.completion == CompletionMode::Off {
        return Ok(record.clone());
    }
    let done = complete(record, cfg.completion, cfg.backend.as_ref()).context("completion")?;
    warnings.extend(done.warnings);
    Ok(done.record)
}

fn output_path(cfg: &RunConfig, input: &Path) -> PathBuf {
    cfg.out_dir.join(format!("{}.{}", file_stem(input), cfg.format.extension()))
}

fn bands_csv(d: &Digitized) -> String {
    let mut s = String::from("band,row_start,row_end,col_start,col_end\n");
    for (i, b) in d.bands.iter().enumerate() {
        s.push_str(&format!("{i},{},{},{},{}\n", b.row_start, b.row_end, b.col_start, b.col_end));
    }
    s
}

pub fn digitize_file(path: &Path, cfg: &RunConfig) -> Result<Vec<String>> {
    let page = load_document(path, cfg.dpi)?;
    let d = digitize_page(&page, &digitize_config(cfg))?;
    let mut warnings = d.warnings.clone();
    let record = finish_record(&d.record, cfg, &mut warnings)?;
    write_record(&output_path(cfg, path), &record, cfg.format, cfg.anonymize)?;
    if cfg.dump_bands {
        let p = cfg.out_dir.join(format!("{}.bands.csv", file_stem(path)));
        fs::write(&p, bands_csv(&d)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(warnings)
}

pub fn complete_file(path: &Path, cfg: &RunConfig) -> Result<Vec<String>> {
    let record = read_record(path)?;
    let mut warnings = Vec::new();
    let record = finish_record(&record, cfg, &mut warnings)?;
    write_record(&output_path(cfg, path), &record, cfg.format, cfg.anonymize)?;
    Ok(warnings)
}

pub fn digitize_all(inputs: &[PathBuf], cfg: &RunConfig) -> Result<BatchSummary> {
    run_batch(inputs, cfg, |p| digitize_file(p, cfg))
}

pub fn complete_all(inputs: &[PathBuf], cfg: &RunConfig) -> Result<BatchSummary> {
    run_batch(inputs, cfg, |p| complete_file(p, cfg))
}
