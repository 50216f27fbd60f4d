//! `evaluate`: digitized records against references, paired by file stem.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use ecgtize::features::{compare_features, detect_fiducials, lead_metrics, FeatureDeltas, FiducialSet, LeadMetrics, MetricsReport, Scope};
use ecgtize::lead::{Lead, SAMPLE_RATE};
use ecgtize::record::EcgRecord;
use ecgtize::recordio::read_record;

use crate::batch::{collect_inputs, file_stem, RECORD_EXTENSIONS};

pub const METRICS_FILE: &str = "metrics.csv";
pub const FEATURES_FILE: &str = "features.csv";

#[derive(Debug, thiserror::Error)]
#[error("no digitized record shares a file stem with a reference record")]
pub struct NoPairs;

pub struct EvalOptions {
    pub digitized: PathBuf,
    pub reference: PathBuf,
    pub out_dir: PathBuf,
    /// Soft-DTW smoothing; `None` skips soft-DTW.
    pub gamma: Option<f64>,
    pub feature_lead: Lead,
    pub jobs: usize,
}

pub struct EvalSummary {
    pub pairs: usize,
    pub failed: usize,
    pub report: MetricsReport,
}

/// Stem-matched pairs in stem order.
pub fn pair_by_stem(digitized: &[PathBuf], reference: &[PathBuf]) -> Vec<(String, PathBuf, PathBuf)> {
    let refs: BTreeMap<String, &PathBuf> = reference.iter().map(|p| (file_stem(p), p)).collect();
    let mut pairs: Vec<(String, PathBuf, PathBuf)> = digitized
        .iter()
        .filter_map(|d| {
            let stem = file_stem(d);
            refs.get(&stem).map(|r| (stem, d.clone(), (*r).clone()))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    pairs
}

struct PairResult {
    metrics: Vec<LeadMetrics>,
    features: Vec<(Scope, usize, usize, Option<FeatureDeltas>)>,
}

fn subset(set: &FiducialSet, keep: impl Fn(usize) -> bool) -> FiducialSet {
    FiducialSet {
        beats: set.beats.iter().filter(|b| keep(b.r)).cloned().collect(),
        sample_rate: set.sample_rate,
    }
}

fn evaluate_pair(dig: &EcgRecord, reference: &EcgRecord, opts: &EvalOptions) -> PairResult {
    let mut metrics = Vec::new();
    for lead in Lead::ALL {
        let (dm, rm) = (dig.mask(lead), reference.mask(lead));
        for (scope, want) in [(Scope::Observed, true), (Scope::Reconstructed, false)] {
            if let Some(m) = lead_metrics(lead, scope, dig.lead(lead), reference.lead(lead), |t| dm[t] == want && rm[t], opts.gamma) {
                metrics.push(m);
            }
        }
    }

    let mut features = Vec::new();
    let lead = opts.feature_lead;
    let dig_set = detect_fiducials(dig.lead(lead), SAMPLE_RATE).ok();
    let ref_set = detect_fiducials(reference.lead(lead), SAMPLE_RATE).ok();
    let dm = dig.mask(lead);
    for (scope, want) in [(Scope::Observed, true), (Scope::Reconstructed, false)] {
        if !dm.iter().any(|&m| m == want) {
            continue;
        }
        let d = dig_set.as_ref().map(|s| subset(s, |r| dm[r] == want));
        let nd = d.as_ref().map_or(0, |s| s.beats.len());
        let nr = ref_set.as_ref().map_or(0, |s| s.beats.len());
        let deltas = match (&d, &ref_set) {
            (Some(d), Some(r)) if !d.beats.is_empty() => Some(compare_features(d, r)),
            _ => None,
        };
        features.push((scope, nd, nr, deltas));
    }
    PairResult { metrics, features }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn run(opts: &EvalOptions) -> Result<EvalSummary> {
    let digitized = collect_inputs(std::slice::from_ref(&opts.digitized), RECORD_EXTENSIONS)?;
    let reference = collect_inputs(std::slice::from_ref(&opts.reference), RECORD_EXTENSIONS)?;
    let pairs = pair_by_stem(&digitized, &reference);
    if pairs.is_empty() {
        return Err(NoPairs.into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .context("starting worker threads")?;
    let results: Vec<Result<PairResult>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(_, d, r)| {
                let dig = read_record(d)?;
                let reference = read_record(r)?;
                Ok(evaluate_pair(&dig, &reference, opts))
            })
            .collect()
    });

    let mut metrics_csv = csv::Writer::from_writer(Vec::new());
    metrics_csv.write_record(["record", "lead", "scope", "samples", "pcc", "rmse_mv", "sdtw"])?;
    let mut features_csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["record", "lead", "scope", "dig_beats", "ref_beats"];
    header.extend(FeatureDeltas::COLUMNS);
    features_csv.write_record(&header)?;

    let mut report = MetricsReport::default();
    let mut failed = 0;
    for ((stem, d, _), result) in pairs.iter().zip(results) {
        let result = match result {
            Ok(r) => r,
            Err(e) => {
                log::error!("{}: {e:#}", d.display());
                failed += 1;
                continue;
            }
        };
        for m in &result.metrics {
            metrics_csv.write_record([
                stem.clone(),
                m.lead.to_string(),
                m.scope.name().to_string(),
                m.samples.to_string(),
                fmt_opt(m.pcc),
                format!("{:.6}", m.rmse),
                fmt_opt(m.sdtw),
            ])?;
        }
        for (scope, nd, nr, deltas) in &result.features {
            let mut row = vec![
                stem.clone(),
                opts.feature_lead.to_string(),
                scope.name().to_string(),
                nd.to_string(),
                nr.to_string(),
            ];
            match deltas {
                Some(d) => row.extend(d.values().iter().map(|v| fmt_opt(v.is_finite().then_some(*v)))),
                None => row.extend(std::iter::repeat_n(String::new(), FeatureDeltas::COLUMNS.len())),
            }
            features_csv.write_record(&row)?;
        }
        report.rows.extend(result.metrics);
    }

    fs::create_dir_all(&opts.out_dir).with_context(|| format!("creating {}", opts.out_dir.display()))?;
    write(&opts.out_dir.join(METRICS_FILE), metrics_csv.into_inner()?)?;
    write(&opts.out_dir.join(FEATURES_FILE), features_csv.into_inner()?)?;
    Ok(EvalSummary {
        pairs: pairs.len(),
        failed,
        report,
    })
}

fn write(path: &Path, bytes: Vec<u8>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

impl EvalSummary {
    pub fn line(&self) -> String {
        let mut s = format!("evaluated {} pairs ({} unreadable)", self.pairs, self.failed);
        for scope in [Scope::Observed, Scope::Reconstructed] {
            if let (Some(p), _) = self.report.mean_pcc(scope) {
                let rmse = self.report.mean_rmse(scope).unwrap_or(f64::NAN);
                s.push_str(&format!("; {}: mean PCC {p:.4}, mean RMSE {rmse:.4} mV", scope.name()));
            }
        }
        s
    }
}
