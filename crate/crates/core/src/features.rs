//! Signal fidelity metrics and P/Q/R/S/T fiducial detection.

use crate::lead::Lead;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("constant signal: correlation undefined")]
    DegenerateInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty signal")]
    Empty,
    #[error("no beats detected")]
    NoBeatsDetected,
}

/// Pearson correlation, clamped to [-1, 1].
pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64, FeatureError> {
    if a.len() != b.len() {
        return Err(FeatureError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(FeatureError::DegenerateInput);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(FeatureError::DegenerateInput);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64, FeatureError> {
    if a.len() != b.len() {
        return Err(FeatureError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(FeatureError::Empty);
    }
    let se: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((se / a.len() as f64).sqrt())
}

fn soft_min3(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    let m = a.min(b).min(c);
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let s = (-(a - m) / gamma).exp() + (-(b - m) / gamma).exp() + (-(c - m) / gamma).exp();
    m - gamma * s.ln()
}

/// Soft-DTW cost with squared-difference ground cost.
pub fn sdtw(a: &[f64], b: &[f64], gamma: f64) -> Result<f64, FeatureError> {
    if a.is_empty() || b.is_empty() {
        return Err(FeatureError::Empty);
    }
    assert!(gamma > 0.0, "gamma must be positive");
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let d = x - b[j - 1];
            cur[j] = d * d + soft_min3(prev[j - 1], prev[j], cur[j - 1], gamma);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// R-centred 500-sample beat window: 200 samples before R, 300 after.
#[derive(Clone, Debug, PartialEq)]
pub struct Heartbeat {
    pub r_index: usize,
    /// Index of `samples[0]` in the source signal.
    pub start: usize,
    pub samples: Vec<f64>,
    /// Truncated at a record edge.
    pub partial: bool,
}

pub const BEAT_BEFORE: usize = 200;
pub const BEAT_AFTER: usize = 300;

pub fn segment_beats(signal: &[f64], r_peaks: &[usize]) -> Vec<Heartbeat> {
    r_peaks
        .iter()
        .filter(|&&r| r < signal.len())
        .map(|&r| {
            let start = r.saturating_sub(BEAT_BEFORE);
            let end = (r + BEAT_AFTER).min(signal.len());
            Heartbeat {
                r_index: r,
                start,
                samples: signal[start..end].to_vec(),
                partial: end - start < BEAT_BEFORE + BEAT_AFTER,
            }
        })
        .collect()
}

fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// QRS locations: band-limited derivative, squaring, 150 ms integration and
/// an adaptive signal/noise threshold with a 200 ms refractory period. Each
/// detection is refined to the largest absolute deflection from the local mean
/// within 100 ms.
pub fn detect_r_peaks(signal: &[f64], fs: f64) -> Vec<usize> {
    let n = signal.len();
    if n < 5 {
        return Vec::new();
    }
    // Band-limit: remove wander (~0.2 s mean), smooth (~20 ms mean).
    let wander = moving_average(signal, (0.2 * fs) as usize | 1);
    let hp: Vec<f64> = signal.iter().zip(&wander).map(|(x, w)| x - w).collect();
    let bp = moving_average(&hp, (0.02 * fs) as usize | 1);
    let mut deriv = vec![0.0; n];
    for i in 2..n - 2 {
        deriv[i] = (-bp[i - 2] - 2.0 * bp[i - 1] + 2.0 * bp[i + 1] + bp[i + 2]) / 8.0;
    }
    let squared: Vec<f64> = deriv.iter().map(|d| d * d).collect();
    let integrated = moving_average(&squared, (0.15 * fs) as usize | 1);
    let peak = integrated.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Vec::new();
    }

    let refractory = (0.2 * fs) as usize;
    let mut candidates = Vec::new();
    for i in 1..n - 1 {
        if integrated[i] > integrated[i - 1] && integrated[i] >= integrated[i + 1] {
            candidates.push(i);
        }
    }
    let learn = (2.0 * fs) as usize;
    let mut spk = 0.25 * integrated[..learn.min(n)].iter().copied().fold(0.0, f64::max);
    let mut npk = 0.5 * integrated.iter().sum::<f64>() / n as f64;
    let mut beats: Vec<usize> = Vec::new();
    for &c in &candidates {
        let v = integrated[c];
        let threshold = npk + 0.25 * (spk - npk);
        if v > threshold {
            match beats.last_mut() {
                Some(last) if c - *last < refractory => {
                    if v > integrated[*last] {
                        *last = c;
                    }
                }
                _ => beats.push(c),
            }
            spk = 0.125 * v + 0.875 * spk;
        } else {
            npk = 0.125 * v + 0.875 * npk;
        }
    }

    let search = (0.1 * fs) as usize;
    let mut peaks: Vec<usize> = beats
        .iter()
        .map(|&b| {
            let lo = b.saturating_sub(search);
            let hi = (b + search + 1).min(n);
            (lo..hi)
                .max_by(|&i, &j| (signal[i] - wander[i]).abs().total_cmp(&(signal[j] - wander[j]).abs()))
                .expect("non-empty search window")
        })
        .collect();
    peaks.dedup();
    peaks.retain(|&p| p > 0 && p + 1 < n);
    peaks
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeatFiducials {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub t: usize,
    /// Signal values at the peaks, mV.
    pub p_amp: f64,
    pub q_amp: f64,
    pub r_amp: f64,
    pub s_amp: f64,
    pub t_amp: f64,
    /// Fractional sample positions from the tangent method.
    pub q_onset: f64,
    pub s_offset: f64,
    pub t_end: f64,
    pub qrs: f64,
    pub qt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiducialSet {
    pub beats: Vec<BeatFiducials>,
    pub sample_rate: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn argmin(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi).min_by(|&i, &j| x[i].total_cmp(&x[j])).unwrap_or(lo)
}

fn argmax_by(lo: usize, hi: usize, key: impl Fn(usize) -> f64) -> usize {
    (lo..hi).max_by(|&i, &j| key(i).total_cmp(&key(j))).unwrap_or(lo)
}

/// Where the tangent at the steepest point of `x` in `[lo, hi)` crosses `iso`.
/// `sign` selects rising (+1) or falling (-1) flanks.
fn tangent_crossing(x: &[f64], lo: usize, hi: usize, iso: f64, sign: f64) -> Option<f64> {
    let lo = lo.max(1);
    let hi = hi.min(x.len() - 1);
    if lo >= hi {
        return None;
    }
    let k = argmax_by(lo, hi, |i| sign * (x[i + 1] - x[i - 1]));
    let slope = (x[k + 1] - x[k - 1]) / 2.0;
    if sign * slope <= 0.0 {
        return None;
    }
    Some(k as f64 + (iso - x[k]) / slope)
}

/// Per-beat fiducials of one lead. Window constants: Q within 60 ms before R,
/// S within 80 ms after, T in [S+40, S+400] ms, P in [R-280, R-80] ms.
pub fn detect_fiducials(signal: &[f64], fs: f64) -> Result<FiducialSet, FeatureError> {
    let ms = |v: f64| (v * fs / 1000.0).round() as usize;
    let n = signal.len();
    let mut beats = Vec::new();
    for r in detect_r_peaks(signal, fs) {
        // P and T searches are clipped at the record edges; Q and S need their full windows.
        if r < ms(120.0) || r + ms(200.0) >= n {
            continue;
        }
        let mut window: Vec<f64> = signal[r - ms(400.0).min(r)..(r + ms(600.0)).min(n)].to_vec();
        let iso = median(&mut window);
        let q = argmin(signal, r - ms(60.0), r);
        let s = argmin(signal, r + 1, r + ms(80.0) + 1);
        let t = argmax_by(s + ms(40.0), (s + ms(400.0) + 1).min(n - 1), |i| (signal[i] - iso).abs());
        let p = argmax_by(r.saturating_sub(ms(280.0)), r - ms(80.0) + 1, |i| (signal[i] - iso).abs());
        if !(p < q && q < r && r < s && s < t) {
            continue;
        }
        // Onset on the Q dip's falling flank, or the R upstroke when there is no real Q.
        let q_depth = iso - signal[q];
        let r_height = signal[r] - iso;
        let q_onset = if q_depth > 0.05 * r_height.abs() {
            tangent_crossing(signal, q.saturating_sub(ms(40.0)), q, iso, -1.0)
        } else {
            tangent_crossing(signal, q, r, iso, 1.0)
        };
        let s_offset = tangent_crossing(signal, s + 1, s + ms(60.0), iso, 1.0);
        let t_sign = if signal[t] >= iso { -1.0 } else { 1.0 };
        let t_end = tangent_crossing(signal, t + 1, t + ms(150.0), iso, t_sign);
        let (Some(q_onset), Some(s_offset), Some(t_end)) = (q_onset, s_offset, t_end) else {
            continue;
        };
        let qrs = (s_offset - q_onset) / fs;
        let qt = (t_end - q_onset) / fs;
        if !(qrs >= 0.0 && qt >= qrs) {
            continue;
        }
        beats.push(BeatFiducials {
            p,
            q,
            r,
            s,
            t,
            p_amp: signal[p],
            q_amp: signal[q],
            r_amp: signal[r],
            s_amp: signal[s],
            t_amp: signal[t],
            q_onset,
            s_offset,
            t_end,
            qrs,
            qt,
        });
    }
    if beats.is_empty() {
        return Err(FeatureError::NoBeatsDetected);
    }
    Ok(FiducialSet { beats, sample_rate: fs })
}

/// Absolute differences of per-record medians: positions and durations in
/// seconds, amplitudes in mV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureDeltas {
    pub p_pos: f64,
    pub q_pos: f64,
    pub s_pos: f64,
    pub t_pos: f64,
    pub qt: f64,
    pub qrs: f64,
    pub r_amp: f64,
    pub p_amp: f64,
    pub q_amp: f64,
    pub s_amp: f64,
    pub t_amp: f64,
}

impl FeatureDeltas {
    pub const COLUMNS: [&'static str; 11] = [
        "d_p_pos_s", "d_q_pos_s", "d_s_pos_s", "d_t_pos_s", "d_qt_s", "d_qrs_s", "d_r_amp_mv", "d_p_amp_mv", "d_q_amp_mv",
        "d_s_amp_mv", "d_t_amp_mv",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.p_pos, self.q_pos, self.s_pos, self.t_pos, self.qt, self.qrs, self.r_amp, self.p_amp, self.q_amp, self.s_amp,
            self.t_amp,
        ]
    }
}

/// Beats are paired by R peaks within 100 ms when possible; medians are taken over the pairs.
pub fn compare_features(dig: &FiducialSet, reference: &FiducialSet) -> FeatureDeltas {
    let tol = 0.1 * reference.sample_rate;
    let pairs: Vec<(&BeatFiducials, &BeatFiducials)> = dig
        .beats
        .iter()
        .filter_map(|d| {
            reference
                .beats
                .iter()
                .min_by_key(|r| r.r.abs_diff(d.r))
                .filter(|r| (r.r.abs_diff(d.r) as f64) <= tol)
                .map(|r| (d, r))
        })
        .collect();
    let (ds, rs): (Vec<&BeatFiducials>, Vec<&BeatFiducials>) = if pairs.is_empty() {
        (dig.beats.iter().collect(), reference.beats.iter().collect())
    } else {
        pairs.into_iter().unzip()
    };
    let delta = |f: &dyn Fn(&BeatFiducials) -> f64, scale_d: f64, scale_r: f64| {
        let mut a: Vec<f64> = ds.iter().map(|b| f(b) * scale_d).collect();
        let mut b: Vec<f64> = rs.iter().map(|b| f(b) * scale_r).collect();
        (median(&mut a) - median(&mut b)).abs()
    };
    let (td, tr) = (1.0 / dig.sample_rate, 1.0 / reference.sample_rate);
    FeatureDeltas {
        p_pos: delta(&|b| b.p as f64, td, tr),
        q_pos: delta(&|b| b.q as f64, td, tr),
        s_pos: delta(&|b| b.s as f64, td, tr),
        t_pos: delta(&|b| b.t as f64, td, tr),
        qt: delta(&|b| b.qt, 1.0, 1.0),
        qrs: delta(&|b| b.qrs, 1.0, 1.0),
        r_amp: delta(&|b| b.r_amp, 1.0, 1.0),
        p_amp: delta(&|b| b.p_amp, 1.0, 1.0),
        q_amp: delta(&|b| b.q_amp, 1.0, 1.0),
        s_amp: delta(&|b| b.s_amp, 1.0, 1.0),
        t_amp: delta(&|b| b.t_amp, 1.0, 1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Observed,
    Reconstructed,
    Full,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::Observed => "observed",
            Scope::Reconstructed => "reconstructed",
            Scope::Full => "full",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeadMetrics {
    pub lead: Lead,
    pub scope: Scope,
    pub samples: usize,
    /// `None` when either signal is constant over the scope.
    pub pcc: Option<f64>,
    pub rmse: f64,
    /// `None` when soft-DTW was not requested.
    pub sdtw: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<LeadMetrics>,
}

impl MetricsReport {
    /// Mean PCC over rows of `scope`, skipping undefined values; also returns how many were skipped.
    pub fn mean_pcc(&self, scope: Scope) -> (Option<f64>, usize) {
        let rows: Vec<&LeadMetrics> = self.rows.iter().filter(|r| r.scope == scope).collect();
        let defined: Vec<f64> = rows.iter().filter_map(|r| r.pcc).collect();
        let skipped = rows.len() - defined.len();
        if defined.is_empty() {
            (None, skipped)
        } else {
            (Some(defined.iter().sum::<f64>() / defined.len() as f64), skipped)
        }
    }

    pub fn mean_rmse(&self, scope: Scope) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.scope == scope).map(|r| r.rmse).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Metrics over the samples where `selected(t)` holds. Soft-DTW is computed
/// only when `gamma` is given; it is quadratic in the sample count.
pub fn lead_metrics(
    lead: Lead,
    scope: Scope,
    dig: &[f64],
    reference: &[f64],
    selected: impl Fn(usize) -> bool,
    gamma: Option<f64>,
) -> Option<LeadMetrics> {
    let idx: Vec<usize> = (0..dig.len().min(reference.len())).filter(|&t| selected(t)).collect();
    if idx.is_empty() {
        return None;
    }
    let a: Vec<f64> = idx.iter().map(|&t| dig[t]).collect();
    let b: Vec<f64> = idx.iter().map(|&t| reference[t]).collect();
    Some(LeadMetrics {
        lead,
        scope,
        samples: idx.len(),
        pcc: pcc(&a, &b).ok(),
        rmse: rmse(&a, &b).expect("equal non-empty lengths"),
        sdtw: gamma.map(|g| sdtw(&a, &b, g).expect("non-empty")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_record, SynthConfig};

    #[test]
    fn pcc_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(pcc(&a, &a).unwrap(), 1.0);
        assert_eq!(pcc(&a, &a.map(|x| -x)).unwrap(), -1.0);
        // Textbook formula for [1,2,3,4] vs [1,2,3,5]: means 2.5 and 2.75.
        let sab = -1.5 * -1.75 + -0.5 * -0.75 + 0.5 * 0.25 + 1.5 * 2.25;
        let saa = 2.25 + 0.25 + 0.25 + 2.25;
        let sbb: f64 = 1.75f64.powi(2) + 0.75f64.powi(2) + 0.25f64.powi(2) + 2.25f64.powi(2);
        let expected = sab / (saa * sbb).sqrt();
        assert!((pcc(&a, &[1.0, 2.0, 3.0, 5.0]).unwrap() - expected).abs() < 1e-12);
        assert_eq!(pcc(&a, &[2.0; 4]), Err(FeatureError::DegenerateInput));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.0, 2.0, 5.0], &[1.5, 2.5, 5.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(FeatureError::LengthMismatch(1, 2)));
    }

    #[test]
    fn sdtw_two_by_two_by_hand() {
        // R11 = 0, R12 = R21 = 1, R22 = 0 + softmin(0, 1, 1) = -ln(1 + 2/e).
        let expected = -(1.0 + 2.0 * (-1.0f64).exp()).ln();
        assert!((sdtw(&[0.0, 1.0], &[0.0, 1.0], 1.0).unwrap() - expected).abs() < 1e-12);
        assert!(sdtw(&[0.3, 1.0, -2.0], &[0.3, 1.0, -2.0], 1e-6).unwrap().abs() < 1e-4);
        assert_eq!(sdtw(&[], &[1.0], 1.0), Err(FeatureError::Empty));
    }

    #[test]
    fn beats_are_500_samples() {
        let x: Vec<f64> = (0..2000).map(|i| i as f64).collect();
        let beats = segment_beats(&x, &[100, 1000, 1900]);
        assert_eq!(beats[1].samples.len(), 500);
        assert_eq!(beats[1].samples[200], 1000.0);
        assert!(!beats[1].partial);
        assert!(beats[0].partial && beats[2].partial);
        assert_eq!(beats[0].start, 0);
    }

    #[test]
    fn zero_lead_has_no_beats() {
        assert_eq!(detect_fiducials(&[0.0; 5000], 500.0), Err(FeatureError::NoBeatsDetected));
    }

    #[test]
    fn r_peaks_match_generator() {
        let s = synth_record(11, &SynthConfig::default());
        let peaks = detect_r_peaks(s.record.lead(Lead::II), 500.0);
        assert_eq!(peaks, s.r_peaks);
    }

    #[test]
    fn scaling_keeps_positions() {
        let s = synth_record(4, &SynthConfig::beats_only());
        let x = s.record.lead(Lead::II);
        let doubled: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
        let a = detect_fiducials(x, 500.0).unwrap();
        let b = detect_fiducials(&doubled, 500.0).unwrap();
        assert_eq!(a.beats.len(), b.beats.len());
        for (p, q) in a.beats.iter().zip(&b.beats) {
            assert_eq!((p.p, p.q, p.r, p.s, p.t), (q.p, q.q, q.r, q.s, q.t));
            assert!((q.r_amp - 2.0 * p.r_amp).abs() < 1e-12);
            assert!((q.t_end - p.t_end).abs() < 1e-9);
        }
    }

    fn beat_at(r: usize, shift: usize) -> BeatFiducials {
        BeatFiducials {
            p: r - 80 + shift,
            q: r - 15 + shift,
            r: r + shift,
            s: r + 15 + shift,
            t: r + 140 + shift,
            p_amp: 0.1,
            q_amp: -0.1,
            r_amp: 1.0,
            s_amp: -0.2,
            t_amp: 0.3,
            q_onset: (r - 23 + shift) as f64,
            s_offset: (r + 25 + shift) as f64,
            t_end: (r + 180 + shift) as f64,
            qrs: 0.096,
            qt: 0.406,
        }
    }

    #[test]
    fn feature_deltas() {
        let set = |shift: usize| FiducialSet {
            beats: [500, 900, 1300].iter().map(|&r| beat_at(r, shift)).collect(),
            sample_rate: 500.0,
        };
        assert_eq!(compare_features(&set(0), &set(0)), FeatureDeltas::default());
        let d = compare_features(&set(0), &set(5));
        for v in [d.p_pos, d.q_pos, d.s_pos, d.t_pos] {
            assert!((v - 0.01).abs() < 1e-12);
        }
        assert_eq!((d.qt, d.qrs, d.r_amp, d.t_amp), (0.0, 0.0, 0.0, 0.0));

        let mut dig = set(0);
        dig.beats[0].t_amp = 0.5;
        dig.beats[1].t_amp = 0.6;
        dig.beats[2].qrs = 0.2;
        // Medians: t_amp {0.5, 0.6, 0.3} -> 0.5 vs 0.3; qrs {0.096, 0.096, 0.2} -> 0.096.
        let d = compare_features(&dig, &set(0));
        assert!((d.t_amp - 0.2).abs() < 1e-12);
        assert_eq!(d.qrs, 0.0);
    }
}
