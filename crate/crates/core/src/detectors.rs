//! Level II static bound checks and Level III univariate detectors.

use crate::data::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::verdict::{AnomalyKind, AnomalyVerdict, Level};

/// Robust z-scores are capped here so verdict scores stay finite and
/// serializable; any capped value is far beyond every sane threshold.
const Z_CAP: f64 = 1e9;

/// Consistency factor relating MAD to the standard deviation of a normal.
const MAD_SCALE: f64 = 1.4826;

/// Maximal runs of `true` in a mask, as inclusive (start, end) pairs.
fn runs_of(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len() - 1));
    }
    runs
}

/// Level II: one verdict per maximal run of out-of-bound samples per sensor.
/// Bounds are inclusive; a sample exactly at a bound passes. Missing samples
/// are never flagged.
pub fn check_bounds(frame: &TimeSeriesFrame) -> Vec<AnomalyVerdict> {
    let t = frame.len();
    let mut verdicts = Vec::new();
    for (col, meta) in frame.sensors.iter().enumerate() {
        let range = meta.bound_range();
        let mut flagged = vec![false; t];
        let mut excess = vec![0.0; t];
        for i in 0..t {
            if frame.missing[(i, col)] {
                continue;
            }
            let v = frame.values[(i, col)];
            let over = (meta.min_bound - v).max(v - meta.max_bound);
            if over > 0.0 {
                flagged[i] = true;
                excess[i] = over / range;
            }
        }
        for (start, end) in runs_of(&flagged) {
            let score = excess[start..=end].iter().cloned().fold(0.0, f64::max);
            verdicts.push(AnomalyVerdict::new(
                Level::L2,
                vec![col],
                start,
                end,
                score,
                AnomalyKind::BoundViolation,
            ));
        }
    }
    verdicts
}

fn median_of(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Robust z-score of `x` against a reference window. MAD = 0 maps to z = 0
/// when the deviation is also 0, else to the cap (flagged).
fn robust_z(x: f64, window: &[f64]) -> f64 {
    let med = median_of(window.to_vec());
    let mad = median_of(window.iter().map(|v| (v - med).abs()).collect());
    let dev = x - med;
    if mad > 0.0 {
        (dev / (MAD_SCALE * mad)).clamp(-Z_CAP, Z_CAP)
    } else if dev == 0.0 {
        0.0
    } else {
        Z_CAP * dev.signum()
    }
}

/// Level III spike detector: robust z-score of each sample against the
/// rolling median/MAD over the trailing window of `window_len` samples.
pub fn detect_spikes(
    frame: &TimeSeriesFrame,
    window_len: usize,
    z_threshold: f64,
) -> Result<Vec<AnomalyVerdict>> {
    if window_len < 5 {
        return Err(Error::InvalidArgument("spike window_len must be >= 5".into()));
    }
    if z_threshold <= 0.0 {
        return Err(Error::InvalidArgument("z_threshold must be > 0".into()));
    }
    let t = frame.len();
    if window_len > t {
        return Err(Error::EmptyInput(format!(
            "spike window {window_len} exceeds frame length {t}"
        )));
    }
    let mut verdicts = Vec::new();
    for col in 0..frame.sensor_count() {
        let mut flagged = vec![false; t];
        let mut zs = vec![0.0; t];
        for i in window_len - 1..t {
            if frame.missing[(i, col)] {
                continue;
            }
            let window: Vec<f64> = (i + 1 - window_len..=i)
                .filter(|&k| !frame.missing[(k, col)])
                .map(|k| frame.values[(k, col)])
                .collect();
            if window.len() < 5 {
                continue;
            }
            let z = robust_z(frame.values[(i, col)], &window);
            if z.abs() > z_threshold {
                flagged[i] = true;
                zs[i] = z.abs();
            }
        }
        for (start, end) in runs_of(&flagged) {
            let score = zs[start..=end].iter().cloned().fold(0.0, f64::max);
            verdicts.push(AnomalyVerdict::new(
                Level::L3,
                vec![col],
                start,
                end,
                score,
                AnomalyKind::Spike,
            ));
        }
    }
    Ok(verdicts)
}

/// Level III stuck-sensor detector: maximal runs of length >= `min_run`
/// where successive absolute differences stay <= `epsilon`.
pub fn detect_stuck(
    frame: &TimeSeriesFrame,
    min_run: usize,
    epsilon: f64,
) -> Result<Vec<AnomalyVerdict>> {
    if min_run < 2 {
        return Err(Error::InvalidArgument("stuck min_run must be >= 2".into()));
    }
    if epsilon < 0.0 {
        return Err(Error::InvalidArgument("stuck epsilon must be >= 0".into()));
    }
    let t = frame.len();
    let mut verdicts = Vec::new();
    for col in 0..frame.sensor_count() {
        let mut run_start: Option<usize> = None;
        let close_run = |start: Option<usize>, end: usize, out: &mut Vec<AnomalyVerdict>| {
            if let Some(s) = start {
                let len = end - s + 1;
                if len >= min_run {
                    out.push(AnomalyVerdict::new(
                        Level::L3,
                        vec![col],
                        s,
                        end,
                        len as f64 / min_run as f64,
                        AnomalyKind::Stuck,
                    ));
                }
            }
        };
        for i in 0..t {
            let continues = i > 0
                && !frame.missing[(i, col)]
                && !frame.missing[(i - 1, col)]
                && (frame.values[(i, col)] - frame.values[(i - 1, col)]).abs() <= epsilon;
            if continues {
                if run_start.is_none() {
                    run_start = Some(i - 1);
                }
            } else {
                close_run(run_start, i.saturating_sub(1), &mut verdicts);
                run_start = None;
            }
        }
        close_run(run_start, t - 1, &mut verdicts);
    }
    Ok(verdicts)
}

/// Level III drift detector: rolling least-squares slope per sensor, in
/// bound-normalized units per sample. Windows whose |slope| strictly exceeds
/// the threshold mark all their samples; marked samples merge into verdicts.
pub fn detect_drift(
    frame: &TimeSeriesFrame,
    window_len: usize,
    slope_threshold: f64,
) -> Result<Vec<AnomalyVerdict>> {
    if window_len < 10 {
        return Err(Error::InvalidArgument("drift window_len must be >= 10".into()));
    }
    let t = frame.len();
    if window_len > t {
        return Err(Error::EmptyInput(format!(
            "drift window {window_len} exceeds frame length {t}"
        )));
    }
    let mut verdicts = Vec::new();
    for (col, meta) in frame.sensors.iter().enumerate() {
        let range = meta.bound_range();
        let mut flagged = vec![false; t];
        let mut mags = vec![0.0f64; t];
        for start in 0..=t - window_len {
            let span = start..start + window_len;
            if span.clone().any(|i| frame.missing[(i, col)]) {
                continue;
            }
            let slope = ls_slope(span.clone().map(|i| frame.values[(i, col)])) / range;
            if slope.abs() > slope_threshold {
                for i in span {
                    flagged[i] = true;
                    mags[i] = mags[i].max(slope.abs());
                }
            }
        }
        for (start, end) in runs_of(&flagged) {
            let score = mags[start..=end].iter().cloned().fold(0.0, f64::max);
            verdicts.push(AnomalyVerdict::new(
                Level::L3,
                vec![col],
                start,
                end,
                score,
                AnomalyKind::Drift,
            ));
        }
    }
    Ok(verdicts)
}

/// Least-squares slope of values against their 0-based position.
fn ls_slope(values: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = values.collect();
    let n = xs.len() as f64;
    let mean_i = (n - 1.0) / 2.0;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let di = i as f64 - mean_i;
        num += di * (x - mean_x);
        den += di * di;
    }
    num / den
}
