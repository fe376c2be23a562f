//! Level IV scoring: sliding-window reconstruction and the percentage
//! reconstruction error.

use ndarray::{Array2, s};

use crate::autoencoder::{forward, AutoencoderModel};
use crate::data::{normalize, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::verdict::{AnomalyKind, AnomalyVerdict, Level};

/// Reconstruction of a frame plus the per-sample percentage error.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    /// T x S reconstruction in process units; NaN where uncovered.
    pub reconstruction: Array2<f64>,
    /// T x S percentage reconstruction error; NaN where uncovered.
    pub perr: Array2<f64>,
    /// True where at least one complete window covered the sample.
    pub coverage: Array2<bool>,
}

/// Slides windows at stride 1 and averages every reconstruction covering a
/// sample. perr[t][s] = 100 * |xhat - x| / (train_max_s - train_min_s).
pub fn score(model: &AutoencoderModel, frame: &TimeSeriesFrame) -> Result<ReconstructionReport> {
    let s_count = frame.sensor_count();
    if s_count != model.sensor_count() {
        return Err(Error::Schema(format!(
            "frame has {} sensors, model expects {}",
            s_count,
            model.sensor_count()
        )));
    }
    let t = frame.len();
    let w = model.window_len;
    let mut sum = Array2::<f64>::zeros((t, s_count));
    let mut count = Array2::from_elem((t, s_count), 0usize);

    if w <= t {
        let normed = normalize(frame, &model.norm_stats)?;
        for start in 0..=t - w {
            let window = normed.values.slice(s![start..start + w, ..]);
            if frame
                .missing
                .slice(s![start..start + w, ..])
                .iter()
                .any(|&m| m)
            {
                continue;
            }
            let flat: Vec<f64> = window.iter().copied().collect();
            let acts = forward(model, &flat)?;
            let out = acts.output();
            for dt in 0..w {
                for ch in 0..s_count {
                    sum[(start + dt, ch)] += out[dt * s_count + ch];
                    count[(start + dt, ch)] += 1;
                }
            }
        }
    }

    let mut reconstruction = Array2::from_elem((t, s_count), f64::NAN);
    let mut perr = Array2::from_elem((t, s_count), f64::NAN);
    let mut coverage = Array2::from_elem((t, s_count), false);
    for i in 0..t {
        for ch in 0..s_count {
            if count[(i, ch)] > 0 {
                let range = model.norm_stats.range(ch);
                let recon_norm = sum[(i, ch)] / count[(i, ch)] as f64;
                let recon_raw = recon_norm * range + model.norm_stats.train_min[ch];
                reconstruction[(i, ch)] = recon_raw;
                perr[(i, ch)] = 100.0 * (recon_raw - frame.values[(i, ch)]).abs() / range;
                coverage[(i, ch)] = true;
            }
        }
    }
    Ok(ReconstructionReport {
        reconstruction,
        perr,
        coverage,
    })
}

/// Percentage error of the report's reconstruction against a reference frame
/// (e.g. uncorrupted ground truth), per sensor range of the model.
pub fn perr_against(
    report: &ReconstructionReport,
    model: &AutoencoderModel,
    reference: &TimeSeriesFrame,
) -> Result<Array2<f64>> {
    if reference.values.dim() != report.reconstruction.dim() {
        return Err(Error::Shape("reference frame does not align".into()));
    }
    let (t, s_count) = reference.values.dim();
    let mut out = Array2::from_elem((t, s_count), f64::NAN);
    for i in 0..t {
        for ch in 0..s_count {
            if report.coverage[(i, ch)] {
                out[(i, ch)] = 100.0
                    * (report.reconstruction[(i, ch)] - reference.values[(i, ch)]).abs()
                    / model.norm_stats.range(ch);
            }
        }
    }
    Ok(out)
}

/// Maximal runs of at least `min_run` consecutive covered samples whose perr
/// strictly exceeds the threshold become contextual-deviation verdicts;
/// score is the mean perr over the run.
pub fn flag_contextual(
    report: &ReconstructionReport,
    perr_threshold: f64,
    min_run: usize,
) -> Result<Vec<AnomalyVerdict>> {
    if perr_threshold <= 0.0 {
        return Err(Error::InvalidArgument("perr_threshold must be > 0".into()));
    }
    let (t, s_count) = report.perr.dim();
    let mut verdicts = Vec::new();
    for ch in 0..s_count {
        let mut run_start: Option<usize> = None;
        let emit = |start: Option<usize>, end_excl: usize, out: &mut Vec<AnomalyVerdict>| {
            if let Some(s0) = start {
                let len = end_excl - s0;
                if len >= min_run.max(1) {
                    let mean: f64 = (s0..end_excl).map(|i| report.perr[(i, ch)]).sum::<f64>()
                        / len as f64;
                    out.push(AnomalyVerdict::new(
                        Level::L4,
                        vec![ch],
                        s0,
                        end_excl - 1,
                        mean,
                        AnomalyKind::ContextualDeviation,
                    ));
                }
            }
        };
        for i in 0..t {
            let hot = report.coverage[(i, ch)] && report.perr[(i, ch)] > perr_threshold;
            if hot {
                if run_start.is_none() {
                    run_start = Some(i);
                }
            } else {
                emit(run_start, i, &mut verdicts);
                run_start = None;
            }
        }
        emit(run_start, t, &mut verdicts);
    }
    Ok(verdicts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{train, TrainConfig};
    use crate::synth::{gen_coupled_process, CouplingSpec};
    use ndarray::Array2 as A2;

    fn small_trained() -> (crate::autoencoder::AutoencoderModel, TimeSeriesFrame) {
        let spec = CouplingSpec::identity(3);
        let (frame, _) = gen_coupled_process(17, 1000, &spec).unwrap();
        let cfg = TrainConfig {
            window_len: 8,
            latent: 6,
            hidden_dims: vec![48],
            epochs: 1500,
            learning_rate: 2e-3,
            // Channel dropout forces the cross-sensor consensus; without it
            // the model can pass each channel through unchanged.
            input_dropout_rate: 0.25,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(std::slice::from_ref(&frame), &cfg).unwrap();
        (out.model, frame)
    }

    #[test]
    fn training_data_scores_low_perr() {
        let (model, frame) = small_trained();
        let report = score(&model, &frame).unwrap();
        let mut vals: Vec<f64> = report
            .perr
            .iter()
            .filter(|v| v.is_finite())
            .copied()
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = vals[vals.len() / 2];
        assert!(median < 1.0, "median perr {median}% on training data");
    }

    #[test]
    fn short_frame_scores_empty_coverage() {
        let (model, frame) = small_trained();
        let short = TimeSeriesFrame::dense(
            frame.timestamps[..4].to_vec(),
            frame.values.slice(s![..4, ..]).to_owned(),
            frame.sensors.clone(),
        )
        .unwrap();
        let report = score(&model, &short).unwrap();
        assert!(report.coverage.iter().all(|&c| !c));
    }

    #[test]
    fn dead_channel_raises_own_perr_only() {
        // A channel stuck at raw 0 is exactly the corruption the denoising
        // objective trains against: its reconstruction should follow the
        // other channels (large perr against the dead reading) while the
        // clean channels stay accurate.
        let (model, frame) = small_trained();
        let base = score(&model, &frame).unwrap();
        let mut dead = frame.clone();
        for i in 0..dead.len() {
            dead.values[(i, 1)] = 0.0;
        }
        let report = score(&model, &dead).unwrap();
        let mean_ch = |r: &ReconstructionReport, ch: usize| {
            let vals: Vec<f64> = r
                .perr
                .column(ch)
                .iter()
                .filter(|v| v.is_finite())
                .copied()
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let own_rise = mean_ch(&report, 1) - mean_ch(&base, 1);
        let other_rise = (mean_ch(&report, 0) - mean_ch(&base, 0))
            .max(mean_ch(&report, 2) - mean_ch(&base, 2));
        assert!(own_rise > 8.0, "own channel rise {own_rise}%");
        assert!(
            other_rise < 0.25 * own_rise,
            "cross-channel rise {other_rise}% vs own {own_rise}%"
        );
    }

    #[test]
    fn flag_contextual_below_threshold_is_quiet() {
        let report = ReconstructionReport {
            reconstruction: A2::zeros((20, 1)),
            perr: A2::from_elem((20, 1), 1.0),
            coverage: A2::from_elem((20, 1), true),
        };
        assert!(flag_contextual(&report, 5.0, 3).unwrap().is_empty());
    }

    #[test]
    fn flag_contextual_single_run() {
        let mut perr = A2::from_elem((200, 1), 1.0);
        for i in 50..150 {
            perr[(i, 0)] = 10.0;
        }
        let report = ReconstructionReport {
            reconstruction: A2::zeros((200, 1)),
            perr,
            coverage: A2::from_elem((200, 1), true),
        };
        let v = flag_contextual(&report, 5.0, 10).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].start_index, v[0].end_index), (50, 149));
        assert!((v[0].score - 10.0).abs() < 1e-12);
    }

    #[test]
    fn flag_contextual_short_run_not_flagged() {
        let mut perr = A2::from_elem((50, 1), 1.0);
        for i in 10..19 {
            perr[(i, 0)] = 10.0;
        }
        let report = ReconstructionReport {
            reconstruction: A2::zeros((50, 1)),
            perr,
            coverage: A2::from_elem((50, 1), true),
        };
        assert!(flag_contextual(&report, 5.0, 10).unwrap().is_empty());
    }
}
