//! Time-series data model: frames, windows, min-max normalization.

use ndarray::{Array2, ArrayView2, s};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity and static amplitude bounds for one sensor channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    /// Column index of this sensor within its frame.
    pub id: usize,
    pub name: String,
    pub unit: String,
    /// Lower amplitude bound in process units (inclusive).
    pub min_bound: f64,
    /// Upper amplitude bound in process units (inclusive).
    pub max_bound: f64,
    /// Physical or logical location tag.
    pub asset_tag: String,
}

impl SensorMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_bound < self.max_bound) {
            return Err(Error::InvalidArgument(format!(
                "sensor {} ({}): min_bound {} must be < max_bound {}",
                self.id, self.name, self.min_bound, self.max_bound
            )));
        }
        Ok(())
    }

    pub fn bound_range(&self) -> f64 {
        self.max_bound - self.min_bound
    }
}

/// Uniformly sampled T x S value matrix with timestamps and missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    pub timestamps: Vec<f64>,
    /// T x S values in process units; entries under the missing mask are NaN.
    pub values: Array2<f64>,
    pub missing: Array2<bool>,
    pub sensors: Vec<SensorMeta>,
}

/// Relative tolerance on sampling-step uniformity.
const STEP_TOL: f64 = 1e-9;

impl TimeSeriesFrame {
    pub fn new(
        timestamps: Vec<f64>,
        values: Array2<f64>,
        missing: Array2<bool>,
        sensors: Vec<SensorMeta>,
    ) -> Result<Self> {
        let (t, s) = values.dim();
        if timestamps.len() != t {
            return Err(Error::Shape(format!(
                "{} timestamps for {} rows",
                timestamps.len(),
                t
            )));
        }
        if missing.dim() != (t, s) {
            return Err(Error::Shape(format!(
                "missing mask {:?} does not match values {:?}",
                missing.dim(),
                values.dim()
            )));
        }
        if sensors.len() != s {
            return Err(Error::Shape(format!(
                "{} sensor metas for {} columns",
                sensors.len(),
                s
            )));
        }
        for (col, meta) in sensors.iter().enumerate() {
            meta.validate()?;
            if meta.id != col {
                return Err(Error::Schema(format!(
                    "sensor id {} at column {}",
                    meta.id, col
                )));
            }
        }
        if t >= 2 {
            let step = timestamps[1] - timestamps[0];
            if step <= 0.0 {
                return Err(Error::Format("timestamps not strictly increasing".into()));
            }
            for row in 1..t {
                let dt = timestamps[row] - timestamps[row - 1];
                if dt <= 0.0 {
                    return Err(Error::Format(format!(
                        "timestamps not strictly increasing at row {row}"
                    )));
                }
                if (dt - step).abs() > STEP_TOL * step.max(1.0) {
                    return Err(Error::Format(format!(
                        "non-uniform sampling at row {row}: step {dt} vs {step}"
                    )));
                }
            }
        }
        for ((row, col), &v) in values.indexed_iter() {
            if !missing[(row, col)] && !v.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite value at ({row}, {col}) not covered by missing mask"
                )));
            }
        }
        Ok(Self {
            timestamps,
            values,
            missing,
            sensors,
        })
    }

    /// Convenience constructor for fully observed data.
    pub fn dense(timestamps: Vec<f64>, values: Array2<f64>, sensors: Vec<SensorMeta>) -> Result<Self> {
        let dim = values.dim();
        Self::new(timestamps, values, Array2::from_elem(dim, false), sensors)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sensor_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn sample_step(&self) -> f64 {
        if self.timestamps.len() >= 2 {
            self.timestamps[1] - self.timestamps[0]
        } else {
            1.0
        }
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }
}

/// Default metadata for synthetic channels: bounds wide enough to stay out of
/// the way unless a test tightens them.
pub fn default_sensors(count: usize, min_bound: f64, max_bound: f64) -> Vec<SensorMeta> {
    (0..count)
        .map(|id| SensorMeta {
            id,
            name: format!("s{id}"),
            unit: "unit".into(),
            min_bound,
            max_bound,
            asset_tag: "synthetic".into(),
        })
        .collect()
}

/// A complete (no missing entries) window into a frame.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    pub start_index: usize,
    pub data: ArrayView2<'a, f64>,
}

impl Window<'_> {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Row-major flattening: sample t0 sensors, then t1 sensors, ...
    pub fn flatten(&self) -> Vec<f64> {
        self.data.iter().copied().collect()
    }
}

/// Every window of length `w` starting at multiples of `stride` that fits in
/// the frame and contains no missing entries, in ascending start order.
pub fn extract_windows(frame: &TimeSeriesFrame, w: usize, stride: usize) -> Result<Vec<Window<'_>>> {
    if stride < 1 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    if w < 1 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    let t = frame.len();
    if w > t {
        return Err(Error::EmptyInput(format!(
            "window length {w} exceeds frame length {t}"
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + w <= t {
        let complete = !frame
            .missing
            .slice(s![start..start + w, ..])
            .iter()
            .any(|&m| m);
        if complete {
            out.push(Window {
                start_index: start,
                data: frame.values.slice(s![start..start + w, ..]),
            });
        }
        start += stride;
    }
    Ok(out)
}

/// Per-sensor training min/max for min-max normalization. The range is also
/// the denominator of the percentage reconstruction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub train_min: Vec<f64>,
    pub train_max: Vec<f64>,
}

impl NormStats {
    pub fn sensor_count(&self) -> usize {
        self.train_min.len()
    }

    pub fn range(&self, sensor: usize) -> f64 {
        self.train_max[sensor] - self.train_min[sensor]
    }
}

/// Per-sensor min and max over non-missing entries.
pub fn fit_normalization(frame: &TimeSeriesFrame) -> Result<NormStats> {
    fit_normalization_multi(std::slice::from_ref(frame))
}

/// Joint stats over several frames sharing the same sensor list.
pub fn fit_normalization_multi(frames: &[TimeSeriesFrame]) -> Result<NormStats> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyInput("no frames to fit normalization on".into()))?;
    let s = first.sensor_count();
    let mut train_min = vec![f64::INFINITY; s];
    let mut train_max = vec![f64::NEG_INFINITY; s];
    let mut counts = vec![0usize; s];
    for frame in frames {
        if frame.sensor_count() != s {
            return Err(Error::Shape(format!(
                "frame has {} sensors, expected {}",
                frame.sensor_count(),
                s
            )));
        }
        for ((_, col), &v) in frame.values.indexed_iter() {
            if v.is_finite() {
                train_min[col] = train_min[col].min(v);
                train_max[col] = train_max[col].max(v);
                counts[col] += 1;
            }
        }
    }
    for col in 0..s {
        if counts[col] < 2 {
            return Err(Error::EmptyInput(format!(
                "sensor {col} has fewer than 2 observed values"
            )));
        }
        if train_max[col] <= train_min[col] {
            return Err(Error::DegenerateChannel {
                sensor: col,
                name: first.sensors[col].name.clone(),
            });
        }
    }
    Ok(NormStats {
        train_min,
        train_max,
    })
}

fn check_stats(frame: &TimeSeriesFrame, stats: &NormStats) -> Result<()> {
    if stats.sensor_count() != frame.sensor_count() {
        return Err(Error::Shape(format!(
            "stats cover {} sensors, frame has {}",
            stats.sensor_count(),
            frame.sensor_count()
        )));
    }
    Ok(())
}

/// x' = (x - train_min) / (train_max - train_min), per sensor.
pub fn normalize(frame: &TimeSeriesFrame, stats: &NormStats) -> Result<TimeSeriesFrame> {
    check_stats(frame, stats)?;
    let mut out = frame.clone();
    for ((_, col), v) in out.values.indexed_iter_mut() {
        *v = (*v - stats.train_min[col]) / stats.range(col);
    }
    Ok(out)
}

/// Exact inverse of [`normalize`].
pub fn denormalize(frame: &TimeSeriesFrame, stats: &NormStats) -> Result<TimeSeriesFrame> {
    check_stats(frame, stats)?;
    let mut out = frame.clone();
    for ((_, col), v) in out.values.indexed_iter_mut() {
        *v = *v * stats.range(col) + stats.train_min[col];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn frame_from(values: Array2<f64>) -> TimeSeriesFrame {
        let t = values.nrows();
        let s = values.ncols();
        TimeSeriesFrame::dense(
            (0..t).map(|i| i as f64).collect(),
            values,
            default_sensors(s, -1e9, 1e9),
        )
        .unwrap()
    }

    #[test]
    fn single_full_span_window() {
        let frame = frame_from(Array2::zeros((5, 2)));
        let wins = extract_windows(&frame, 5, 1).unwrap();
        assert_eq!(wins.len(), 1);
        assert_eq!(wins[0].start_index, 0);
    }

    #[test]
    fn window_count_without_missing() {
        let frame = frame_from(Array2::zeros((10, 2)));
        let wins = extract_windows(&frame, 3, 1).unwrap();
        assert_eq!(wins.len(), 8);
    }

    #[test]
    fn windows_skip_missing() {
        let mut values = Array2::zeros((10, 2));
        values[(4, 0)] = f64::NAN;
        let mut missing = Array2::from_elem((10, 2), false);
        missing[(4, 0)] = true;
        let frame = TimeSeriesFrame::new(
            (0..10).map(|i| i as f64).collect(),
            values,
            missing,
            default_sensors(2, -1e9, 1e9),
        )
        .unwrap();
        let wins = extract_windows(&frame, 3, 1).unwrap();
        let starts: Vec<usize> = wins.iter().map(|w| w.start_index).collect();
        assert_eq!(starts, vec![0, 1, 5, 6, 7]);
    }

    #[test]
    fn window_longer_than_frame_is_empty_input() {
        let frame = frame_from(Array2::zeros((4, 1)));
        assert!(matches!(
            extract_windows(&frame, 5, 1),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn zero_stride_rejected() {
        let frame = frame_from(Array2::zeros((4, 1)));
        assert!(matches!(
            extract_windows(&frame, 2, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn fit_normalization_min_max() {
        let frame = frame_from(arr2(&[[2.0], [4.0], [6.0]]));
        let stats = fit_normalization(&frame).unwrap();
        assert_eq!(stats.train_min, vec![2.0]);
        assert_eq!(stats.train_max, vec![6.0]);
    }

    #[test]
    fn constant_channel_rejected() {
        let frame = frame_from(arr2(&[[5.0], [5.0], [5.0]]));
        assert!(matches!(
            fit_normalization(&frame),
            Err(Error::DegenerateChannel { sensor: 0, .. })
        ));
    }

    #[test]
    fn fit_ignores_missing() {
        let mut values = arr2(&[[1.0], [f64::NAN], [9.0], [3.0]]);
        let mut missing = Array2::from_elem((4, 1), false);
        missing[(1, 0)] = true;
        values[(1, 0)] = f64::NAN;
        let frame = TimeSeriesFrame::new(
            (0..4).map(|i| i as f64).collect(),
            values,
            missing,
            default_sensors(1, -1e9, 1e9),
        )
        .unwrap();
        let stats = fit_normalization(&frame).unwrap();
        assert_eq!(stats.train_min, vec![1.0]);
        assert_eq!(stats.train_max, vec![9.0]);
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let frame = frame_from(arr2(&[[2.0], [4.0], [6.0]]));
        let stats = fit_normalization(&frame).unwrap();
        let norm = normalize(&frame, &stats).unwrap();
        assert_eq!(norm.values[(0, 0)], 0.0);
        assert_eq!(norm.values[(1, 0)], 0.5);
        assert_eq!(norm.values[(2, 0)], 1.0);
    }

    #[test]
    fn irregular_timestamps_rejected() {
        let res = TimeSeriesFrame::dense(
            vec![0.0, 1.0, 3.0],
            Array2::zeros((3, 1)),
            default_sensors(1, -1.0, 1.0),
        );
        assert!(matches!(res, Err(Error::Format(_))));
    }
}
