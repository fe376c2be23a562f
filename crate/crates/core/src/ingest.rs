//! CSV ingestion of measured data and sensor metadata, plus the matching
//! writers used by the synthetic-data subcommand.

use std::path::Path;

use ndarray::Array2;

use crate::data::{SensorMeta, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::simcheck::SimulationResult;

/// Reads sensor metadata: `id,name,unit,min_bound,max_bound,asset_tag`.
pub fn read_meta(path: &Path) -> Result<Vec<SensorMeta>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut sensors = Vec::new();
    for (row, record) in reader.deserialize::<SensorMeta>().enumerate() {
        let meta: SensorMeta =
            record.map_err(|e| Error::Format(format!("meta row {}: {e}", row + 2)))?;
        meta.validate()?;
        sensors.push(meta);
    }
    for (i, meta) in sensors.iter().enumerate() {
        if meta.id != i {
            return Err(Error::Schema(format!(
                "meta ids must be contiguous column indices; row {} has id {}",
                i, meta.id
            )));
        }
    }
    if sensors.is_empty() {
        return Err(Error::EmptyInput("meta file has no sensors".into()));
    }
    Ok(sensors)
}

pub fn meta_to_csv(sensors: &[SensorMeta]) -> String {
    let mut out = String::from("id,name,unit,min_bound,max_bound,asset_tag\n");
    for m in sensors {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.id, m.name, m.unit, m.min_bound, m.max_bound, m.asset_tag
        ));
    }
    out
}

/// Reads a data CSV (first column timestamp, one column per sensor, empty
/// cells are missing) against the sensor metadata. Column headers must match
/// the meta names exactly and in order.
pub fn ingest(csv_path: &Path, meta_path: &Path) -> Result<TimeSeriesFrame> {
    let sensors = read_meta(meta_path)?;
    ingest_with_meta(csv_path, sensors)
}

pub fn ingest_with_meta(csv_path: &Path, sensors: Vec<SensorMeta>) -> Result<TimeSeriesFrame> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(csv_path)
        .map_err(|e| Error::Format(format!("{}: {e}", csv_path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    if headers.len() != sensors.len() + 1 {
        return Err(Error::Schema(format!(
            "data CSV has {} columns, expected timestamp + {} sensors",
            headers.len(),
            sensors.len()
        )));
    }
    if headers.get(0) != Some("timestamp") {
        return Err(Error::Schema(
            "first data column must be 'timestamp'".into(),
        ));
    }
    for (i, meta) in sensors.iter().enumerate() {
        let got = headers.get(i + 1).unwrap_or("");
        if got != meta.name {
            return Err(Error::Schema(format!(
                "unknown column '{got}' at position {}; expected sensor '{}'",
                i + 1,
                meta.name
            )));
        }
    }

    let mut timestamps = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("data row {}: {e}", idx + 2)))?;
        let ts: f64 = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Format(format!("data row {}: bad timestamp", idx + 2)))?;
        timestamps.push(ts);
        let mut row = Vec::with_capacity(sensors.len());
        for col in 0..sensors.len() {
            let cell = record.get(col + 1).unwrap_or("").trim();
            if cell.is_empty() {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Format(format!(
                        "data row {}, column {}: bad value '{cell}'",
                        idx + 2,
                        col + 1
                    ))
                })?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }
    let t = rows.len();
    let s = sensors.len();
    let mut values = Array2::from_elem((t, s), f64::NAN);
    let mut missing = Array2::from_elem((t, s), false);
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            match cell {
                Some(v) => values[(i, j)] = *v,
                None => missing[(i, j)] = true,
            }
        }
    }
    TimeSeriesFrame::new(timestamps, values, missing, sensors)
}

/// Writes a frame back to the data CSV format; missing cells are empty.
/// Floats use the shortest round-trip representation.
pub fn frame_to_csv(frame: &TimeSeriesFrame) -> String {
    let mut out = String::from("timestamp");
    for meta in &frame.sensors {
        out.push(',');
        out.push_str(&meta.name);
    }
    out.push('\n');
    for i in 0..frame.len() {
        out.push_str(&format!("{}", frame.timestamps[i]));
        for j in 0..frame.sensor_count() {
            out.push(',');
            if !frame.missing[(i, j)] {
                out.push_str(&format!("{}", frame.values[(i, j)]));
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a simulation result CSV: `timestamp`, one column per predicted
/// sensor (named as in the frame's metadata), and a trailing `valid` flag
/// column (0/1). Timestamps must align 1:1 with the frame.
pub fn read_simulation_csv(path: &Path, frame: &TimeSeriesFrame) -> Result<SimulationResult> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    if headers.len() < 3 || headers.get(0) != Some("timestamp") {
        return Err(Error::Schema(
            "simulation CSV needs timestamp, sensor columns, and a valid flag".into(),
        ));
    }
    if headers.get(headers.len() - 1) != Some("valid") {
        return Err(Error::Schema(
            "last simulation column must be 'valid'".into(),
        ));
    }
    let mut sensor_ids = Vec::new();
    for col in 1..headers.len() - 1 {
        let name = headers.get(col).unwrap_or("");
        let id = frame
            .sensors
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown simulated sensor '{name}'")))?;
        sensor_ids.push(id);
    }
    let k = sensor_ids.len();
    let mut predicted_rows: Vec<Vec<f64>> = Vec::new();
    let mut validity_mask = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("sim row {}: {e}", idx + 2)))?;
        let ts: f64 = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Format(format!("sim row {}: bad timestamp", idx + 2)))?;
        match frame.timestamps.get(idx) {
            Some(&expect) if (expect - ts).abs() < 1e-9 => {}
            _ => {
                return Err(Error::Alignment(format!(
                    "sim row {} timestamp {ts} does not align with the frame",
                    idx + 2
                )))
            }
        }
        let mut row = Vec::with_capacity(k);
        for col in 0..k {
            let v: f64 = record
                .get(col + 1)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Format(format!("sim row {}: bad value", idx + 2)))?;
            row.push(v);
        }
        let flag = record.get(k + 1).unwrap_or("").trim();
        validity_mask.push(match flag {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Format(format!(
                    "sim row {}: valid flag must be 0 or 1, got '{other}'",
                    idx + 2
                )))
            }
        });
        predicted_rows.push(row);
    }
    if predicted_rows.len() != frame.len() {
        return Err(Error::Alignment(format!(
            "simulation has {} rows, frame has {}",
            predicted_rows.len(),
            frame.len()
        )));
    }
    let mut predicted = Array2::zeros((predicted_rows.len(), k));
    for (i, row) in predicted_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            predicted[(i, j)] = v;
        }
    }
    Ok(SimulationResult {
        sensor_ids,
        predicted,
        validity_mask,
    })
}

/// Writes a simulation result in the format read back by
/// [`read_simulation_csv`].
pub fn simulation_to_csv(sim: &SimulationResult, frame: &TimeSeriesFrame) -> String {
    let mut out = String::from("timestamp");
    for &id in &sim.sensor_ids {
        out.push(',');
        out.push_str(&frame.sensors[id].name);
    }
    out.push_str(",valid\n");
    for i in 0..sim.predicted.nrows() {
        out.push_str(&format!("{}", frame.timestamps[i]));
        for j in 0..sim.sensor_ids.len() {
            out.push_str(&format!(",{}", sim.predicted[(i, j)]));
        }
        out.push_str(if sim.validity_mask[i] { ",1\n" } else { ",0\n" });
    }
    out
}
