//! Level V: cross-validation of sensor signals against simulation results,
//! gated to the operating modes where the simulation's hypotheses hold.

use ndarray::Array2;

use crate::data::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::synth::{gen_coupled_process, CouplingSpec, LatentDriver};
use crate::verdict::{AnomalyKind, AnomalyVerdict, Level};

/// Simulation output aligned 1:1 with the measured frame being checked.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub sensor_ids: Vec<usize>,
    /// T x K predictions in process units, one column per entry of
    /// `sensor_ids`.
    pub predicted: Array2<f64>,
    /// True where the simulation's operating hypotheses hold.
    pub validity_mask: Vec<bool>,
}

impl SimulationResult {
    fn validate(&self) -> Result<()> {
        let (t, k) = self.predicted.dim();
        if self.sensor_ids.len() != k {
            return Err(Error::Shape(format!(
                "{} sensor ids for {} predicted columns",
                self.sensor_ids.len(),
                k
            )));
        }
        if self.validity_mask.len() != t {
            return Err(Error::Alignment(format!(
                "validity mask length {} != {} rows",
                self.validity_mask.len(),
                t
            )));
        }
        Ok(())
    }
}

/// Share of samples the cross-check could examine; invalid-mode samples are
/// reported here instead of being flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosscheckCoverage {
    pub checked_samples: usize,
    pub skipped_samples: usize,
}

impl CrosscheckCoverage {
    pub fn checked_fraction(&self) -> f64 {
        let total = self.checked_samples + self.skipped_samples;
        if total == 0 {
            0.0
        } else {
            self.checked_samples as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosscheckOutcome {
    pub verdicts: Vec<AnomalyVerdict>,
    pub coverage: CrosscheckCoverage,
}

/// Flags runs of >= `min_run` valid-mode samples whose bound-normalized
/// residual |measured - predicted| / (max_bound - min_bound) exceeds
/// `rel_tolerance`.
pub fn crosscheck(
    frame: &TimeSeriesFrame,
    sim: &SimulationResult,
    rel_tolerance: f64,
    min_run: usize,
) -> Result<CrosscheckOutcome> {
    sim.validate()?;
    let t = frame.len();
    if sim.predicted.nrows() != t {
        return Err(Error::Alignment(format!(
            "simulation covers {} rows, frame has {t}",
            sim.predicted.nrows()
        )));
    }
    for &id in &sim.sensor_ids {
        if id >= frame.sensor_count() {
            return Err(Error::Schema(format!("unknown sensor {id} in simulation")));
        }
    }
    let mut verdicts = Vec::new();
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for (k, &sensor) in sim.sensor_ids.iter().enumerate() {
        let range = frame.sensors[sensor].bound_range();
        let mut flagged = vec![false; t];
        let mut residuals = vec![0.0; t];
        for i in 0..t {
            if !sim.validity_mask[i] || frame.missing[(i, sensor)] {
                skipped += 1;
                continue;
            }
            checked += 1;
            let r = (frame.values[(i, sensor)] - sim.predicted[(i, k)]).abs() / range;
            if r > rel_tolerance {
                flagged[i] = true;
                residuals[i] = r;
            }
        }
        let mut start: Option<usize> = None;
        let emit = |s0: Option<usize>, end_excl: usize, out: &mut Vec<AnomalyVerdict>| {
            if let Some(s) = s0 {
                if end_excl - s >= min_run.max(1) {
                    let score = residuals[s..end_excl].iter().cloned().fold(0.0, f64::max);
                    out.push(AnomalyVerdict::new(
                        Level::L5,
                        vec![sensor],
                        s,
                        end_excl - 1,
                        score,
                        AnomalyKind::SimulationMismatch,
                    ));
                }
            }
        };
        for (i, &f) in flagged.iter().enumerate() {
            if f {
                if start.is_none() {
                    start = Some(i);
                }
            } else {
                emit(start, i, &mut verdicts);
                start = None;
            }
        }
        emit(start, t, &mut verdicts);
    }
    Ok(CrosscheckOutcome {
        verdicts,
        coverage: CrosscheckCoverage {
            checked_samples: checked,
            skipped_samples: skipped,
        },
    })
}

/// Validity band on the latent driver of the reference simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverBand {
    pub min: f64,
    pub max: f64,
}

/// Stand-in simulation model: recomputes the noiseless coupled-process
/// equations for a sensor subset, valid wherever the latent driver stays
/// inside the configured band.
pub fn reference_simulator(
    frame: &TimeSeriesFrame,
    sensor_subset: &[usize],
    spec: &CouplingSpec,
    seed: u64,
    band: DriverBand,
) -> Result<SimulationResult> {
    for &id in sensor_subset {
        if id >= frame.sensor_count() || id >= spec.sensor_count() {
            return Err(Error::Schema(format!(
                "unknown sensor {id} for reference simulator"
            )));
        }
    }
    let t = frame.len();
    // The driver is drawn before channel noise, so regenerating with the
    // same seed reproduces it exactly.
    let mut clean_spec = spec.clone();
    clean_spec.noise_sigmas = vec![0.0; spec.sensor_count()];
    let (_, driver): (_, LatentDriver) = gen_coupled_process(seed, t, &clean_spec)?;

    let mut predicted = Array2::zeros((t, sensor_subset.len()));
    for (k, &j) in sensor_subset.iter().enumerate() {
        for i in 0..t {
            predicted[(i, k)] =
                spec.gains[j] * driver.at_delayed(i, spec.delays[j]) + spec.offsets[j];
        }
    }
    let validity_mask = (0..t)
        .map(|i| {
            let d = driver.at(i);
            d >= band.min && d <= band.max
        })
        .collect();
    Ok(SimulationResult {
        sensor_ids: sensor_subset.to_vec(),
        predicted,
        validity_mask,
    })
}
