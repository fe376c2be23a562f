//! End-to-end orchestration of the validation levels over configured
//! datasets.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::autoencoder::{load_model, save_model, train, AutoencoderModel, TrainConfig};
use crate::causal::{discover, CausalGraph};
use crate::config::PipelineConfig;
use crate::detectors::{check_bounds, detect_drift, detect_spikes, detect_stuck};
use crate::error::{Error, Result};
use crate::fusion::{classify, ReasoningConfig};
use crate::ingest::{ingest_with_meta, read_meta, read_simulation_csv};
use crate::report::{
    heatmap_matrix, heatmap_to_csv, render_heatmap, write_report, HeatmapSpec, ReportFiles,
};
use crate::scoring::{flag_contextual, score, ReconstructionReport};
use crate::simcheck::{crosscheck, CrosscheckCoverage};
use crate::verdict::AnomalyVerdict;

/// Everything a pipeline run produced.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub verdicts: Vec<AnomalyVerdict>,
    pub files: ReportFiles,
    pub heatmap_csv: Option<PathBuf>,
    pub heatmap_svg: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub crosscheck_coverage: Option<CrosscheckCoverage>,
}

fn empty_report(t: usize, s: usize) -> ReconstructionReport {
    ReconstructionReport {
        reconstruction: Array2::from_elem((t, s), f64::NAN),
        perr: Array2::from_elem((t, s), f64::NAN),
        coverage: Array2::from_elem((t, s), false),
    }
}

/// Runs enabled levels in order II -> III -> IV -> V -> VI, then fusion and
/// reporting. Training and discovery use the historical dataset; scoring
/// levels use the evaluation dataset.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    config.validate()?;
    let sensors = read_meta(&config.data.meta)?;
    let names: Vec<String> = sensors.iter().map(|m| m.name.clone()).collect();

    let needs_historical =
        (config.levels.has(4) && config.level4.model.is_none()) || config.levels.has(6);
    let historical = if needs_historical {
        let path = config.data.historical.as_ref().ok_or_else(|| {
            Error::Config("historical dataset required but not configured".into())
        })?;
        Some(ingest_with_meta(path, sensors.clone())?)
    } else {
        None
    };
    let needs_eval = [2u8, 3, 4, 5].iter().any(|&l| config.levels.has(l));
    let evaluation = if needs_eval {
        let path = config
            .data
            .evaluation
            .as_ref()
            .ok_or_else(|| Error::Config("evaluation dataset required".into()))?;
        Some(ingest_with_meta(path, sensors.clone())?)
    } else {
        None
    };

    let mut verdicts: Vec<AnomalyVerdict> = Vec::new();

    if config.levels.has(2) {
        let eval = evaluation.as_ref().expect("validated above");
        verdicts.extend(check_bounds(eval));
    }

    if config.levels.has(3) {
        let eval = evaluation.as_ref().expect("validated above");
        let l3 = &config.level3;
        verdicts.extend(detect_spikes(eval, l3.spike_window, l3.z_threshold)?);
        verdicts.extend(detect_stuck(eval, l3.stuck_min_run, l3.stuck_epsilon)?);
        verdicts.extend(detect_drift(eval, l3.drift_window, l3.drift_slope_threshold)?);
    }

    let mut report: Option<ReconstructionReport> = None;
    let mut model_path = None;
    if config.levels.has(4) {
        let eval = evaluation.as_ref().expect("validated above");
        let model = level4_model(config, historical.as_ref(), out_dir, &mut model_path)?;
        let scored = score(&model, eval)?;
        verdicts.extend(flag_contextual(
            &scored,
            config.level4.perr_threshold,
            config.level4.min_run,
        )?);
        report = Some(scored);
    }

    let mut crosscheck_coverage = None;
    if config.levels.has(5) {
        let eval = evaluation.as_ref().expect("validated above");
        let l5 = config.level5.as_ref().expect("validated by config");
        let sim = read_simulation_csv(&l5.simulation, eval)?;
        let outcome = crosscheck(eval, &sim, l5.rel_tolerance, l5.min_run)?;
        verdicts.extend(outcome.verdicts);
        crosscheck_coverage = Some(outcome.coverage);
    }

    let graph = if config.levels.has(6) {
        let l6 = config.level6.as_ref().expect("validated by config");
        let hist = historical.as_ref().expect("validated by config");
        discover(hist, l6.max_lag, l6.alpha)?
    } else {
        CausalGraph::empty((0..sensors.len()).collect())
    };

    let fusion_report = match &report {
        Some(r) => r.clone(),
        None => {
            let t = evaluation.as_ref().map_or(0, |f| f.len());
            empty_report(t, sensors.len())
        }
    };
    let reasoning = ReasoningConfig {
        coincidence_window: config.fusion.coincidence_window,
        neighbor_perr_ratio: config.fusion.neighbor_perr_ratio,
        min_corroborating_neighbors: config.fusion.min_corroborating_neighbors,
    };
    verdicts = classify(&verdicts, &fusion_report, &graph, &reasoning)?;

    let files = write_report(&verdicts, &graph, &names, out_dir)?;

    let mut heatmap_csv = None;
    let mut heatmap_svg = None;
    if let (Some(report), Some(eval)) = (&report, &evaluation) {
        let spec = HeatmapSpec {
            bucket_len: config.heatmap.bucket_len.min(eval.len().max(1)),
            clamp_max: config.heatmap.clamp_max,
            ..HeatmapSpec::defaults(sensors.len())
        };
        let matrix = heatmap_matrix(report, &spec)?;
        let csv_path = out_dir.join("heatmap.csv");
        std::fs::write(&csv_path, heatmap_to_csv(&matrix, &names, &eval.timestamps))
            .map_err(|e| Error::Write {
                path: csv_path.display().to_string(),
                source: e,
            })?;
        let svg_path = out_dir.join("heatmap.svg");
        std::fs::write(&svg_path, render_heatmap(&matrix, &spec, &names)).map_err(|e| {
            Error::Write {
                path: svg_path.display().to_string(),
                source: e,
            }
        })?;
        heatmap_csv = Some(csv_path);
        heatmap_svg = Some(svg_path);
    }

    Ok(PipelineOutcome {
        verdicts,
        files,
        heatmap_csv,
        heatmap_svg,
        model_path,
        crosscheck_coverage,
    })
}

fn level4_model(
    config: &PipelineConfig,
    historical: Option<&crate::data::TimeSeriesFrame>,
    out_dir: &Path,
    model_path: &mut Option<PathBuf>,
) -> Result<AutoencoderModel> {
    let l4 = &config.level4;
    if let Some(path) = &l4.model {
        if !path.exists() {
            return Err(Error::Config(format!(
                "level 4 model file {} does not exist and training is disabled",
                path.display()
            )));
        }
        *model_path = Some(path.clone());
        return load_model(path);
    }
    let hist = historical.ok_or_else(|| {
        Error::Config("level 4 training requires a historical dataset".into())
    })?;
    let train_cfg = TrainConfig {
        window_len: l4.window,
        latent: l4.latent,
        hidden_dims: l4.hidden.clone(),
        epochs: l4.epochs,
        batch_size: l4.batch_size,
        learning_rate: l4.learning_rate,
        input_dropout_rate: l4.input_dropout_rate,
        stride: l4.stride,
        seed: config.seed.ok_or_else(|| Error::Config("seed required".into()))?,
    };
    let outcome = train(std::slice::from_ref(hist), &train_cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Write {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let path = out_dir.join("model.bin");
    save_model(&outcome.model, &path)?;
    *model_path = Some(path);
    Ok(outcome.model)
}
