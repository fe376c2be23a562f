//! Command-line front end: synthetic data generation, training, validation
//! runs, causal discovery, and report emission.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tsvalid::autoencoder::{load_model, save_model, train, TrainConfig};
use tsvalid::causal::{discover, graph_to_csv, graph_to_dot, CausalGraph};
use tsvalid::config::PipelineConfig;
use tsvalid::data::SensorMeta;
use tsvalid::error::{Error, Result};
use tsvalid::ingest::{frame_to_csv, ingest, meta_to_csv};
use tsvalid::pipeline::run_pipeline;
use tsvalid::report::{
    heatmap_from_csv, heatmap_matrix, heatmap_to_csv, read_verdicts, render_heatmap, summarize,
    HeatmapSpec,
};
use tsvalid::scoring::{flag_contextual, score};
use tsvalid::synth::{gen_coupled_process, gen_var_process, CouplingSpec, VarEdge};

#[derive(Parser)]
#[command(name = "tsvalid", about = "Multi-level validation for multivariate time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured validation pipeline end to end.
    Run(RunArgs),
    /// Generate synthetic datasets (coupled process or lagged VAR).
    Gen(GenArgs),
    /// Train the contextual autoencoder and save the model file.
    Train(TrainArgs),
    /// Score a dataset with a trained model and flag contextual anomalies.
    Validate(ValidateArgs),
    /// Discover a temporal causal graph from a dataset.
    Discover(DiscoverArgs),
    /// Rebuild summary and heatmap files from saved artifacts.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the enabled levels; repeatable; `all` enables 2-6.
    #[arg(long = "level")]
    levels: Vec<String>,
}

#[derive(Args)]
struct GenArgs {
    /// `coupled` or `var`.
    #[arg(long, default_value = "coupled")]
    kind: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 5)]
    sensors: usize,
    /// Per-channel noise std (coupled) or innovation std (var).
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Per-sensor delay step of the coupled process: sensor j lags j*step.
    #[arg(long, default_value_t = 1)]
    delay_step: usize,
    /// VAR edges as `src>tgt:delay:coef`, comma separated.
    #[arg(long, default_value = "")]
    edges: String,
    /// Self-persistence coefficient of the VAR generator.
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long)]
    out_data: PathBuf,
    #[arg(long)]
    out_meta: PathBuf,
    /// Ground-truth adjacency CSV (var only).
    #[arg(long)]
    out_truth: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    window: usize,
    #[arg(long, default_value_t = 8)]
    latent: usize,
    #[arg(long, value_delimiter = ',', default_value = "96")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    dropout: f64,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    perr_threshold: f64,
    #[arg(long, default_value_t = 10)]
    min_run: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, default_value_t = 5)]
    max_lag: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_dot: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Verdict file (line-delimited JSON) to summarize.
    #[arg(long)]
    verdicts: PathBuf,
    /// Heatmap matrix CSV to render as SVG.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 20.0)]
    clamp_max: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(verdict_count) => {
            if verdict_count > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Gen(args) => cmd_gen(args).map(|()| 0),
        Command::Train(args) => cmd_train(args).map(|()| 0),
        Command::Validate(args) => cmd_validate(args),
        Command::Discover(args) => cmd_discover(args).map(|()| 0),
        Command::Report(args) => cmd_report(args).map(|()| 0),
    }
}

fn cmd_run(args: RunArgs) -> Result<usize> {
    let mut config = PipelineConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if !args.levels.is_empty() {
        let mut enabled = Vec::new();
        for spec in &args.levels {
            match spec.as_str() {
                "all" => enabled.extend([2u8, 3, 4, 5, 6]),
                other => enabled.push(
                    other
                        .parse::<u8>()
                        .map_err(|_| Error::Config(format!("bad --level value '{other}'")))?,
                ),
            }
        }
        enabled.sort_unstable();
        enabled.dedup();
        config.levels.enabled = enabled;
    }
    let outcome = run_pipeline(&config, &args.out)?;
    println!(
        "pipeline: {} verdict(s); report in {}",
        outcome.verdicts.len(),
        args.out.display()
    );
    if let Some(cov) = outcome.crosscheck_coverage {
        println!(
            "level 5 coverage: {:.1}% of samples checked",
            100.0 * cov.checked_fraction()
        );
    }
    Ok(outcome.verdicts.len())
}

fn parse_var_edges(text: &str) -> Result<Vec<VarEdge>> {
    let mut edges = Vec::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let bad = || Error::InvalidArgument(format!("bad edge spec '{part}'"));
        let (pair, rest) = part.split_once(':').ok_or_else(bad)?;
        let (delay_s, coef_s) = rest.split_once(':').ok_or_else(bad)?;
        let (src, tgt) = pair.split_once('>').ok_or_else(bad)?;
        edges.push(VarEdge {
            source: src.trim().parse().map_err(|_| bad())?,
            target: tgt.trim().parse().map_err(|_| bad())?,
            delay: delay_s.trim().parse().map_err(|_| bad())?,
            coef: coef_s.trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(edges)
}

/// Metadata for generated channels, bounds padded beyond the observed range.
fn gen_meta(frame: &tsvalid::data::TimeSeriesFrame) -> Vec<SensorMeta> {
    frame
        .sensors
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let col = frame.values.column(j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = (hi - lo).max(1e-6);
            SensorMeta {
                min_bound: lo - pad,
                max_bound: hi + pad,
                ..m.clone()
            }
        })
        .collect()
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut frame = match args.kind.as_str() {
        "coupled" => {
            let s = args.sensors;
            let mut spec = CouplingSpec::identity(s);
            spec.offsets = (0..s).map(|j| 10.0 + j as f64).collect();
            spec.delays = (0..s).map(|j| j * args.delay_step).collect();
            spec.noise_sigmas = vec![args.noise; s];
            spec.walk_sigma = 0.05;
            spec.sine_amplitude = 1.0;
            let (frame, _) = gen_coupled_process(args.seed, args.samples, &spec)?;
            frame
        }
        "var" => {
            let edges = parse_var_edges(&args.edges)?;
            let frame = gen_var_process(
                args.seed,
                args.samples,
                args.sensors,
                &edges,
                args.rho,
                args.noise,
            )?;
            if let Some(truth) = &args.out_truth {
                let graph = CausalGraph {
                    nodes: (0..args.sensors).collect(),
                    edges: edges
                        .iter()
                        .map(|e| tsvalid::causal::CausalEdge {
                            source: e.source,
                            target: e.target,
                            delay: e.delay,
                            strength: e.coef,
                            p_value: 0.0,
                        })
                        .collect(),
                };
                std::fs::write(truth, graph_to_csv(&graph))?;
            }
            frame
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown generator kind '{other}'"
            )))
        }
    };
    frame.sensors = gen_meta(&frame);
    std::fs::write(&args.out_data, frame_to_csv(&frame))?;
    std::fs::write(&args.out_meta, meta_to_csv(&frame.sensors))?;
    println!(
        "generated {} samples x {} sensors to {}",
        frame.len(),
        frame.sensor_count(),
        args.out_data.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let frame = ingest(&args.data, &args.meta)?;
    let cfg = TrainConfig {
        window_len: args.window,
        latent: args.latent,
        hidden_dims: args.hidden.clone(),
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        input_dropout_rate: args.dropout,
        stride: args.stride,
        seed: args.seed,
    };
    let outcome = train(std::slice::from_ref(&frame), &cfg)?;
    save_model(&outcome.model, &args.out)?;
    println!(
        "trained on {} samples; final loss {:.3e}; model saved to {}",
        frame.len(),
        outcome.final_loss,
        args.out.display()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<usize> {
    let frame = ingest(&args.data, &args.meta)?;
    let model = load_model(&args.model)?;
    let report = score(&model, &frame)?;
    let verdicts = flag_contextual(&report, args.perr_threshold, args.min_run)?;
    std::fs::create_dir_all(&args.out)?;
    let mut jsonl = String::new();
    for v in &verdicts {
        jsonl.push_str(&serde_json::to_string(v).map_err(|e| Error::Format(e.to_string()))?);
        jsonl.push('\n');
    }
    std::fs::write(args.out.join("verdicts.jsonl"), jsonl)?;
    let names: Vec<String> = frame.sensors.iter().map(|m| m.name.clone()).collect();
    let spec = HeatmapSpec {
        bucket_len: 60.min(frame.len().max(1)),
        ..HeatmapSpec::defaults(frame.sensor_count())
    };
    let matrix = heatmap_matrix(&report, &spec)?;
    std::fs::write(
        args.out.join("heatmap.csv"),
        heatmap_to_csv(&matrix, &names, &frame.timestamps),
    )?;
    std::fs::write(
        args.out.join("heatmap.svg"),
        render_heatmap(&matrix, &spec, &names),
    )?;
    println!("{} contextual verdict(s)", verdicts.len());
    Ok(verdicts.len())
}

fn cmd_discover(args: DiscoverArgs) -> Result<()> {
    let frame = ingest(&args.data, &args.meta)?;
    let graph = discover(&frame, args.max_lag, args.alpha)?;
    std::fs::write(&args.out_csv, graph_to_csv(&graph))?;
    if let Some(dot) = &args.out_dot {
        let names: Vec<String> = frame.sensors.iter().map(|m| m.name.clone()).collect();
        std::fs::write(dot, graph_to_dot(&graph, &names))?;
    }
    println!("discovered {} edge(s)", graph.edges.len());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let verdicts = read_verdicts(&args.verdicts)?;
    std::fs::create_dir_all(&args.out)?;
    let summary = serde_json::to_string_pretty(&summarize(&verdicts))
        .map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(args.out.join("summary.json"), summary)?;
    if let Some(matrix_path) = &args.matrix {
        let text = std::fs::read_to_string(matrix_path)?;
        let (matrix, names) = heatmap_from_csv(&text)?;
        let spec = HeatmapSpec {
            clamp_max: args.clamp_max,
            ..HeatmapSpec::defaults(matrix.rows.len())
        };
        std::fs::write(
            args.out.join("heatmap.svg"),
            render_heatmap(&matrix, &spec, &names),
        )?;
    }
    println!("report written to {}", args.out.display());
    Ok(())
}
