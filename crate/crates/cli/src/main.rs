use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use tau_core::config::{load_scenario, RunConfig};
use tau_core::eval::{align_rigid, ate, pair_unaligned, summarize};
use tau_core::io::{self, Dataset};
use tau_core::model::TrajectoryKind;
use tau_core::pipeline::{run_pipeline, FocInput};
use tau_core::plot::{line_plot, Series};
use tau_core::{Error, Result};

/// Exit status when tracking was lost and only partial output was written.
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "tau", version, about = "Depth and trajectory from a fixated patch and an IMU")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario to a dataset directory.
    Simulate(SimulateArgs),
    /// Run the estimator on a dataset.
    Estimate(EstimateArgs),
    /// Align an estimate to ground truth and report ATE.
    Evaluate(EvaluateArgs),
    /// Line plots of CSV columns against time.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario name or scenario file.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    out: PathBuf,
    /// Noise seed, overriding the scenario and config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Estimated trajectory CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-window solver and observer diagnostics CSV.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Frequency-of-contact samples CSV.
    #[arg(long)]
    foc_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feed the oracle F from the dataset instead of tracking.
    #[arg(long)]
    oracle_foc: bool,
    /// Use tracker output at this rate (Hz).
    #[arg(long)]
    decimate: Option<f64>,
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    gate: Option<f64>,
    #[arg(long)]
    patch_size: Option<u32>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Per-sample l2 error CSV.
    #[arg(long)]
    errors: Option<PathBuf>,
    /// One-row summary CSV: sequence, ATE, duration, path length.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Compare without rigid alignment.
    #[arg(long)]
    no_align: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV files whose first column is `t_ns`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated column names to plot; all numeric columns otherwise.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long, default_value = "value")]
    y_label: String,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map(RunConfig::load).unwrap_or_else(|| Ok(RunConfig::default()))
}

fn simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref())?;
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed.or(cfg.seed) {
        scenario.trajectory.seed = seed;
    }
    let seq = scenario.simulate()?;
    io::write_simulated(&args.out, &seq)?;
    eprintln!(
        "wrote {} frames, {} gyro and {} accel samples to {}",
        seq.frame_count(),
        seq.gyro.len(),
        seq.accel.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn estimate(args: &EstimateArgs) -> Result<ExitCode> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.decimate {
        cfg.decimate_hz = Some(v);
    }
    if let Some(v) = args.window {
        cfg.window_length = v;
    }
    if let Some(v) = args.rate {
        cfg.fusion_rate = v;
    }
    if let Some(v) = args.gate {
        cfg.gate_threshold = v;
    }
    if let Some(v) = args.patch_size {
        cfg.patch_size = v;
    }
    if let Some(v) = args.samples {
        cfg.samples = v;
    }
    let pipeline = cfg.pipeline()?;
    let data = Dataset::open(&args.dataset)?;
    let started = Instant::now();
    let oracle;
    let input = if args.oracle_foc {
        let center = cfg.patch_center().unwrap_or_else(|| data.intrinsics.principal_point());
        oracle = io::read_oracle_foc(&args.dataset, data.intrinsics.to_calibrated(center))?;
        FocInput::Samples(&oracle)
    } else {
        FocInput::Frames {
            source: &data.frames,
            intrinsics: data.intrinsics,
        }
    };
    let out = run_pipeline(input, &data.gyro, &data.accel, &pipeline)?;
    io::write_trajectory(&args.out, &out.estimate)?;
    if let Some(p) = &args.diagnostics {
        io::write_diagnostics(p, &out.diagnostics)?;
    }
    if let Some(p) = &args.foc_out {
        io::write_foc(p, &out.foc)?;
    }
    if out.tracking.frames > 0 {
        eprintln!(
            "tracked {} frames at {:.0} frames/s",
            out.tracking.frames,
            out.tracking.fps()
        );
    }
    eprintln!(
        "{} estimates over {} windows in {:.2} s",
        out.estimate.len(),
        out.diagnostics.len(),
        started.elapsed().as_secs_f64()
    );
    match out.failure {
        None => Ok(ExitCode::SUCCESS),
        Some(e) => {
            let at = match &e {
                Error::TrackingLost { t, .. } => format!(" at t = {t}"),
                _ => String::new(),
            };
            eprintln!("error: processing stopped early{at}: {e}");
            eprintln!("partial output written to {}", args.out.display());
            Ok(ExitCode::from(EXIT_PARTIAL))
        }
    }
}

fn evaluate(args: &EvaluateArgs) -> Result<ExitCode> {
    let est = io::read_trajectory(&args.estimate, TrajectoryKind::Estimate)?;
    let truth = io::read_trajectory(&args.truth, TrajectoryKind::GroundTruth)?;
    let pair = if args.no_align {
        pair_unaligned(&est, &truth, None)?
    } else {
        align_rigid(&est, &truth, None)?
    };
    let report = ate(&pair)?;
    let summary = summarize(&pair, &truth)?;
    println!("ATE: {:.2} cm", summary.ate_cm);
    println!("duration: {:.2} s", summary.duration_s);
    println!("path length: {:.2} m", summary.path_length_m);
    if let Some(p) = &args.errors {
        io::write_errors(p, &report.errors_cm)?;
    }
    if let Some(p) = &args.table {
        let name = args
            .estimate
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = format!(
            "sequence,ate_cm,duration_s,path_length_m\n{name},{:.2},{:.2},{:.2}\n",
            summary.ate_cm, summary.duration_s, summary.path_length_m
        );
        io::write_atomic(p, text.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn read_series(path: &Path, wanted: &[String]) -> Result<Vec<Series>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.first().map(String::as_str) != Some("t_ns") {
        return Err(Error::Input(format!("{}: first column must be t_ns", path.display())));
    }
    let cols: Vec<usize> = (1..header.len())
        .filter(|&i| wanted.is_empty() || wanted.contains(&header[i]))
        .collect();
    if cols.is_empty() {
        return Err(Error::Input(format!("{}: no matching columns", path.display())));
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut series: Vec<Series> = cols
        .iter()
        .map(|&i| Series {
            label: format!("{stem}:{}", header[i]),
            points: Vec::new(),
        })
        .collect();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Input(format!("{}: row {}: bad {what}", path.display(), row + 2));
        let t: u64 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("timestamp"))?;
        for (s, &i) in series.iter_mut().zip(&cols) {
            let v: f64 = rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(&header[i]))?;
            s.points.push((t as f64 * 1e-9, v));
        }
    }
    Ok(series)
}

fn plot(args: &PlotArgs) -> Result<ExitCode> {
    let mut series = Vec::new();
    for p in &args.inputs {
        series.extend(read_series(p, &args.columns)?);
    }
    let svg = line_plot(&args.title, "t (s)", &args.y_label, &series)?;
    io::write_atomic(&args.out, svg.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
