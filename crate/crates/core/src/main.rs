use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::warn;

use adaptseg::harness::{self, RunReport, Shape, SynthSpec, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
use adaptseg::io;
use adaptseg::solver::{format_trace, segment, SolverConfig};
use adaptseg::{Error, Result};

/// Two-phase image segmentation with spatially adaptive regularization.
#[derive(Debug, Parser)]
#[command(name = "adaptseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment one image and write the binary mask.
    Segment(SegmentArgs),
    /// Generate a two-valued synthetic image and its exact ground truth.
    Synth(SynthArgs),
    /// Add seeded Gaussian noise to an image.
    Noise(NoiseArgs),
    /// Run every line of a manifest and write a report table.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    /// One of cen, ctd, mm, thr.
    #[arg(long, default_value = "cen")]
    strategy: String,
    /// Constant weight (cen).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 30)]
    maxit: usize,
    #[arg(long, default_value_t = 1e-2)]
    tol_gs: f64,
    #[arg(long, default_value_t = 50)]
    maxit_gs: usize,
    #[arg(long)]
    out_mask: PathBuf,
    /// Final relaxed indicator as an 8-bit image.
    #[arg(long)]
    out_u: Option<PathBuf>,
    /// Heatmap of the (unscaled) weight map.
    #[arg(long)]
    out_lambda_map: Option<PathBuf>,
    /// Per-iteration convergence table.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Ground-truth mask; adds Dice/Jaccard to the report line.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// disk, square, two-blobs or checker.
    #[arg(long, default_value = "disk")]
    shape: String,
    /// Rows x columns, e.g. 64x64.
    #[arg(long, default_value = "64x64")]
    size: String,
    #[arg(long, default_value_t = 0.8)]
    fg: f64,
    #[arg(long, default_value_t = 0.2)]
    bg: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cell side for the checker shape.
    #[arg(long, default_value_t = 8)]
    cell: usize,
    #[arg(long)]
    out_image: PathBuf,
    #[arg(long)]
    out_mask: PathBuf,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    #[arg(long)]
    input: PathBuf,
    /// Standard deviation on the 0-255 intensity scale.
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    manifest: PathBuf,
    /// Aligned text report (stdout when omitted).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Comma-separated report.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Leave wall_ms empty so reports are reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_owned(), source: e })
}

fn cmd_segment(a: SegmentArgs) -> Result<i32> {
    let strategy = harness::build_strategy(&a.strategy, a.lambda, a.lambda_min, a.lambda_max)?;
    let cfg = SolverConfig {
        mu: a.mu,
        tol: a.tol,
        maxit: a.maxit,
        tol_gs: a.tol_gs,
        maxit_gs: a.maxit_gs,
        alpha: a.alpha,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    let ubar = io::load_image(&a.input)?;
    let truth = a.truth.as_ref().map(io::load_mask).transpose()?;

    let start = Instant::now();
    let res = segment(&ubar, &strategy, &cfg)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;

    io::save_mask(&res.mask, &a.out_mask)?;
    if let Some(p) = &a.out_u {
        io::save_image(&res.u, p)?;
    }
    if let Some(p) = &a.out_lambda_map {
        let (lo, hi) = strategy.lambda_range();
        // a constant map has no spread; show it against [λ/2, λ]
        let bounds = strategy
            .bounds()
            .map_or_else(|| adaptseg::LambdaBounds::new(lo * 0.5, hi), Ok)?;
        io::save_lambda_heatmap(&res.lambda, bounds, p)?;
    }
    if let Some(p) = &a.trace {
        write_text(p, &format_trace(&res.trace))?;
    }
    let metrics = match &truth {
        Some(t) => Some(harness::dice_jaccard(&res.mask, t)?),
        None => None,
    };
    let id = a.input.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let report = RunReport::from_result(&id, &strategy, &cfg, &res, metrics, Some(wall));
    print!("{}", harness::format_report_table(&[report]));
    if !res.converged {
        warn!("stopped at the iteration cap ({}) before the tolerance was met", cfg.maxit);
    }
    Ok(EXIT_OK)
}

fn cmd_synth(a: SynthArgs) -> Result<i32> {
    let shape: Shape = a.shape.parse()?;
    let (rows, cols) = harness::parse_size(&a.size)?;
    let spec = SynthSpec { shape, rows, cols, fg: a.fg, bg: a.bg, seed: a.seed, cell: a.cell };
    if spec.is_degenerate() {
        eprintln!("warning: fg == bg gives a constant image that cannot be segmented");
    }
    let (img, mask) = harness::synthesize(&spec)?;
    io::save_image(&img, &a.out_image)?;
    io::save_mask(&mask, &a.out_mask)?;
    Ok(EXIT_OK)
}

fn cmd_noise(a: NoiseArgs) -> Result<i32> {
    if a.sigma == 0.0 {
        // exact copy, whatever the input's bit depth
        let raw = io::read_raw(&a.input)?;
        io::write_raw(&raw, &a.output)?;
        return Ok(EXIT_OK);
    }
    let u = io::load_image(&a.input)?;
    let noisy = io::add_gaussian_noise(&u, a.sigma, a.seed)?;
    io::save_image(&noisy, &a.output)?;
    Ok(EXIT_OK)
}

fn cmd_bench(a: BenchArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.manifest).map_err(|e| Error::Io { path: a.manifest.clone(), source: e })?;
    let base = a.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let rows = harness::parse_manifest(&text, &base);
    if rows.is_empty() {
        eprintln!("warning: manifest {} lists no runs", a.manifest.display());
    }
    let reports = harness::run_bench(&rows, !a.no_timing);
    for r in reports.iter().filter(|r| r.error.is_some()) {
        warn!("{}: {}", r.image, r.error.as_deref().unwrap_or_default());
    }
    let table = harness::format_report_table(&reports);
    match &a.report {
        Some(p) => write_text(p, &table)?,
        None => print!("{table}"),
    }
    if let Some(p) = &a.csv {
        write_text(p, &harness::report_to_csv(&reports)?)?;
    }
    let failed = reports.iter().filter(|r| r.error.is_some()).count();
    Ok(if !reports.is_empty() && failed == reports.len() { EXIT_NUMERIC } else { EXIT_OK })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    let outcome = match cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("adaptseg: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
