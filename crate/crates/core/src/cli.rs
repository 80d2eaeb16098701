//! The `rst` command line: subcommands, flag parsing and output layout.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::diagram::{project, read_diagrams_csv, write_diagrams_csv, DataDim, ModelConfig, PersistenceDiagram};
use crate::error::{Error, ErrorKind, Result};
use crate::estimation::{fit, FittedModel, OptimizerSettings, QuadratureSpec};
use crate::field::{
    kde_grid, prominent_count, read_cloud_csv, sample_two_circles, superlevel_h0, superlevel_h1, write_cloud_csv,
    GridSpec,
};
use crate::inference::{order_stat_test, parameter_compare, CompareSettings, Correction, OrderStatReport};
use crate::replication::{read_ensemble, replicate, write_ensemble, ChainOptions, Schedule};
use crate::svg::{emit_svg, Figure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
/// Output could not be written.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "rst", version, about = "Replicate persistence diagrams from a fitted Gibbs model and test them")]
struct Cli {
    /// Worker threads for chains and refits (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two concentric circles: sample, KDE, H0 diagram, fit, replicate, test.
    DemoTwoCircles(DemoArgs),
    /// Point cloud CSV to superlevel diagrams of its KDE.
    Pd(PdArgs),
    /// Diagram CSV to fitted model JSON.
    Fit(FitArgs),
    /// Fitted model and its diagram to a replicate ensemble directory.
    Replicate(ReplicateArgs),
    /// Order-statistic p-values of a diagram against an ensemble.
    Test(TestArgs),
    /// Per-parameter comparison of the models of two diagrams.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    #[arg(long = "K", default_value_t = 2)]
    #[serde(rename = "K")]
    k: usize,
    #[arg(long = "delta-star", default_value_t = 1.0)]
    delta_star: f64,
    #[arg(long, default_value = "unknown")]
    dim: DataDim,
}

#[derive(Debug, Args, Serialize)]
struct ScheduleArgs {
    #[arg(long = "burn-in", default_value_t = 1000)]
    burn_in: usize,
    /// Blocks between replicates, replicates per chain, chains.
    #[arg(long, default_value = "500,20,50", value_parser = parse_schedule)]
    schedule: (usize, usize, usize),
}

impl ScheduleArgs {
    fn build(&self, seed: u64) -> Result<Schedule> {
        let (n_b, n_r, n_chains) = self.schedule;
        Schedule::new(self.burn_in, n_b, n_r, n_chains, seed)
    }
}

#[derive(Debug, Args, Serialize)]
struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "K", default_value_t = 2)]
    #[serde(rename = "K")]
    k: usize,
    #[arg(long = "delta-star", default_value_t = 1.0)]
    delta_star: f64,
    #[arg(long, default_value = "2")]
    dim: DataDim,
    #[command(flatten)]
    #[serde(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0.3)]
    bandwidth: f64,
    #[arg(long, default_value = "128")]
    grid: GridSpec,
    #[arg(long, default_value = "demo-two-circles")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PdArgs {
    /// Point cloud CSV with header `x,y`.
    input: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    bandwidth: f64,
    #[arg(long, default_value = "128")]
    grid: GridSpec,
    #[arg(long, default_value = "pd")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    /// Diagram CSV.
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    degree: usize,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Seeds the multistart jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "fit")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReplicateArgs {
    /// Fitted model JSON.
    model: PathBuf,
    /// The diagram CSV the model was fitted to.
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value = "ensemble")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TestArgs {
    /// Observed diagram CSV.
    input: PathBuf,
    /// Ensemble directory written by `replicate`.
    ensemble: PathBuf,
    #[arg(long, default_value_t = 0)]
    degree: usize,
    /// Number of order statistics.
    #[arg(long = "order-stats", default_value_t = 5)]
    order_stats: usize,
    #[arg(long, default_value = "test")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = 0)]
    degree: usize,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "bh,bonferroni", value_delimiter = ',')]
    corrections: Vec<Correction>,
    #[arg(long, default_value = "compare")]
    #[serde(skip)]
    out: PathBuf,
}

fn parse_schedule(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [b, r, c] = parts.as_slice() else {
        return Err(format!("expected nb,nr,nR, got {s:?}"));
    };
    let num = |x: &str| x.parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((num(b)?, num(r)?, num(c)?))
}

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: &'a T,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn prepare(out: &Path, command: &str, args: &impl Serialize) -> Result<()> {
    fs::create_dir_all(out).map_err(|source| Error::Write {
        path: out.to_path_buf(),
        source,
    })?;
    let manifest = RunManifest {
        tool: "rst",
        version: env!("CARGO_PKG_VERSION"),
        command,
        args,
    };
    write_text(&out.join("run.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

fn select_degree(path: &Path, degree: usize) -> Result<PersistenceDiagram> {
    read_diagrams_csv(path)?
        .into_iter()
        .find(|d| d.degree() == degree)
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("no degree-{degree} points"),
        })
}

fn write_report(report: &OrderStatReport, out: &Path) -> Result<()> {
    write_text(&out.join("report.json"), &(report.to_json()? + "\n"))?;
    write_text(&out.join("report.txt"), &report.render_table())?;
    emit_svg(Figure::Report(report), &out.join("report.svg"))
}

#[derive(Serialize)]
struct DemoSummary {
    points: usize,
    h1_prominent: usize,
    h1_threshold: f64,
    acceptance_rate: f64,
    p_values: Vec<f64>,
}

/// Runs the two-circles pipeline and writes its output tree under `out`.
pub fn cmd_demo_two_circles(flags: &[&str]) -> i32 {
    let mut argv = vec!["rst", "demo-two-circles"];
    argv.extend_from_slice(flags);
    run(argv)
}

fn demo(args: &DemoArgs) -> Result<()> {
    let out = &args.out;
    prepare(out, "demo-two-circles", args)?;
    let cloud = sample_two_circles(500, 300, 4.0, 2.0, None, args.seed)?;
    write_cloud_csv(&cloud, &out.join("cloud.csv"))?;
    let grid = kde_grid(&cloud, args.bandwidth, args.grid)?;
    let h0 = superlevel_h0(&grid);
    let h1 = superlevel_h1(&grid);
    write_diagrams_csv(&[h0.clone(), h1.clone()], &out.join("diagrams.csv"))?;
    emit_svg(Figure::Diagrams(&[h0.clone(), h1.clone()]), &out.join("diagrams.svg"))?;

    let pd = h0.without_essential();
    let ppd = project(&pd)?;
    let config = ModelConfig::resolve(&ppd, args.k, args.delta_star, args.dim, 0)?;
    let settings = OptimizerSettings {
        jitter_seed: args.seed,
        ..Default::default()
    };
    let model = fit(&ppd, &config, &QuadratureSpec::default(), &settings)?;
    write_text(&out.join("model.json"), &(model.to_json()? + "\n"))?;

    let schedule = args.schedule.build(args.seed)?;
    let ensemble = replicate(&ppd, &model, &schedule, ChainOptions::default())?;
    write_ensemble(&ensemble, &out.join("ensemble"))?;
    let report = order_stat_test(&pd, &ensemble.replicates, 5)?;
    write_report(&report, out)?;

    let threshold = 0.1 * (grid.max() - grid.min());
    let summary = DemoSummary {
        points: pd.len(),
        h1_prominent: prominent_count(&h1, threshold),
        h1_threshold: threshold,
        acceptance_rate: ensemble.acceptance_rate,
        p_values: report.rows.iter().map(|r| r.p_value).collect(),
    };
    write_text(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    print!("{}", report.render_table());
    println!("H1 prominent points: {}", summary.h1_prominent);
    Ok(())
}

fn pd(args: &PdArgs) -> Result<()> {
    let cloud = read_cloud_csv(&args.input)?;
    prepare(&args.out, "pd", args)?;
    let grid = kde_grid(&cloud, args.bandwidth, args.grid)?;
    let diagrams = [superlevel_h0(&grid), superlevel_h1(&grid)];
    write_diagrams_csv(&diagrams, &args.out.join("diagrams.csv"))?;
    emit_svg(Figure::Diagrams(&diagrams), &args.out.join("diagrams.svg"))
}

fn fit_cmd(args: &FitArgs) -> Result<()> {
    let pd = select_degree(&args.input, args.degree)?.without_essential();
    prepare(&args.out, "fit", args)?;
    let ppd = project(&pd)?;
    let config = ModelConfig::resolve(&ppd, args.model.k, args.model.delta_star, args.model.dim, args.degree)?;
    let settings = OptimizerSettings {
        jitter_seed: args.seed,
        ..Default::default()
    };
    let model = fit(&ppd, &config, &QuadratureSpec::default(), &settings)?;
    write_text(&args.out.join("model.json"), &(model.to_json()? + "\n"))?;
    println!("{}", serde_json::to_string(&model.theta)?);
    Ok(())
}

fn read_model(path: &Path) -> Result<FittedModel> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn replicate_cmd(args: &ReplicateArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let pd = select_degree(&args.input, model.config.degree)?.without_essential();
    prepare(&args.out, "replicate", args)?;
    let ppd = project(&pd)?;
    let schedule = args.schedule.build(args.seed)?;
    let ensemble = replicate(&ppd, &model, &schedule, ChainOptions::default())?;
    write_ensemble(&ensemble, &args.out)?;
    println!(
        "{} replicates, acceptance rate {:.4}",
        ensemble.replicates.len(),
        ensemble.acceptance_rate
    );
    Ok(())
}

fn test_cmd(args: &TestArgs) -> Result<()> {
    let pd = select_degree(&args.input, args.degree)?;
    let ensemble = read_ensemble(&args.ensemble)?;
    prepare(&args.out, "test", args)?;
    let report = order_stat_test(&pd, &ensemble.replicates, args.order_stats)?;
    write_report(&report, &args.out)?;
    print!("{}", report.render_table());
    Ok(())
}

fn compare_cmd(args: &CompareArgs) -> Result<()> {
    let a = select_degree(&args.a, args.degree)?.without_essential();
    let b = select_degree(&args.b, args.degree)?.without_essential();
    prepare(&args.out, "compare", args)?;
    let settings = CompareSettings {
        k_max: args.model.k,
        delta_star: args.model.delta_star,
        data_dim: args.model.dim,
        degree: args.degree,
        schedule: args.schedule.build(args.seed)?,
        alpha: args.alpha,
        corrections: args.corrections.clone(),
        optimizer: OptimizerSettings {
            jitter_seed: args.seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = parameter_compare(&a, &b, &settings)?;
    write_text(&args.out.join("comparison.json"), &(report.to_json()? + "\n"))?;
    let table = report.render_table();
    write_text(&args.out.join("comparison.txt"), &table)?;
    print!("{table}");
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Invalid => EXIT_USAGE,
        ErrorKind::Parse => EXIT_PARSE,
        ErrorKind::Numeric => EXIT_NUMERIC,
        ErrorKind::Io => EXIT_IO,
    }
}

fn kind_name(code: i32) -> &'static str {
    match code {
        EXIT_USAGE => "usage",
        EXIT_PARSE => "parse",
        EXIT_NUMERIC => "numeric",
        _ => "io",
    }
}

/// One-line JSON diagnostic: `{"error":"parse","code":3,"message":"..."}`.
fn report_error(code: i32, message: &str) {
    let line = serde_json::json!({ "error": kind_name(code), "code": code, "message": message });
    eprintln!("{line}");
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { EXIT_USAGE } else { EXIT_OK };
            }
            let msg = e.to_string();
            report_error(EXIT_USAGE, msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return EXIT_USAGE;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            report_error(EXIT_USAGE, &format!("cannot start {} workers: {e}", cli.workers.unwrap_or(0)));
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::DemoTwoCircles(a) => demo(a),
        Command::Pd(a) => pd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Replicate(a) => replicate_cmd(a),
        Command::Test(a) => test_cmd(a),
        Command::Compare(a) => compare_cmd(a),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            report_error(code, &e.to_string());
            code
        }
    }
}
