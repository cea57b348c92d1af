//! `cortiplan`: synthesize anatomy, optimize and evaluate electrode
//! layouts, and compare methods.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod manifest;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cortiplan_core::anatomy::io::save_anatomy_dir;
use cortiplan_core::anatomy::synth_anatomy;
use cortiplan_core::eval::{compare_methods, evaluate_layout, format_table, ComparisonResult};
use cortiplan_core::forward::{self, sample_amplitude};
use cortiplan_core::io::{read_layout_csv, write_pgm, write_raw_f32};
use cortiplan_core::{Error, EvaluationReport, Result, SynthParams};

use config::{Method, RunArgs, RunConfig};
use manifest::{hash_inputs, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "cortiplan", version, about = "Percept-aware cortical electrode placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic anatomy directory.
    Synth(SynthArgs),
    /// Optimize layouts over the (N, rho, seed) grid and evaluate them.
    Optimize(RunArgs),
    /// Build tiling or coverage baselines over the grid and evaluate them.
    Baseline(RunArgs),
    /// Evaluate an existing layout CSV on the evaluation split.
    Evaluate(EvaluateArgs),
    /// Render the percept of one evaluation image.
    Render(RenderArgs),
    /// Compare a method report against one or more baseline reports.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value = "anatomy")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    vessels: Option<usize>,
    /// Half-width of the represented visual field, degrees.
    #[arg(long)]
    extent_deg: Option<f64>,
    /// Map scale k, mm.
    #[arg(long)]
    k_map: Option<f64>,
    #[arg(long)]
    voxel_mm: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Layout CSV (`e,x,y,z[,thread_id]`).
    #[arg(long)]
    layout: PathBuf,
    /// Method name recorded in the report.
    #[arg(long, default_value = "layout")]
    name: String,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    layout: PathBuf,
    /// Index into the evaluation split.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Method report first, then baseline reports.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<PathBuf>,
    /// Dataset label shown in the table.
    #[arg(long, default_value = "test")]
    label: String,
    /// Table file; `comparison.json` is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status by error class; 2 is left to argument parsing.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::EmptyInput(_) => 3,
        Error::Io { .. } => 4,
        Error::Parse { .. } | Error::Format(_) => 5,
        Error::DegenerateMask(_) | Error::DegenerateDirection(_) | Error::InfeasibleRegion(_) => 6,
        Error::NonFiniteGradient { .. } => 7,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: e }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let d = SynthParams::default();
    let extent = a.extent_deg.unwrap_or(d.visual_extent[0]);
    let params = SynthParams {
        visual_extent: [extent, extent],
        sites: a.sites.unwrap_or(d.sites),
        vessels: a.vessels.unwrap_or(d.vessels),
        k_map: a.k_map.unwrap_or(d.k_map),
        voxel_mm: a.voxel_mm.unwrap_or(d.voxel_mm),
        ..d
    };
    let config = vec![
        ("seed".to_string(), a.seed.to_string()),
        ("sites".to_string(), params.sites.to_string()),
        ("vessels".to_string(), params.vessels.to_string()),
        ("extent-deg".to_string(), extent.to_string()),
        ("k-map".to_string(), params.k_map.to_string()),
        ("voxel-mm".to_string(), params.voxel_mm.to_string()),
    ];
    let manifest = RunManifest::begin("synth", config);
    let anatomy = synth_anatomy(&params, a.seed)?;
    let files = save_anatomy_dir(&a.out, &anatomy)?;
    manifest.finish(&a.out, &files)?;
    println!(
        "{} sites, {} vessel segments -> {}",
        anatomy.sites().len(),
        anatomy.vessels().segments.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_grid(command: &str, args: &RunArgs, base: RunConfig) -> Result<()> {
    let cfg = args.resolve(base)?;
    if command == "baseline" && !matches!(cfg.method, Method::Tiling | Method::Coverage) {
        return Err(Error::InvalidArgument(format!("baseline takes --method tiling or coverage, not {}", cfg.method)));
    }
    let result = run::run_command(command, &cfg)?;
    match result.failures.into_iter().next() {
        None => Ok(()),
        Some(first) => {
            eprintln!("error: seed {} of {} failed", first.seed, first.cell);
            Err(first.error)
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = a.run.resolve(RunConfig::default())?;
    let mut manifest = RunManifest::begin("evaluate", cfg.entries().into_iter().map(|(k, v)| (k.into(), v)).collect());
    manifest.inputs = run::input_hashes(&cfg)?;
    manifest.inputs.extend(hash_inputs(&a.layout)?);
    let layout = read_layout_csv(&a.layout)?;
    let anatomy = run::load_anatomy(&cfg)?;
    let data = run::load_data(&cfg)?;
    let seed = cfg.seeds[0];
    let mut report = evaluate_layout(&anatomy, &layout, &data.test, &cfg.objective(cfg.rho_um[0], seed))?;
    report.method = a.name.clone();
    report.dataset_id = Some(data.test_id);
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join("report.json");
    write_json(&path, &report)?;
    manifest.finish(&cfg.out, std::slice::from_ref(&path))?;
    println!(
        "median MSE {:.5} [{:.5}, {:.5}], median SSIM {:.4}, {} violations -> {}",
        report.mse_summary.median,
        report.mse_summary.q25,
        report.mse_summary.q75,
        report.ssim_summary.median,
        report.violations,
        path.display()
    );
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let cfg = a.run.resolve(RunConfig::default())?;
    let layout = read_layout_csv(&a.layout)?;
    let anatomy = run::load_anatomy(&cfg)?;
    let data = run::load_data(&cfg)?;
    let target = data.test.get(a.index).ok_or_else(|| {
        Error::InvalidArgument(format!("index {} outside the {}-image evaluation split", a.index, data.test.len()))
    })?;
    let oc = cfg.objective(cfg.rho_um[0], cfg.seeds[0]);
    let maps = forward::map_electrodes(&layout.positions()?, &anatomy, &oc)?;
    let amps: Vec<f64> = maps.iter().map(|m| sample_amplitude(target, m.mapping.s).0).collect();
    let percept = forward::render_mapped(&maps, &amps, target.raster());
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let files = [cfg.out.join("percept.pgm"), cfg.out.join("target.pgm"), cfg.out.join("percept.f32")];
    write_pgm(&files[0], &percept)?;
    write_pgm(&files[1], target.raster())?;
    write_raw_f32(&files[2], &percept)?;
    println!("{}", files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join("\n"));
    Ok(())
}

fn read_report(path: &Path) -> Result<EvaluationReport> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let reports: Vec<EvaluationReport> = a.reports.iter().map(|p| read_report(p)).collect::<Result<_>>()?;
    let rows: Vec<(String, ComparisonResult)> =
        reports[1..].iter().map(|b| Ok((a.label.clone(), compare_methods(&reports[0], b)?))).collect::<Result<_>>()?;
    let table = format_table(&rows);
    print!("{table}");
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(out, &table).map_err(io_err(out))?;
        let comparisons: Vec<&ComparisonResult> = rows.iter().map(|(_, c)| c).collect();
        write_json(&out.with_file_name("comparison.json"), &comparisons)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CORTIPLAN_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Optimize(a) => cmd_grid("optimize", a, RunConfig::default()),
        Command::Baseline(a) => cmd_grid("baseline", a, RunConfig { method: Method::Tiling, ..RunConfig::default() }),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Render(a) => cmd_render(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
