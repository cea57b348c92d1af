//! Experiment orchestration: data loading, the (N, ρ, seed) grid and the
//! per-seed output directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cortiplan_core::anatomy::{io::load_anatomy_dir, synth_anatomy};
use cortiplan_core::constraints::total_objective;
use cortiplan_core::eval::{evaluate_layout, Summary};
use cortiplan_core::io::{write_layout_csv, write_trace_csv};
use cortiplan_core::optimize::{optimize_placement, optimize_threads};
use cortiplan_core::{
    baselines, dataset, AnatomyModel, ElectrodeLayout, Error, EvaluationReport, ObjectiveBreakdown, OptimizationTrace,
    Result, TargetImage,
};
use log::{error, info};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Method, RunConfig};
use crate::manifest::{hash_inputs, RunManifest};

pub fn load_anatomy(cfg: &RunConfig) -> Result<AnatomyModel> {
    match &cfg.anatomy_dir {
        Some(dir) => load_anatomy_dir(dir),
        None => synth_anatomy(&cfg.synth_params(), cfg.synth_seed),
    }
}

pub struct Data {
    pub train: Vec<TargetImage>,
    pub test: Vec<TargetImage>,
    /// Content hash of the evaluation images.
    pub test_id: String,
}

fn dataset_id(images: &[TargetImage]) -> String {
    let mut h = Sha256::new();
    for t in images {
        h.update((t.width as u64).to_le_bytes());
        h.update((t.height as u64).to_le_bytes());
        for v in t.extent.iter().chain(&t.values) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// The first `train` images train, the next `test` evaluate.
pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    let need = cfg.train + cfg.test;
    let mut all = match &cfg.dataset {
        Some(path) => dataset::load_dataset(path, cfg.extent_deg, Some(need))?,
        None => dataset::synth_digits(need, cfg.dataset_seed, cfg.extent_deg)?,
    };
    if all.len() < need {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} images, {} train + {} test requested",
            all.len(),
            cfg.train,
            cfg.test
        )));
    }
    let test = all.split_off(cfg.train);
    Ok(Data { test_id: dataset_id(&test), train: all, test })
}

pub fn input_hashes(cfg: &RunConfig) -> Result<Vec<crate::manifest::FileEntry>> {
    let mut out = Vec::new();
    for p in [&cfg.anatomy_dir, &cfg.dataset].into_iter().flatten() {
        out.extend(hash_inputs(p)?);
    }
    Ok(out)
}

/// One (electrode count, spread) combination of the sweep.
#[derive(Debug, Clone)]
pub struct Cell {
    pub method: Method,
    /// Electrodes, or threads for the thread method.
    pub count: usize,
    pub rho: f64,
}

impl Cell {
    pub fn dir_name(&self, cfg: &RunConfig) -> String {
        match self.method {
            Method::Threads => format!("threads_n{}x{}_rho{}", self.count, cfg.threads_m, self.rho),
            m => format!("{m}_n{}_rho{}", self.count, self.rho),
        }
    }
}

pub fn cells(cfg: &RunConfig) -> Vec<Cell> {
    let counts = if cfg.method == Method::Threads { &cfg.n_insert } else { &cfg.n };
    let mut out = Vec::new();
    for &count in counts {
        for &rho in &cfg.rho_um {
            out.push(Cell { method: cfg.method, count, rho });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub method: String,
    /// Layout mode, `free` or `threads`.
    pub mode: String,
    pub seed: u64,
    pub electrodes: usize,
    /// Objective of the returned layout over the full training set.
    pub objective: ObjectiveBreakdown,
    pub violations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub best_iter: Option<usize>,
    pub seconds: f64,
}

pub struct SeedOutcome {
    pub report: EvaluationReport,
    pub info: RunInfo,
    pub files: Vec<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// Build the layout for one cell and seed.
pub fn place(
    cell: &Cell,
    cfg: &RunConfig,
    anatomy: &AnatomyModel,
    train: &[TargetImage],
    seed: u64,
) -> Result<(ElectrodeLayout, OptimizationTrace)> {
    let oc = cfg.objective(cell.rho, seed);
    match cell.method {
        Method::Percept => optimize_placement(anatomy, train, cell.count, &oc),
        Method::Threads => optimize_threads(anatomy, train, &oc, cell.count, cfg.threads_m, cfg.thread_spacing_mm),
        Method::Coverage => baselines::coverage_layout(anatomy, train, cell.count, &oc),
        Method::Tiling => Ok((baselines::tiling_layout(anatomy, cell.count)?, OptimizationTrace::default())),
    }
}

pub fn run_seed(
    cell: &Cell,
    cfg: &RunConfig,
    anatomy: &AnatomyModel,
    data: &Data,
    seed: u64,
    dir: &Path,
) -> Result<SeedOutcome> {
    let start = Instant::now();
    let (layout, trace) = place(cell, cfg, anatomy, &data.train, seed)?;
    let seconds = start.elapsed().as_secs_f64();
    let oc = cfg.objective(cell.rho, seed);
    let (objective, _) = total_objective(&layout, anatomy, &data.train, &oc)?;
    let mut report = evaluate_layout(anatomy, &layout, &data.test, &oc)?;
    report.method = cell.method.to_string();
    report.dataset_id = Some(data.test_id.clone());
    let info = RunInfo {
        method: cell.method.to_string(),
        mode: layout.mode_name().to_string(),
        seed,
        electrodes: layout.electrode_count(),
        objective,
        violations: report.violations,
        iterations: trace.len(),
        converged: trace.converged,
        best_iter: trace.best_iter,
        seconds,
    };
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let files = ["layout.csv", "trace.csv", "report.json", "run.json"].map(|f| dir.join(f));
    write_layout_csv(&files[0], &layout)?;
    write_trace_csv(&files[1], &trace)?;
    write_json(&files[2], &report)?;
    write_json(&files[3], &info)?;
    info!(
        "{} seed {seed}: median MSE {:.5}, median SSIM {:.4}, {} violations, {} iterations in {:.1}s",
        dir.display(),
        report.mse_summary.median,
        report.ssim_summary.median,
        report.violations,
        info.iterations,
        seconds
    );
    Ok(SeedOutcome { report, info, files: files.to_vec() })
}

#[derive(Debug, Serialize)]
struct SeedRow {
    seed: u64,
    median_mse: f64,
    median_ssim: f64,
    violations: usize,
    min_vessel_distance: Option<f64>,
    iterations: usize,
}

#[derive(Debug, Serialize)]
struct CellSummary {
    method: String,
    electrodes: usize,
    rho: f64,
    dataset_id: String,
    seeds: Vec<SeedRow>,
    failed_seeds: Vec<u64>,
    /// Over every evaluation image of every completed seed.
    mse: Option<Summary>,
    ssim: Option<Summary>,
    total_violations: usize,
}

/// A seed that did not complete.
pub struct Failure {
    pub cell: String,
    pub seed: u64,
    pub error: Error,
}

pub struct GridResult {
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<Failure>,
}

/// Run every cell and seed, writing outputs under `cfg.out`. Completed
/// seeds are kept even if others fail.
pub fn run_grid(cfg: &RunConfig, anatomy: &AnatomyModel, data: &Data) -> Result<GridResult> {
    let grid = cells(cfg);
    let tasks: Vec<(usize, u64)> = (0..grid.len()).flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<SeedOutcome>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, seed)| {
                let dir = cfg.out.join(grid[c].dir_name(cfg)).join(format!("seed{seed}"));
                run_seed(&grid[c], cfg, anatomy, data, seed, &dir)
            })
            .collect()
    });

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    let mut per_cell: Vec<Vec<SeedOutcome>> = grid.iter().map(|_| Vec::new()).collect();
    for (&(c, seed), r) in tasks.iter().zip(results) {
        match r {
            Ok(o) => {
                outputs.extend(o.files.iter().cloned());
                per_cell[c].push(o);
            }
            Err(e) => {
                let name = grid[c].dir_name(cfg);
                error!("seed {seed} of {name} failed: {e}");
                failures.push(Failure { cell: name, seed, error: e });
            }
        }
    }
    for (cell, done) in grid.iter().zip(&per_cell) {
        let name = cell.dir_name(cfg);
        let all_mse: Vec<f64> = done.iter().flat_map(|o| o.report.mse.iter().copied()).collect();
        let all_ssim: Vec<f64> = done.iter().flat_map(|o| o.report.ssim.iter().copied()).collect();
        let summary = CellSummary {
            method: cell.method.to_string(),
            electrodes: done.first().map_or(0, |o| o.info.electrodes),
            rho: cell.rho,
            dataset_id: data.test_id.clone(),
            seeds: done
                .iter()
                .map(|o| SeedRow {
                    seed: o.info.seed,
                    median_mse: o.report.mse_summary.median,
                    median_ssim: o.report.ssim_summary.median,
                    violations: o.report.violations,
                    min_vessel_distance: o.report.min_vessel_distance,
                    iterations: o.info.iterations,
                })
                .collect(),
            failed_seeds: failures.iter().filter(|f| f.cell == name).map(|f| f.seed).collect(),
            mse: (!all_mse.is_empty()).then(|| Summary::of(&all_mse)),
            ssim: (!all_ssim.is_empty()).then(|| Summary::of(&all_ssim)),
            total_violations: done.iter().map(|o| o.report.violations).sum(),
        };
        let dir = cfg.out.join(&name);
        fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        let path = dir.join("summary.json");
        write_json(&path, &summary)?;
        outputs.push(path);
    }
    Ok(GridResult { outputs, failures })
}

/// The full `optimize`/`baseline` command: grid, config echo, manifest.
pub fn run_command(command: &str, cfg: &RunConfig) -> Result<GridResult> {
    let mut manifest =
        RunManifest::begin(command, cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect());
    manifest.inputs = input_hashes(cfg)?;
    let anatomy = load_anatomy(cfg)?;
    let data = load_data(cfg)?;
    info!(
        "{} sites, {} vessel segments, {} train / {} test images",
        anatomy.sites().len(),
        anatomy.vessels().segments.len(),
        data.train.len(),
        data.test.len()
    );
    fs::create_dir_all(&cfg.out).map_err(|e| Error::Io { path: cfg.out.clone(), source: e })?;
    let mut result = run_grid(cfg, &anatomy, &data)?;
    let echo = cfg.out.join("config.txt");
    fs::write(&echo, cfg.to_text()).map_err(|e| Error::Io { path: echo.clone(), source: e })?;
    result.outputs.push(echo);
    manifest.finish(&cfg.out, &result.outputs)?;
    Ok(result)
}
