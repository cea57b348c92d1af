//! Run configuration: defaults, a flat `key = value` file, then flags.

use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use cortiplan_core::{Error, ObjectiveConfig, Result, SpreadMode, SpreadModel, SynthParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Percept,
    Tiling,
    Coverage,
    Threads,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Percept => "percept",
            Method::Tiling => "tiling",
            Method::Coverage => "coverage",
            Method::Threads => "threads",
        }
    }
}

impl Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    <Method as ValueEnum>::from_str(s.trim(), true).map_err(|_| format!("unknown method `{}`", s.trim()))
}

fn mode_name(m: SpreadMode) -> &'static str {
    match m {
        SpreadMode::Cortical => "cortical",
        SpreadMode::Visual => "visual",
    }
}

fn parse_mode(s: &str) -> std::result::Result<SpreadMode, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "cortical" => Ok(SpreadMode::Cortical),
        "visual" => Ok(SpreadMode::Visual),
        other => Err(format!("unknown spread mode `{other}` (expected cortical or visual)")),
    }
}

/// Everything a run needs. Echoed verbatim into `config.txt`; loading that
/// file back reproduces the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `None` selects the synthetic anatomy.
    pub anatomy_dir: Option<PathBuf>,
    pub synth_seed: u64,
    pub synth_sites: usize,
    pub synth_vessels: usize,
    /// `None` selects synthetic digits.
    pub dataset: Option<PathBuf>,
    pub dataset_seed: u64,
    pub extent_deg: f64,
    pub train: usize,
    pub test: usize,
    pub method: Method,
    pub n: Vec<usize>,
    pub n_insert: Vec<usize>,
    pub threads_m: usize,
    pub thread_spacing_mm: f64,
    /// µm in cortical mode, degrees in visual mode.
    pub rho_um: Vec<f64>,
    pub spread_mode: SpreadMode,
    pub knn_k: usize,
    pub lambda_vasc: f64,
    pub lambda_cortex: f64,
    pub tau_mm: f64,
    pub lr: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub batch_size: usize,
    pub foveal_beta: f64,
    pub foveal_sigma_deg: Option<f64>,
    pub coverage_temperature: f64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let o = ObjectiveConfig::default();
        let s = SynthParams::default();
        Self {
            anatomy_dir: None,
            synth_seed: 0,
            synth_sites: s.sites,
            synth_vessels: s.vessels,
            dataset: None,
            dataset_seed: 0,
            extent_deg: 5.0,
            train: 200,
            test: 100,
            method: Method::Percept,
            n: vec![64],
            n_insert: vec![32],
            threads_m: 8,
            thread_spacing_mm: 0.2,
            rho_um: vec![o.spread.rho],
            spread_mode: o.spread.mode,
            knn_k: o.knn_k,
            lambda_vasc: o.lambda_vasc,
            lambda_cortex: o.lambda_cortex,
            tau_mm: o.tau,
            lr: o.lr,
            max_iters: o.max_iters,
            tol: o.tol,
            batch_size: o.batch_size,
            foveal_beta: o.foveal_beta,
            foveal_sigma_deg: o.foveal_sigma_f,
            coverage_temperature: o.coverage_temperature,
            seeds: vec![0, 1, 2],
            out: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

fn list<T: Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    let out: std::result::Result<Vec<T>, _> = v.split(',').map(|x| x.trim().parse::<T>()).collect();
    match out {
        Ok(xs) if !xs.is_empty() => Ok(xs),
        _ => Err(format!("`{v}` is not a comma-separated list for `{key}`")),
    }
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.trim().parse().map_err(|_| format!("`{v}` is not a valid value for `{key}`"))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty() && v != "synthetic").then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "anatomy-dir" => self.anatomy_dir = opt_path(v),
            "synth-seed" => self.synth_seed = parse_one(key, v)?,
            "sites" => self.synth_sites = parse_one(key, v)?,
            "vessels" => self.synth_vessels = parse_one(key, v)?,
            "dataset" => self.dataset = opt_path(v),
            "dataset-seed" => self.dataset_seed = parse_one(key, v)?,
            "extent-deg" => self.extent_deg = parse_one(key, v)?,
            "train" => self.train = parse_one(key, v)?,
            "test" => self.test = parse_one(key, v)?,
            "method" => self.method = parse_method(v)?,
            "n" => self.n = parse_list(key, v)?,
            "n-insert" => self.n_insert = parse_list(key, v)?,
            "threads-m" => self.threads_m = parse_one(key, v)?,
            "thread-spacing-mm" => self.thread_spacing_mm = parse_one(key, v)?,
            "rho-um" => self.rho_um = parse_list(key, v)?,
            "spread-mode" => self.spread_mode = parse_mode(v)?,
            "knn-k" => self.knn_k = parse_one(key, v)?,
            "lambda-vasc" => self.lambda_vasc = parse_one(key, v)?,
            "lambda-cortex" => self.lambda_cortex = parse_one(key, v)?,
            "tau-mm" => self.tau_mm = parse_one(key, v)?,
            "lr" => self.lr = parse_one(key, v)?,
            "max-iters" => self.max_iters = parse_one(key, v)?,
            "tol" => self.tol = parse_one(key, v)?,
            "batch-size" => self.batch_size = parse_one(key, v)?,
            "foveal-beta" => self.foveal_beta = parse_one(key, v)?,
            "foveal-sigma-deg" => {
                self.foveal_sigma_deg = match v.trim() {
                    "" | "auto" => None,
                    x => Some(parse_one(key, x)?),
                }
            }
            "coverage-temperature" => self.coverage_temperature = parse_one(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "out" => self.out = PathBuf::from(v.trim()),
            "jobs" => self.jobs = parse_one(key, v)?,
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Every key with its value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("synthetic".to_string(), |p| p.display().to_string());
        vec![
            ("anatomy-dir", path(&self.anatomy_dir)),
            ("synth-seed", self.synth_seed.to_string()),
            ("sites", self.synth_sites.to_string()),
            ("vessels", self.synth_vessels.to_string()),
            ("dataset", path(&self.dataset)),
            ("dataset-seed", self.dataset_seed.to_string()),
            ("extent-deg", self.extent_deg.to_string()),
            ("train", self.train.to_string()),
            ("test", self.test.to_string()),
            ("method", self.method.to_string()),
            ("n", list(&self.n)),
            ("n-insert", list(&self.n_insert)),
            ("threads-m", self.threads_m.to_string()),
            ("thread-spacing-mm", self.thread_spacing_mm.to_string()),
            ("rho-um", list(&self.rho_um)),
            ("spread-mode", mode_name(self.spread_mode).to_string()),
            ("knn-k", self.knn_k.to_string()),
            ("lambda-vasc", self.lambda_vasc.to_string()),
            ("lambda-cortex", self.lambda_cortex.to_string()),
            ("tau-mm", self.tau_mm.to_string()),
            ("lr", self.lr.to_string()),
            ("max-iters", self.max_iters.to_string()),
            ("tol", self.tol.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("foveal-beta", self.foveal_beta.to_string()),
            ("foveal-sigma-deg", self.foveal_sigma_deg.map_or("auto".into(), |s| s.to_string())),
            ("coverage-temperature", self.coverage_temperature.to_string()),
            ("seeds", list(&self.seeds)),
            ("out", self.out.display().to_string()),
            ("jobs", self.jobs.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# cortiplan run configuration\n");
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Apply a config file on top of `self`.
    pub fn apply_text(&mut self, path: &Path, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            self.set(k.trim(), v).map_err(err)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.n.iter().chain(&self.n_insert).any(|&n| n == 0) {
            return bad("electrode counts must be >= 1");
        }
        if self.threads_m == 0 {
            return bad("threads-m must be >= 1");
        }
        if !(self.thread_spacing_mm > 0.0) {
            return bad("thread-spacing-mm must be > 0");
        }
        if !(self.extent_deg > 0.0) {
            return bad("extent-deg must be > 0");
        }
        if self.train == 0 || self.test == 0 {
            return bad("train and test sizes must be >= 1");
        }
        if self.jobs == 0 {
            return bad("jobs must be >= 1");
        }
        for &rho in &self.rho_um {
            self.objective(rho, 0).validate()?;
        }
        Ok(())
    }

    pub fn objective(&self, rho: f64, seed: u64) -> ObjectiveConfig {
        ObjectiveConfig {
            lambda_vasc: self.lambda_vasc,
            lambda_cortex: self.lambda_cortex,
            tau: self.tau_mm,
            spread: SpreadModel { mode: self.spread_mode, rho },
            knn_k: self.knn_k,
            foveal_beta: self.foveal_beta,
            foveal_sigma_f: self.foveal_sigma_deg,
            batch_size: self.batch_size,
            lr: self.lr,
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            coverage_temperature: self.coverage_temperature,
        }
    }

    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            visual_extent: [self.extent_deg, self.extent_deg],
            sites: self.synth_sites,
            vessels: self.synth_vessels,
            ..SynthParams::default()
        }
    }
}

/// Flags shared by every run-style subcommand. Each one overrides the
/// matching config-file key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat `key = value` configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Anatomy directory; the synthetic anatomy is used when absent.
    #[arg(long)]
    pub anatomy_dir: Option<PathBuf>,
    #[arg(long)]
    pub synth_seed: Option<u64>,
    /// Retinotopy sites of the synthetic anatomy.
    #[arg(long)]
    pub sites: Option<usize>,
    /// Vessel polylines of the synthetic anatomy.
    #[arg(long)]
    pub vessels: Option<usize>,
    /// IDX file, image file or image directory; synthetic digits when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub dataset_seed: Option<u64>,
    /// Half-width of the rendered visual field, degrees.
    #[arg(long)]
    pub extent_deg: Option<f64>,
    /// Training images (the first ones in the dataset).
    #[arg(long)]
    pub train: Option<usize>,
    /// Evaluation images (following the training images).
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Electrode counts, comma separated.
    #[arg(long)]
    pub n: Option<String>,
    /// Thread counts for `--method threads`, comma separated.
    #[arg(long)]
    pub n_insert: Option<String>,
    /// Electrodes per thread.
    #[arg(long)]
    pub threads_m: Option<usize>,
    #[arg(long)]
    pub thread_spacing_mm: Option<f64>,
    /// Current spread, comma separated: µm of cortex, or degrees with
    /// `--spread-mode visual`.
    #[arg(long)]
    pub rho_um: Option<String>,
    #[arg(long)]
    pub spread_mode: Option<String>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long)]
    pub lambda_vasc: Option<f64>,
    #[arg(long)]
    pub lambda_cortex: Option<f64>,
    #[arg(long)]
    pub tau_mm: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub foveal_beta: Option<f64>,
    #[arg(long)]
    pub foveal_sigma_deg: Option<String>,
    #[arg(long)]
    pub coverage_temperature: Option<f64>,
    /// Seeds, comma separated.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid cells run concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k, v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let s = |v: &Option<String>| v.clone();
        put("anatomy-dir", path(&self.anatomy_dir));
        put("synth-seed", self.synth_seed.map(|v| v.to_string()));
        put("sites", self.sites.map(|v| v.to_string()));
        put("vessels", self.vessels.map(|v| v.to_string()));
        put("dataset", path(&self.dataset));
        put("dataset-seed", self.dataset_seed.map(|v| v.to_string()));
        put("extent-deg", self.extent_deg.map(|v| v.to_string()));
        put("train", self.train.map(|v| v.to_string()));
        put("test", self.test.map(|v| v.to_string()));
        put("method", self.method.map(|v| v.to_string()));
        put("n", s(&self.n));
        put("n-insert", s(&self.n_insert));
        put("threads-m", self.threads_m.map(|v| v.to_string()));
        put("thread-spacing-mm", self.thread_spacing_mm.map(|v| v.to_string()));
        put("rho-um", s(&self.rho_um));
        put("spread-mode", s(&self.spread_mode));
        put("knn-k", self.knn_k.map(|v| v.to_string()));
        put("lambda-vasc", self.lambda_vasc.map(|v| v.to_string()));
        put("lambda-cortex", self.lambda_cortex.map(|v| v.to_string()));
        put("tau-mm", self.tau_mm.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("max-iters", self.max_iters.map(|v| v.to_string()));
        put("tol", self.tol.map(|v| v.to_string()));
        put("batch-size", self.batch_size.map(|v| v.to_string()));
        put("foveal-beta", self.foveal_beta.map(|v| v.to_string()));
        put("foveal-sigma-deg", s(&self.foveal_sigma_deg));
        put("coverage-temperature", self.coverage_temperature.map(|v| v.to_string()));
        put("seeds", s(&self.seeds));
        put("out", path(&self.out));
        put("jobs", self.jobs.map(|v| v.to_string()));
        o
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            cfg.apply_text(path, &text)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, &v).map_err(Error::InvalidArgument)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
