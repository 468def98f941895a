//! Experiment harness behind the `atta-lab` command line.
//!
//! Run settings resolve as command-line flags over a config file over built-in
//! defaults. Config files use the same `key = value` format as benchmark
//! specs. The resolved settings are rendered canonically as sorted
//! `key = value` lines, persisted as `config.resolved` and hashed into the
//! report.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 invariant violation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{run_ada, run_source_only, run_stats_adapt, run_tent, SelectorKind, TentConfig};
use crate::engine::{ClusterSpace, Checkpoint, EngineConfig, StreamRunner, WeightMode};
use crate::error::{Error, Result};
use crate::model::{accuracy, ModelParams};
use crate::report::{compare_runs, write_report, RunReport};
use crate::rng::Rng;
use crate::streams::{
    gen_benchmark, make_stream, parse_kv, pretrain_source, read_dataset_csv, write_dataset_csv, Benchmark,
    BenchmarkSpec, PretrainConfig, StreamOrder,
};
use crate::theory::{
    check_source_bound, check_thm2, entropy_probe, error_surface_sweep, gap_term_approx, grid_argmin_w0,
    optimal_w0_for_gap, CheckReport, ProbeConfig, ProbeLabels, SweepConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Environment variable that overrides the sweep worker count.
pub const THREADS_ENV: &str = "ATTA_LAB_THREADS";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_CONFIG,
    }
}

/// Adaptation method of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SimAtta,
    /// Entropy minimisation on every batch.
    Tent,
    /// Pool-based selection at a fixed budget, then one fine-tune.
    Select(SelectorKind),
    SourceOnly,
    StatsAdapt,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SimAtta => "simatta",
            Method::Tent => "tent",
            Method::Select(kind) => kind.as_str(),
            Method::SourceOnly => "source-only",
            Method::StatsAdapt => "stats-adapt",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simatta" => Ok(Method::SimAtta),
            "tent" => Ok(Method::Tent),
            "source-only" => Ok(Method::SourceOnly),
            "stats-adapt" => Ok(Method::StatsAdapt),
            other => other.parse().map(Method::Select).map_err(|_| {
                Error::config(format!(
                    "unknown method {other:?} (simatta | tent | random | entropy | kmeans | clue | source-only | stats-adapt)"
                ))
            }),
        }
    }
}

/// Where the benchmark comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Synth4,
    /// A `.kv` spec (generated on load) or a dataset `.csv`.
    Path(PathBuf),
}

/// Where the source model comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhiSource {
    Pretrain,
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub stream: StreamOrder,
    pub seed: u64,
    pub batch_size: usize,
    pub data: DataSource,
    pub phi: PhiSource,
    /// `budget` here also caps the selection baselines.
    pub engine: EngineConfig,
    pub tent: TentConfig,
    /// Recalibration chunk size for the post-adaptation evaluation of
    /// `stats-adapt`.
    pub eval_batch: usize,
    pub pretrain: PretrainConfig,
    pub pretrain_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::SimAtta,
            stream: StreamOrder::DomainWise,
            seed: 0,
            batch_size: 100,
            data: DataSource::Synth4,
            phi: PhiSource::Pretrain,
            engine: EngineConfig::default(),
            tent: TentConfig::default(),
            eval_batch: 100,
            pretrain: PretrainConfig::default(),
            pretrain_seed: 0,
        }
    }
}

fn cluster_space_str(s: ClusterSpace) -> &'static str {
    match s {
        ClusterSpace::Penultimate => "penultimate",
        ClusterSpace::Normalized => "normalized",
    }
}

fn opt_str<T: ToString>(v: Option<T>, none: &str) -> String {
    v.map_or_else(|| none.to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Canonical `key -> value` rendering; every key is accepted back by
    /// [`RunConfig::from_map`].
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let e = &self.engine;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("method", self.method.as_str().into());
        put("stream", self.stream.as_str().into());
        put("seed", self.seed.to_string());
        put("batch_size", self.batch_size.to_string());
        put(
            "data",
            match &self.data {
                DataSource::Synth4 => "synth-4".into(),
                DataSource::Path(p) => p.display().to_string(),
            },
        );
        put(
            "phi",
            match &self.phi {
                PhiSource::Pretrain => "pretrain".into(),
                PhiSource::Path(p) => p.display().to_string(),
            },
        );
        put("budget", e.budget.to_string());
        put("e_l", format!("{:?}", e.gate.e_l));
        put("e_h", format!("{:?}", e.gate.e_h));
        put("nc_init", e.nc_init.to_string());
        put("k_increase", e.k_increase.to_string());
        put("finetune.lr", format!("{:?}", e.finetune.lr));
        put("finetune.tol_patience", e.finetune.tol_patience.to_string());
        put("finetune.max_inner_steps", e.finetune.max_inner_steps.to_string());
        put("finetune.batch_size", e.finetune.batch_size.to_string());
        match e.weight_mode {
            WeightMode::MatchLambda => put("weight_mode", "match-lambda".into()),
            WeightMode::Fixed { w0 } => {
                put("weight_mode", "fixed".into());
                put("weight.w0", format!("{w0:?}"));
            }
            WeightMode::ClosedForm { a, c1 } => {
                put("weight_mode", "closed-form".into());
                put("weight.a", format!("{a:?}"));
                put("weight.c1", format!("{c1:?}"));
            }
        }
        put("vc_dim", opt_str(e.vc_dim.map(|v| format!("{v:?}")), "auto"));
        put("d_l_cap", opt_str(e.d_l_cap, "none"));
        put("cluster_space", cluster_space_str(e.cluster_space).into());
        put("ic.max_iter", e.ic.max_iter.to_string());
        put("ic.tol", format!("{:?}", e.ic.tol));
        put("ic.restarts", e.ic.restarts.to_string());
        put("tent.steps", self.tent.steps.to_string());
        put("tent.lr", format!("{:?}", self.tent.lr));
        put("eval_batch", self.eval_batch.to_string());
        put("pretrain.epochs", self.pretrain.epochs.to_string());
        put("pretrain.lr", format!("{:?}", self.pretrain.lr));
        put("pretrain.batch_size", self.pretrain.batch_size.to_string());
        put("pretrain.hidden", opt_str(self.pretrain.hidden, "none"));
        put("pretrain.accuracy_floor", format!("{:?}", self.pretrain.accuracy_floor));
        put("pretrain.seed", self.pretrain_seed.to_string());
        m
    }

    /// Parses a complete or partial map over the defaults. Unknown keys are
    /// rejected.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut full = Self::default().to_map();
        full.extend(["weight.w0", "weight.a", "weight.c1"].map(|k| (k.to_string(), String::new())));
        for (k, v) in map {
            if !full.contains_key(k) {
                return Err(Error::config(format!("unknown config key {k:?}")));
            }
            full.insert(k.clone(), v.clone());
        }
        let get = |k: &str| full[k].as_str();
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::config(format!("{k}: cannot parse {v:?}")))
        }
        let opt = |k: &str, none: &str| -> Result<Option<usize>> {
            let v = get(k);
            if v == none {
                Ok(None)
            } else {
                num(k, v).map(Some)
            }
        };
        let mut e = EngineConfig {
            budget: num("budget", get("budget"))?,
            nc_init: num("nc_init", get("nc_init"))?,
            k_increase: num("k_increase", get("k_increase"))?,
            d_l_cap: opt("d_l_cap", "none")?,
            ..EngineConfig::default()
        };
        e.gate.e_l = num("e_l", get("e_l"))?;
        e.gate.e_h = num("e_h", get("e_h"))?;
        e.finetune.lr = num("finetune.lr", get("finetune.lr"))?;
        e.finetune.tol_patience = num("finetune.tol_patience", get("finetune.tol_patience"))?;
        e.finetune.max_inner_steps = num("finetune.max_inner_steps", get("finetune.max_inner_steps"))?;
        e.finetune.batch_size = num("finetune.batch_size", get("finetune.batch_size"))?;
        e.weight_mode = match get("weight_mode") {
            "match-lambda" => WeightMode::MatchLambda,
            "fixed" => WeightMode::Fixed { w0: num("weight.w0", get("weight.w0"))? },
            "closed-form" => {
                WeightMode::ClosedForm { a: num("weight.a", get("weight.a"))?, c1: num("weight.c1", get("weight.c1"))? }
            }
            other => {
                return Err(Error::config(format!("weight_mode: {other:?} (match-lambda | fixed | closed-form)")));
            }
        };
        e.vc_dim = match get("vc_dim") {
            "auto" => None,
            v => Some(num("vc_dim", v)?),
        };
        e.cluster_space = match get("cluster_space") {
            "penultimate" => ClusterSpace::Penultimate,
            "normalized" => ClusterSpace::Normalized,
            other => return Err(Error::config(format!("cluster_space: {other:?} (penultimate | normalized)"))),
        };
        e.ic.max_iter = num("ic.max_iter", get("ic.max_iter"))?;
        e.ic.tol = num("ic.tol", get("ic.tol"))?;
        e.ic.restarts = num("ic.restarts", get("ic.restarts"))?;
        e.validate()?;

        let tent = TentConfig { steps: num("tent.steps", get("tent.steps"))?, lr: num("tent.lr", get("tent.lr"))? };
        if tent.steps == 0 || !(tent.lr > 0.0) {
            return Err(Error::config("tent.steps must be at least 1 and tent.lr positive"));
        }
        let pretrain = PretrainConfig {
            epochs: num("pretrain.epochs", get("pretrain.epochs"))?,
            lr: num("pretrain.lr", get("pretrain.lr"))?,
            batch_size: num("pretrain.batch_size", get("pretrain.batch_size"))?,
            hidden: opt("pretrain.hidden", "none")?,
            accuracy_floor: num("pretrain.accuracy_floor", get("pretrain.accuracy_floor"))?,
        };
        let cfg = Self {
            method: get("method").parse()?,
            stream: get("stream").parse()?,
            seed: num("seed", get("seed"))?,
            batch_size: num("batch_size", get("batch_size"))?,
            data: match get("data") {
                "synth-4" => DataSource::Synth4,
                p => DataSource::Path(p.into()),
            },
            phi: match get("phi") {
                "pretrain" => PhiSource::Pretrain,
                p => PhiSource::Path(p.into()),
            },
            engine: e,
            tent,
            eval_batch: num("eval_batch", get("eval_batch"))?,
            pretrain,
            pretrain_seed: num("pretrain.seed", get("pretrain.seed"))?,
        };
        if cfg.batch_size == 0 || cfg.eval_batch < 2 {
            return Err(Error::config("batch_size must be positive and eval_batch at least 2"));
        }
        Ok(cfg)
    }

    /// Sorted `key = value` lines.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_map() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Defaults, then the config file, then `overrides` in order.
pub fn resolve_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut map = BTreeMap::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let known = RunConfig::default().to_map();
        for (k, (v, line)) in parse_kv(&text, &name)? {
            if !known.contains_key(&k) && !k.starts_with("weight.") {
                return Err(Error::Parse { path: name, line, msg: format!("unknown config key {k:?}") });
            }
            map.insert(k, v);
        }
    }
    for (k, v) in overrides {
        map.insert(k.clone(), v.clone());
    }
    RunConfig::from_map(&map)
}

pub fn load_benchmark(data: &DataSource) -> Result<Benchmark> {
    match data {
        DataSource::Synth4 => gen_benchmark(&BenchmarkSpec::synth4()),
        DataSource::Path(p) if p.extension().is_some_and(|e| e == "csv") => read_dataset_csv(p),
        DataSource::Path(p) => gen_benchmark(&BenchmarkSpec::load(p)?),
    }
}

pub fn load_phi(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_phi(phi: &ModelParams, path: &Path) -> Result<()> {
    write_file(path, serde_json::to_string(phi)? + "\n")
}

fn write_file(path: &Path, body: String) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Loads the benchmark and the source model named by `cfg`.
pub fn prepare(cfg: &RunConfig) -> Result<(Benchmark, ModelParams)> {
    let bench = load_benchmark(&cfg.data)?;
    let phi = match &cfg.phi {
        PhiSource::Pretrain => pretrain_source(&bench, &cfg.pretrain, &mut Rng::new(cfg.pretrain_seed))?,
        PhiSource::Path(p) => load_phi(p)?,
    };
    if phi.input_dim() != bench.dims {
        return Err(Error::DimensionMismatch { expected: bench.dims, got: phi.input_dim() });
    }
    Ok((bench, phi))
}

/// Mid-stream checkpointing for SimATTA runs.
#[derive(Debug, Clone, Default)]
pub struct CheckpointPlan {
    /// Write a checkpoint after this many steps.
    pub at: Option<usize>,
    pub path: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
}

/// Runs `cfg.method` and attaches the resolved configuration.
pub fn execute_run(cfg: &RunConfig, bench: &Benchmark, phi: &ModelParams, ckpt: &CheckpointPlan) -> Result<RunReport> {
    let stream = make_stream(bench, cfg.stream, cfg.batch_size, cfg.seed)?;
    if !matches!(cfg.method, Method::SimAtta) && (ckpt.at.is_some() || ckpt.resume.is_some()) {
        return Err(Error::config("checkpoints are only supported for simatta"));
    }
    let report = match cfg.method {
        Method::SimAtta => {
            let mut runner = match &ckpt.resume {
                Some(c) => StreamRunner::resume(phi, bench, &stream, &cfg.engine, c.clone())?,
                None => StreamRunner::new(phi, bench, &stream, &cfg.engine, cfg.seed)?,
            };
            if let (Some(at), Some(path)) = (ckpt.at, &ckpt.path) {
                runner.run_until(at)?;
                write_file(path, runner.checkpoint().to_json()? + "\n")?;
            }
            runner.finish("simatta")?
        }
        Method::Tent => run_tent(phi, bench, &stream, &cfg.tent, cfg.seed)?,
        Method::Select(kind) => {
            let budget = cfg.engine.budget.min(bench.target_pool_len());
            run_ada(kind, phi, bench, &stream, budget, &cfg.engine.finetune, cfg.seed)?
        }
        Method::SourceOnly => run_source_only(phi, bench, &stream, cfg.seed)?,
        Method::StatsAdapt => run_stats_adapt(phi, bench, &stream, cfg.seed, cfg.eval_batch)?,
    };
    Ok(report.with_config(&cfg.resolved()))
}

/// One `lo:hi:step` grid, inclusive of `hi` up to rounding.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config(format!("grid {text:?}: expected lo:hi:step")))?;
    let [lo, hi, step] = parts[..] else {
        return Err(Error::config(format!("grid {text:?}: expected lo:hi:step")));
    };
    if !(step > 0.0 && hi >= lo) {
        return Err(Error::config(format!("grid {text:?}: need step > 0 and hi >= lo")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    // Round to the step's decimals so 0.1 + 2 * 0.1 prints as 0.3.
    Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsSettings {
    pub a_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// Gap term `B = c1 sqrt(d / N)`.
    pub d: f64,
    pub n: f64,
    pub c1: f64,
    /// Resolution of the grid search compared against the closed form.
    pub grid_steps: usize,
}

impl Default for BoundsSettings {
    fn default() -> Self {
        Self {
            a_grid: parse_grid("0.1:2.0:0.1").unwrap_or_default(),
            lambda_grid: parse_grid("0.05:0.95:0.05").unwrap_or_default(),
            d: 68.0,
            n: 1000.0,
            c1: 1.0,
            grid_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsOutput {
    /// `kind,a,lambda0,b,with_labels,reference,status` rows.
    pub checks_csv: String,
    /// `a,lambda0,b,closed_form,grid_argmin,cells_apart` rows.
    pub w0_csv: String,
    pub violations: usize,
    /// Largest closed-form vs grid disagreement, in grid cells.
    pub max_cells_apart: f64,
}

/// Evaluates both bound comparisons and the closed-form weight over the grids.
pub fn evaluate_bounds(s: &BoundsSettings) -> Result<BoundsOutput> {
    let b = gap_term_approx(s.d, s.n, s.c1);
    let mut checks_csv = String::from("kind,a,lambda0,b,with_labels,reference,status\n");
    let mut violations = 0;
    let mut emit = |kind: &str, r: CheckReport| {
        violations += r.violations();
        for c in r.checks {
            let status = serde_json::to_value(c.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let _ = writeln!(
                checks_csv,
                "{kind},{},{},{:.6},{:.6},{:.6},{status}",
                c.a, c.lambda0, c.b, c.with_labels, c.reference
            );
        }
    };
    for &a in &s.a_grid {
        emit("test", check_thm2(a, |_| b, &s.lambda_grid)?);
        emit("source", check_source_bound(a, |_| b, &s.lambda_grid)?);
    }
    let mut w0_csv = String::from("a,lambda0,b,closed_form,grid_argmin,cells_apart\n");
    let mut max_cells_apart: f64 = 0.0;
    for &a in &s.a_grid {
        for &l in &s.lambda_grid {
            let closed = optimal_w0_for_gap(l, a, b)?.w0();
            let grid = grid_argmin_w0(l, a, b, s.grid_steps)?;
            let apart = ((closed - grid).abs() * s.grid_steps as f64).round();
            max_cells_apart = max_cells_apart.max(apart);
            let _ = writeln!(w0_csv, "{a},{l},{b:.6},{closed:.6},{grid:.6},{apart}");
        }
    }
    Ok(BoundsOutput { checks_csv, w0_csv, violations, max_cells_apart })
}

/// Worker count: the environment override, else `flag`, else all cores (0).
pub fn sweep_threads(flag: Option<usize>) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::config(format!("{THREADS_ENV}: expected a count, got {v:?}"))),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

#[derive(Debug, Parser)]
#[command(name = "atta-lab", version, about = "Streaming active test-time adaptation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark: dataset.csv and spec.kv.
    GenData(GenDataArgs),
    /// Train the source model: phi.json.
    Pretrain(CommonArgs),
    /// Run one method over a stream: metrics.jsonl, summary.csv, config.resolved.
    Run(RunArgs),
    /// Loss surface over (lambda0, w0): surface.csv.
    Sweep(SweepArgs),
    /// Low- versus high-entropy fine-tuning: probe.json.
    Probe(ProbeArgs),
    /// Bound comparisons and closed-form weights: bounds.csv, w0.csv.
    Bounds(BoundsArgs),
    /// Side-by-side table of run directories.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Benchmark spec; defaults to synth-4.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's data seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset .csv or spec .kv; defaults to synth-4.
    #[arg(long)]
    pub data: Option<String>,
    /// Source model phi.json; pretrained on the fly when absent.
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Any config key, e.g. `--set tent.steps=10`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

impl CommonArgs {
    fn overrides(&self, seed_key: &str) -> Result<Vec<(String, String)>> {
        let mut o = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::config(format!("--set {s:?}: expected KEY=VALUE")))?;
            o.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(d) = &self.data {
            o.push(("data".into(), d.clone()));
        }
        if let Some(p) = &self.phi {
            o.push(("phi".into(), p.clone()));
        }
        if let Some(s) = self.seed {
            o.push((seed_key.into(), s.to_string()));
        }
        Ok(o)
    }

    fn resolve(&self, seed_key: &str, extra: Vec<(String, String)>) -> Result<RunConfig> {
        let mut o = self.overrides(seed_key)?;
        o.extend(extra);
        resolve_config(self.config.as_deref(), &o)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub stream: Option<String>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Write checkpoint.json after this many steps (simatta only).
    #[arg(long)]
    pub checkpoint_at: Option<usize>,
    /// Continue from a checkpoint written by `--checkpoint-at`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Worker threads; 0 uses every core. ATTA_LAB_THREADS takes precedence.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Training samples per cell.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    /// Comma-separated sweep seeds.
    #[arg(long, default_value = "0,1,2")]
    pub seeds: String,
    /// Grid over lambda0 and w0 as lo:hi:step.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub grid: String,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 300)]
    pub n_low: usize,
    #[arg(long, default_value_t = 300)]
    pub n_high: usize,
    /// oracle | pseudo
    #[arg(long, default_value = "oracle")]
    pub labels: String,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, default_value = "0.1:2.0:0.1")]
    pub a_grid: String,
    #[arg(long, default_value = "0.05:0.95:0.05")]
    pub lambda_grid: String,
    /// VC-dimension surrogate in the gap term.
    #[arg(long, default_value_t = 68.0)]
    pub d: f64,
    /// Sample count in the gap term.
    #[arg(long, default_value_t = 1000.0)]
    pub n: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 10_000)]
    pub grid_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, each holding a summary.csv.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Also write the table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command, and returns the exit
/// code. Usage errors print the usage text and return 2.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(parsed.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => {
            let mut spec = match &a.spec {
                Some(p) => BenchmarkSpec::load(p)?,
                None => BenchmarkSpec::synth4(),
            };
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            let bench = gen_benchmark(&spec)?;
            std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            write_dataset_csv(&bench, &a.out.join("dataset.csv"))?;
            write_file(&a.out.join("spec.kv"), spec.to_kv())?;
            println!("wrote {} samples to {}", bench.domains.iter().map(|d| d.train.len() + d.test.len()).sum::<usize>(), a.out.display());
            Ok(())
        }
        Command::Pretrain(a) => {
            let cfg = a.resolve("pretrain.seed", vec![("phi".into(), "pretrain".into())])?;
            let (bench, phi) = prepare(&cfg)?;
            save_phi(&phi, &a.out.join("phi.json"))?;
            println!("source test accuracy {:.4}", accuracy(&phi, &bench.source().test)?);
            Ok(())
        }
        Command::Run(a) => {
            let mut extra = Vec::new();
            for (k, v) in [("method", a.method.clone()), ("stream", a.stream.clone()), ("budget", a.budget.map(|b| b.to_string()))] {
                if let Some(v) = v {
                    extra.push((k.to_string(), v));
                }
            }
            let cfg = a.common.resolve("seed", extra)?;
            let (bench, phi) = prepare(&cfg)?;
            let resume = match &a.resume {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    Some(Checkpoint::from_json(&text)?)
                }
                None => None,
            };
            let plan = CheckpointPlan { at: a.checkpoint_at, path: Some(a.common.out.join("checkpoint.json")), resume };
            let report = execute_run(&cfg, &bench, &phi, &plan)?;
            write_report(&report, &a.common.out)?;
            println!(
                "{} {}: mean target accuracy {:.4}, source drop {:.4}, budget {}",
                report.method,
                report.stream,
                report.mean_target_accuracy(),
                report.source_drop(),
                report.budget_used
            );
            Ok(())
        }
        Command::Sweep(a) => {
            let cfg = a.common.resolve("seed", Vec::new())?;
            let (bench, phi) = prepare(&cfg)?;
            let grid = parse_grid(&a.grid)?;
            let seeds = a
                .seeds
                .split(',')
                .map(|s| s.trim().parse::<u64>().map_err(|_| Error::config(format!("--seeds: bad seed {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let sweep = SweepConfig { lambda_grid: grid.clone(), w_grid: grid, samples: a.samples, seeds, ..SweepConfig::default() };
            let threads = sweep_threads(a.threads)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            let table = pool.install(|| error_surface_sweep(&phi, &bench, &sweep))?;
            write_file(&a.common.out.join("surface.csv"), table.to_csv())?;
            for (l, w) in table.test_argmin_w0() {
                println!("lambda0 {l:.2}: test-loss argmin w0 {w:.2}");
            }
            let (l, w) = table.combined_argmin();
            println!("combined-loss argmin at lambda0 {l:.2}, w0 {w:.2}");
            Ok(())
        }
        Command::Probe(a) => {
            let cfg = a.common.resolve("seed", Vec::new())?;
            let (bench, phi) = prepare(&cfg)?;
            let labels = match a.labels.as_str() {
                "oracle" => ProbeLabels::Oracle,
                "pseudo" => ProbeLabels::Pseudo,
                other => return Err(Error::config(format!("--labels {other:?} (oracle | pseudo)"))),
            };
            let pc = ProbeConfig { n_low: a.n_low, n_high: a.n_high, labels, ..ProbeConfig::default() };
            let report = entropy_probe(&phi, &bench, &pc, &Rng::new(cfg.seed))?;
            write_file(&a.common.out.join("probe.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            for (name, arm) in [("low", &report.low), ("high", &report.high)] {
                println!(
                    "{name}-entropy: source loss {:.4}, target loss {:.4}, target accuracy {:.4}",
                    arm.source_loss, arm.target_loss, arm.target_accuracy
                );
            }
            Ok(())
        }
        Command::Bounds(a) => {
            let s = BoundsSettings {
                a_grid: parse_grid(&a.a_grid)?,
                lambda_grid: parse_grid(&a.lambda_grid)?,
                d: a.d,
                n: a.n,
                c1: a.c1,
                grid_steps: a.grid_steps,
            };
            let out = evaluate_bounds(&s)?;
            write_file(&a.out.join("bounds.csv"), out.checks_csv)?;
            write_file(&a.out.join("w0.csv"), out.w0_csv)?;
            println!("bound violations: {}; closed form vs grid: at most {} cells apart", out.violations, out.max_cells_apart);
            if out.violations > 0 {
                return Err(Error::Invariant(format!("{} bound comparisons failed", out.violations)));
            }
            Ok(())
        }
        Command::Report(a) => {
            let dirs: Vec<&Path> = a.dirs.iter().map(PathBuf::as_path).collect();
            let table = compare_runs(&dirs)?;
            print!("{table}");
            if let Some(p) = &a.out {
                write_file(p, table)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::unit_grid;

    #[test]
    fn defaults_round_trip_through_the_map() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_map(&cfg.to_map()).unwrap(), cfg);
        let resolved = cfg.resolved();
        let lines: Vec<&str> = resolved.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort_unstable();
        assert_eq!(lines, sorted);
    }

    #[test]
    fn precedence_is_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.kv");
        std::fs::write(&path, "budget = 50\nseed = 4\n").unwrap();
        let cfg = resolve_config(Some(&path), &[("budget".into(), "70".into())]).unwrap();
        assert_eq!(cfg.engine.budget, 70);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.engine.nc_init, 10);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let bad = |k: &str, v: &str| resolve_config(None, &[(k.into(), v.into())]).unwrap_err();
        assert_eq!(exit_code(&bad("budgett", "3")), EXIT_CONFIG);
        assert_eq!(exit_code(&bad("budget", "many")), EXIT_CONFIG);
        assert_eq!(exit_code(&bad("method", "magic")), EXIT_CONFIG);
        assert_eq!(exit_code(&bad("e_l", "0.5")), EXIT_CONFIG);
    }

    #[test]
    fn weight_modes_render_only_their_parameters() {
        let o = [("weight_mode".to_string(), "closed-form".to_string()), ("weight.a".into(), "0.3".into()), ("weight.c1".into(), "2".into())];
        let cfg = resolve_config(None, &o).unwrap();
        assert_eq!(cfg.engine.weight_mode, WeightMode::ClosedForm { a: 0.3, c1: 2.0 });
        let r = cfg.resolved();
        assert!(r.contains("weight.a = 0.3\n") && !r.contains("weight.w0"));
        // Fixed mode without a weight cannot resolve.
        assert!(resolve_config(None, &[("weight_mode".into(), "fixed".into())]).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.1:0.9:0.1").unwrap().len(), 9);
        assert_eq!(parse_grid("0.1:0.3:0.1").unwrap(), vec![0.1, 0.2, 0.3]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert_eq!(unit_grid(10, 0.1, 0.9), parse_grid("0.1:0.9:0.1").unwrap());
    }

    #[test]
    fn method_names() {
        for m in ["simatta", "tent", "random", "entropy", "kmeans", "clue", "source-only", "stats-adapt"] {
            assert_eq!(m.parse::<Method>().unwrap().as_str(), m);
        }
    }

    #[test]
    fn bounds_pass_on_default_grids() {
        let out = evaluate_bounds(&BoundsSettings::default()).unwrap();
        assert_eq!(out.violations, 0);
        assert!(out.max_cells_apart <= 1.0);
        assert_eq!(out.checks_csv.lines().count(), 1 + 2 * 20 * 19);
    }
}
