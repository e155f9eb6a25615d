//! The five subcommands. Each resolves a [`RunConfig`] from an optional file
//! plus flags, writes its outputs and a `config.json` snapshot into the
//! output directory, and returns a process-level error on failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use almdp::alm::{alm_run, AlmStatus};
use almdp::baseline::{train_first_order, FirstOrderConfig, FirstOrderStatus, Method};
use almdp::data::{gen_teacher_student, kaiming_init, TeacherConfig};
use almdp::io::{read_dataset, write_dataset, write_epochs, write_trace, write_weights};
use almdp::net::mse;
use almdp::{Dataset, NetworkSpec};
use clap::Args;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::checks::{self, Fault, PropertyReport};
use crate::config::{canonical_json, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input dimension.
    #[arg(long)]
    pub d0: Option<usize>,
    /// Standard deviation of the target noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Samples in each of the train and test sets.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct NetworkArgs {
    /// Hidden layer widths, e.g. `20,5`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Regularization weight on the weights.
    #[arg(long)]
    pub weight_reg: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainAlmArgs {
    /// Training set CSV.
    #[arg(long)]
    pub train: PathBuf,
    /// Optional test set CSV.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Final feasibility tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Final stationarity tolerance.
    #[arg(long)]
    pub eps_bar: Option<f64>,
    /// First inner tolerance.
    #[arg(long)]
    pub eps0: Option<f64>,
    /// Fixed initial penalty instead of 0.001 f(z0).
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write zeros instead of wall-clock times.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainBaselineArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `sgd` or `adam`.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input dimensions of the grid, e.g. `5,10`.
    #[arg(long, value_delimiter = ',')]
    pub d0: Option<Vec<usize>>,
    /// Noise levels of the grid, e.g. `0,0.2`.
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Epochs of the first-order baselines.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FaultArg {
    SSign,
}

#[derive(Debug, Clone, Args)]
pub struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instances of the oracle-equivalence suite; the other suites use a
    /// fifth of it (at least 1) and gradient suites a tenth.
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, hide = true)]
    pub inject_fault: Option<FaultArg>,
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Solver(format!("cannot create {}: {e}", dir.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Solver(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let f = File::open(path).map_err(|e| CliError::Config(format!("cannot open dataset {}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(f), None)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_data(train: &Path, test: Option<&Path>) -> Result<(Dataset, Option<Dataset>), CliError> {
    let train_set = load_dataset(train)?;
    let test_set = test.map(load_dataset).transpose()?;
    if let Some(t) = &test_set {
        if t.inputs.nrows() != train_set.inputs.nrows() || t.targets.nrows() != train_set.targets.nrows() {
            return Err(CliError::Config("train and test sets have different column layouts".into()));
        }
    }
    Ok((train_set, test_set))
}

fn apply_network(cfg: &mut RunConfig, net: &NetworkArgs) {
    if let Some(h) = &net.hidden {
        cfg.network.hidden = h.clone();
    }
    if let Some(mu) = net.weight_reg {
        cfg.network.weight_reg = mu;
    }
}

fn elapsed_ms(started: Instant, timings: bool) -> u64 {
    if timings {
        started.elapsed().as_millis() as u64
    } else {
        0
    }
}

/// `m:ss` for terminal output.
pub fn format_mss(ms: f64) -> String {
    if !ms.is_finite() {
        return "-".into();
    }
    let secs = (ms / 1000.0).round() as u64;
    format!("{}:{:02}", secs / 60, secs % 60)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.d0 {
        cfg.data.input_dim = d;
    }
    if let Some(n) = args.noise {
        cfg.data.noise = n;
    }
    if let Some(m) = args.m {
        cfg.data.samples = m;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    let cfg = cfg.resolve()?;
    let ts = gen_teacher_student(&cfg.data)?;

    let out = &cfg.output_dir;
    create_out(out)?;
    let mut teacher = Vec::new();
    write_weights(&mut teacher, &ts.teacher)?;
    write_dataset(create(&out.join("train.csv"))?, &ts.train)?;
    write_dataset(create(&out.join("test.csv"))?, &ts.test)?;
    let sidecar = json!({
        "data": cfg.data,
        "seed": cfg.seed,
        "teacher_sha256": sha256_hex(&teacher),
        "train_rows": ts.train.len(),
        "test_rows": ts.test.len(),
    });
    write_text(&out.join("data.json"), &canonical_json(&sidecar))?;
    write_text(&out.join("config.json"), &cfg.snapshot())?;
    println!(
        "wrote {} train and {} test samples (d0 = {}, noise = {}) to {}",
        ts.train.len(),
        ts.test.len(),
        cfg.data.input_dim,
        cfg.data.noise,
        out.display()
    );
    Ok(())
}

fn student_spec(cfg: &RunConfig, train: &Dataset) -> Result<NetworkSpec, CliError> {
    cfg.network.spec(train.inputs.nrows(), train.targets.nrows(), train.len())
}

fn mse_or_nan(spec: &NetworkSpec, w: &almdp::Weights, data: Option<&Dataset>) -> f64 {
    data.and_then(|d| mse(spec, w, d).ok()).unwrap_or(f64::NAN)
}

/// Result of one ALM training run, as reported in summaries and benchmarks.
#[derive(Debug, Clone)]
pub struct AlmReport {
    pub outcome: almdp::AlmOutcome,
    pub spec: NetworkSpec,
    pub init_train_mse: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub time_ms: u64,
}

pub fn run_alm(cfg: &RunConfig, train: &Dataset, test: Option<&Dataset>) -> Result<AlmReport, CliError> {
    let spec = student_spec(cfg, train)?;
    let init = kaiming_init(&spec, cfg.seed);
    let started = Instant::now();
    let outcome = alm_run(&spec, train, &cfg.alm, &init)?;
    let time_ms = elapsed_ms(started, cfg.alm.timings);
    let (weights, _) = outcome.z.unpack(&spec, &train.inputs)?;
    Ok(AlmReport {
        init_train_mse: mse_or_nan(&spec, &init, Some(train)),
        train_mse: mse_or_nan(&spec, &weights, Some(train)),
        test_mse: mse_or_nan(&spec, &weights, test),
        outcome,
        spec,
        time_ms,
    })
}

fn alm_summary(cfg: &RunConfig, r: &AlmReport) -> Value {
    let o = &r.outcome;
    let last = o.trace.last();
    json!({
        "status": o.status.to_string(),
        "init_train_mse": r.init_train_mse,
        "train_mse": r.train_mse,
        "test_mse": r.test_mse,
        "outer_iters": o.outer_iters(),
        "gn_iters": o.gn_iters,
        "L_evals": o.counts.lagrangian,
        "grad_evals": o.counts.gradient,
        "time_ms": r.time_ms,
        "f0": o.f0,
        "beta0": o.beta0,
        "final_feas_inf": last.map(|t| t.feas_inf),
        "final_grad_inf": last.map(|t| t.grad_inf),
        "final_beta": last.map(|t| t.beta),
        "dims": r.spec.dims(),
        "alm": cfg.alm,
    })
}

pub fn train_alm(args: &TrainAlmArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.epsilon {
        cfg.alm.eps = v;
    }
    if let Some(v) = args.eps_bar {
        cfg.alm.eps_bar = v;
    }
    if let Some(v) = args.eps0 {
        cfg.alm.eps0 = v;
    }
    if let Some(v) = args.beta0 {
        cfg.alm.beta0 = Some(v);
    }
    if let Some(v) = args.max_outer {
        cfg.alm.max_outer = v;
    }
    if args.no_timings {
        cfg.alm.timings = false;
    }
    apply_network(&mut cfg, &args.network);
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    let cfg = cfg.resolve()?;
    let (train, test) = load_data(&args.train, args.test.as_deref())?;

    let r = run_alm(&cfg, &train, test.as_ref())?;
    let out = &cfg.output_dir;
    create_out(out)?;
    write_trace(create(&out.join("trace.csv"))?, &r.outcome.trace)?;
    let (weights, _) = r.outcome.z.unpack(&r.spec, &train.inputs)?;
    write_weights(create(&out.join("weights.bin"))?, &weights)?;
    write_text(&out.join("summary.json"), &canonical_json(&alm_summary(&cfg, &r)))?;
    write_text(&out.join("config.json"), &cfg.snapshot())?;

    let o = &r.outcome;
    println!(
        "alm {}: {} outer / {} GN iterations, train MSE {:.6e} (initial {:.6e}), test MSE {:.6e}, {}",
        o.status,
        o.outer_iters(),
        o.gn_iters,
        r.train_mse,
        r.init_train_mse,
        r.test_mse,
        format_mss(r.time_ms as f64)
    );
    if o.status != AlmStatus::Converged {
        return Err(CliError::Solver(format!(
            "ALM stopped with status {}; trace written to {}",
            o.status,
            out.join("trace.csv").display()
        )));
    }
    Ok(())
}

/// Result of one first-order training run.
#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub outcome: almdp::baseline::FirstOrderOutcome,
    pub init_train_mse: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub time_ms: u64,
}

pub fn run_baseline(cfg: &RunConfig, train: &Dataset, test: Option<&Dataset>) -> Result<BaselineReport, CliError> {
    let spec = student_spec(cfg, train)?;
    let init = kaiming_init(&spec, cfg.seed);
    let started = Instant::now();
    let outcome = train_first_order(&spec, train, test, &cfg.baseline, &init)?;
    let time_ms = elapsed_ms(started, cfg.baseline.timings);
    Ok(BaselineReport {
        init_train_mse: mse_or_nan(&spec, &init, Some(train)),
        train_mse: mse_or_nan(&spec, &outcome.weights, Some(train)),
        test_mse: mse_or_nan(&spec, &outcome.weights, test),
        outcome,
        time_ms,
    })
}

pub fn train_baseline(args: &TrainBaselineArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.method {
        cfg.baseline.method = m;
    }
    if let Some(lr) = args.lr {
        cfg.baseline.learning_rate = Some(lr);
    }
    if let Some(e) = args.epochs {
        cfg.baseline.epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.baseline.batch_size = b;
    }
    if args.no_timings {
        cfg.baseline.timings = false;
    }
    apply_network(&mut cfg, &args.network);
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    let cfg = cfg.resolve()?;
    let (train, test) = load_data(&args.train, args.test.as_deref())?;
    cfg.baseline.validate(train.len())?;

    let r = run_baseline(&cfg, &train, test.as_ref())?;
    let out = &cfg.output_dir;
    create_out(out)?;
    write_epochs(create(&out.join("epochs.csv"))?, &r.outcome.trace)?;
    write_weights(create(&out.join("weights.bin"))?, &r.outcome.weights)?;
    let summary = json!({
        "status": r.outcome.status,
        "method": cfg.baseline.method.to_string(),
        "learning_rate": cfg.baseline.learning_rate(),
        "epochs": r.outcome.trace.len(),
        "init_train_mse": r.init_train_mse,
        "train_mse": r.train_mse,
        "test_mse": r.test_mse,
        "time_ms": r.time_ms,
        "baseline": cfg.baseline,
    });
    write_text(&out.join("summary.json"), &canonical_json(&summary))?;
    write_text(&out.join("config.json"), &cfg.snapshot())?;
    println!(
        "{} {:?}: {} epochs, train MSE {:.6e} (initial {:.6e}), test MSE {:.6e}, {}",
        cfg.baseline.method,
        r.outcome.status,
        r.outcome.trace.len(),
        r.train_mse,
        r.init_train_mse,
        r.test_mse,
        format_mss(r.time_ms as f64)
    );
    if r.outcome.status == FirstOrderStatus::Diverged {
        return Err(CliError::Solver(format!("{} diverged", cfg.baseline.method)));
    }
    Ok(())
}

pub const BENCHMARK_HEADER: [&str; 15] = [
    "d0",
    "delta0",
    "alm_train_mse",
    "alm_test_mse",
    "alm_L_evals",
    "alm_grad_evals",
    "alm_outer_iters",
    "gn_iters",
    "alm_time_ms",
    "adam_train_mse",
    "adam_test_mse",
    "adam_time_ms",
    "sgd_train_mse",
    "sgd_test_mse",
    "sgd_time_ms",
];

pub const RUNS_HEADER: [&str; 14] = [
    "d0",
    "delta0",
    "rep",
    "seed",
    "method",
    "status",
    "train_mse",
    "test_mse",
    "L_evals",
    "grad_evals",
    "outer_iters",
    "gn_iters",
    "time_ms",
    "error",
];

/// One solver run inside a benchmark cell.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: &'static str,
    pub status: String,
    pub train_mse: f64,
    pub test_mse: f64,
    pub l_evals: f64,
    pub grad_evals: f64,
    pub outer_iters: f64,
    pub gn_iters: f64,
    pub time_ms: f64,
    pub error: String,
}

impl RunRecord {
    fn failed(method: &'static str, e: &CliError) -> Self {
        Self {
            method,
            status: "error".into(),
            train_mse: f64::NAN,
            test_mse: f64::NAN,
            l_evals: f64::NAN,
            grad_evals: f64::NAN,
            outer_iters: f64::NAN,
            gn_iters: f64::NAN,
            time_ms: f64::NAN,
            error: e.to_string(),
        }
    }
}

struct Job {
    d0: usize,
    noise: f64,
    rep: usize,
    seed: u64,
}

fn trace_name(job: &Job, method: &str) -> String {
    format!("d0_{}_delta0_{}_rep_{}_{method}.csv", job.d0, job.noise, job.rep)
}

/// All three solvers on one repetition: same data, same initial weights.
fn run_job(base: &RunConfig, job: &Job, traces: &Path) -> Result<Vec<RunRecord>, CliError> {
    let mut cfg = base.clone();
    cfg.seed = job.seed;
    cfg.data = TeacherConfig {
        input_dim: job.d0,
        noise: job.noise,
        samples: base.benchmark.samples,
        seed: job.seed,
        ..base.data.clone()
    };
    cfg.baseline.seed = job.seed;
    let ts = gen_teacher_student(&cfg.data)?;
    let mut out = Vec::with_capacity(3);

    let alm = run_alm(&cfg, &ts.train, Some(&ts.test)).and_then(|r| {
        write_trace(create(&traces.join(trace_name(job, "alm")))?, &r.outcome.trace)?;
        Ok(r)
    });
    out.push(match alm {
        Ok(r) => RunRecord {
            method: "alm",
            status: r.outcome.status.to_string(),
            train_mse: r.train_mse,
            test_mse: r.test_mse,
            l_evals: r.outcome.counts.lagrangian as f64,
            grad_evals: r.outcome.counts.gradient as f64,
            outer_iters: r.outcome.outer_iters() as f64,
            gn_iters: r.outcome.gn_iters as f64,
            time_ms: r.time_ms as f64,
            error: String::new(),
        },
        Err(e) => RunRecord::failed("alm", &e),
    });

    for (method, name) in [(Method::Adam, "adam"), (Method::Sgd, "sgd")] {
        let mut c = cfg.clone();
        c.baseline = FirstOrderConfig { method, learning_rate: None, ..cfg.baseline.clone() };
        let run = run_baseline(&c, &ts.train, Some(&ts.test)).and_then(|r| {
            write_epochs(create(&traces.join(trace_name(job, name)))?, &r.outcome.trace)?;
            Ok(r)
        });
        out.push(match run {
            Ok(r) => RunRecord {
                method: name,
                status: match r.outcome.status {
                    FirstOrderStatus::Completed => "completed".into(),
                    FirstOrderStatus::Diverged => "diverged".into(),
                },
                train_mse: r.train_mse,
                test_mse: r.test_mse,
                l_evals: f64::NAN,
                grad_evals: f64::NAN,
                outer_iters: f64::NAN,
                gn_iters: f64::NAN,
                time_ms: r.time_ms as f64,
                error: String::new(),
            },
            Err(e) => RunRecord::failed(name, &e),
        });
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// One row of the benchmark table: per-method means over repetitions.
#[derive(Debug, Clone)]
pub struct CellRow {
    pub d0: usize,
    pub noise: f64,
    pub values: [f64; 13],
}

fn cell_row(d0: usize, noise: f64, reps: &[Vec<RunRecord>]) -> CellRow {
    let failed = reps.iter().any(|r| r.iter().any(|x| !x.error.is_empty()));
    let by = |i: usize, f: fn(&RunRecord) -> f64| {
        if failed {
            f64::NAN
        } else {
            mean(reps.iter().map(|r| f(&r[i])))
        }
    };
    let ms = |i: usize| by(i, |r| r.time_ms).round();
    CellRow {
        d0,
        noise,
        values: [
            by(0, |r| r.train_mse),
            by(0, |r| r.test_mse),
            by(0, |r| r.l_evals),
            by(0, |r| r.grad_evals),
            by(0, |r| r.outer_iters),
            by(0, |r| r.gn_iters),
            ms(0),
            by(1, |r| r.train_mse),
            by(1, |r| r.test_mse),
            ms(1),
            by(2, |r| r.train_mse),
            by(2, |r| r.test_mse),
            ms(2),
        ],
    }
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<Vec<CellRow>, CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let b = &mut cfg.benchmark;
    if let Some(d) = &args.d0 {
        b.input_dims = d.clone();
    }
    if let Some(n) = &args.noise {
        b.noise_levels = n.clone();
    }
    if let Some(m) = args.m {
        b.samples = m;
    }
    if let Some(r) = args.reps {
        b.repetitions = r;
    }
    if let Some(w) = args.workers {
        b.workers = w;
    }
    if let Some(e) = args.epochs {
        cfg.baseline.epochs = e;
    }
    if args.no_timings {
        cfg.alm.timings = false;
        cfg.baseline.timings = false;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    let cfg = cfg.resolve()?;
    let bc = &cfg.benchmark;
    if bc.noise_levels.iter().any(|n| !(*n >= 0.0)) {
        return Err(CliError::Config("noise levels must be >= 0".into()));
    }
    if cfg.baseline.batch_size > bc.samples {
        return Err(CliError::Config(format!(
            "batch size {} exceeds the {} samples per set",
            cfg.baseline.batch_size, bc.samples
        )));
    }

    let out = cfg.output_dir.clone();
    let traces = out.join("traces");
    create_out(&traces)?;
    let mut jobs = Vec::new();
    for &d0 in &bc.input_dims {
        for &noise in &bc.noise_levels {
            for rep in 0..bc.repetitions {
                jobs.push(Job { d0, noise, rep, seed: cfg.seed + rep as u64 });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(bc.workers)
        .build()
        .map_err(|e| CliError::Solver(format!("cannot start worker pool: {e}")))?;
    let started = Instant::now();
    let results: Vec<Vec<RunRecord>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|job| run_job(&cfg, job, &traces).unwrap_or_else(|e| {
                ["alm", "adam", "sgd"].iter().map(|m| RunRecord::failed(m, &e)).collect()
            }))
            .collect()
    });

    let mut runs = String::new();
    runs.push_str(&RUNS_HEADER.join(","));
    runs.push('\n');
    for (job, recs) in jobs.iter().zip(&results) {
        for r in recs {
            let fields = [
                job.d0.to_string(),
                job.noise.to_string(),
                job.rep.to_string(),
                job.seed.to_string(),
                r.method.to_string(),
                r.status.clone(),
                r.train_mse.to_string(),
                r.test_mse.to_string(),
                r.l_evals.to_string(),
                r.grad_evals.to_string(),
                r.outer_iters.to_string(),
                r.gn_iters.to_string(),
                r.time_ms.to_string(),
                csv_field(&r.error),
            ];
            runs.push_str(&fields.join(","));
            runs.push('\n');
        }
    }

    let mut rows = Vec::new();
    let reps = bc.repetitions;
    for (cell, chunk) in results.chunks(reps).enumerate() {
        let job = &jobs[cell * reps];
        rows.push(cell_row(job.d0, job.noise, chunk));
    }
    let mut table = String::new();
    table.push_str(&BENCHMARK_HEADER.join(","));
    table.push('\n');
    for row in &rows {
        let mut fields = vec![row.d0.to_string(), row.noise.to_string()];
        fields.extend(row.values.iter().map(|v| v.to_string()));
        table.push_str(&fields.join(","));
        table.push('\n');
    }
    write_text(&out.join("benchmark.csv"), &table)?;
    write_text(&out.join("runs.csv"), &runs)?;
    write_text(&out.join("config.json"), &cfg.snapshot())?;

    println!(
        "{:>4} {:>7} | {:>11} {:>11} {:>6} {:>6} {:>5} {:>5} {:>6} | {:>11} {:>6} | {:>11} {:>6}",
        "d0", "delta0", "alm train", "alm test", "L", "grad", "outer", "GN", "time", "adam train", "time", "sgd train", "time"
    );
    for r in &rows {
        let v = &r.values;
        println!(
            "{:>4} {:>7} | {:>11.4e} {:>11.4e} {:>6.0} {:>6.0} {:>5.1} {:>5.0} {:>6} | {:>11.4e} {:>6} | {:>11.4e} {:>6}",
            r.d0,
            r.noise,
            v[0],
            v[1],
            v[2],
            v[3],
            v[4],
            v[5],
            format_mss(v[6]),
            v[7],
            format_mss(v[9]),
            v[10],
            format_mss(v[12])
        );
    }
    println!(
        "{} cells x {} reps in {}; results in {}",
        rows.len(),
        reps,
        format_mss(started.elapsed().as_secs_f64() * 1e3),
        out.display()
    );
    Ok(rows)
}

/// Quotes a free-text CSV field when needed.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace(['\n', '\r'], " "))
    } else {
        s.to_string()
    }
}

/// Every property suite at its tolerance.
pub fn selfcheck_reports(args: &SelfcheckArgs) -> Vec<PropertyReport> {
    let fault = match args.inject_fault {
        Some(FaultArg::SSign) => Fault::SSign,
        None => Fault::None,
    };
    let n = args.instances.max(1);
    let small = (n / 5).max(1);
    let grads = (n / 10).max(1);
    let s = args.seed;
    vec![
        checks::fdp_oracle_equivalence(s, n, fault),
        checks::woodbury_identity(s, small),
        checks::s_identity(s, small, fault),
        checks::quadratic_completion(s, small),
        checks::m_positive_definite(s, small),
        checks::lagrangian_gradient_check(s, grads),
        checks::backprop_gradient_check(s, grads),
    ]
}

pub fn selfcheck(args: &SelfcheckArgs) -> Result<(), CliError> {
    let reports = selfcheck_reports(args);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(format!("failed properties: {}", failed.join(", "))))
    }
}
