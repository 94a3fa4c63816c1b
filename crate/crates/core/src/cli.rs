//! Command implementations behind the `archsearch` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::config::{self, ConfigError, RunManifest};
use crate::encoding::{Genotype, SearchSpace};
use crate::evaluator::{brute_force_front, load_records, speed, write_records, Record};
use crate::latency::LatencyTable;
use crate::metrics::{kendall_tau, pearson_r, spearman_rho};
use crate::moea::ObjectiveVector;
use crate::prescreen::Strategy;
use crate::search::{run_search, select_final, trace_csv, Archive, Checkpointer, ARCHIVE_FILE, TRACE_FILE};
use crate::seed;
use crate::surrogate::ranknet::features;
use crate::surrogate::teachers::RbfInterpolant;
use crate::surrogate::tree::{BoostParams, GradientBoosting, RegressionTree, TreeParams};
use crate::surrogate::{train_ranknet, FeatureEncoding, LossKind, TrainConfig};

/// Exit status of a failed command.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit code 2).
    Config(String),
    /// Failure while running (exit code 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, body).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "archsearch", version, about = "Surrogate-assisted accuracy/latency architecture search")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a search and write archive, trace, front and manifest.
    Search(SearchArgs),
    /// Compare accuracy predictors by rank correlation on tabular data.
    SurrogateBench(BenchArgs),
    /// Build, query or validate latency look-up tables.
    Lut {
        #[command(subcommand)]
        action: LutCommand,
    },
    /// Enumerate a small space and write its exact Pareto front.
    Oracle(OracleArgs),
    /// Report the front and hypervolume of an archive file.
    Pareto(ParetoArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Preset name (`default`, `compact`), TOML file, or run manifest JSON.
    #[arg(long, default_value = "default")]
    pub config: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["synthetic", "tabular", "external"])]
    pub evaluator: Option<String>,
    #[arg(long)]
    pub prescreen: Option<Strategy>,
    /// Output directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Dotted-key override, e.g. `train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Records CSV (`genotype,accuracy,latency_ms`).
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated: ranknet, ranknet-real, mse, int-mse, rbf, tree, gb.
    #[arg(long, value_delimiter = ',', default_value = "ranknet,ranknet-real,mse,int-mse,rbf,tree,gb")]
    pub methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000")]
    pub train_sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub test_size: usize,
    #[arg(long, default_value_t = 31)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training epochs for the network predictors.
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value = "default")]
    pub space: String,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum LutCommand {
    /// Write the synthetic table of a space.
    Build {
        #[arg(long, default_value = "default")]
        space: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the predicted latency of one genotype (29 space-separated genes).
    Query {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        genotype: String,
        #[arg(long, default_value = "default")]
        space: String,
    },
    /// Kendall τ between table predictions and measured latencies.
    Validate {
        #[arg(long)]
        table: PathBuf,
        /// CSV `genotype,latency_ms`.
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, default_value = "default")]
        space: String,
    },
    /// Simulate measurements: table latency times (1 + σ·N(0,1)).
    Measure {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "default")]
        space: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Space preset or file; must hold at most 200 000 genotypes.
    #[arg(long, default_value = "compact")]
    pub space: String,
    #[arg(long)]
    pub lut: Option<PathBuf>,
    /// Front records CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every enumerated record, usable as a tabular evaluator.
    #[arg(long)]
    pub all: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    #[arg(long)]
    pub archive: PathBuf,
    /// Members to pick as final trade-offs.
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    #[arg(long)]
    pub accuracy_floor: Option<f64>,
    /// Front report CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Search(a) => cmd_search(a),
        Command::SurrogateBench(a) => cmd_surrogate_bench(a),
        Command::Lut { action } => cmd_lut(action),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Pareto(a) => cmd_pareto(a),
    }
}

/// `genotype,accuracy,latency_ms,speed,selected` for every front member.
pub fn front_report(front: &[Record], selected: &[Record]) -> String {
    let mut out = String::from("genotype,accuracy,latency_ms,speed,selected\n");
    for r in front {
        let chosen = selected.iter().any(|s| s.genotype == r.genotype);
        writeln!(out, "{},{},{},{},{}", r.genotype, r.accuracy, r.latency_ms, speed(r.latency_ms), u8::from(chosen)).unwrap();
    }
    out
}

pub fn cmd_search(a: SearchArgs) -> Result<(), CliError> {
    let started = config::unix_now();
    let mut overrides = Vec::new();
    if let Some(s) = a.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(e) = &a.evaluator {
        overrides.push(format!("evaluator.kind=\"{e}\""));
    }
    if let Some(p) = a.prescreen {
        overrides.push(format!("prescreen=\"{p}\""));
    }
    overrides.extend(a.overrides.iter().cloned());
    let cfg = config::load(&a.config, &overrides)?;
    let space = config::resolve_space(&cfg.space)?;
    let table = config::resolve_table(&cfg, &space)?;
    let mut evaluator = cfg.evaluator.build(&space, &table).map_err(|e| CliError::Config(e.to_string()))?;

    let outcome = run_search(&cfg, &space, &table, evaluator.as_mut(), &mut Checkpointer(a.out.clone())).map_err(runtime)?;
    let front_path = a.out.join("front.csv");
    write_file(&front_path, &front_report(&outcome.front, &outcome.selected))?;
    write_file(&a.out.join(ARCHIVE_FILE), &outcome.archive.to_csv())?;
    write_file(&a.out.join(TRACE_FILE), &trace_csv(&outcome.trace))?;
    let manifest_path = a.out.join("manifest.json");
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: std::env::args().collect(),
        seed: cfg.seed,
        evaluator: cfg.evaluator.name().into(),
        started_unix: started,
        finished_unix: config::unix_now(),
        outputs: vec![a.out.join(ARCHIVE_FILE), a.out.join(TRACE_FILE), front_path, manifest_path.clone()],
        config: cfg,
    };
    write_file(&manifest_path, &serde_json::to_string_pretty(&manifest).map_err(runtime)?)?;
    let last = outcome.trace.last().expect("trace has the initial row");
    println!(
        "evaluations {} archive {} front {} hypervolume {}",
        outcome.evaluations,
        outcome.archive.len(),
        outcome.front.len(),
        last.hypervolume
    );
    Ok(())
}

/// A predictor under comparison, fitted on (genotypes, labels).
fn fit_predict(
    method: &str,
    space: &SearchSpace,
    train: &[(Genotype, f64)],
    test: &[Genotype],
    epochs: usize,
    seed: u64,
) -> Result<Vec<f64>, CliError> {
    let net = |encoding, loss, synthetic| -> Result<Vec<f64>, CliError> {
        let cfg = TrainConfig { epochs, encoding, loss, synthetic, ..TrainConfig::default() };
        let (m, _) = train_ranknet(train, space, &cfg, seed).map_err(runtime)?;
        m.predict(space, test).map_err(runtime)
    };
    let gs: Vec<Genotype> = train.iter().map(|(g, _)| *g).collect();
    let y: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let x: Array2<f64> = features(space, &gs, FeatureEncoding::OneHot);
    let xt = features(space, test, FeatureEncoding::OneHot);
    match method {
        "ranknet" => net(FeatureEncoding::OneHot, LossKind::Ranking, true),
        "ranknet-real" => net(FeatureEncoding::OneHot, LossKind::Ranking, false),
        "mse" => net(FeatureEncoding::OneHot, LossKind::Mse, false),
        "int-mse" => net(FeatureEncoding::Integer, LossKind::Mse, false),
        "rbf" => Ok(RbfInterpolant::fit(x.view(), &y).predict(xt.view())),
        "tree" => Ok(RegressionTree::fit(x.view(), &y, TreeParams { max_depth: 12, min_leaf: 2 }).predict(xt.view())),
        "gb" => Ok(GradientBoosting::fit(x.view(), &y, BoostParams::default()).predict(xt.view())),
        other => Err(CliError::Config(format!("unknown method `{other}`"))),
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

pub fn cmd_surrogate_bench(a: BenchArgs) -> Result<(), CliError> {
    let space = config::resolve_space(&a.space)?;
    let records = load_records(&a.data).map_err(|e| CliError::Config(e.to_string()))?;
    let largest = a.train_sizes.iter().copied().max().unwrap_or(0);
    if records.len() < largest + a.test_size {
        return Err(CliError::Config(format!(
            "{} has {} rows, need at least {} (train {largest} + test {})",
            a.data.display(),
            records.len(),
            largest + a.test_size,
            a.test_size
        )));
    }
    if a.repeats == 0 || a.test_size < 2 {
        return Err(CliError::Config("repeats must be positive and test_size at least 2".into()));
    }
    let mut out = String::from(
        "method,train_size,pearson_mean,pearson_std,spearman_mean,spearman_std,kendall_mean,kendall_std,time_mean_s\n",
    );
    for method in &a.methods {
        for &n in &a.train_sizes {
            let (mut r, mut rho, mut tau, mut secs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for rep in 0..a.repeats {
                let mut order: Vec<usize> = (0..records.len()).collect();
                order.shuffle(&mut seed::rng(a.seed, "bench-split", rep as u64));
                let train: Vec<(Genotype, f64)> =
                    order[..n].iter().map(|&i| (records[i].genotype, records[i].accuracy)).collect();
                let test: Vec<Genotype> = order[n..n + a.test_size].iter().map(|&i| records[i].genotype).collect();
                let truth: Vec<f64> = order[n..n + a.test_size].iter().map(|&i| records[i].accuracy).collect();
                let t0 = Instant::now();
                let pred = fit_predict(method, &space, &train, &test, a.epochs, seed::derive(a.seed, "bench-fit", rep as u64))?;
                secs.push(t0.elapsed().as_secs_f64());
                // a constant prediction has no defined correlation; score it as 0
                r.push(pearson_r(&pred, &truth).unwrap_or(0.0));
                rho.push(spearman_rho(&pred, &truth).unwrap_or(0.0));
                tau.push(kendall_tau(&pred, &truth).unwrap_or(0.0));
            }
            let ((rm, rs), (pm, ps), (tm, ts)) = (mean_std(&r), mean_std(&rho), mean_std(&tau));
            writeln!(out, "{method},{n},{rm},{rs},{pm},{ps},{tm},{ts},{}", mean_std(&secs).0).unwrap();
            log::info!("{method} n={n}: tau {tm:.4}");
        }
    }
    match &a.out {
        Some(p) => write_file(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn load_table(path: &Path, space: &SearchSpace) -> Result<LatencyTable, CliError> {
    let loaded = LatencyTable::load(path, space).map_err(|e| CliError::Config(e.to_string()))?;
    if loaded.ignored > 0 {
        log::warn!("{}: {} entries outside the space ignored", path.display(), loaded.ignored);
    }
    loaded.table.check_complete(space).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(loaded.table)
}

/// Parses `genotype,latency_ms` rows with an optional header.
pub fn parse_measurements(text: &str) -> Result<Vec<(Genotype, f64)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("genotype")) {
            continue;
        }
        let (g, l) = line.split_once(',').ok_or_else(|| format!("line {}: expected genotype,latency_ms", i + 1))?;
        let g: Genotype = g.trim().parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        let l: f64 = l.trim().parse().map_err(|_| format!("line {}: bad latency", i + 1))?;
        out.push((g, l));
    }
    Ok(out)
}

pub fn cmd_lut(action: LutCommand) -> Result<(), CliError> {
    match action {
        LutCommand::Build { space, out } => {
            let space = config::resolve_space(&space)?;
            LatencyTable::synthetic(&space).save(&out).map_err(runtime)?;
            println!("wrote {}", out.display());
        }
        LutCommand::Query { table, genotype, space } => {
            let space = config::resolve_space(&space)?;
            let table = load_table(&table, &space)?;
            let g: Genotype = genotype.parse().map_err(|e| CliError::Config(format!("genotype: {e}")))?;
            println!("{}", table.predict(&space, &g).map_err(|e| CliError::Config(e.to_string()))?);
        }
        LutCommand::Validate { table, measurements, space } => {
            let space = config::resolve_space(&space)?;
            let table = load_table(&table, &space)?;
            let text = std::fs::read_to_string(&measurements)
                .map_err(|e| CliError::Config(format!("{}: {e}", measurements.display())))?;
            let rows = parse_measurements(&text).map_err(|e| CliError::Config(format!("{}: {e}", measurements.display())))?;
            let mut pred = Vec::with_capacity(rows.len());
            for (g, _) in &rows {
                pred.push(table.predict(&space, g).map_err(|e| CliError::Config(e.to_string()))?);
            }
            let meas: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let tau = kendall_tau(&pred, &meas).map_err(runtime)?;
            println!("samples {} kendall_tau {tau}", rows.len());
        }
        LutCommand::Measure { table, count, noise, seed: s, space, out } => {
            let space = config::resolve_space(&space)?;
            let table = load_table(&table, &space)?;
            let mut rng = seed::rng(s, "lut-measure", 0);
            let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| CliError::Config(e.to_string()))?;
            let mut body = String::from("genotype,latency_ms\n");
            for _ in 0..count {
                let g = Genotype::random(&space, &mut rng);
                let base = table.predict(&space, &g).map_err(runtime)?;
                let l = (base * (1.0 + normal.sample(&mut rng))).max(1e-6 * base);
                writeln!(body, "{g},{l}").unwrap();
            }
            write_file(&out, &body)?;
        }
    }
    Ok(())
}

pub fn cmd_oracle(a: OracleArgs) -> Result<(), CliError> {
    let space = config::resolve_space(&a.space)?;
    let table = match &a.lut {
        Some(p) => load_table(p, &space)?,
        None => LatencyTable::synthetic(&space),
    };
    let t0 = Instant::now();
    let o = brute_force_front(&space, &table).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&a.out, &write_records(&o.front))?;
    if let Some(all) = &a.all {
        let eval = crate::evaluator::SyntheticEvaluator::new(space.clone(), table, 0.0, 0);
        let records: Vec<Record> = crate::encoding::enumerate_canonical(&space)
            .map(|g| {
                let r = eval.evaluate_one(&g).map_err(runtime)?;
                Ok(Record { genotype: g, accuracy: r.accuracy, latency_ms: r.latency_ms, generation: None })
            })
            .collect::<Result<_, CliError>>()?;
        write_file(all, &write_records(&records))?;
    }
    println!(
        "evaluated {} front {} hypervolume {} seconds {:.2}",
        o.evaluated,
        o.front.len(),
        o.hypervolume,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn cmd_pareto(a: ParetoArgs) -> Result<(), CliError> {
    let archive = Archive::load(&a.archive).map_err(|e| CliError::Config(e.to_string()))?;
    if archive.is_empty() {
        return Err(CliError::Config(format!("{} holds no records", a.archive.display())));
    }
    let front: Vec<Record> = archive.front().into_iter().cloned().collect();
    let eligible: Vec<Record> =
        front.iter().filter(|r| a.accuracy_floor.is_none_or(|f| r.accuracy >= f)).cloned().collect();
    let pts: Vec<ObjectiveVector> = eligible.iter().map(|r| ObjectiveVector([r.accuracy, speed(r.latency_ms)])).collect();
    let selected: Vec<Record> = select_final(&pts, a.count).into_iter().map(|i| eligible[i].clone()).collect();
    let report = front_report(&front, &selected);
    match &a.out {
        Some(p) => write_file(p, &report)?,
        None => print!("{report}"),
    }
    println!("records {} front {} hypervolume {}", archive.len(), front.len(), archive.hypervolume());
    Ok(())
}
