//! High-fidelity evaluators and the exhaustive Pareto oracle.
//!
//! The synthetic evaluator is a closed-form stand-in for training and
//! validating a network: accuracy comes from a smooth function of the
//! architecture, latency from the synthetic look-up table. Real pipelines
//! attach through the external-process protocol.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{
    enumerate_canonical, Genotype, GenotypeError, SearchSpace, NUM_STAGES, SCALE_GENE, STAGE_OFFSETS,
    STEM_DEPTH_GENE, STEM_WIDTH_GENE,
};
use crate::latency::{LatencyTable, TableError};
use crate::metrics::hypervolume_origin;
use crate::moea::{nondominated_indices, ObjectiveVector};
use crate::seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("genotype not in tabular records: {0}")]
    TabularMiss(Genotype),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("records line {line}: {msg}")]
    Records { line: usize, msg: String },
    #[error("failed to start `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("external evaluator timed out after {0:?}")]
    Timeout(Duration),
    #[error("external evaluator protocol error: {0}")]
    Protocol(String),
    #[error("space has {count} canonical genotypes, above the enumeration limit {limit}")]
    TooLarge { count: u128, limit: u128 },
}

/// Converts a latency into the maximized speed objective (images per second).
pub fn speed(latency_ms: f64) -> f64 {
    1000.0 / latency_ms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// In [0, 1].
    pub accuracy: f64,
    pub latency_ms: f64,
    pub evaluator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl EvaluationResult {
    pub fn objectives(&self) -> ObjectiveVector {
        ObjectiveVector([self.accuracy, speed(self.latency_ms)])
    }
}

pub trait Evaluator {
    /// Short tag recorded in every result.
    fn tag(&self) -> &str;

    /// One result per genotype, in input order.
    fn evaluate_batch(&mut self, genotypes: &[Genotype]) -> Result<Vec<EvaluationResult>, EvalError>;

    /// Latency only, for evaluators where that is cheaper than a full run.
    fn latency_only(&mut self, genotypes: &[Genotype]) -> Result<Vec<f64>, EvalError> {
        Ok(self.evaluate_batch(genotypes)?.into_iter().map(|r| r.latency_ms).collect())
    }
}

/// Closed-form pseudo-accuracy in [0, 1].
///
/// With stem quality `(0.8 + 0.1·d₀)·m₀` and stage quality
/// `(1 − 2^−d)·m·sqrt(mean(e)/1.4)`, accuracy is `(1 + tanh z)/2` where
/// `z = −2 + 1.2s + 0.3·stem + 0.5q₁ + 0.6q₂ + 0.9q₃ + 0.4q₄ − 0.35·s·(1 − q₃)`.
pub fn synthetic_accuracy(space: &SearchSpace, g: &Genotype) -> Result<f64, GenotypeError> {
    g.validate(space)?;
    let s = space.scales[g.0[SCALE_GENE] as usize];
    let d0 = space.stem_depths[g.0[STEM_DEPTH_GENE] as usize] as f64;
    let m0 = space.stem_widths[g.0[STEM_WIDTH_GENE] as usize];
    let stem_q = (0.8 + 0.1 * d0) * m0;
    let mut q = [0.0; NUM_STAGES];
    for (i, st) in space.stages.iter().enumerate() {
        let off = STAGE_OFFSETS[i];
        let depth = g.stage_depth(space, i);
        let m = st.widths[g.0[off + 1] as usize];
        let mean_e = g.0[off + 2..off + 2 + depth]
            .iter()
            .map(|&v| st.expansions[v as usize - 1])
            .sum::<f64>()
            / depth as f64;
        q[i] = (1.0 - (-(depth as f64)).exp2()) * m * (mean_e / 1.4).sqrt();
    }
    let z = -2.0 + 1.2 * s + 0.3 * stem_q + 0.5 * q[0] + 0.6 * q[1] + 0.9 * q[2] + 0.4 * q[3]
        - 0.35 * s * (1.0 - q[2]);
    Ok(0.5 * (1.0 + z.tanh()))
}

/// Synthetic benchmark: closed-form accuracy plus optional Gaussian noise,
/// latency from a look-up table. Noise is keyed by (seed, genotype), so
/// evaluation stays a pure function for every σ.
#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    space: SearchSpace,
    table: LatencyTable,
    noise: f64,
    seed: u64,
}

impl SyntheticEvaluator {
    pub fn new(space: SearchSpace, table: LatencyTable, noise: f64, seed: u64) -> Self {
        SyntheticEvaluator { space, table, noise: noise.max(0.0), seed }
    }

    /// Noise-free evaluator over the synthetic table of `space`.
    pub fn noiseless(space: &SearchSpace) -> Self {
        Self::new(space.clone(), LatencyTable::synthetic(space), 0.0, 0)
    }

    pub fn evaluate_one(&self, g: &Genotype) -> Result<EvaluationResult, EvalError> {
        let mut accuracy = synthetic_accuracy(&self.space, g)?;
        if self.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_bytes(self.seed, "eval-noise", &g.0));
            let n = Normal::new(0.0, self.noise).expect("finite sigma");
            accuracy = (accuracy + n.sample(&mut rng)).clamp(0.0, 1.0);
        }
        Ok(EvaluationResult {
            accuracy,
            latency_ms: self.table.predict(&self.space, g)?,
            evaluator: self.tag().to_string(),
            metadata: None,
        })
    }
}

impl Evaluator for SyntheticEvaluator {
    fn tag(&self) -> &str {
        "synthetic"
    }

    fn evaluate_batch(&mut self, genotypes: &[Genotype]) -> Result<Vec<EvaluationResult>, EvalError> {
        genotypes.iter().map(|g| self.evaluate_one(g)).collect()
    }

    fn latency_only(&mut self, genotypes: &[Genotype]) -> Result<Vec<f64>, EvalError> {
        Ok(genotypes.iter().map(|g| self.table.predict(&self.space, g)).collect::<Result<_, _>>()?)
    }
}

/// One evaluated genotype as stored in archive and tabular files.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub genotype: Genotype,
    pub accuracy: f64,
    pub latency_ms: f64,
    pub generation: Option<usize>,
}

pub const RECORDS_HEADER: &str = "genotype,accuracy,latency_ms,generation";

/// CSV text with a header. Floats use the shortest exact representation, so
/// a write/read cycle is lossless.
pub fn write_records(records: &[Record]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        write!(out, "{},{},{}", r.genotype, r.accuracy, r.latency_ms).unwrap();
        if let Some(g) = r.generation {
            write!(out, ",{g}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses `genotype,accuracy,latency_ms[,generation]` rows. A first line
/// starting with `genotype` is a header; blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<Record>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("genotype")) {
            continue;
        }
        let bad = |msg: String| EvalError::Records { line: i + 1, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(bad(format!("expected 3 or 4 fields, got {}", fields.len())));
        }
        let genotype: Genotype = fields[0].parse().map_err(|e: GenotypeError| bad(e.to_string()))?;
        let num = |s: &str, what: &str| -> Result<f64, EvalError> {
            let v: f64 = s.parse().map_err(|_| bad(format!("bad {what} `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("non-finite {what}")))
            }
        };
        let accuracy = num(fields[1], "accuracy")?;
        let latency_ms = num(fields[2], "latency")?;
        if latency_ms <= 0.0 {
            return Err(bad("latency must be positive".into()));
        }
        let generation = match fields.get(3) {
            Some(s) => Some(s.parse().map_err(|_| bad(format!("bad generation `{s}`")))?),
            None => None,
        };
        out.push(Record { genotype, accuracy, latency_ms, generation });
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<Record>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    parse_records(&text)
}

/// Replays stored results; unknown genotypes are an error.
#[derive(Debug, Clone)]
pub struct TabularEvaluator {
    space: SearchSpace,
    records: HashMap<Genotype, (f64, f64)>,
}

impl TabularEvaluator {
    pub fn from_records(space: SearchSpace, records: &[Record]) -> Result<Self, EvalError> {
        let mut map = HashMap::with_capacity(records.len());
        for r in records {
            map.insert(r.genotype.canonicalize(&space)?, (r.accuracy, r.latency_ms));
        }
        Ok(TabularEvaluator { space, records: map })
    }

    pub fn load(space: SearchSpace, path: &Path) -> Result<Self, EvalError> {
        Self::from_records(space, &load_records(path)?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Evaluator for TabularEvaluator {
    fn tag(&self) -> &str {
        "tabular"
    }

    fn evaluate_batch(&mut self, genotypes: &[Genotype]) -> Result<Vec<EvaluationResult>, EvalError> {
        genotypes
            .iter()
            .map(|g| {
                g.validate(&self.space)?;
                let (accuracy, latency_ms) = *self.records.get(g).ok_or(EvalError::TabularMiss(*g))?;
                Ok(EvaluationResult { accuracy, latency_ms, evaluator: "tabular".into(), metadata: None })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    genotype: &'a [u8],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    accuracy: f64,
    latency_ms: f64,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

/// Runs one subprocess per batch. Requests go to its stdin as JSON lines,
/// stdin is closed, and responses are read from stdout in any order until
/// every id is answered or the batch deadline passes.
#[derive(Debug, Clone)]
pub struct ExternalEvaluator {
    command: Vec<String>,
    timeout: Duration,
    next_id: u64,
}

impl ExternalEvaluator {
    pub fn new(command: Vec<String>, timeout: Duration) -> Result<Self, EvalError> {
        if command.is_empty() {
            return Err(EvalError::Protocol("empty command".into()));
        }
        Ok(ExternalEvaluator { command, timeout, next_id: 0 })
    }

    fn run(&mut self, genotypes: &[Genotype]) -> Result<Vec<EvaluationResult>, EvalError> {
        if genotypes.is_empty() {
            return Ok(Vec::new());
        }
        let command_line = self.command.join(" ");
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| EvalError::Spawn { command: command_line.clone(), source })?;

        let first_id = self.next_id;
        self.next_id += genotypes.len() as u64;
        let mut payload = String::new();
        for (k, g) in genotypes.iter().enumerate() {
            let req = Request { id: first_id + k as u64, genotype: &g.0 };
            payload.push_str(&serde_json::to_string(&req).expect("serializable"));
            payload.push('\n');
        }
        let mut stdin = child.stdin.take().expect("piped");
        // a separate writer keeps a chatty child from deadlocking on full pipes
        let writer = std::thread::spawn(move || {
            let r = stdin.write_all(payload.as_bytes()).and_then(|_| stdin.flush());
            drop(stdin);
            r
        });
        let stdout = child.stdout.take().expect("piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let deadline = Instant::now() + self.timeout;
        let mut results: Vec<Option<EvaluationResult>> = vec![None; genotypes.len()];
        let mut pending = genotypes.len();
        let outcome = loop {
            if pending == 0 {
                break Ok(());
            }
            let left = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(left) {
                Ok(Ok(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    match self.accept(&line, first_id, &mut results) {
                        Ok(()) => pending -= 1,
                        Err(e) => break Err(e),
                    }
                }
                Ok(Err(e)) => break Err(EvalError::Io { path: command_line.clone(), source: e }),
                Err(mpsc::RecvTimeoutError::Timeout) => break Err(EvalError::Timeout(self.timeout)),
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    break Err(EvalError::Protocol(format!("stream closed with {pending} requests unanswered")))
                }
            }
        };
        if let Err(e) = outcome {
            let _ = child.kill();
            let _ = child.wait();
            return Err(e);
        }
        if let Ok(Err(e)) = writer.join() {
            let _ = child.kill();
            let _ = child.wait();
            return Err(EvalError::Io { path: command_line, source: e });
        }
        let status = child.wait().map_err(|source| EvalError::Io { path: command_line.clone(), source })?;
        if !status.success() {
            return Err(EvalError::Protocol(format!("`{command_line}` exited with {status}")));
        }
        Ok(results.into_iter().map(|r| r.expect("all answered")).collect())
    }

    fn accept(&self, line: &str, first_id: u64, results: &mut [Option<EvaluationResult>]) -> Result<(), EvalError> {
        let resp: Response =
            serde_json::from_str(line).map_err(|e| EvalError::Protocol(format!("bad response `{line}`: {e}")))?;
        let slot = resp
            .id
            .checked_sub(first_id)
            .and_then(|k| results.get_mut(k as usize))
            .ok_or_else(|| EvalError::Protocol(format!("unknown id {}", resp.id)))?;
        if slot.is_some() {
            return Err(EvalError::Protocol(format!("duplicate id {}", resp.id)));
        }
        if !resp.accuracy.is_finite() || !resp.latency_ms.is_finite() || resp.latency_ms <= 0.0 {
            return Err(EvalError::Protocol(format!("invalid values for id {}", resp.id)));
        }
        *slot = Some(EvaluationResult {
            accuracy: resp.accuracy.clamp(0.0, 1.0),
            latency_ms: resp.latency_ms,
            evaluator: "external".into(),
            metadata: (!resp.extra.is_empty()).then_some(serde_json::Value::Object(resp.extra)),
        });
        Ok(())
    }
}

impl Evaluator for ExternalEvaluator {
    fn tag(&self) -> &str {
        "external"
    }

    fn evaluate_batch(&mut self, genotypes: &[Genotype]) -> Result<Vec<EvaluationResult>, EvalError> {
        self.run(genotypes)
    }
}

/// Evaluator selection as it appears in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvaluatorKind {
    Synthetic {
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Tabular {
        path: PathBuf,
    },
    External {
        command: Vec<String>,
        /// Deadline for one whole batch.
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
    },
}

fn default_timeout_secs() -> f64 {
    3600.0
}

impl Default for EvaluatorKind {
    fn default() -> Self {
        EvaluatorKind::Synthetic { noise: 0.0, seed: 0 }
    }
}

impl EvaluatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EvaluatorKind::Synthetic { .. } => "synthetic",
            EvaluatorKind::Tabular { .. } => "tabular",
            EvaluatorKind::External { .. } => "external",
        }
    }

    /// `table` backs the synthetic evaluator's latencies.
    pub fn build(&self, space: &SearchSpace, table: &LatencyTable) -> Result<Box<dyn Evaluator>, EvalError> {
        Ok(match self {
            EvaluatorKind::Synthetic { noise, seed } => {
                Box::new(SyntheticEvaluator::new(space.clone(), table.clone(), *noise, *seed))
            }
            EvaluatorKind::Tabular { path } => Box::new(TabularEvaluator::load(space.clone(), path)?),
            EvaluatorKind::External { command, timeout_secs } => Box::new(ExternalEvaluator::new(
                command.clone(),
                Duration::from_secs_f64(timeout_secs.max(0.0)),
            )?),
        })
    }
}

/// Largest space the oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 200_000;

#[derive(Debug, Clone)]
pub struct OracleFront {
    /// Non-dominated records sorted by ascending accuracy.
    pub front: Vec<Record>,
    /// Over (accuracy, images/s), origin reference.
    pub hypervolume: f64,
    pub evaluated: usize,
}

/// Exhaustive noise-free evaluation of every canonical genotype.
pub fn brute_force_front(space: &SearchSpace, table: &LatencyTable) -> Result<OracleFront, EvalError> {
    let (count, _) = space.cardinality();
    if count > ORACLE_LIMIT {
        return Err(EvalError::TooLarge { count, limit: ORACLE_LIMIT });
    }
    let eval = SyntheticEvaluator::new(space.clone(), table.clone(), 0.0, 0);
    let mut records = Vec::with_capacity(count as usize);
    for g in enumerate_canonical(space) {
        let r = eval.evaluate_one(&g)?;
        records.push(Record { genotype: g, accuracy: r.accuracy, latency_ms: r.latency_ms, generation: None });
    }
    let objs: Vec<ObjectiveVector> =
        records.iter().map(|r| ObjectiveVector([r.accuracy, speed(r.latency_ms)])).collect();
    let mut front: Vec<Record> = nondominated_indices(&objs).into_iter().map(|i| records[i].clone()).collect();
    // equal objective vectors from distinct genotypes all stay on the front
    front.sort_by(|a, b| a.accuracy.total_cmp(&b.accuracy).then(a.genotype.cmp(&b.genotype)));
    let pts: Vec<[f64; 2]> = front.iter().map(|r| [r.accuracy, speed(r.latency_ms)]).collect();
    Ok(OracleFront { hypervolume: hypervolume_origin(&pts), front, evaluated: records.len() })
}
