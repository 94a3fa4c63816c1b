//! The outer surrogate-assisted loop.
//!
//! Each generation retrains the accuracy predictor on the whole archive,
//! runs NSGA-II against (predicted accuracy, table speed), picks at most K
//! of the proposals with the configured in-fill strategy and evaluates
//! them for real.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{Genotype, SearchSpace};
use crate::evaluator::{parse_records, speed, write_records, EvalError, EvaluationResult, Evaluator, EvaluatorKind, Record};
use crate::latency::{LatencyTable, TableError};
use crate::metrics::hypervolume_origin;
use crate::moea::{crowding_distance, fast_nondominated_sort, nondominated_indices, nsga2_run, MoeaConfig, ObjectiveVector};
use crate::prescreen::{subset_select_ks, KsGaConfig, Prescreen, Strategy};
use crate::seed;
use crate::surrogate::{train_ranknet, RankNetModel, SurrogateError, TrainConfig};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("generation {generation}: {source}")]
    Aborted { generation: usize, source: Box<SearchError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    /// KS subset of a 3N uniform pool, spreading latencies evenly.
    Stratified,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub seed: u64,
    /// Search-space preset name.
    pub space: String,
    /// Latency table file; the synthetic table when absent.
    pub lut: Option<PathBuf>,
    pub initial_population: usize,
    pub generations: usize,
    pub per_generation: usize,
    pub init: InitMethod,
    pub prescreen: Strategy,
    /// Members reported by the final trade-off selection.
    pub final_count: usize,
    /// Front members below this accuracy are excluded from the final selection.
    pub accuracy_floor: Option<f64>,
    pub train: TrainConfig,
    pub moea: MoeaConfig,
    pub ks: KsGaConfig,
    pub evaluator: EvaluatorKind,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 0,
            space: "default".into(),
            lut: None,
            initial_population: 300,
            generations: 20,
            per_generation: 8,
            init: InitMethod::Stratified,
            prescreen: Strategy::Hierarchical,
            final_count: 5,
            accuracy_floor: None,
            train: TrainConfig::default(),
            moea: MoeaConfig::default(),
            ks: KsGaConfig::default(),
            evaluator: EvaluatorKind::default(),
        }
    }
}

impl SearchConfig {
    /// Upper bound on high-fidelity evaluations: N + T·K.
    pub fn budget(&self) -> usize {
        self.initial_population + self.generations * self.per_generation
    }
}

/// Every high-fidelity result, unique by canonical genotype, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    records: Vec<Record>,
    index: HashMap<Genotype, usize>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn contains(&self, g: &Genotype) -> bool {
        self.index.contains_key(g)
    }

    pub fn get(&self, g: &Genotype) -> Option<&Record> {
        self.index.get(g).map(|&i| &self.records[i])
    }

    /// Adds a record unless its genotype is already present.
    pub fn insert(&mut self, record: Record) -> bool {
        if self.index.contains_key(&record.genotype) {
            return false;
        }
        self.index.insert(record.genotype, self.records.len());
        self.records.push(record);
        true
    }

    pub fn objectives(&self) -> Vec<ObjectiveVector> {
        self.records.iter().map(|r| ObjectiveVector([r.accuracy, speed(r.latency_ms)])).collect()
    }

    /// Non-dominated records in archive order.
    pub fn front(&self) -> Vec<&Record> {
        nondominated_indices(&self.objectives()).into_iter().map(|i| &self.records[i]).collect()
    }

    /// Over (accuracy, images/s) with the origin as reference.
    pub fn hypervolume(&self) -> f64 {
        let pts: Vec<[f64; 2]> = self.objectives().iter().map(|o| o.0).collect();
        hypervolume_origin(&pts)
    }

    pub fn to_csv(&self) -> String {
        write_records(&self.records)
    }

    pub fn from_records(records: Vec<Record>) -> Self {
        let mut a = Archive::new();
        for r in records {
            a.insert(r);
        }
        a
    }

    pub fn load(path: &Path) -> Result<Self, SearchError> {
        let text = std::fs::read_to_string(path).map_err(|source| io_err(path, source))?;
        Ok(Self::from_records(parse_records(&text)?))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> SearchError {
    SearchError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub generation: usize,
    pub archive_size: usize,
    pub hypervolume: f64,
    pub best_accuracy: f64,
    pub best_speed: f64,
}

impl TraceRow {
    fn of(generation: usize, archive: &Archive) -> Self {
        let objs = archive.objectives();
        TraceRow {
            generation,
            archive_size: archive.len(),
            hypervolume: archive.hypervolume(),
            best_accuracy: objs.iter().map(|o| o.0[0]).fold(0.0, f64::max),
            best_speed: objs.iter().map(|o| o.0[1]).fold(0.0, f64::max),
        }
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("generation,archive_size,hypervolume,best_accuracy,best_speed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.generation, r.archive_size, r.hypervolume, r.best_accuracy, r.best_speed
        ));
    }
    out
}

pub const ARCHIVE_FILE: &str = "archive.csv";
pub const TRACE_FILE: &str = "trace.csv";

/// Writes `archive.csv` and `trace.csv` into `dir`.
pub fn write_checkpoint(dir: &Path, archive: &Archive, trace: &[TraceRow]) -> Result<(), SearchError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (name, body) in [(ARCHIVE_FILE, archive.to_csv()), (TRACE_FILE, trace_csv(trace))] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

/// Draws 3N uniform genotypes and keeps N of them, either the KS-optimal
/// latency subset or the first N distinct draws.
pub fn initial_population(
    space: &SearchSpace,
    table: &LatencyTable,
    n: usize,
    method: InitMethod,
    ks: &KsGaConfig,
    seed: u64,
) -> Result<Vec<Genotype>, SearchError> {
    let mut rng = seed::rng(seed, "init-pool", 0);
    let mut pool: Vec<Genotype> = Vec::with_capacity(3 * n);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..3 * n {
        let g = Genotype::random(space, &mut rng);
        if seen.insert(g) {
            pool.push(g);
        }
    }
    if method == InitMethod::Uniform || pool.len() <= n {
        pool.truncate(n);
        return Ok(pool);
    }
    let lat: Vec<f64> = pool.iter().map(|g| table.predict(space, g)).collect::<Result<_, _>>()?;
    let (lo, hi) = lat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut chosen = if hi > lo {
        subset_select_ks(&lat, n, ks, lo, hi, seed::derive(seed, "init-ks", 0)).selected()
    } else {
        Vec::new()
    };
    // top up in pool order when the best subset is smaller than N
    for i in 0..pool.len() {
        if chosen.len() >= n {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| pool[i]).collect())
}

fn evaluate_into(
    archive: &mut Archive,
    evaluator: &mut dyn Evaluator,
    genotypes: &[Genotype],
    generation: usize,
) -> Result<usize, SearchError> {
    let results: Vec<EvaluationResult> = evaluator.evaluate_batch(genotypes)?;
    let mut added = 0;
    for (g, r) in genotypes.iter().zip(results) {
        added += usize::from(archive.insert(Record {
            genotype: *g,
            accuracy: r.accuracy,
            latency_ms: r.latency_ms,
            generation: Some(generation),
        }));
    }
    Ok(added)
}

/// Seeds for the inner run: the archive's best `mu` by rank and crowding.
fn elite(archive: &Archive, mu: usize) -> Vec<Genotype> {
    let objs = archive.objectives();
    let mut out = Vec::with_capacity(mu);
    for front in fast_nondominated_sort(&objs) {
        let d = crowding_distance(&objs, &front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(front[a].cmp(&front[b])));
        for k in order {
            if out.len() == mu {
                return out;
            }
            out.push(archive.records[front[k]].genotype);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub archive: Archive,
    /// Non-dominated archive records.
    pub front: Vec<Record>,
    /// Final trade-off picks, a subset of `front`.
    pub selected: Vec<Record>,
    /// Row 0 follows initialization, row t follows generation t.
    pub trace: Vec<TraceRow>,
    pub evaluations: usize,
}

/// Hooks called as the search advances.
pub trait SearchObserver {
    fn generation_done(&mut self, _archive: &Archive, _trace: &[TraceRow]) -> Result<(), SearchError> {
        Ok(())
    }
}

/// Writes a checkpoint after every generation.
pub struct Checkpointer(pub PathBuf);

impl SearchObserver for Checkpointer {
    fn generation_done(&mut self, archive: &Archive, trace: &[TraceRow]) -> Result<(), SearchError> {
        write_checkpoint(&self.0, archive, trace)
    }
}

impl SearchObserver for () {}

/// Runs the full loop. On a failure after initialization the observer has
/// already seen every completed generation and the error names the
/// generation that failed.
pub fn run_search(
    cfg: &SearchConfig,
    space: &SearchSpace,
    table: &LatencyTable,
    evaluator: &mut dyn Evaluator,
    observer: &mut dyn SearchObserver,
) -> Result<SearchOutcome, SearchError> {
    let abort = |generation: usize, e: SearchError| SearchError::Aborted { generation, source: Box::new(e) };
    let mut archive = Archive::new();
    let init = initial_population(space, table, cfg.initial_population, cfg.init, &cfg.ks, cfg.seed)?;
    let mut evaluations = init.len();
    if let Err(e) = evaluate_into(&mut archive, evaluator, &init, 0) {
        observer.generation_done(&archive, &[])?;
        return Err(abort(0, e));
    }
    let mut trace = vec![TraceRow::of(0, &archive)];
    observer.generation_done(&archive, &trace)?;
    log::info!("initialized archive with {} records", archive.len());

    for t in 1..=cfg.generations {
        let step = generation_step(cfg, space, table, evaluator, &archive, t);
        let picked = match step {
            Ok(p) => p,
            Err(e) => {
                observer.generation_done(&archive, &trace)?;
                return Err(abort(t, e));
            }
        };
        evaluations += picked.len();
        if let Err(e) = evaluate_into(&mut archive, evaluator, &picked, t) {
            observer.generation_done(&archive, &trace)?;
            return Err(abort(t, e));
        }
        trace.push(TraceRow::of(t, &archive));
        observer.generation_done(&archive, &trace)?;
        let last = trace.last().expect("non-empty");
        log::info!("generation {t}: archive {} HV {:.4}", last.archive_size, last.hypervolume);
    }

    let front: Vec<Record> = archive.front().into_iter().cloned().collect();
    let eligible: Vec<Record> = match cfg.accuracy_floor {
        Some(floor) => front.iter().filter(|r| r.accuracy >= floor).cloned().collect(),
        None => front.clone(),
    };
    let pts: Vec<ObjectiveVector> = eligible.iter().map(|r| ObjectiveVector([r.accuracy, speed(r.latency_ms)])).collect();
    let selected = select_final(&pts, cfg.final_count).into_iter().map(|i| eligible[i].clone()).collect();
    Ok(SearchOutcome { archive, front, selected, trace, evaluations })
}

/// Surrogate training, inner NSGA-II and in-fill for generation `t`.
fn generation_step(
    cfg: &SearchConfig,
    space: &SearchSpace,
    table: &LatencyTable,
    evaluator: &mut dyn Evaluator,
    archive: &Archive,
    t: usize,
) -> Result<Vec<Genotype>, SearchError> {
    let samples: Vec<(Genotype, f64)> = archive.records().iter().map(|r| (r.genotype, r.accuracy)).collect();
    let (model, _) = train_ranknet(&samples, space, &cfg.train, seed::derive(cfg.seed, "ranknet", t as u64))?;

    let moea = MoeaConfig { seed: seed::derive(cfg.seed, "moea", t as u64), ..cfg.moea.clone() };
    let seeds = elite(archive, moea.population);
    let run = nsga2_run(space, &moea, &seeds, |gs: &[Genotype]| -> Result<Vec<ObjectiveVector>, SearchError> {
        surrogate_objectives(&model, space, table, gs)
    })?;

    // the unseen part of the surrogate front; the rest of the final
    // population only tops it up when the front offers fewer than K
    let mut candidates: Vec<Genotype> = Vec::new();
    for (g, _) in &run.front {
        if !archive.contains(g) && !candidates.contains(g) {
            candidates.push(*g);
        }
    }
    for (g, _) in &run.population {
        if candidates.len() >= cfg.per_generation {
            break;
        }
        if !archive.contains(g) && !candidates.contains(g) {
            candidates.push(*g);
        }
    }
    // a converged inner run may propose too few unseen designs
    let mut rng = seed::rng(cfg.seed, "fallback-candidates", t as u64);
    let mut tries = 0;
    while candidates.len() < cfg.per_generation && tries < 1000 {
        tries += 1;
        let g = Genotype::random(space, &mut rng);
        if !archive.contains(&g) && !candidates.contains(&g) {
            candidates.push(g);
        }
    }

    let ps = Prescreen {
        candidates: &candidates,
        parents: archive.records(),
        k: cfg.per_generation,
        ga: &cfg.ks,
        seed: seed::derive(cfg.seed, "prescreen", t as u64),
    };
    let mut predict = |gs: &[Genotype]| -> Result<Vec<f64>, SearchError> { Ok(model.predict(space, gs)?) };
    let mut latency = |gs: &[Genotype]| -> Result<Vec<f64>, SearchError> { Ok(evaluator.latency_only(gs)?) };
    ps.select(cfg.prescreen, &mut predict, &mut latency)
}

/// (predicted accuracy, 1000 / table latency) for each genotype.
pub fn surrogate_objectives(
    model: &RankNetModel,
    space: &SearchSpace,
    table: &LatencyTable,
    gs: &[Genotype],
) -> Result<Vec<ObjectiveVector>, SearchError> {
    let acc = model.predict(space, gs)?;
    gs.iter()
        .zip(acc)
        .map(|(g, a)| Ok(ObjectiveVector([a, speed(table.predict(space, g)?)])))
        .collect()
}

/// Up to `count` members of a front: the best of each objective, then the
/// members farthest from the chord joining them in min–max normalized
/// objective space. Ties keep the lower index.
pub fn select_final(front: &[ObjectiveVector], count: usize) -> Vec<usize> {
    if front.is_empty() || count == 0 {
        return Vec::new();
    }
    let norm: Vec<[f64; 2]> = {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in front {
            for m in 0..2 {
                lo[m] = lo[m].min(p.0[m]);
                hi[m] = hi[m].max(p.0[m]);
            }
        }
        front
            .iter()
            .map(|p| {
                let f = |m: usize| if hi[m] > lo[m] { (p.0[m] - lo[m]) / (hi[m] - lo[m]) } else { 0.0 };
                [f(0), f(1)]
            })
            .collect()
    };
    let argmax = |m: usize| {
        (0..front.len())
            .max_by(|&a, &b| front[a].0[m].total_cmp(&front[b].0[m]).then(b.cmp(&a)))
            .expect("non-empty")
    };
    let (ea, eb) = (argmax(0), argmax(1));
    let mut out = vec![ea];
    if eb != ea {
        out.push(eb);
    }
    let (a, b) = (norm[ea], norm[eb]);
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = (dx * dx + dy * dy).sqrt();
    let dist = |p: [f64; 2]| {
        if len == 0.0 {
            0.0
        } else {
            ((p[0] - a[0]) * dy - (p[1] - a[1]) * dx).abs() / len
        }
    };
    let mut rest: Vec<usize> = (0..front.len()).filter(|i| !out.contains(i) && front[*i] != front[ea] && front[*i] != front[eb]).collect();
    rest.sort_by(|&i, &j| dist(norm[j]).total_cmp(&dist(norm[i])).then(i.cmp(&j)));
    let mut seen: Vec<ObjectiveVector> = out.iter().map(|&i| front[i]).collect();
    for i in rest {
        if out.len() >= count {
            break;
        }
        // duplicate objective vectors add nothing to the trade-off set
        if !seen.contains(&front[i]) {
            seen.push(front[i]);
            out.push(i);
        }
    }
    out.truncate(count);
    out
}
