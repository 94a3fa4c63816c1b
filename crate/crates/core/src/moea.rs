//! NSGA-II over genotypes with two maximized objectives.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{Genotype, SearchSpace, GENOTYPE_LEN, NUM_STAGES, STAGE_OFFSETS, STAGE_SLOTS};
use crate::metrics::hypervolume_origin;
use crate::seed;

/// Two objectives, both maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector(pub [f64; 2]);

impl ObjectiveVector {
    pub fn dominates(&self, other: &ObjectiveVector) -> bool {
        dominates(self, other)
    }
}

/// `a ≥ b` in both objectives and `a > b` in at least one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    let [a0, a1] = a.0;
    let [b0, b1] = b.0;
    a0 >= b0 && a1 >= b1 && (a0 > b0 || a1 > b1)
}

/// Fronts of indices into `objs`, best first; indices ascend within a front.
pub fn fast_nondominated_sort(objs: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates(&objs[j], &objs[i]) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Indices of the non-dominated members, ascending. O(n log n).
pub fn nondominated_indices(objs: &[ObjectiveVector]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objs.len()).collect();
    // descending first objective, then descending second
    order.sort_by(|&a, &b| objs[b].0[0].total_cmp(&objs[a].0[0]).then(objs[b].0[1].total_cmp(&objs[a].0[1])));
    let mut out = Vec::new();
    let mut best_second = f64::NEG_INFINITY;
    let mut k = 0;
    while k < order.len() {
        // a run sharing the first objective: only its top second value can survive
        let f0 = objs[order[k]].0[0];
        let top = objs[order[k]].0[1];
        let mut end = k;
        while end < order.len() && objs[order[end]].0[0] == f0 {
            end += 1;
        }
        if top > best_second {
            out.extend(order[k..end].iter().copied().filter(|&i| objs[i].0[1] == top));
            best_second = top;
        }
        k = end;
    }
    out.sort_unstable();
    out
}

/// Crowding distance of each member of `front` (indices into `objs`).
///
/// Members at either extreme of an objective get `f64::INFINITY`. Interior
/// members add, per objective, the gap between the nearest strictly smaller
/// and strictly larger values divided by the objective's range, so equal
/// vectors always receive equal distances whatever the input order. An
/// objective with zero range contributes nothing.
pub fn crowding_distance(objs: &[ObjectiveVector], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objs[front[a]].0[m].total_cmp(&objs[front[b]].0[m]));
        let value = |k: usize| objs[front[order[k]]].0[m];
        let (lo, hi) = (value(0), value(n - 1));
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        // start index of each run of equal values
        let mut k = 0;
        let mut prev_value: Option<f64> = None;
        while k < n {
            let v = value(k);
            let mut end = k;
            while end < n && value(end) == v {
                end += 1;
            }
            let contribution = if v == lo || v == hi {
                f64::INFINITY
            } else {
                (value(end) - prev_value.expect("interior has a predecessor")) / range
            };
            for &o in &order[k..end] {
                dist[o] += contribution;
            }
            prev_value = Some(v);
            k = end;
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoeaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub tournament: usize,
    /// Set by the caller; a search derives it from the root seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for MoeaConfig {
    fn default() -> Self {
        MoeaConfig { population: 100, generations: 1000, crossover: 0.9, mutation: 0.05, tournament: 2, seed: 0 }
    }
}

/// Re-variation attempts before a duplicate offspring is accepted.
pub const MAX_VARY_ATTEMPTS: usize = 10;

fn crossover_mutate<R: Rng + ?Sized>(
    p1: &Genotype,
    p2: &Genotype,
    space: &SearchSpace,
    cfg: &MoeaConfig,
    rng: &mut R,
) -> (Genotype, Genotype) {
    let (mut a, mut b) = (*p1, *p2);
    if rng.random_bool(cfg.crossover.clamp(0.0, 1.0)) {
        let mut i = rng.random_range(0..=GENOTYPE_LEN);
        let mut j = rng.random_range(0..=GENOTYPE_LEN);
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        for k in i..j {
            std::mem::swap(&mut a.0[k], &mut b.0[k]);
        }
    }
    let sizes = space.alphabet_sizes();
    let pm = cfg.mutation.clamp(0.0, 1.0);
    for g in [&mut a, &mut b] {
        for (k, &size) in sizes.iter().enumerate() {
            if rng.random_bool(pm) {
                g.0[k] = if is_expansion_slot(k) {
                    rng.random_range(1..size as u8)
                } else {
                    rng.random_range(0..size as u8)
                };
            }
        }
        repair(g, space, rng);
    }
    (a, b)
}

fn is_expansion_slot(k: usize) -> bool {
    (0..NUM_STAGES).any(|s| k >= STAGE_OFFSETS[s] + 2 && k < STAGE_OFFSETS[s] + 2 + STAGE_SLOTS[s])
}

/// Canonical form with freshly activated slots drawn uniformly.
fn repair<R: Rng + ?Sized>(g: &mut Genotype, space: &SearchSpace, rng: &mut R) {
    for (s, st) in space.stages.iter().enumerate() {
        let off = STAGE_OFFSETS[s];
        let depth = g.stage_depth(space, s);
        for slot in 0..STAGE_SLOTS[s] {
            let v = &mut g.0[off + 2 + slot];
            if slot >= depth {
                *v = 0;
            } else if *v == 0 {
                *v = rng.random_range(1..=st.expansions.len() as u8);
            }
        }
    }
}

/// Two-point crossover then per-gene uniform reset, canonicalized. Offspring
/// equal to a parent or to each other are re-varied up to
/// [`MAX_VARY_ATTEMPTS`] times.
pub fn vary<R: Rng + ?Sized>(
    p1: &Genotype,
    p2: &Genotype,
    space: &SearchSpace,
    cfg: &MoeaConfig,
    rng: &mut R,
) -> (Genotype, Genotype) {
    let mut out = crossover_mutate(p1, p2, space, cfg, rng);
    for _ in 1..MAX_VARY_ATTEMPTS {
        let (a, b) = &out;
        if a != b && ![p1, p2].contains(&a) && ![p1, p2].contains(&b) {
            break;
        }
        out = crossover_mutate(p1, p2, space, cfg, rng);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub front_size: usize,
    pub hypervolume: f64,
}

#[derive(Debug, Clone)]
pub struct MoeaResult {
    pub population: Vec<(Genotype, ObjectiveVector)>,
    /// Non-dominated members of the final population.
    pub front: Vec<(Genotype, ObjectiveVector)>,
    /// One entry for the initial population and one per generation.
    pub trace: Vec<GenerationStats>,
    /// Distinct genotypes passed to the objective function.
    pub evaluations: usize,
}

struct Ranked {
    rank: Vec<usize>,
    crowding: Vec<f64>,
}

fn rank_and_crowd(objs: &[ObjectiveVector]) -> Ranked {
    let mut rank = vec![0; objs.len()];
    let mut crowding = vec![0.0; objs.len()];
    for (r, front) in fast_nondominated_sort(objs).iter().enumerate() {
        for (&i, d) in front.iter().zip(crowding_distance(objs, front)) {
            rank[i] = r;
            crowding[i] = d;
        }
    }
    Ranked { rank, crowding }
}

fn better(r: &Ranked, a: usize, b: usize) -> bool {
    r.rank[a] < r.rank[b] || (r.rank[a] == r.rank[b] && r.crowding[a] > r.crowding[b])
}

/// Indices of the `mu` survivors: whole fronts while they fit, then the
/// most crowded-apart members of the splitting front. Ties keep the lower
/// index.
pub fn environmental_selection(objs: &[ObjectiveVector], mu: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(mu);
    for front in fast_nondominated_sort(objs) {
        if chosen.len() + front.len() <= mu {
            chosen.extend(front);
            continue;
        }
        let d = crowding_distance(objs, &front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(front[a].cmp(&front[b])));
        chosen.extend(order.into_iter().take(mu - chosen.len()).map(|k| front[k]));
        break;
    }
    chosen
}

fn front_hv(objs: &[ObjectiveVector]) -> (usize, f64) {
    let front = nondominated_indices(objs);
    let pts: Vec<[f64; 2]> = front.iter().map(|&i| objs[i].0).collect();
    (front.len(), hypervolume_origin(&pts))
}

/// Runs NSGA-II from `initial` (padded with random genotypes, duplicates
/// dropped). `objective` receives batches of distinct, never-seen genotypes;
/// results are cached, so it must be a pure function.
pub fn nsga2_run<F, E>(
    space: &SearchSpace,
    cfg: &MoeaConfig,
    initial: &[Genotype],
    mut objective: F,
) -> Result<MoeaResult, E>
where
    F: FnMut(&[Genotype]) -> Result<Vec<ObjectiveVector>, E>,
{
    let mu = cfg.population.max(2);
    let mut rng = seed::rng(cfg.seed, "nsga2", 0);
    let mut cache: HashMap<Genotype, ObjectiveVector> = HashMap::new();
    let mut evaluate = |gs: &[Genotype], cache: &mut HashMap<Genotype, ObjectiveVector>| -> Result<Vec<ObjectiveVector>, E> {
        let mut fresh: Vec<Genotype> = Vec::new();
        for g in gs {
            if !cache.contains_key(g) && !fresh.contains(g) {
                fresh.push(*g);
            }
        }
        if !fresh.is_empty() {
            for (g, o) in fresh.iter().zip(objective(&fresh)?) {
                cache.insert(*g, o);
            }
        }
        Ok(gs.iter().map(|g| cache[g]).collect())
    };

    let mut pop: Vec<Genotype> = Vec::with_capacity(mu);
    for g in initial {
        if pop.len() == mu {
            break;
        }
        let g = g.canonicalize(space).unwrap_or_else(|_| Genotype::random(space, &mut rng));
        if !pop.contains(&g) {
            pop.push(g);
        }
    }
    let mut attempts = 0;
    while pop.len() < mu {
        let g = Genotype::random(space, &mut rng);
        attempts += 1;
        // tiny spaces may hold fewer than `mu` genotypes
        if !pop.contains(&g) || attempts > 50 * mu {
            pop.push(g);
        }
    }
    let mut objs = evaluate(&pop, &mut cache)?;
    let mut trace = Vec::with_capacity(cfg.generations + 1);
    let (fs, hv) = front_hv(&objs);
    trace.push(GenerationStats { generation: 0, front_size: fs, hypervolume: hv });

    let k = cfg.tournament.max(1);
    for generation in 1..=cfg.generations {
        let ranked = rank_and_crowd(&objs);
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut best = rng.random_range(0..pop.len());
            for _ in 1..k {
                let c = rng.random_range(0..pop.len());
                if better(&ranked, c, best) {
                    best = c;
                }
            }
            best
        };
        let mut offspring = Vec::with_capacity(mu);
        while offspring.len() < mu {
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            let (c1, c2) = vary(&pop[a], &pop[b], space, cfg, &mut rng);
            offspring.push(c1);
            if offspring.len() < mu {
                offspring.push(c2);
            }
        }
        let off_objs = evaluate(&offspring, &mut cache)?;

        // merged pool without repeated genotypes; repeats only refill a short pool
        let mut merged: Vec<Genotype> = Vec::with_capacity(2 * mu);
        let mut merged_objs = Vec::with_capacity(2 * mu);
        let mut repeats = Vec::new();
        for (g, o) in pop.iter().zip(&objs).chain(offspring.iter().zip(&off_objs)) {
            if merged.contains(g) {
                repeats.push((*g, *o));
            } else {
                merged.push(*g);
                merged_objs.push(*o);
            }
        }
        for (g, o) in repeats {
            if merged.len() >= mu {
                break;
            }
            merged.push(g);
            merged_objs.push(o);
        }
        let keep = environmental_selection(&merged_objs, mu);
        pop = keep.iter().map(|&i| merged[i]).collect();
        objs = keep.iter().map(|&i| merged_objs[i]).collect();
        let (fs, hv) = front_hv(&objs);
        trace.push(GenerationStats { generation, front_size: fs, hypervolume: hv });
    }

    let front = nondominated_indices(&objs).into_iter().map(|i| (pop[i], objs[i])).collect();
    Ok(MoeaResult {
        population: pop.into_iter().zip(objs).collect(),
        front,
        trace,
        evaluations: cache.len(),
    })
}

/// One CSV row per generation: `generation,front_size,hypervolume`.
pub fn trace_csv(trace: &[GenerationStats]) -> String {
    let mut out = String::from("generation,front_size,hypervolume\n");
    for s in trace {
        out.push_str(&format!("{},{},{}\n", s.generation, s.front_size, s.hypervolume));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::enumerate_canonical;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ov(a: f64, b: f64) -> ObjectiveVector {
        ObjectiveVector([a, b])
    }

    fn brute_fronts(objs: &[ObjectiveVector]) -> Vec<Vec<usize>> {
        let mut left: Vec<usize> = (0..objs.len()).collect();
        let mut fronts = Vec::new();
        while !left.is_empty() {
            let f: Vec<usize> =
                left.iter().copied().filter(|&i| !left.iter().any(|&j| dominates(&objs[j], &objs[i]))).collect();
            left.retain(|i| !f.contains(i));
            fronts.push(f);
        }
        fronts
    }

    fn brute_crowding(objs: &[ObjectiveVector], front: &[usize]) -> Vec<f64> {
        front
            .iter()
            .map(|&i| {
                (0..2)
                    .map(|m| {
                        let vals: Vec<f64> = front.iter().map(|&j| objs[j].0[m]).collect();
                        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let v = objs[i].0[m];
                        if hi == lo {
                            0.0
                        } else if v == lo || v == hi {
                            f64::INFINITY
                        } else {
                            let below = vals.iter().copied().filter(|&x| x < v).fold(f64::NEG_INFINITY, f64::max);
                            let above = vals.iter().copied().filter(|&x| x > v).fold(f64::INFINITY, f64::min);
                            (above - below) / (hi - lo)
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&ov(2.0, 2.0), &ov(1.0, 1.0)));
        assert!(!dominates(&ov(2.0, 1.0), &ov(1.0, 2.0)));
        assert!(!dominates(&ov(1.0, 2.0), &ov(2.0, 1.0)));
        assert!(!dominates(&ov(1.0, 1.0), &ov(1.0, 1.0)));
    }

    #[test]
    fn sort_examples() {
        assert_eq!(fast_nondominated_sort(&[ov(1.0, 1.0)]), vec![vec![0]]);
        let objs = [ov(1.0, 2.0), ov(2.0, 1.0), ov(0.0, 0.0)];
        assert_eq!(fast_nondominated_sort(&objs), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn crowding_examples() {
        let two = [ov(0.0, 1.0), ov(1.0, 0.0)];
        assert!(crowding_distance(&two, &[0, 1]).iter().all(|d| d.is_infinite()));
        let three = [ov(0.0, 2.0), ov(1.0, 1.0), ov(2.0, 0.0)];
        let d = crowding_distance(&three, &[0, 1, 2]);
        assert_eq!(d[1], 2.0);
        let same = [ov(1.0, 1.0); 4];
        assert_eq!(crowding_distance(&same, &[0, 1, 2, 3]), vec![0.0; 4]);
    }

    #[test]
    fn sort_and_crowding_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..=200);
            let grid = rng.random_range(3..40) as f64;
            let objs: Vec<ObjectiveVector> = (0..n)
                .map(|_| ov((rng.random_range(0.0..1.0) * grid).floor(), (rng.random_range(0.0..1.0) * grid).floor()))
                .collect();
            let fronts = fast_nondominated_sort(&objs);
            assert_eq!(fronts, brute_fronts(&objs));
            assert_eq!(fronts[0], nondominated_indices(&objs));
            for f in &fronts {
                assert_eq!(crowding_distance(&objs, f), brute_crowding(&objs, f));
            }
        }
    }

    #[test]
    fn vary_identity_and_validity() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let off = MoeaConfig { crossover: 0.0, mutation: 0.0, ..Default::default() };
        let a = Genotype::random(&space, &mut rng);
        let b = Genotype::random(&space, &mut rng);
        assert_eq!(vary(&a, &b, &space, &off, &mut rng), (a, b));
        let no_mut = MoeaConfig { mutation: 0.0, ..Default::default() };
        assert_eq!(vary(&a, &a, &space, &no_mut, &mut rng), (a, a));
        let cfg = MoeaConfig { mutation: 0.2, ..Default::default() };
        for _ in 0..20_000 {
            let (c, d) = vary(&a, &b, &space, &cfg, &mut rng);
            c.validate(&space).unwrap();
            d.validate(&space).unwrap();
        }
    }

    proptest! {
        #[test]
        fn crowding_is_permutation_invariant(pts in prop::collection::vec((0u8..6, 0u8..6), 1..40), seed in any::<u64>()) {
            let objs: Vec<ObjectiveVector> = pts.iter().map(|&(a, b)| ov(a.into(), b.into())).collect();
            let idx: Vec<usize> = (0..objs.len()).collect();
            let d = crowding_distance(&objs, &idx);
            let mut perm = idx.clone();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let dp = crowding_distance(&objs, &perm);
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(dp[k], d[i]);
            }
        }

        #[test]
        fn survival_keeps_better_fronts(pts in prop::collection::vec((0u8..10, 0u8..10), 2..60), mu_frac in 0.1f64..1.0) {
            let objs: Vec<ObjectiveVector> = pts.iter().map(|&(a, b)| ov(a.into(), b.into())).collect();
            let mu = ((objs.len() as f64 * mu_frac) as usize).max(1);
            let keep = environmental_selection(&objs, mu);
            prop_assert_eq!(keep.len(), mu);
            let fronts = fast_nondominated_sort(&objs);
            let rank_of = |i: usize| fronts.iter().position(|f| f.contains(&i)).unwrap();
            let worst_kept = keep.iter().map(|&i| rank_of(i)).max().unwrap();
            for i in 0..objs.len() {
                if !keep.contains(&i) {
                    prop_assert!(rank_of(i) >= worst_kept);
                }
            }
        }
    }

    /// Only the scale and the stem width vary: 5 × 5 genotypes.
    fn toy_space() -> SearchSpace {
        let mut s = SearchSpace::compact();
        s.scales = vec![0.5, 0.625, 0.75, 0.875, 1.0];
        s.stem_depths.truncate(1);
        s.stem_widths = vec![0.2, 0.4, 0.6, 0.8, 1.0];
        for st in &mut s.stages {
            st.widths.truncate(1);
            st.expansions.truncate(1);
        }
        s
    }

    fn toy_objective(space: &SearchSpace, g: &Genotype) -> ObjectiveVector {
        let x = space.scales[g.0[0] as usize];
        let y = space.stem_widths[g.0[2] as usize];
        ov(x + 0.5 * y, 2.0 - x * x - 0.3 * y + 0.1 * (y * 7.0).sin())
    }

    #[test]
    fn toy_run_finds_the_exhaustive_front() {
        let space = toy_space();
        let all: Vec<Genotype> = enumerate_canonical(&space).collect();
        assert_eq!(all.len(), 25);
        let objs: Vec<ObjectiveVector> = all.iter().map(|g| toy_objective(&space, g)).collect();
        let mut truth: Vec<Genotype> = nondominated_indices(&objs).into_iter().map(|i| all[i]).collect();
        truth.sort();
        let cfg = MoeaConfig { population: 12, generations: 60, mutation: 0.3, seed: 3, ..Default::default() };
        let run = nsga2_run(&space, &cfg, &[], |gs: &[Genotype]| -> Result<_, ()> {
            Ok(gs.iter().map(|g| toy_objective(&space, g)).collect())
        })
        .unwrap();
        let mut found: Vec<Genotype> = run.front.iter().map(|(g, _)| *g).collect();
        found.sort();
        assert_eq!(found, truth);
        for w in run.trace.windows(2) {
            assert!(w[1].hypervolume >= w[0].hypervolume - 1e-12);
        }
    }

    #[test]
    fn runs_are_deterministic_and_valid() {
        let space = SearchSpace::default();
        let cfg = MoeaConfig { population: 20, generations: 15, seed: 5, ..Default::default() };
        let f = |gs: &[Genotype]| -> Result<Vec<ObjectiveVector>, ()> {
            Ok(gs
                .iter()
                .map(|g| {
                    let s: f64 = g.0.iter().map(|&v| f64::from(v)).sum();
                    ov(s, 100.0 / (1.0 + s) + f64::from(g.0[0]))
                })
                .collect())
        };
        let a = nsga2_run(&space, &cfg, &[], f).unwrap();
        let b = nsga2_run(&space, &cfg, &[], f).unwrap();
        assert_eq!(a.population, b.population);
        for (g, _) in &a.population {
            g.validate(&space).unwrap();
        }
        for (i, (_, x)) in a.front.iter().enumerate() {
            for (j, (_, y)) in a.front.iter().enumerate() {
                assert!(i == j || !dominates(x, y));
            }
        }
        assert_eq!(a.trace.len(), 16);
    }
}
