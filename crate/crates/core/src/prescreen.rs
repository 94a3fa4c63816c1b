//! In-fill selection: which surrogate-proposed candidates get a
//! high-fidelity evaluation.
//!
//! The hierarchical strategy first picks a subset whose latencies are as
//! close to uniform as possible (smallest Kolmogorov–Smirnov distance to the
//! uniform law over the current latency span), then fills the remaining
//! slots by predicted accuracy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::Genotype;
use crate::evaluator::{speed, Record};
use crate::metrics::hypervolume_origin;
use crate::moea::{crowding_distance, fast_nondominated_sort, nondominated_indices, ObjectiveVector};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KsError {
    #[error("no samples")]
    Empty,
    #[error("degenerate interval [{lo}, {hi}]")]
    Interval { lo: f64, hi: f64 },
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and
/// the uniform CDF on `[lo, hi]`. Samples outside the interval are clamped.
pub fn ks_statistic(samples: &[f64], lo: f64, hi: f64) -> Result<f64, KsError> {
    if samples.is_empty() {
        return Err(KsError::Empty);
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(KsError::Interval { lo, hi });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(ks_sorted(&s, lo, hi))
}

fn ks_sorted(sorted: &[f64], lo: f64, hi: f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let u = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        d.max((i + 1) as f64 / n - u).max(u - i as f64 / n)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KsGaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover: f64,
    /// Per-bit flip probability; `None` means 1/n.
    pub mutation: Option<f64>,
}

impl Default for KsGaConfig {
    fn default() -> Self {
        KsGaConfig { population: 50, generations: 200, crossover: 0.9, mutation: None }
    }
}

/// Binary selection vector over the candidates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionMask(pub Vec<bool>);

impl SelectionMask {
    pub fn selected(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// KS distance of the selected latencies; an empty selection scores 1.
pub fn mask_distance(latencies: &[f64], mask: &SelectionMask, lo: f64, hi: f64) -> f64 {
    let mut s: Vec<f64> = mask.selected().into_iter().map(|i| latencies[i]).collect();
    if s.is_empty() {
        return 1.0;
    }
    s.sort_by(f64::total_cmp);
    ks_sorted(&s, lo, hi)
}

#[derive(Clone)]
struct Scored {
    mask: SelectionMask,
    selected: Vec<usize>,
    d: f64,
}

impl Scored {
    fn new(mask: SelectionMask, latencies: &[f64], lo: f64, hi: f64) -> Self {
        let d = mask_distance(latencies, &mask, lo, hi);
        Scored { selected: mask.selected(), mask, d }
    }

    /// Smaller distance first, then the lexicographically smaller index list.
    fn cmp(&self, other: &Scored) -> std::cmp::Ordering {
        self.d.total_cmp(&other.d).then_with(|| self.selected.cmp(&other.selected))
    }
}

/// Random deselection down to `k` ones.
fn repair(mask: &mut SelectionMask, k: usize, rng: &mut ChaCha8Rng) {
    let mut on = mask.selected();
    while on.len() > k {
        let j = rng.random_range(0..on.len());
        mask.0[on.swap_remove(j)] = false;
    }
}

/// For each size 1..=k, the members nearest to the uniform quantile targets.
fn quantile_masks(latencies: &[f64], k: usize, lo: f64, hi: f64) -> Vec<SelectionMask> {
    (1..=k)
        .map(|m| {
            let mut mask = SelectionMask(vec![false; latencies.len()]);
            for q in 0..m {
                let target = lo + (hi - lo) * (q as f64 + 0.5) / m as f64;
                let best = (0..latencies.len())
                    .filter(|&i| !mask.0[i])
                    .min_by(|&a, &b| (latencies[a] - target).abs().total_cmp(&(latencies[b] - target).abs()));
                if let Some(i) = best {
                    mask.0[i] = true;
                }
            }
            mask
        })
        .collect()
}

/// Minimizes the KS distance over masks with at most `k` ones using a
/// binary GA: uniform crossover, bit-flip mutation, random-deselection
/// repair and (μ+λ) survival. Every mask ever produced is feasible.
pub fn subset_select_ks(latencies: &[f64], k: usize, cfg: &KsGaConfig, lo: f64, hi: f64, seed: u64) -> SelectionMask {
    let n = latencies.len();
    if k >= n {
        return SelectionMask(vec![true; n]);
    }
    if k == 0 || n == 0 {
        return SelectionMask(vec![false; n]);
    }
    let mut rng = seed::rng(seed, "ks-ga", 0);
    let mu = cfg.population.max(2);
    let pm = cfg.mutation.unwrap_or(1.0 / n as f64).clamp(0.0, 1.0);

    let mut pop: Vec<Scored> = Vec::with_capacity(2 * mu);
    let push_unique = |pop: &mut Vec<Scored>, mask: SelectionMask| {
        if !pop.iter().any(|s| s.mask == mask) {
            pop.push(Scored::new(mask, latencies, lo, hi));
        }
    };
    for m in quantile_masks(latencies, k, lo, hi) {
        push_unique(&mut pop, m);
    }
    let mut tries = 0;
    while pop.len() < mu && tries < 20 * mu {
        tries += 1;
        let size = rng.random_range(1..=k);
        let mut mask = SelectionMask(vec![false; n]);
        for i in rand::seq::index::sample(&mut rng, n, size) {
            mask.0[i] = true;
        }
        push_unique(&mut pop, mask);
    }
    pop.sort_by(Scored::cmp);
    pop.truncate(mu);

    for _ in 0..cfg.generations {
        let tournament = |rng: &mut ChaCha8Rng, pop: &[Scored]| {
            let a = rng.random_range(0..pop.len());
            let b = rng.random_range(0..pop.len());
            if pop[b].cmp(&pop[a]).is_lt() { b } else { a }
        };
        let mut children = Vec::with_capacity(mu);
        while children.len() < mu {
            let (a, b) = (tournament(&mut rng, &pop), tournament(&mut rng, &pop));
            let (mut c1, mut c2) = (pop[a].mask.clone(), pop[b].mask.clone());
            if rng.random_bool(cfg.crossover.clamp(0.0, 1.0)) {
                for i in 0..n {
                    if rng.random_bool(0.5) {
                        std::mem::swap(&mut c1.0[i], &mut c2.0[i]);
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for bit in c.0.iter_mut() {
                    if rng.random_bool(pm) {
                        *bit = !*bit;
                    }
                }
                repair(c, k, &mut rng);
            }
            children.push(c1);
            children.push(c2);
        }
        for c in children {
            push_unique(&mut pop, c);
        }
        pop.sort_by(Scored::cmp);
        pop.truncate(mu);
    }
    pop.swap_remove(0).mask
}

/// In-fill strategies: the hierarchical method and its ablation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Hierarchical,
    /// NSGA-II rank and crowding over parents and candidates.
    Survival,
    /// Greedy removal of the smallest hypervolume contributor.
    Hv,
    /// KS subset only, no accuracy fill.
    Latency,
    Random,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hierarchical" => Ok(Strategy::Hierarchical),
            "survival" => Ok(Strategy::Survival),
            "hv" => Ok(Strategy::Hv),
            "latency" => Ok(Strategy::Latency),
            "random" => Ok(Strategy::Random),
            _ => Err(format!("unknown prescreen strategy `{s}`")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Hierarchical => "hierarchical",
            Strategy::Survival => "survival",
            Strategy::Hv => "hv",
            Strategy::Latency => "latency",
            Strategy::Random => "random",
        })
    }
}

/// Inputs shared by every strategy. `parents` are evaluated records;
/// candidates must be canonical and distinct.
pub struct Prescreen<'a> {
    pub candidates: &'a [Genotype],
    pub parents: &'a [Record],
    pub k: usize,
    pub ga: &'a KsGaConfig,
    pub seed: u64,
}

impl Prescreen<'_> {
    /// Runs `strategy`. `predict` maps genotypes to predicted accuracy,
    /// `latency` to measured or tabulated latency in ms.
    pub fn select<E>(
        &self,
        strategy: Strategy,
        predict: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
        latency: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
    ) -> Result<Vec<Genotype>, E> {
        let k = self.k.min(self.candidates.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let picked = match strategy {
            Strategy::Hierarchical => self.hierarchical(k, predict, latency, true)?,
            Strategy::Latency => self.hierarchical(k, predict, latency, false)?,
            Strategy::Survival => self.survival(k, predict, latency)?,
            Strategy::Hv => self.hv_contribution(k, predict, latency)?,
            Strategy::Random => {
                let mut rng = seed::rng(self.seed, "prescreen-random", 0);
                let mut idx = rand::seq::index::sample(&mut rng, self.candidates.len(), k).into_vec();
                idx.sort_unstable();
                idx
            }
        };
        Ok(picked.into_iter().map(|i| self.candidates[i]).collect())
    }

    fn nd_parents(&self) -> Vec<&Record> {
        let objs: Vec<ObjectiveVector> =
            self.parents.iter().map(|r| ObjectiveVector([r.accuracy, speed(r.latency_ms)])).collect();
        nondominated_indices(&objs).into_iter().map(|i| &self.parents[i]).collect()
    }

    /// Candidate indices: the KS subset in index order, then (if `fill`)
    /// the best predicted of the rest.
    fn hierarchical<E>(
        &self,
        k: usize,
        predict: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
        latency: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
        fill: bool,
    ) -> Result<Vec<usize>, E> {
        let lat = latency(self.candidates)?;
        let span = self.nd_parents().into_iter().map(|r| r.latency_ms).chain(lat.iter().copied());
        let (lo, hi) = span.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let mut chosen = if hi > lo {
            subset_select_ks(&lat, k, self.ga, lo, hi, seed::derive(self.seed, "prescreen-ks", 0)).selected()
        } else {
            // every latency equal: a single representative carries all the information
            vec![0]
        };
        if fill && chosen.len() < k {
            let acc = predict(self.candidates)?;
            let mut rest: Vec<usize> = (0..self.candidates.len()).filter(|i| !chosen.contains(i)).collect();
            rest.sort_by(|&a, &b| acc[b].total_cmp(&acc[a]).then(a.cmp(&b)));
            chosen.extend(rest.into_iter().take(k - chosen.len()));
        }
        Ok(chosen)
    }

    /// Surrogate objectives of the non-dominated parents followed by the
    /// candidates.
    fn merged_objectives<E>(
        &self,
        predict: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
        latency: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
        parents: &[&Record],
    ) -> Result<Vec<ObjectiveVector>, E> {
        let pg: Vec<Genotype> = parents.iter().map(|r| r.genotype).collect();
        let pacc = predict(&pg)?;
        let cacc = predict(self.candidates)?;
        let clat = latency(self.candidates)?;
        Ok(parents
            .iter()
            .zip(pacc)
            .map(|(r, a)| ObjectiveVector([a, speed(r.latency_ms)]))
            .chain(cacc.into_iter().zip(clat).map(|(a, l)| ObjectiveVector([a, speed(l)])))
            .collect())
    }

    fn survival<E>(
        &self,
        k: usize,
        predict: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
        latency: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
    ) -> Result<Vec<usize>, E> {
        let parents: Vec<&Record> = self.parents.iter().collect();
        let objs = self.merged_objectives(predict, latency, &parents)?;
        let p = parents.len();
        let mut rank = vec![0; objs.len()];
        let mut crowd = vec![0.0; objs.len()];
        for (r, front) in fast_nondominated_sort(&objs).iter().enumerate() {
            for (&i, d) in front.iter().zip(crowding_distance(&objs, front)) {
                rank[i] = r;
                crowd[i] = d;
            }
        }
        let mut order: Vec<usize> = (p..objs.len()).collect();
        order.sort_by(|&a, &b| rank[a].cmp(&rank[b]).then(crowd[b].total_cmp(&crowd[a])).then(a.cmp(&b)));
        Ok(order.into_iter().take(k).map(|i| i - p).collect())
    }

    fn hv_contribution<E>(
        &self,
        k: usize,
        predict: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
        latency: &mut dyn FnMut(&[Genotype]) -> Result<Vec<f64>, E>,
    ) -> Result<Vec<usize>, E> {
        let parents = self.nd_parents();
        let objs = self.merged_objectives(predict, latency, &parents)?;
        let cand: Vec<ObjectiveVector> = objs[parents.len()..].to_vec();
        let fixed: Vec<[f64; 2]> = objs[..parents.len()].iter().map(|o| o.0).collect();
        Ok(greedy_hv_selection(&fixed, &cand, k))
    }
}

/// Repeatedly drops the candidate whose removal loses the least hypervolume
/// of `fixed ∪ remaining`. Candidates at an extreme of either objective are
/// removed only after all others; ties drop the higher index.
pub fn greedy_hv_selection(fixed: &[[f64; 2]], candidates: &[ObjectiveVector], k: usize) -> Vec<usize> {
    let mut left: Vec<usize> = (0..candidates.len()).collect();
    while left.len() > k {
        let mut pts: Vec<[f64; 2]> = fixed.to_vec();
        pts.extend(left.iter().map(|&i| candidates[i].0));
        let total = hypervolume_origin(&pts);
        let max0 = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let max1 = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let score = |pos: usize| {
            let c = candidates[left[pos]].0;
            let mut without = fixed.to_vec();
            without.extend(left.iter().enumerate().filter(|&(q, _)| q != pos).map(|(_, &i)| candidates[i].0));
            let loss = total - hypervolume_origin(&without);
            let extreme = c[0] == max0 || c[1] == max1;
            (extreme, loss)
        };
        let scores: Vec<(bool, f64)> = (0..left.len()).map(score).collect();
        let worst = (0..left.len())
            .rev()
            .min_by(|&a, &b| {
                let (ea, la) = scores[a];
                let (eb, lb) = scores[b];
                ea.cmp(&eb).then(la.total_cmp(&lb))
            })
            .expect("non-empty");
        left.remove(worst);
    }
    left
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand::SeedableRng;

    fn exhaustive_best(lat: &[f64], k: usize, lo: f64, hi: f64) -> f64 {
        let n = lat.len();
        (1u32..1 << n)
            .filter(|m| m.count_ones() as usize <= k)
            .map(|m| {
                let s: Vec<f64> = (0..n).filter(|i| m >> i & 1 == 1).map(|i| lat[i]).collect();
                ks_statistic(&s, lo, hi).unwrap()
            })
            .fold(1.0, f64::min)
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[0.5], 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(ks_statistic(&[0.25, 0.75], 0.0, 1.0).unwrap(), 0.25);
        let n = 1000;
        let grid: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        assert!(ks_statistic(&grid, 0.0, 1.0).unwrap() < 2.0 / n as f64);
        assert_eq!(ks_statistic(&[], 0.0, 1.0), Err(KsError::Empty));
        assert!(matches!(ks_statistic(&[1.0], 1.0, 1.0), Err(KsError::Interval { .. })));
    }

    #[test]
    fn ks_subset_example() {
        let lat = [10.0, 11.0, 12.0, 20.0, 30.0];
        let m = subset_select_ks(&lat, 3, &KsGaConfig::default(), 10.0, 30.0, 1);
        let d = mask_distance(&lat, &m, 10.0, 30.0);
        assert!((d - 1.0 / 3.0).abs() < 1e-12);
        assert!((exhaustive_best(&lat, 3, 10.0, 30.0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.selected(), vec![0, 3, 4]);
    }

    #[test]
    fn ks_subset_select_all_when_k_large() {
        let lat = [3.0, 1.0, 2.0];
        let m = subset_select_ks(&lat, 5, &KsGaConfig::default(), 1.0, 3.0, 0);
        assert_eq!(m.count(), 3);
    }

    #[test]
    fn ga_matches_exhaustive_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for t in 0..20 {
            let n = rng.random_range(2..=15);
            let k = rng.random_range(1..=5);
            let lat: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..50.0)).collect();
            let lo = lat.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = lat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let m = subset_select_ks(&lat, k, &KsGaConfig::default(), lo, hi, t);
            assert!(m.count() <= k);
            let d = mask_distance(&lat, &m, lo, hi);
            assert!((d - exhaustive_best(&lat, k, lo, hi)).abs() < 1e-9, "instance {t}");
        }
    }

    proptest! {
        #[test]
        fn ks_is_affine_invariant(xs in prop::collection::vec(0.0f64..1.0, 1..30), a in 0.1f64..100.0, b in -50.0f64..50.0) {
            let d = ks_statistic(&xs, 0.0, 1.0).unwrap();
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let e = ks_statistic(&ys, b, a + b).unwrap();
            prop_assert!((d - e).abs() < 1e-9);
        }
    }

    #[test]
    fn hv_greedy_keeps_extremes() {
        let c = [ObjectiveVector([1.0, 3.0]), ObjectiveVector([2.0, 2.0]), ObjectiveVector([3.0, 1.0])];
        assert_eq!(greedy_hv_selection(&[], &c, 2), vec![0, 2]);
    }

    fn rec(g: Genotype, acc: f64, lat: f64) -> Record {
        Record { genotype: g, accuracy: acc, latency_ms: lat, generation: None }
    }

    fn genotypes(n: usize) -> Vec<Genotype> {
        let space = crate::SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut out: Vec<Genotype> = Vec::new();
        while out.len() < n {
            let g = Genotype::random(&space, &mut rng);
            if !out.contains(&g) {
                out.push(g);
            }
        }
        out
    }

    #[test]
    fn hierarchical_hand_trace() {
        let g = genotypes(6);
        let cands = &g[..5];
        let lat = [10.0, 11.0, 12.0, 20.0, 30.0];
        let acc = [0.9, 0.8, 0.7, 0.6, 0.5];
        // a parent inside the span leaves the interval at [10, 30]
        let parents = [rec(g[5], 0.6, 15.0)];
        let ga = KsGaConfig::default();
        let p = Prescreen { candidates: cands, parents: &parents, k: 3, ga: &ga, seed: 4 };
        let lookup = |vals: &[f64]| {
            let vals = vals.to_vec();
            let cands = cands.to_vec();
            move |gs: &[Genotype]| -> Result<Vec<f64>, ()> {
                Ok(gs.iter().map(|x| cands.iter().position(|c| c == x).map_or(0.6, |i| vals[i])).collect())
            }
        };
        let picked = p.select(Strategy::Hierarchical, &mut lookup(&acc), &mut lookup(&lat)).unwrap();
        assert_eq!(picked, vec![g[0], g[3], g[4]]);
        let only = p.select(Strategy::Latency, &mut lookup(&acc), &mut lookup(&lat)).unwrap();
        assert_eq!(only, picked);
        let all = Prescreen { k: 5, ..p };
        let mut every = all.select(Strategy::Hierarchical, &mut lookup(&acc), &mut lookup(&lat)).unwrap();
        every.sort();
        let mut want = cands.to_vec();
        want.sort();
        assert_eq!(every, want);
    }

    #[test]
    fn identical_latencies_fall_back_to_accuracy() {
        let g = genotypes(4);
        let ga = KsGaConfig::default();
        let p = Prescreen { candidates: &g, parents: &[], k: 3, ga: &ga, seed: 0 };
        let picked = p
            .select(
                Strategy::Hierarchical,
                &mut |gs: &[Genotype]| -> Result<Vec<f64>, ()> {
                    Ok(gs.iter().map(|x| g.iter().position(|c| c == x).unwrap() as f64).collect())
                },
                &mut |gs: &[Genotype]| Ok(vec![5.0; gs.len()]),
            )
            .unwrap();
        assert_eq!(picked, vec![g[0], g[3], g[2]]);
    }

    #[test]
    fn every_strategy_returns_a_distinct_subset() {
        let g = genotypes(30);
        let (cands, parents_g) = g.split_at(20);
        let parents: Vec<Record> =
            parents_g.iter().enumerate().map(|(i, x)| rec(*x, 0.3 + 0.05 * i as f64, 5.0 + i as f64)).collect();
        let ga = KsGaConfig { generations: 30, ..Default::default() };
        let score = |x: &Genotype| x.0.iter().map(|&v| f64::from(v)).sum::<f64>();
        for strategy in [Strategy::Hierarchical, Strategy::Survival, Strategy::Hv, Strategy::Latency, Strategy::Random] {
            for k in [1, 5, 8, 20, 25] {
                let p = Prescreen { candidates: cands, parents: &parents, k, ga: &ga, seed: 2 };
                let out = p
                    .select(
                        strategy,
                        &mut |gs: &[Genotype]| -> Result<Vec<f64>, ()> { Ok(gs.iter().map(|x| score(x) / 60.0).collect()) },
                        &mut |gs: &[Genotype]| Ok(gs.iter().map(|x| 3.0 + score(x)).collect()),
                    )
                    .unwrap();
                assert!(out.len() <= k.min(cands.len()));
                if strategy != Strategy::Latency {
                    assert_eq!(out.len(), k.min(cands.len()), "{strategy}");
                }
                assert!(out.iter().all(|x| cands.contains(x)));
                let mut d = out.clone();
                d.sort();
                d.dedup();
                assert_eq!(d.len(), out.len());
            }
        }
    }
}
