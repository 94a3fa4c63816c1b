//! Search space, genotype and feature encodings.
//!
//! A genotype is a fixed-length string of 29 small integers:
//!
//! | genes   | meaning                                              |
//! |---------|------------------------------------------------------|
//! | 0       | input image scale                                    |
//! | 1–2     | stem depth, stem width                               |
//! | 3–8     | stage 1: depth, width, 4 expansion slots             |
//! | 9–14    | stage 2: depth, width, 4 expansion slots             |
//! | 15–22   | stage 3: depth, width, 6 expansion slots             |
//! | 23–28   | stage 4: depth, width, 4 expansion slots             |
//!
//! Scale, depth and width genes are 0-based indices into the option lists of
//! [`SearchSpace`]. Expansion slots are 1-based (`k` selects option `k - 1`)
//! and `0` marks a padded slot past the active depth of its stage.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GENOTYPE_LEN: usize = 29;
pub const NUM_STAGES: usize = 4;
pub const SCALE_GENE: usize = 0;
pub const STEM_DEPTH_GENE: usize = 1;
pub const STEM_WIDTH_GENE: usize = 2;
/// Expansion slots per stage; stage 3 admits deeper layer counts.
pub const STAGE_SLOTS: [usize; NUM_STAGES] = [4, 4, 6, 4];
/// Index of the depth gene of each stage.
pub const STAGE_OFFSETS: [usize; NUM_STAGES] = [3, 9, 15, 23];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenotypeError {
    #[error("gene {index}: value {value} out of range (alphabet size {size})")]
    OutOfRange { index: usize, value: u8, size: usize },
    #[error("gene {index}: padded expansion slot must be 0, found {value}")]
    PaddingNotZero { index: usize, value: u8 },
    #[error("gene {index}: active expansion slot must be nonzero")]
    MissingExpansion { index: usize },
    #[error("expected {GENOTYPE_LEN} genes, found {0}")]
    Length(usize),
    #[error("cannot parse gene {0:?}")]
    Parse(String),
    #[error("architecture does not match the search space: {0}")]
    Unencodable(String),
}

impl GenotypeError {
    /// Offending gene index, where one applies.
    pub fn index(&self) -> Option<usize> {
        match self {
            GenotypeError::OutOfRange { index, .. }
            | GenotypeError::PaddingNotZero { index, .. }
            | GenotypeError::MissingExpansion { index } => Some(*index),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid search space: {0}")]
pub struct SpaceError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOptions {
    /// Layer counts.
    pub depths: Vec<usize>,
    /// Output-channel multipliers.
    pub widths: Vec<f64>,
    /// Mid-channel multipliers, chosen per layer.
    pub expansions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub scales: Vec<f64>,
    pub stem_depths: Vec<usize>,
    pub stem_widths: Vec<f64>,
    pub stages: [StageOptions; NUM_STAGES],
    /// Default channels: stem followed by the four stage outputs.
    pub default_widths: [usize; 1 + NUM_STAGES],
    /// Full-scale input resolution (height, width) used for FLOPs estimates.
    pub input_resolution: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        let stage = |depths: Vec<usize>| StageOptions {
            depths,
            widths: vec![0.6, 0.8, 1.0],
            expansions: vec![0.8, 1.1, 1.4],
        };
        SearchSpace {
            scales: vec![0.5, 0.75, 1.0],
            stem_depths: vec![1, 2, 3],
            stem_widths: vec![0.6, 0.8, 1.0],
            stages: [
                stage(vec![2, 3, 4]),
                stage(vec![2, 3, 4]),
                stage(vec![4, 5, 6]),
                stage(vec![2, 3, 4]),
            ],
            default_widths: [64, 256, 512, 1024, 2048],
            input_resolution: (1024, 2048),
        }
    }
}

fn check_sorted_f64(name: &str, v: &[f64]) -> Result<(), SpaceError> {
    if v.is_empty() {
        return Err(SpaceError(format!("{name}: empty option list")));
    }
    if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(SpaceError(format!("{name}: options must be positive and finite")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SpaceError(format!("{name}: options must be strictly ascending")));
    }
    Ok(())
}

fn check_sorted_usize(name: &str, v: &[usize]) -> Result<(), SpaceError> {
    if v.is_empty() {
        return Err(SpaceError(format!("{name}: empty option list")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SpaceError(format!("{name}: options must be strictly ascending")));
    }
    Ok(())
}

fn check_distinct_channels(name: &str, mults: &[f64], base: usize) -> Result<(), SpaceError> {
    let ch: Vec<usize> = mults.iter().map(|m| channels(*m, base)).collect();
    if ch.contains(&0) || ch.windows(2).any(|w| w[0] == w[1]) {
        return Err(SpaceError(format!(
            "{name}: multipliers must give distinct positive channel counts, got {ch:?}"
        )));
    }
    Ok(())
}

fn channels(mult: f64, base: usize) -> usize {
    (mult * base as f64).round() as usize
}

impl SearchSpace {
    /// Two options per dimension (the extremes of the default tables) with every
    /// stage depth fixed at its minimum: 131 072 canonical genotypes, small
    /// enough to enumerate exhaustively.
    pub fn compact() -> Self {
        let d = SearchSpace::default();
        let ends = |v: &[f64]| vec![v[0], v[v.len() - 1]];
        let stages = d.stages.clone().map(|s| StageOptions {
            depths: vec![s.depths[0]],
            widths: ends(&s.widths),
            expansions: ends(&s.expansions),
        });
        SearchSpace {
            scales: ends(&d.scales),
            stem_depths: vec![d.stem_depths[0], d.stem_depths[2]],
            stem_widths: ends(&d.stem_widths),
            stages,
            ..d
        }
    }

    /// Looks up a named preset (`default` or `compact`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "compact" => Some(Self::compact()),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<(), SpaceError> {
        check_sorted_f64("scales", &self.scales)?;
        check_sorted_usize("stem_depths", &self.stem_depths)?;
        check_sorted_f64("stem_widths", &self.stem_widths)?;
        if self.stem_depths[0] == 0 {
            return Err(SpaceError("stem_depths: depth must be at least 1".into()));
        }
        check_distinct_channels("stem_widths", &self.stem_widths, self.default_widths[0])?;
        for (s, st) in self.stages.iter().enumerate() {
            let name = format!("stage {}", s + 1);
            check_sorted_usize(&format!("{name} depths"), &st.depths)?;
            check_sorted_f64(&format!("{name} widths"), &st.widths)?;
            check_sorted_f64(&format!("{name} expansions"), &st.expansions)?;
            if st.depths[0] == 0 || *st.depths.last().unwrap() > STAGE_SLOTS[s] {
                return Err(SpaceError(format!(
                    "{name}: depths must lie in 1..={}",
                    STAGE_SLOTS[s]
                )));
            }
            let out = self.default_widths[s + 1];
            check_distinct_channels(&format!("{name} widths"), &st.widths, out)?;
            check_distinct_channels(&format!("{name} expansions"), &st.expansions, out / 4)?;
        }
        // Every alphabet must fit in a u8 gene.
        if self.alphabet_sizes().iter().any(|&a| a > u8::MAX as usize) {
            return Err(SpaceError("option list longer than 255".into()));
        }
        Ok(())
    }

    /// Number of admissible values for every gene position.
    pub fn alphabet_sizes(&self) -> [usize; GENOTYPE_LEN] {
        let mut a = [0; GENOTYPE_LEN];
        a[SCALE_GENE] = self.scales.len();
        a[STEM_DEPTH_GENE] = self.stem_depths.len();
        a[STEM_WIDTH_GENE] = self.stem_widths.len();
        for (s, st) in self.stages.iter().enumerate() {
            let off = STAGE_OFFSETS[s];
            a[off] = st.depths.len();
            a[off + 1] = st.widths.len();
            for slot in 0..STAGE_SLOTS[s] {
                a[off + 2 + slot] = st.expansions.len() + 1;
            }
        }
        a
    }

    /// Length of the one-hot feature vector.
    pub fn one_hot_dim(&self) -> usize {
        self.alphabet_sizes().iter().sum()
    }

    /// Canonical genotype count and raw string count (padded slots free).
    pub fn cardinality(&self) -> (u128, u128) {
        let mut canonical: u128 =
            (self.scales.len() * self.stem_depths.len() * self.stem_widths.len()) as u128;
        let mut raw = canonical;
        for (s, st) in self.stages.iter().enumerate() {
            let e = st.expansions.len() as u128;
            let per_depth: u128 = st.depths.iter().map(|&d| e.pow(d as u32)).sum();
            canonical *= st.widths.len() as u128 * per_depth;
            raw *= (st.depths.len() * st.widths.len()) as u128 * e.pow(STAGE_SLOTS[s] as u32);
        }
        (canonical, raw)
    }
}

/// A 29-gene architecture string.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Genotype(pub [u8; GENOTYPE_LEN]);

impl Genotype {
    pub fn genes(&self) -> &[u8; GENOTYPE_LEN] {
        &self.0
    }

    /// Active layer count of `stage` (0-based).
    pub fn stage_depth(&self, space: &SearchSpace, stage: usize) -> usize {
        space.stages[stage].depths[self.0[STAGE_OFFSETS[stage]] as usize]
    }

    /// The all-minimum canonical genotype.
    pub fn minimum(space: &SearchSpace) -> Self {
        let mut g = [0u8; GENOTYPE_LEN];
        for (s, st) in space.stages.iter().enumerate() {
            let off = STAGE_OFFSETS[s];
            for slot in 0..st.depths[0] {
                g[off + 2 + slot] = 1;
            }
        }
        Genotype(g)
    }

    /// The all-maximum canonical genotype.
    pub fn maximum(space: &SearchSpace) -> Self {
        let sizes = space.alphabet_sizes();
        let mut g = [0u8; GENOTYPE_LEN];
        for i in 0..3 {
            g[i] = (sizes[i] - 1) as u8;
        }
        for (s, st) in space.stages.iter().enumerate() {
            let off = STAGE_OFFSETS[s];
            g[off] = (st.depths.len() - 1) as u8;
            g[off + 1] = (st.widths.len() - 1) as u8;
            let depth = *st.depths.last().unwrap();
            for slot in 0..depth {
                g[off + 2 + slot] = st.expansions.len() as u8;
            }
        }
        Genotype(g)
    }

    pub fn validate(&self, space: &SearchSpace) -> Result<(), GenotypeError> {
        check_alphabet(self, space)?;
        for (s, st) in space.stages.iter().enumerate() {
            let off = STAGE_OFFSETS[s];
            let depth = st.depths[self.0[off] as usize];
            for slot in 0..STAGE_SLOTS[s] {
                let index = off + 2 + slot;
                let value = self.0[index];
                if slot < depth && value == 0 {
                    return Err(GenotypeError::MissingExpansion { index });
                }
                if slot >= depth && value != 0 {
                    return Err(GenotypeError::PaddingNotZero { index, value });
                }
            }
        }
        Ok(())
    }

    /// Zeroes padded slots and repairs zero active slots to the lowest
    /// expansion option. Idempotent.
    pub fn canonicalize(&self, space: &SearchSpace) -> Result<Genotype, GenotypeError> {
        check_alphabet(self, space)?;
        let mut g = self.0;
        for (s, st) in space.stages.iter().enumerate() {
            let off = STAGE_OFFSETS[s];
            let depth = st.depths[g[off] as usize];
            for slot in 0..STAGE_SLOTS[s] {
                let v = &mut g[off + 2 + slot];
                if slot >= depth {
                    *v = 0;
                } else if *v == 0 {
                    *v = 1;
                }
            }
        }
        Ok(Genotype(g))
    }

    /// Uniform sample over canonical strings, drawn gene by gene: depth first,
    /// then one expansion option per active layer.
    pub fn random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Genotype {
        let mut g = [0u8; GENOTYPE_LEN];
        g[SCALE_GENE] = rng.random_range(0..space.scales.len()) as u8;
        g[STEM_DEPTH_GENE] = rng.random_range(0..space.stem_depths.len()) as u8;
        g[STEM_WIDTH_GENE] = rng.random_range(0..space.stem_widths.len()) as u8;
        for (s, st) in space.stages.iter().enumerate() {
            let off = STAGE_OFFSETS[s];
            let di = rng.random_range(0..st.depths.len());
            g[off] = di as u8;
            g[off + 1] = rng.random_range(0..st.widths.len()) as u8;
            for slot in 0..st.depths[di] {
                g[off + 2 + slot] = rng.random_range(1..=st.expansions.len()) as u8;
            }
        }
        Genotype(g)
    }

    /// Dense one-hot vector: one active bit per gene, groups in gene order.
    pub fn one_hot(&self, space: &SearchSpace) -> Vec<f64> {
        let mut v = vec![0.0; space.one_hot_dim()];
        self.write_one_hot(&space.alphabet_sizes(), &mut v);
        v
    }

    pub(crate) fn write_one_hot(&self, sizes: &[usize; GENOTYPE_LEN], out: &mut [f64]) {
        let mut base = 0;
        for (i, &size) in sizes.iter().enumerate() {
            out[base + self.0[i] as usize] = 1.0;
            base += size;
        }
    }

    pub fn decode(&self, space: &SearchSpace) -> Result<ArchitectureDesc, GenotypeError> {
        self.validate(space)?;
        let g = &self.0;
        let image_scale = space.scales[g[SCALE_GENE] as usize];
        let stem = StemDesc {
            depth: space.stem_depths[g[STEM_DEPTH_GENE] as usize],
            channels: channels(space.stem_widths[g[STEM_WIDTH_GENE] as usize], space.default_widths[0]),
        };
        let stages = space
            .stages
            .iter()
            .enumerate()
            .map(|(s, st)| {
                let off = STAGE_OFFSETS[s];
                let depth = st.depths[g[off] as usize];
                let out = space.default_widths[s + 1];
                StageDesc {
                    output_channels: channels(st.widths[g[off + 1] as usize], out),
                    mid_channels: (0..depth)
                        .map(|l| channels(st.expansions[g[off + 2 + l] as usize - 1], out / 4))
                        .collect(),
                }
            })
            .collect::<Vec<_>>();
        let (h, w) = space.input_resolution;
        let resolution = (
            ((h as f64) * image_scale).round() as usize,
            ((w as f64) * image_scale).round() as usize,
        );
        let mut desc = ArchitectureDesc { image_scale, resolution, stem, stages, gflops: 0.0 };
        desc.gflops = desc.estimate_macs() / 1e9;
        Ok(desc)
    }

    /// Inverse of [`Genotype::decode`] on canonical genotypes.
    pub fn encode(desc: &ArchitectureDesc, space: &SearchSpace) -> Result<Genotype, GenotypeError> {
        fn find<T: PartialEq + Copy + fmt::Debug>(what: &str, opts: &[T], v: T) -> Result<u8, GenotypeError> {
            opts.iter()
                .position(|o| *o == v)
                .map(|i| i as u8)
                .ok_or_else(|| GenotypeError::Unencodable(format!("{what} {v:?} not in {opts:?}")))
        }
        fn find_ch(what: &str, mults: &[f64], base: usize, ch: usize) -> Result<u8, GenotypeError> {
            let opts: Vec<usize> = mults.iter().map(|m| channels(*m, base)).collect();
            find(what, &opts, ch)
        }
        if desc.stages.len() != NUM_STAGES {
            return Err(GenotypeError::Unencodable(format!("{} stages", desc.stages.len())));
        }
        let mut g = [0u8; GENOTYPE_LEN];
        g[SCALE_GENE] = find("scale", &space.scales, desc.image_scale)?;
        g[STEM_DEPTH_GENE] = find("stem depth", &space.stem_depths, desc.stem.depth)?;
        g[STEM_WIDTH_GENE] =
            find_ch("stem channels", &space.stem_widths, space.default_widths[0], desc.stem.channels)?;
        for (s, (st, sd)) in space.stages.iter().zip(&desc.stages).enumerate() {
            let off = STAGE_OFFSETS[s];
            let out = space.default_widths[s + 1];
            g[off] = find("stage depth", &st.depths, sd.mid_channels.len())?;
            g[off + 1] = find_ch("stage channels", &st.widths, out, sd.output_channels)?;
            for (l, &mid) in sd.mid_channels.iter().enumerate() {
                g[off + 2 + l] = find_ch("mid channels", &st.expansions, out / 4, mid)? + 1;
            }
        }
        Ok(Genotype(g))
    }
}

fn check_alphabet(g: &Genotype, space: &SearchSpace) -> Result<(), GenotypeError> {
    for (index, (&value, size)) in g.0.iter().zip(space.alphabet_sizes()).enumerate() {
        if value as usize >= size {
            return Err(GenotypeError::OutOfRange { index, value, size });
        }
    }
    Ok(())
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Genotype {
    type Err = GenotypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != GENOTYPE_LEN {
            return Err(GenotypeError::Length(parts.len()));
        }
        let mut g = [0u8; GENOTYPE_LEN];
        for (slot, p) in g.iter_mut().zip(parts) {
            *slot = p.parse().map_err(|_| GenotypeError::Parse(p.to_string()))?;
        }
        Ok(Genotype(g))
    }
}

impl TryFrom<&[u8]> for Genotype {
    type Error = GenotypeError;

    fn try_from(v: &[u8]) -> Result<Self, Self::Error> {
        let arr: [u8; GENOTYPE_LEN] = v.try_into().map_err(|_| GenotypeError::Length(v.len()))?;
        Ok(Genotype(arr))
    }
}

/// Integer-string features (one input per gene), the non-sparse baseline.
pub fn integer_features(g: &Genotype) -> Vec<f64> {
    g.0.iter().map(|&v| f64::from(v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StemDesc {
    pub depth: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageDesc {
    pub output_channels: usize,
    /// One entry per active layer.
    pub mid_channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchitectureDesc {
    pub image_scale: f64,
    /// Input resolution after scaling.
    pub resolution: (usize, usize),
    pub stem: StemDesc,
    pub stages: Vec<StageDesc>,
    /// Multiply-accumulate count in billions, the usual "FLOPs" of CNN tables.
    pub gflops: f64,
}

impl ArchitectureDesc {
    /// Stem: 3x3 convs (first one strided) then a stride-2 max-pool. Each
    /// stage is a run of residual bottlenecks; the first layer of stages 2–4
    /// is strided and every first layer carries a projection shortcut.
    fn estimate_macs(&self) -> f64 {
        let down = |(h, w): (usize, usize)| (h.div_ceil(2), w.div_ceil(2));
        let area = |(h, w): (usize, usize)| (h * w) as f64;
        let mut res = down(self.resolution);
        let c0 = self.stem.channels as f64;
        let mut macs = 9.0 * 3.0 * c0 * area(res);
        macs += (self.stem.depth - 1) as f64 * 9.0 * c0 * c0 * area(res);
        res = down(res);
        let mut cin = c0;
        for (s, st) in self.stages.iter().enumerate() {
            let cout = st.output_channels as f64;
            for (l, &mid) in st.mid_channels.iter().enumerate() {
                let mid = mid as f64;
                let res_in = res;
                if l == 0 && s > 0 {
                    res = down(res);
                }
                macs += cin * mid * area(res_in);
                macs += 9.0 * mid * mid * area(res);
                macs += mid * cout * area(res);
                if l == 0 {
                    macs += cin * cout * area(res);
                }
                cin = cout;
            }
        }
        macs
    }
}

/// Every canonical genotype of `space`, in lexicographic block order.
pub fn enumerate_canonical(space: &SearchSpace) -> impl Iterator<Item = Genotype> + '_ {
    let stage_blocks: Vec<Vec<Vec<u8>>> = space
        .stages
        .iter()
        .enumerate()
        .map(|(s, st)| {
            let mut out = Vec::new();
            for di in 0..st.depths.len() {
                let depth = st.depths[di];
                for wi in 0..st.widths.len() {
                    let e = st.expansions.len();
                    for code in 0..e.pow(depth as u32) {
                        let mut genes = vec![0u8; 2 + STAGE_SLOTS[s]];
                        genes[0] = di as u8;
                        genes[1] = wi as u8;
                        let mut c = code;
                        for l in 0..depth {
                            genes[2 + l] = (c % e) as u8 + 1;
                            c /= e;
                        }
                        out.push(genes);
                    }
                }
            }
            out
        })
        .collect();
    let radices: Vec<usize> = [space.scales.len(), space.stem_depths.len(), space.stem_widths.len()]
        .into_iter()
        .chain(stage_blocks.iter().map(Vec::len))
        .collect();
    let total: usize = radices.iter().product();
    (0..total).map(move |mut k| {
        let mut digits = vec![0usize; radices.len()];
        for i in (0..radices.len()).rev() {
            digits[i] = k % radices[i];
            k /= radices[i];
        }
        let mut g = [0u8; GENOTYPE_LEN];
        g[SCALE_GENE] = digits[0] as u8;
        g[STEM_DEPTH_GENE] = digits[1] as u8;
        g[STEM_WIDTH_GENE] = digits[2] as u8;
        for s in 0..NUM_STAGES {
            let block = &stage_blocks[s][digits[3 + s]];
            g[STAGE_OFFSETS[s]..STAGE_OFFSETS[s] + block.len()].copy_from_slice(block);
        }
        Genotype(g)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn space() -> SearchSpace {
        SearchSpace::default()
    }

    #[test]
    fn default_space_is_valid() {
        space().check().unwrap();
        SearchSpace::compact().check().unwrap();
        assert_eq!(STAGE_OFFSETS[3] + 2 + STAGE_SLOTS[3], GENOTYPE_LEN);
    }

    #[test]
    fn one_hot_dimension() {
        assert_eq!(space().one_hot_dim(), 3 + (3 + 3) + 2 * (3 + 3 + 4 * 4) + (3 + 3 + 6 * 4) + (3 + 3 + 4 * 4));
        assert_eq!(space().one_hot_dim(), 105);
    }

    #[test]
    fn cardinality_closed_form() {
        let (canonical, raw) = space().cardinality();
        assert_eq!(canonical, 3 * 9 * 351 * 351 * 3159 * 351);
        assert_eq!(raw, 3 * 9 * 729 * 729 * 6561 * 729);
        assert!((canonical as f64 - 3.69e12).abs() < 0.01e12);
        assert!((raw as f64 - 6.86e13).abs() < 0.01e13);
    }

    #[test]
    fn degenerate_space_has_one_genotype() {
        let mut s = space();
        s.scales = vec![1.0];
        s.stem_depths = vec![2];
        s.stem_widths = vec![1.0];
        for st in &mut s.stages {
            st.depths = vec![st.depths[0]];
            st.widths = vec![1.0];
            st.expansions = vec![1.0];
        }
        s.check().unwrap();
        assert_eq!(s.cardinality().0, 1);
        assert_eq!(enumerate_canonical(&s).count(), 1);
    }

    #[test]
    fn cardinality_matches_enumeration_on_reduced_space() {
        let mut s = space();
        s.scales = vec![0.5, 1.0];
        s.stem_depths = vec![1, 3];
        s.stem_widths = vec![1.0];
        for (i, st) in s.stages.iter_mut().enumerate() {
            st.depths = if i == 1 { vec![1, 2] } else { vec![st.depths[0]] };
            st.widths = vec![1.0];
            st.expansions = vec![0.8, 1.4];
        }
        s.check().unwrap();
        let set: HashSet<Genotype> = enumerate_canonical(&s).collect();
        assert!(set.len() <= 100_000);
        assert_eq!(set.len() as u128, s.cardinality().0);
        assert!(set.iter().all(|g| g.validate(&s).is_ok()));
        assert_eq!(enumerate_canonical(&SearchSpace::compact()).count(), 131_072);
    }

    #[test]
    fn validate_reports_first_offender() {
        let s = space();
        assert!(Genotype::minimum(&s).validate(&s).is_ok());
        assert!(Genotype::maximum(&s).validate(&s).is_ok());

        let mut g = Genotype::minimum(&s);
        g.0[7] = 2; // stage 1 depth 2, third slot set
        let err = g.validate(&s).unwrap_err();
        assert_eq!(err.index(), Some(7));
        assert!(matches!(err, GenotypeError::PaddingNotZero { .. }));

        let mut g = Genotype::minimum(&s);
        g.0[0] = 3;
        let err = g.validate(&s).unwrap_err();
        assert!(matches!(err, GenotypeError::OutOfRange { index: 0, .. }));
        assert!(err.to_string().contains("out of range"));

        let mut g = Genotype::minimum(&s);
        g.0[5] = 0;
        assert_eq!(g.validate(&s).unwrap_err(), GenotypeError::MissingExpansion { index: 5 });
    }

    #[test]
    fn canonicalize_examples() {
        let s = space();
        let g = Genotype::maximum(&s);
        assert_eq!(g.canonicalize(&s).unwrap(), g);

        // stage 1 depth option 0 = 2 layers
        let mut g = Genotype::minimum(&s);
        g.0[5..9].copy_from_slice(&[1, 2, 3, 1]);
        assert_eq!(&g.canonicalize(&s).unwrap().0[5..9], &[1, 2, 0, 0]);

        // depth option 1 = 3 layers
        let mut g = Genotype::minimum(&s);
        g.0[3] = 1;
        g.0[5..9].copy_from_slice(&[2, 0, 1, 0]);
        assert_eq!(&g.canonicalize(&s).unwrap().0[5..9], &[2, 1, 1, 0]);

        let mut g = Genotype::minimum(&s);
        g.0[2] = 9;
        assert!(g.canonicalize(&s).is_err());
    }

    #[test]
    fn decode_extremes() {
        let s = space();
        let max = Genotype::maximum(&s).decode(&s).unwrap();
        assert_eq!(max.image_scale, 1.0);
        assert_eq!(max.stem.depth, 3);
        assert_eq!(max.stem.channels, 64);
        let depths: Vec<usize> = max.stages.iter().map(|st| st.mid_channels.len()).collect();
        assert_eq!(depths, vec![4, 4, 6, 4]);
        let outs: Vec<usize> = max.stages.iter().map(|st| st.output_channels).collect();
        assert_eq!(outs, vec![256, 512, 1024, 2048]);
        assert_eq!(max.stages[0].mid_channels[0], 90); // round(1.4 * 64)

        let min = Genotype::minimum(&s).decode(&s).unwrap();
        assert_eq!(min.image_scale, 0.5);
        let depths: Vec<usize> = min.stages.iter().map(|st| st.mid_channels.len()).collect();
        assert_eq!(depths, vec![2, 2, 4, 2]);
        assert_eq!(min.stem.channels, 38); // round(0.6 * 64)
        assert!(min.gflops > 0.0 && min.gflops < max.gflops);
    }

    #[test]
    fn round_trip_and_one_hot_properties() {
        let s = space();
        let sizes = s.alphabet_sizes();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut seen = HashSet::new();
        let mut vecs = HashSet::new();
        for _ in 0..10_000 {
            let g = Genotype::random(&s, &mut rng);
            assert!(g.validate(&s).is_ok());
            let desc = g.decode(&s).unwrap();
            assert_eq!(Genotype::encode(&desc, &s).unwrap(), g);
            let v = g.one_hot(&s);
            assert_eq!(v.len(), 105);
            assert_eq!(v.iter().sum::<f64>(), 29.0);
            let bits: Vec<u8> = v.iter().map(|&x| x as u8).collect();
            if seen.insert(g) {
                assert!(vecs.insert(bits), "one-hot collision");
            }
            // one gene changed -> Hamming distance 2
            let mut h = g;
            h.0[SCALE_GENE] = (h.0[SCALE_GENE] + 1) % sizes[SCALE_GENE] as u8;
            let w = h.one_hot(&s);
            let dist = v.iter().zip(&w).filter(|(a, b)| a != b).count();
            assert_eq!(dist, 2);
        }
    }

    #[test]
    fn random_is_seeded() {
        let s = space();
        let a = Genotype::random(&s, &mut ChaCha8Rng::seed_from_u64(3));
        let b = Genotype::random(&s, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    /// Pearson chi-square over each independently drawn gene. The 0.999
    /// quantile bounds are df=1: 10.83, df=2: 13.82.
    #[test]
    fn random_marginals_are_uniform() {
        let s = space();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let samples: Vec<Genotype> = (0..n).map(|_| Genotype::random(&s, &mut rng)).collect();
        let chi2 = |counts: &[usize]| {
            let total: usize = counts.iter().sum();
            let exp = total as f64 / counts.len() as f64;
            counts.iter().map(|&c| (c as f64 - exp).powi(2) / exp).sum::<f64>()
        };
        let crit = |k: usize| if k == 2 { 10.83 } else { 13.82 };
        let mut free_genes = vec![SCALE_GENE, STEM_DEPTH_GENE, STEM_WIDTH_GENE];
        for off in STAGE_OFFSETS {
            free_genes.extend([off, off + 1]);
        }
        let sizes = s.alphabet_sizes();
        for &i in &free_genes {
            let mut counts = vec![0; sizes[i]];
            for g in &samples {
                counts[g.0[i] as usize] += 1;
            }
            assert!(chi2(&counts) < crit(sizes[i]), "gene {i}: {counts:?}");
        }
        // active expansion slots are uniform over the nonzero options
        for (st, off) in STAGE_OFFSETS.iter().enumerate() {
            let mut counts = vec![0; s.stages[st].expansions.len()];
            for g in &samples {
                counts[g.0[off + 2] as usize - 1] += 1;
            }
            assert!(chi2(&counts) < crit(counts.len()), "stage {st}: {counts:?}");
        }
    }

    #[test]
    fn text_form_round_trips() {
        let s = space();
        let g = Genotype::maximum(&s);
        let text = g.to_string();
        assert_eq!(text.split(' ').count(), 29);
        assert_eq!(text.parse::<Genotype>().unwrap(), g);
        assert!("1 2 3".parse::<Genotype>().is_err());
    }

    #[test]
    fn space_rejects_bad_options() {
        let mut s = space();
        s.scales = vec![1.0, 0.5];
        assert!(s.check().is_err());
        let mut s = space();
        s.stages[0].depths = vec![2, 5];
        assert!(s.check().is_err());
        let mut s = space();
        s.stem_widths = vec![];
        assert!(s.check().is_err());
    }
}
