//! Additive latency look-up table.
//!
//! Expected latency of an architecture is the sum of one table entry per
//! active encoder layer, a stem entry, and constant tail and decoder terms.
//! Layer entries are keyed by input scale, stage, whether the layer is the
//! (strided) first layer of its stage, and the width/expansion options.
//!
//! File format, one record per line:
//!
//! ```text
//! #stem scale_idx,d,m,lat_ms
//! #tail lat_ms
//! #decoder scale_idx,lat_ms
//! scale_idx,block,first_layer,m_idx,e_idx,lat_ms
//! ```
//!
//! `block` is the 1-based stage number, `d`/`m`/`m_idx`/`e_idx` are 0-based
//! option indices. Other lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::encoding::{Genotype, GenotypeError, SearchSpace, NUM_STAGES, SCALE_GENE, STAGE_OFFSETS, STEM_DEPTH_GENE, STEM_WIDTH_GENE};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("missing latency entry: {0}")]
    MissingKey(String),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("non-positive or non-finite latency {value} for {key}")]
    NonPositive { key: String, value: f64 },
    #[error(transparent)]
    Genotype(#[from] GenotypeError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerKey {
    pub scale: u8,
    /// Stage number, 1..=4.
    pub block: u8,
    pub first_layer: bool,
    pub width: u8,
    pub expansion: u8,
}

impl std::fmt::Display for LayerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.scale, self.block, u8::from(self.first_layer), self.width, self.expansion
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StemKey {
    pub scale: u8,
    pub depth: u8,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic,
    Measured(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyTable {
    pub layers: BTreeMap<LayerKey, f64>,
    pub stems: BTreeMap<StemKey, f64>,
    pub tail_ms: f64,
    /// Decoder latency per scale index.
    pub decoder_ms: BTreeMap<u8, f64>,
    pub provenance: Provenance,
}

/// Base per-layer cost of each stage at full scale, in milliseconds.
const SYNTHETIC_STAGE_MS: [f64; NUM_STAGES] = [1.00, 0.55, 0.30, 0.18];

impl LatencyTable {
    pub fn empty(provenance: Provenance) -> Self {
        LatencyTable {
            layers: BTreeMap::new(),
            stems: BTreeMap::new(),
            tail_ms: 0.0,
            decoder_ms: BTreeMap::new(),
            provenance,
        }
    }

    /// Deterministic stand-in for a measured table:
    /// layer = B_stage · s² · m · (0.6 + 0.4·e) · (1.4 if first) + 0.03,
    /// stem = 0.5 · s² · d · m, tail = 0.1, decoder = 0.8 · s².
    pub fn synthetic(space: &SearchSpace) -> Self {
        let mut t = LatencyTable::empty(Provenance::Synthetic);
        for (si, &s) in space.scales.iter().enumerate() {
            let s2 = s * s;
            for (block, st) in space.stages.iter().enumerate() {
                for first_layer in [true, false] {
                    for (wi, &m) in st.widths.iter().enumerate() {
                        for (ei, &e) in st.expansions.iter().enumerate() {
                            let first = if first_layer { 1.4 } else { 1.0 };
                            let lat = SYNTHETIC_STAGE_MS[block] * s2 * m * (0.6 + 0.4 * e) * first + 0.03;
                            let key = LayerKey {
                                scale: si as u8,
                                block: block as u8 + 1,
                                first_layer,
                                width: wi as u8,
                                expansion: ei as u8,
                            };
                            t.layers.insert(key, lat);
                        }
                    }
                }
            }
            for (di, &d) in space.stem_depths.iter().enumerate() {
                for (wi, &m) in space.stem_widths.iter().enumerate() {
                    let key = StemKey { scale: si as u8, depth: di as u8, width: wi as u8 };
                    t.stems.insert(key, 0.5 * s2 * d as f64 * m);
                }
            }
            t.decoder_ms.insert(si as u8, 0.8 * s2);
        }
        t.tail_ms = 0.1;
        t
    }

    fn layer(&self, key: LayerKey) -> Result<f64, TableError> {
        self.layers.get(&key).copied().ok_or_else(|| TableError::MissingKey(format!("layer {key}")))
    }

    /// Table entry of every active layer, stage by stage.
    pub fn layer_latencies(&self, space: &SearchSpace, g: &Genotype) -> Result<Vec<f64>, TableError> {
        g.validate(space)?;
        let scale = g.0[SCALE_GENE];
        let mut out = Vec::new();
        for s in 0..NUM_STAGES {
            let off = STAGE_OFFSETS[s];
            let depth = g.stage_depth(space, s);
            for l in 0..depth {
                out.push(self.layer(LayerKey {
                    scale,
                    block: s as u8 + 1,
                    first_layer: l == 0,
                    width: g.0[off + 1],
                    expansion: g.0[off + 2 + l] - 1,
                })?);
            }
        }
        Ok(out)
    }

    /// Sum over active layers plus stem, tail and decoder. No interpolation.
    pub fn predict(&self, space: &SearchSpace, g: &Genotype) -> Result<f64, TableError> {
        let layers: f64 = self.layer_latencies(space, g)?.iter().sum();
        let scale = g.0[SCALE_GENE];
        let stem_key = StemKey { scale, depth: g.0[STEM_DEPTH_GENE], width: g.0[STEM_WIDTH_GENE] };
        let stem = self
            .stems
            .get(&stem_key)
            .copied()
            .ok_or_else(|| TableError::MissingKey(format!("stem {},{},{}", scale, stem_key.depth, stem_key.width)))?;
        let decoder = self
            .decoder_ms
            .get(&scale)
            .copied()
            .ok_or_else(|| TableError::MissingKey(format!("decoder {scale}")))?;
        Ok(layers + stem + self.tail_ms + decoder)
    }

    /// Every key the space can reach, in file order.
    fn required_keys(space: &SearchSpace) -> (Vec<LayerKey>, Vec<StemKey>) {
        let mut layers = Vec::new();
        let mut stems = Vec::new();
        for si in 0..space.scales.len() as u8 {
            for (block, st) in space.stages.iter().enumerate() {
                for first_layer in [true, false] {
                    for width in 0..st.widths.len() as u8 {
                        for expansion in 0..st.expansions.len() as u8 {
                            layers.push(LayerKey { scale: si, block: block as u8 + 1, first_layer, width, expansion });
                        }
                    }
                }
            }
            for depth in 0..space.stem_depths.len() as u8 {
                for width in 0..space.stem_widths.len() as u8 {
                    stems.push(StemKey { scale: si, depth, width });
                }
            }
        }
        (layers, stems)
    }

    /// Completeness and positivity over the space.
    pub fn check_complete(&self, space: &SearchSpace) -> Result<(), TableError> {
        let positive = |key: String, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(TableError::NonPositive { key, value: v })
            }
        };
        let (layers, stems) = Self::required_keys(space);
        for k in layers {
            positive(format!("layer {k}"), self.layer(k)?)?;
        }
        for k in stems {
            let v = self
                .stems
                .get(&k)
                .copied()
                .ok_or_else(|| TableError::MissingKey(format!("stem {},{},{}", k.scale, k.depth, k.width)))?;
            positive(format!("stem {},{},{}", k.scale, k.depth, k.width), v)?;
        }
        for si in 0..space.scales.len() as u8 {
            let v = self
                .decoder_ms
                .get(&si)
                .copied()
                .ok_or_else(|| TableError::MissingKey(format!("decoder {si}")))?;
            positive(format!("decoder {si}"), v)?;
        }
        positive("tail".into(), self.tail_ms)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.stems {
            writeln!(out, "#stem {},{},{},{v}", k.scale, k.depth, k.width).unwrap();
        }
        writeln!(out, "#tail {}", self.tail_ms).unwrap();
        for (s, v) in &self.decoder_ms {
            writeln!(out, "#decoder {s},{v}").unwrap();
        }
        for (k, v) in &self.layers {
            writeln!(out, "{k},{v}").unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), TableError> {
        std::fs::write(path, self.to_text())
            .map_err(|source| TableError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path, space: &SearchSpace) -> Result<LoadedTable, TableError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TableError::Io { path: path.display().to_string(), source })?;
        let mut loaded = Self::parse(&text, space)?;
        loaded.table.provenance = Provenance::Measured(path.display().to_string());
        Ok(loaded)
    }

    /// Parses and checks a table. Records outside the space are counted and
    /// skipped.
    pub fn parse(text: &str, space: &SearchSpace) -> Result<LoadedTable, TableError> {
        let mut t = LatencyTable::empty(Provenance::Synthetic);
        let mut ignored = 0;
        let mut tail_seen = false;
        let sizes = space.alphabet_sizes();
        let n_scales = space.scales.len() as u8;
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            let bad = |msg: String| TableError::Malformed { line, msg };
            let fields = |s: &str, n: usize| -> Result<Vec<String>, TableError> {
                let f: Vec<String> = s.split(',').map(|x| x.trim().to_string()).collect();
                if f.len() != n {
                    return Err(bad(format!("expected {n} fields, found {}", f.len())));
                }
                Ok(f)
            };
            let int = |s: &str| s.parse::<u8>().map_err(|_| bad(format!("bad index {s:?}")));
            let num = |s: &str| -> Result<f64, TableError> {
                let v: f64 = s.parse().map_err(|_| bad(format!("bad latency {s:?}")))?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(TableError::NonPositive { key: format!("line {line}"), value: v });
                }
                Ok(v)
            };
            if let Some(rest) = row.strip_prefix("#stem ") {
                let f = fields(rest, 4)?;
                let key = StemKey { scale: int(&f[0])?, depth: int(&f[1])?, width: int(&f[2])? };
                let v = num(&f[3])?;
                if key.scale < n_scales
                    && (key.depth as usize) < sizes[STEM_DEPTH_GENE]
                    && (key.width as usize) < sizes[STEM_WIDTH_GENE]
                {
                    t.stems.insert(key, v);
                } else {
                    ignored += 1;
                }
            } else if let Some(rest) = row.strip_prefix("#tail ") {
                t.tail_ms = num(fields(rest, 1)?[0].as_str())?;
                tail_seen = true;
            } else if let Some(rest) = row.strip_prefix("#decoder ") {
                let f = fields(rest, 2)?;
                let s = int(&f[0])?;
                let v = num(&f[1])?;
                if s < n_scales {
                    t.decoder_ms.insert(s, v);
                } else {
                    ignored += 1;
                }
            } else if row.starts_with('#') {
                continue;
            } else {
                let f = fields(row, 6)?;
                let first_layer = match f[2].as_str() {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(format!("first_layer must be 0 or 1, found {other:?}"))),
                };
                let key = LayerKey {
                    scale: int(&f[0])?,
                    block: int(&f[1])?,
                    first_layer,
                    width: int(&f[3])?,
                    expansion: int(&f[4])?,
                };
                let v = num(&f[5])?;
                let known = key.scale < n_scales
                    && (1..=NUM_STAGES as u8).contains(&key.block)
                    && {
                        let st = &space.stages[key.block as usize - 1];
                        (key.width as usize) < st.widths.len() && (key.expansion as usize) < st.expansions.len()
                    };
                if known {
                    t.layers.insert(key, v);
                } else {
                    ignored += 1;
                }
            }
        }
        if !tail_seen {
            return Err(TableError::MissingKey("tail".into()));
        }
        t.check_complete(space)?;
        if ignored > 0 {
            log::warn!("latency table: ignored {ignored} record(s) outside the search space");
        }
        Ok(LoadedTable { table: t, ignored })
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTable {
    pub table: LatencyTable,
    /// Records skipped because their keys fall outside the space.
    pub ignored: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn synthetic_entries() {
        let space = SearchSpace::default();
        let t = LatencyTable::synthetic(&space);
        t.check_complete(&space).unwrap();
        let key = |scale| LayerKey { scale, block: 1, first_layer: false, width: 2, expansion: 2 };
        assert!((t.layers[&key(2)] - 1.19).abs() < 1e-12);
        assert!((t.layers[&key(0)] - 0.32).abs() < 1e-12);
        assert!(t.layers.values().all(|&v| v > 0.03));
        // 3 scales x 4 stages x 2 positions x 9 options
        assert_eq!(t.layers.len(), 3 * 4 * 2 * 9);
    }

    #[test]
    fn hand_sum_of_two_layer_stage() {
        let space = SearchSpace::default();
        let mut t = LatencyTable::synthetic(&space);
        for v in t.layers.values_mut() {
            *v = 0.0;
        }
        let g = Genotype::minimum(&space);
        let stem = StemKey { scale: 0, depth: 0, width: 0 };
        t.stems.insert(stem, 0.5);
        t.tail_ms = 0.1;
        t.decoder_ms.insert(0, 0.8);
        // layers all zero: only the constants remain
        assert!((t.predict(&space, &g).unwrap() - 1.4).abs() < 1e-12);
        let k = |first_layer| LayerKey { scale: 0, block: 1, first_layer, width: 0, expansion: 0 };
        t.layers.insert(k(true), 1.0);
        t.layers.insert(k(false), 0.8);
        assert!((t.predict(&space, &g).unwrap() - 3.2).abs() < 1e-12);
    }

    #[test]
    fn adding_a_layer_adds_its_entry() {
        let space = SearchSpace::default();
        let t = LatencyTable::synthetic(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let g = Genotype::random(&space, &mut rng);
            for s in 0..NUM_STAGES {
                let off = STAGE_OFFSETS[s];
                if g.0[off] == 0 {
                    continue;
                }
                let mut shorter = g;
                shorter.0[off] -= 1;
                let shorter = shorter.canonicalize(&space).unwrap();
                let depth = g.stage_depth(&space, s);
                let removed = t.layers[&LayerKey {
                    scale: g.0[SCALE_GENE],
                    block: s as u8 + 1,
                    first_layer: false,
                    width: g.0[off + 1],
                    expansion: g.0[off + 2 + depth - 1] - 1,
                }];
                let diff = t.predict(&space, &g).unwrap() - t.predict(&space, &shorter).unwrap();
                assert!(diff > 0.0);
                assert!((diff - removed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scale_monotone() {
        let space = SearchSpace::default();
        let t = LatencyTable::synthetic(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mut g = Genotype::random(&space, &mut rng);
            let mut prev = 0.0;
            for s in 0..space.scales.len() {
                g.0[SCALE_GENE] = s as u8;
                let v = t.predict(&space, &g).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let space = SearchSpace::default();
        let mut t = LatencyTable::synthetic(&space);
        // values without short decimal forms
        for (i, v) in t.layers.values_mut().enumerate() {
            *v += (i as f64).sqrt() / 7.0;
        }
        let loaded = LatencyTable::parse(&t.to_text(), &space).unwrap();
        assert_eq!(loaded.ignored, 0);
        assert_eq!(loaded.table.layers, t.layers);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let g = Genotype::random(&space, &mut rng);
            assert_eq!(
                t.predict(&space, &g).unwrap().to_bits(),
                loaded.table.predict(&space, &g).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn missing_key_is_named() {
        let space = SearchSpace::default();
        let text = LatencyTable::synthetic(&space).to_text();
        let dropped: String = text.lines().filter(|l| !l.starts_with("2,3,1,1,0,")).map(|l| format!("{l}\n")).collect();
        let err = LatencyTable::parse(&dropped, &space).unwrap_err();
        assert!(err.to_string().contains("2,3,1,1,0"), "{err}");
    }

    #[test]
    fn unknown_keys_are_counted() {
        let space = SearchSpace::default();
        let mut text = LatencyTable::synthetic(&space).to_text();
        text.push_str("7,1,0,0,0,1.5\n0,1,0,5,0,1.5\n#decoder 9,1.0\n# a comment\n");
        let loaded = LatencyTable::parse(&text, &space).unwrap();
        assert_eq!(loaded.ignored, 3);
    }

    #[test]
    fn malformed_rows_rejected() {
        let space = SearchSpace::default();
        let base = LatencyTable::synthetic(&space).to_text();
        for extra in ["0,1,0,0,0\n", "0,1,2,0,0,1.0\n", "0,1,0,0,0,-1.0\n", "0,1,0,0,0,abc\n"] {
            assert!(LatencyTable::parse(&format!("{base}{extra}"), &space).is_err(), "{extra}");
        }
    }
}
