//! RankNet training and prediction.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{cosine_lr, mse_loss_grad, ranking_loss_grad, sigmoid};
use super::mlp::{Dense, Mlp, Params};
use super::teachers::TeacherEnsemble;
use super::SurrogateError;
use crate::encoding::{integer_features, Genotype, SearchSpace, GENOTYPE_LEN};
use crate::seed;

pub const HIDDEN_LAYERS: usize = 3;
pub const HIDDEN_UNITS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureEncoding {
    OneHot,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Ranking,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// `w ← (1−λ)w − η∇w`.
    Sgd,
    /// Adam direction in place of the raw gradient, same decoupled decay.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub synthetic_batch: usize,
    pub encoding: FeatureEncoding,
    pub loss: LossKind,
    pub synthetic: bool,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            learning_rate: 8e-4,
            weight_decay: 1e-5,
            margin: 0.05,
            batch_size: 64,
            synthetic_batch: 32,
            encoding: FeatureEncoding::OneHot,
            loss: LossKind::Ranking,
            synthetic: true,
            optimizer: Optimizer::Adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankNetModel {
    pub mlp: Mlp,
    pub margin: f64,
    pub label_min: f64,
    pub label_max: f64,
    pub seed: u64,
    pub encoding: FeatureEncoding,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Mean batch loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

pub fn features(space: &SearchSpace, genotypes: &[Genotype], encoding: FeatureEncoding) -> Array2<f64> {
    match encoding {
        FeatureEncoding::OneHot => {
            let sizes = space.alphabet_sizes();
            let dim = space.one_hot_dim();
            let mut x = Array2::zeros((genotypes.len(), dim));
            for (g, mut row) in genotypes.iter().zip(x.rows_mut()) {
                g.write_one_hot(&sizes, row.as_slice_mut().expect("standard layout"));
            }
            x
        }
        FeatureEncoding::Integer => {
            let mut x = Array2::zeros((genotypes.len(), GENOTYPE_LEN));
            for (g, mut row) in genotypes.iter().zip(x.rows_mut()) {
                row.assign(&Array1::from(integer_features(g)));
            }
            x
        }
    }
}

fn input_dim(space: &SearchSpace, encoding: FeatureEncoding) -> usize {
    match encoding {
        FeatureEncoding::OneHot => space.one_hot_dim(),
        FeatureEncoding::Integer => GENOTYPE_LEN,
    }
}

fn network_shape(input: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend([HIDDEN_UNITS; HIDDEN_LAYERS]);
    s.push(1);
    s
}

struct AdamState {
    m: Params,
    v: Params,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(mlp: &mut Mlp, grads: &Params, lr: f64, decay: f64, adam: Option<&mut AdamState>) {
    match adam {
        None => {
            for (l, (gw, gb)) in mlp.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
                l.weights.zip_mut_with(gw, |w, g| *w = (1.0 - decay) * *w - lr * g);
                l.bias.zip_mut_with(gb, |b, g| *b -= lr * g);
            }
        }
        Some(st) => {
            st.t += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(st.t);
            let c2 = 1.0 - ADAM_BETA2.powi(st.t);
            let step = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, decay: f64| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let dir = (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                *p = (1.0 - decay) * *p - lr * dir;
            };
            for (i, l) in mlp.layers.iter_mut().enumerate() {
                ndarray::Zip::from(&mut l.weights)
                    .and(&grads.weights[i])
                    .and(&mut st.m.weights[i])
                    .and(&mut st.v.weights[i])
                    .for_each(|p, &g, m, v| step(p, g, m, v, decay));
                ndarray::Zip::from(&mut l.bias)
                    .and(&grads.bias[i])
                    .and(&mut st.m.bias[i])
                    .and(&mut st.v.bias[i])
                    .for_each(|p, &g, m, v| step(p, g, m, v, 0.0));
            }
        }
    }
}

/// Loss of sigmoid-mapped outputs and its gradient with respect to the raw
/// outputs.
pub fn output_loss(
    outputs: &Array1<f64>,
    labels: &[f64],
    loss: LossKind,
    margin: f64,
) -> Result<(f64, Array1<f64>), SurrogateError> {
    let p: Vec<f64> = outputs.iter().map(|&z| sigmoid(z)).collect();
    let (l, dp) = match loss {
        LossKind::Ranking => ranking_loss_grad(&p, labels, margin)?,
        LossKind::Mse => mse_loss_grad(&p, labels)?,
    };
    let dz = p.iter().zip(&dp).map(|(p, d)| d * p * (1.0 - p)).collect();
    Ok((l, dz))
}

/// Loss of `mlp` on `(x, labels)` plus `λ/(2η)·Σw²` over weights (biases
/// excluded), with its gradient. One plain gradient step of size `lr` on this
/// objective is exactly the decoupled update `w ← (1−λ)w − η∇w`.
pub fn regularized_objective(
    mlp: &Mlp,
    x: ArrayView2<f64>,
    labels: &[f64],
    loss: LossKind,
    margin: f64,
    decay: f64,
    lr: f64,
) -> Result<(f64, Params), SurrogateError> {
    let (_, l, mut grads) = mlp.forward_backward(x, |out| output_loss(out, labels, loss, margin))?;
    let c = decay / lr;
    let mut penalty = 0.0;
    for (layer, g) in mlp.layers.iter().zip(grads.weights.iter_mut()) {
        penalty += layer.weights.iter().map(|w| w * w).sum::<f64>();
        g.zip_mut_with(&layer.weights, |g, w| *g += c * w);
    }
    Ok((l + 0.5 * c * penalty, grads))
}

/// Fits a fresh network to `(genotype, accuracy)` samples.
///
/// Labels are min–max normalized. Every mini-batch of genuine samples is
/// extended, when enabled, with uniformly sampled genotypes labelled by the
/// teacher ensemble.
pub fn train_ranknet(
    samples: &[(Genotype, f64)],
    space: &SearchSpace,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(RankNetModel, TrainReport), SurrogateError> {
    for (g, _) in samples {
        g.validate(space)?;
    }
    let (label_min, label_max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, y)| (lo.min(*y), hi.max(*y)));
    if !(label_max > label_min) || !label_min.is_finite() || !label_max.is_finite() {
        return Err(SurrogateError::DegenerateLabels);
    }
    let span = label_max - label_min;
    let genotypes: Vec<Genotype> = samples.iter().map(|(g, _)| *g).collect();
    let labels: Vec<f64> = samples.iter().map(|(_, y)| (y - label_min) / span).collect();
    let x = features(space, &genotypes, cfg.encoding);

    let teachers = if cfg.synthetic && cfg.synthetic_batch > 0 {
        Some(TeacherEnsemble::fit(x.view(), &labels)?)
    } else {
        None
    };

    let mut init_rng = seed::rng(seed, "ranknet-init", 0);
    let mut mlp = Mlp::new(&network_shape(input_dim(space, cfg.encoding)), &mut init_rng);
    let mut adam = match cfg.optimizer {
        Optimizer::Adam => Some(AdamState { m: Params::zeros_like(&mlp), v: Params::zeros_like(&mlp), t: 0 }),
        Optimizer::Sgd => None,
    };
    let mut shuffle_rng = seed::rng(seed, "ranknet-shuffle", 0);
    let mut synth_rng = seed::rng(seed, "ranknet-synthetic", 0);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = cfg.batch_size.max(2);

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.learning_rate)?;
        order.shuffle(&mut shuffle_rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(batch) {
            let mut bx = x.select(Axis(0), chunk);
            let mut by: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            if let Some(t) = &teachers {
                let extra: Vec<Genotype> =
                    (0..cfg.synthetic_batch).map(|_| Genotype::random(space, &mut synth_rng)).collect();
                let sx = features(space, &extra, cfg.encoding);
                by.extend(t.synthetic_labels(sx.view()));
                bx = ndarray::concatenate(Axis(0), &[bx.view(), sx.view()]).expect("same width");
            }
            let result = mlp.forward_backward(bx.view(), |out| output_loss(out, &by, cfg.loss, cfg.margin));
            let (_, loss, grads) = match result {
                Ok(r) => r,
                // a batch whose labels are all tied carries no ranking signal
                Err(SurrogateError::NoPairs) => continue,
                Err(e) => return Err(e),
            };
            apply_update(&mut mlp, &grads, lr, cfg.weight_decay, adam.as_mut());
            sum += loss;
            count += 1;
            report.steps += 1;
        }
        report.epoch_losses.push(if count > 0 { sum / count as f64 } else { 0.0 });
    }

    let model = RankNetModel { mlp, margin: cfg.margin, label_min, label_max, seed, encoding: cfg.encoding };
    Ok((model, report))
}

const MAGIC: &[u8; 4] = b"RKNT";
const FORMAT_VERSION: u32 = 1;

impl RankNetModel {
    /// Logistic-mapped network outputs in (0, 1).
    pub fn predict(&self, space: &SearchSpace, genotypes: &[Genotype]) -> Result<Vec<f64>, SurrogateError> {
        for g in genotypes {
            g.validate(space)?;
        }
        let x = features(space, genotypes, self.encoding);
        if x.ncols() != self.mlp.input_dim() {
            return Err(SurrogateError::Shape(format!(
                "model expects {} inputs, space gives {}",
                self.mlp.input_dim(),
                x.ncols()
            )));
        }
        Ok(self.predict_features(x.view()))
    }

    pub fn predict_features(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.mlp.forward(x).iter().map(|&z| sigmoid(z)).collect()
    }

    /// Little-endian binary dump: header, then every layer's shape,
    /// weights (row-major) and biases.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match self.encoding {
            FeatureEncoding::OneHot => 0,
            FeatureEncoding::Integer => 1,
        });
        for v in [self.margin, self.label_min, self.label_max] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.mlp.layers.len() as u32).to_le_bytes());
        for l in &self.mlp.layers {
            out.extend_from_slice(&(l.weights.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(l.weights.ncols() as u32).to_le_bytes());
            for v in l.weights.iter().chain(l.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut b: &[u8]) -> Result<Self, SurrogateError> {
        let bad = |m: &str| SurrogateError::Format(m.to_string());
        fn take<'a>(b: &mut &'a [u8], n: usize) -> Result<&'a [u8], SurrogateError> {
            if b.len() < n {
                return Err(SurrogateError::Format("truncated".into()));
            }
            let (head, tail) = b.split_at(n);
            *b = tail;
            Ok(head)
        }
        let u32_ = |b: &mut &[u8]| -> Result<u32, SurrogateError> { Ok(u32::from_le_bytes(take(b, 4)?.try_into().unwrap())) };
        let f64_ = |b: &mut &[u8]| -> Result<f64, SurrogateError> { Ok(f64::from_le_bytes(take(b, 8)?.try_into().unwrap())) };
        if take(&mut b, 4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        if u32_(&mut b)? != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        let encoding = match take(&mut b, 1)?[0] {
            0 => FeatureEncoding::OneHot,
            1 => FeatureEncoding::Integer,
            _ => return Err(bad("unknown encoding")),
        };
        let margin = f64_(&mut b)?;
        let label_min = f64_(&mut b)?;
        let label_max = f64_(&mut b)?;
        let seed = u64::from_le_bytes(take(&mut b, 8)?.try_into().unwrap());
        let n_layers = u32_(&mut b)? as usize;
        if n_layers == 0 {
            return Err(bad("no layers"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = u32_(&mut b)? as usize;
            let cols = u32_(&mut b)? as usize;
            let w: Vec<f64> = (0..rows * cols).map(|_| f64_(&mut b)).collect::<Result<_, _>>()?;
            let bias: Vec<f64> = (0..cols).map(|_| f64_(&mut b)).collect::<Result<_, _>>()?;
            let weights = Array2::from_shape_vec((rows, cols), w).map_err(|e| bad(&e.to_string()))?;
            layers.push(Dense { weights, bias: Array1::from(bias) });
        }
        if !b.is_empty() {
            return Err(bad("trailing bytes"));
        }
        if layers.windows(2).any(|w| w[0].weights.ncols() != w[1].weights.nrows())
            || layers.last().unwrap().weights.ncols() != 1
        {
            return Err(bad("inconsistent layer shapes"));
        }
        Ok(RankNetModel { mlp: Mlp { layers }, margin, label_min, label_max, seed, encoding })
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
