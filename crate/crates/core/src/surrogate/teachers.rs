//! Teacher models whose averaged predictions label synthetic training data.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::tree::{BoostParams, GradientBoosting, RegressionTree, TreeParams};
use super::SurrogateError;

/// Gaussian-kernel interpolant with a small ridge; kernel width is the
/// median pairwise distance of the training inputs.
#[derive(Debug, Clone)]
pub struct RbfInterpolant {
    centers: Array2<f64>,
    weights: Array1<f64>,
    center_norms: Vec<f64>,
    offset: f64,
    width: f64,
}

impl RbfInterpolant {
    pub const RIDGE: f64 = 1e-8;

    pub fn fit(x: ArrayView2<f64>, y: &[f64]) -> Self {
        let n = x.nrows();
        let offset = y.iter().sum::<f64>() / n as f64;
        let mut d2 = vec![0.0; n * n];
        let mut dists = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let d = sq_dist(x.row(i), x.row(j));
                d2[i * n + j] = d;
                d2[j * n + i] = d;
                dists.push(d.sqrt());
            }
        }
        let width = if dists.is_empty() {
            1.0
        } else {
            let mid = dists.len() / 2;
            let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
            if *m > 0.0 { *m } else { 1.0 }
        };
        let gamma = 1.0 / (2.0 * width * width);
        let rhs = DVector::from_iterator(n, y.iter().map(|v| v - offset));
        let mut ridge = Self::RIDGE;
        let weights = loop {
            let k = DMatrix::from_fn(n, n, |i, j| (-gamma * d2[i * n + j]).exp() + if i == j { ridge } else { 0.0 });
            if let Some(ch) = k.cholesky() {
                break Array1::from_iter(ch.solve(&rhs).iter().copied());
            }
            // duplicate inputs make the kernel matrix singular
            ridge *= 10.0;
        };
        let center_norms = x.rows().into_iter().map(|r| r.dot(&r)).collect();
        RbfInterpolant { centers: x.to_owned(), weights, center_norms, offset, width }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let gamma = 1.0 / (2.0 * self.width * self.width);
        self.offset
            + self
                .centers
                .rows()
                .into_iter()
                .zip(&self.weights)
                .map(|(c, w)| w * (-gamma * sq_dist(c, row)).exp())
                .sum::<f64>()
    }

    /// Batched prediction through one matrix product.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let gamma = 1.0 / (2.0 * self.width * self.width);
        let cross = x.dot(&self.centers.t());
        let xn: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
        let mut k = cross;
        for ((i, j), v) in k.indexed_iter_mut() {
            let d2 = (xn[i] + self.center_norms[j] - 2.0 * *v).max(0.0);
            *v = (-gamma * d2).exp();
        }
        k.dot(&self.weights).iter().map(|v| v + self.offset).collect()
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// RBF interpolant, regression tree and gradient boosting fitted on the
/// same data.
#[derive(Debug, Clone)]
pub struct TeacherEnsemble {
    pub rbf: RbfInterpolant,
    pub tree: RegressionTree,
    pub boosting: GradientBoosting,
}

impl TeacherEnsemble {
    pub const MIN_SAMPLES: usize = 10;

    pub fn fit(x: ArrayView2<f64>, y: &[f64]) -> Result<Self, SurrogateError> {
        if x.nrows() != y.len() {
            return Err(SurrogateError::Shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
        }
        if y.len() < Self::MIN_SAMPLES {
            return Err(SurrogateError::TooFewSamples { need: Self::MIN_SAMPLES, got: y.len() });
        }
        Ok(TeacherEnsemble {
            rbf: RbfInterpolant::fit(x, y),
            tree: RegressionTree::fit(x, y, TreeParams { max_depth: 12, min_leaf: 2 }),
            boosting: GradientBoosting::fit(x, y, BoostParams::default()),
        })
    }

    /// The three teacher predictions for one row.
    pub fn predict_each(&self, row: ArrayView1<f64>) -> [f64; 3] {
        [self.rbf.predict_row(row), self.tree.predict_row(row), self.boosting.predict_row(row)]
    }

    /// Synthetic labels: teacher mean clamped to [0, 1].
    pub fn synthetic_labels(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let rbf = self.rbf.predict(x);
        x.rows()
            .into_iter()
            .zip(rbf)
            .map(|(r, a)| combine([a, self.tree.predict_row(r), self.boosting.predict_row(r)]))
            .collect()
    }
}

/// Mean of the teacher predictions, clamped to [0, 1].
pub fn combine(preds: [f64; 3]) -> f64 {
    (preds.iter().sum::<f64>() / 3.0).clamp(0.0, 1.0)
}
