//! Training losses and the learning-rate schedule.

use super::SurrogateError;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Margin ranking loss over unordered pairs with distinct labels:
/// mean of `max(0, γ − sign(yᵢ − yⱼ)·(ŷᵢ − ŷⱼ))`. Predictions are expected
/// already mapped to [0, 1].
pub fn ranking_loss(preds: &[f64], labels: &[f64], margin: f64) -> Result<f64, SurrogateError> {
    ranking_loss_grad(preds, labels, margin).map(|(l, _)| l)
}

/// Loss together with its gradient with respect to `preds`.
pub fn ranking_loss_grad(preds: &[f64], labels: &[f64], margin: f64) -> Result<(f64, Vec<f64>), SurrogateError> {
    if preds.len() != labels.len() {
        return Err(SurrogateError::Shape(format!("{} predictions vs {} labels", preds.len(), labels.len())));
    }
    let n = preds.len();
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let dy = labels[i] - labels[j];
            if dy == 0.0 {
                continue;
            }
            pairs += 1;
            let s = dy.signum();
            let hinge = margin - s * (preds[i] - preds[j]);
            if hinge > 0.0 {
                total += hinge;
                grad[i] -= s;
                grad[j] += s;
            }
        }
    }
    if pairs == 0 {
        return Err(SurrogateError::NoPairs);
    }
    let inv = 1.0 / pairs as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((total * inv, grad))
}

pub fn mse_loss(preds: &[f64], labels: &[f64]) -> Result<f64, SurrogateError> {
    mse_loss_grad(preds, labels).map(|(l, _)| l)
}

pub fn mse_loss_grad(preds: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>), SurrogateError> {
    if preds.len() != labels.len() {
        return Err(SurrogateError::Shape(format!("{} predictions vs {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(SurrogateError::Empty);
    }
    let n = preds.len() as f64;
    let mut loss = 0.0;
    let grad = preds
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let d = p - y;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Cosine annealing: `½·η₀·(1 + cos(π·t/T))` for `0 ≤ t < T`.
pub fn cosine_lr(epoch: usize, total: usize, initial: f64) -> Result<f64, SurrogateError> {
    if epoch >= total {
        return Err(SurrogateError::Schedule { epoch, total });
    }
    Ok(0.5 * initial * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::kendall_tau;
    use proptest::prelude::*;

    #[test]
    fn ranking_examples() {
        assert_eq!(ranking_loss(&[0.0, 0.5, 1.0], &[0.0, 0.5, 1.0], 0.05).unwrap(), 0.0);
        assert!((ranking_loss(&[0.5, 0.5], &[0.0, 1.0], 0.05).unwrap() - 0.05).abs() < 1e-15);
        assert!((ranking_loss(&[1.0, 0.0], &[0.0, 1.0], 0.05).unwrap() - 1.05).abs() < 1e-15);
        assert!(matches!(ranking_loss(&[0.1, 0.2], &[0.3, 0.3], 0.05), Err(SurrogateError::NoPairs)));
        assert!(ranking_loss(&[0.1], &[0.3, 0.3], 0.05).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse_loss(&[0.5], &[0.0]).unwrap(), 0.25);
        assert!(matches!(mse_loss(&[], &[]), Err(SurrogateError::Empty)));
    }

    #[test]
    fn schedule() {
        assert_eq!(cosine_lr(0, 500, 8e-4).unwrap(), 8e-4);
        assert!((cosine_lr(250, 500, 8e-4).unwrap() - 4e-4).abs() < 1e-18);
        assert!(cosine_lr(499, 500, 8e-4).unwrap() < 1e-8);
        assert!(cosine_lr(500, 500, 8e-4).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let preds = [0.1, 0.45, 0.3, 0.9, 0.52];
        let labels = [0.2, 0.1, 0.7, 0.8, 0.5];
        let (_, g) = ranking_loss_grad(&preds, &labels, 0.05).unwrap();
        let h = 1e-7;
        for k in 0..preds.len() {
            let mut p = preds;
            p[k] += h;
            let up = ranking_loss(&p, &labels, 0.05).unwrap();
            p[k] -= 2.0 * h;
            let down = ranking_loss(&p, &labels, 0.05).unwrap();
            assert!(((up - down) / (2.0 * h) - g[k]).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn zero_loss_means_perfect_order(
            labels in prop::collection::vec(0.0f64..1.0, 2..20),
            shift in -3.0f64..3.0,
        ) {
            // predictions that respect the order with margin ≥ γ
            let ranks = crate::metrics::average_ranks(&labels);
            let preds: Vec<f64> = ranks.iter().map(|r| r * 0.06).collect();
            if let Ok(l) = ranking_loss(&preds, &labels, 0.05) {
                prop_assert_eq!(l, 0.0);
                let tau = kendall_tau(&preds, &labels).unwrap();
                prop_assert!((tau - 1.0).abs() < 1e-12);
            }
            // shifting labels leaves the loss unchanged
            let shifted: Vec<f64> = labels.iter().map(|y| y + shift).collect();
            let a = ranking_loss(&[0.3; 20][..labels.len()], &labels, 0.05);
            let b = ranking_loss(&[0.3; 20][..labels.len()], &shifted, 0.05);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
