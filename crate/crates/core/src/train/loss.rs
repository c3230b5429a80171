use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Focal,
    CrossEntropy,
}

fn check(logits: &Tensor, targets: &[usize]) -> Result<(usize, usize)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != targets.len() || s[0] == 0 {
        return Err(Error::Contract(format!(
            "logits {s:?} do not match {} targets",
            targets.len()
        )));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= s[1]) {
        return Err(Error::Contract(format!("target {t} is out of range for {} classes", s[1])));
    }
    if !logits.all_finite() {
        return Err(Error::Contract("logits contain non-finite values".into()));
    }
    Ok((s[0], s[1]))
}

fn log_softmax(row: &[f32]) -> Vec<f64> {
    let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let lse = row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|&v| v as f64 - lse).collect()
}

/// Mean focal loss `-alpha (1 - p_t)^gamma ln p_t` and its gradient with
/// respect to the logits.
pub fn focal_loss_with_grad(logits: &Tensor, targets: &[usize], alpha: f64, gamma: f64) -> Result<(f64, Tensor)> {
    let (k, c) = check(logits, targets)?;
    let mut total = 0.0;
    let mut grad = vec![0.0f32; k * c];
    for (i, &t) in targets.iter().enumerate() {
        let logp = log_softmax(&logits.data()[i * c..(i + 1) * c]);
        let lp = logp[t];
        let p = lp.exp();
        let q = -lp.exp_m1(); // 1 - p without cancellation
        total += -alpha * q.powf(gamma) * lp;
        // d/dz_j = alpha (delta_tj - p_j) [gamma q^(gamma-1) p ln p - q^gamma]
        let slope = if gamma == 0.0 {
            -1.0
        } else if q > 0.0 {
            gamma * q.powf(gamma - 1.0) * p * lp - q.powf(gamma)
        } else {
            0.0
        };
        for j in 0..c {
            let delta = if j == t { 1.0 } else { 0.0 };
            grad[i * c + j] = (alpha * (delta - logp[j].exp()) * slope / k as f64) as f32;
        }
    }
    Ok((total / k as f64, Tensor::from_vec(&[k, c], grad)))
}

pub fn focal_loss(logits: &Tensor, targets: &[usize], alpha: f64, gamma: f64) -> Result<f64> {
    focal_loss_with_grad(logits, targets, alpha, gamma).map(|(l, _)| l)
}

/// Mean cross-entropy, computed directly rather than through the focal form.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let (k, c) = check(logits, targets)?;
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| -log_softmax(&logits.data()[i * c..(i + 1) * c])[t])
        .sum();
    Ok(total / k as f64)
}

pub fn cross_entropy_with_grad(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    focal_loss_with_grad(logits, targets, 1.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn logits(rows: &[&[f32]]) -> Tensor {
        Tensor::from_vec(&[rows.len(), rows[0].len()], rows.concat())
    }

    #[test]
    fn half_probability_value() {
        let l = focal_loss(&logits(&[&[0.0, 0.0]]), &[0], 1.0, 1.0).unwrap();
        assert!((l - 0.5 * 2f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn confident_prediction_has_no_loss() {
        let l = focal_loss(&logits(&[&[60.0, 0.0, 0.0]]), &[0], 1.0, 1.0).unwrap();
        assert!(l < 1e-20);
        let (_, g) = focal_loss_with_grad(&logits(&[&[60.0, 0.0, 0.0]]), &[0], 1.0, 0.5).unwrap();
        assert!(g.all_finite());
    }

    #[test]
    fn contract_errors() {
        assert!(matches!(focal_loss(&logits(&[&[0.0, 1.0]]), &[2], 1.0, 1.0), Err(Error::Contract(_))));
        assert!(focal_loss(&logits(&[&[f32::NAN, 1.0]]), &[0], 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn gamma_zero_is_cross_entropy(vals in proptest::collection::vec(-8.0f32..8.0, 27), t in proptest::collection::vec(0usize..9, 3)) {
            let x = Tensor::from_vec(&[3, 9], vals);
            let f = focal_loss(&x, &t, 1.0, 0.0).unwrap();
            let ce = cross_entropy(&x, &t).unwrap();
            prop_assert!((f - ce).abs() < 1e-7);
        }

        #[test]
        fn gradient_matches_finite_differences(vals in proptest::collection::vec(-3.0f32..3.0, 10), t in 0usize..5, gamma in 0.0f64..3.0) {
            let x = Tensor::from_vec(&[2, 5], vals.clone());
            let targets = [t, (t + 2) % 5];
            let (_, g) = focal_loss_with_grad(&x, &targets, 0.7, gamma).unwrap();
            for j in 0..10 {
                let eps = 1e-2f32;
                let mut up = vals.clone();
                up[j] += eps;
                let mut down = vals.clone();
                down[j] -= eps;
                let lu = focal_loss(&Tensor::from_vec(&[2, 5], up), &targets, 0.7, gamma).unwrap();
                let ld = focal_loss(&Tensor::from_vec(&[2, 5], down), &targets, 0.7, gamma).unwrap();
                let fd = (lu - ld) / (2.0 * eps as f64);
                prop_assert!((fd - g.data()[j] as f64).abs() < 2e-4, "{} vs {}", fd, g.data()[j]);
            }
        }

        #[test]
        fn non_negative_and_decreasing_in_true_logit(vals in proptest::collection::vec(-5.0f32..5.0, 9), t in 0usize..9, gamma in 0.0f64..4.0) {
            let base = focal_loss(&Tensor::from_vec(&[1, 9], vals.clone()), &[t], 1.0, gamma).unwrap();
            let mut up = vals;
            up[t] += 0.5;
            let higher = focal_loss(&Tensor::from_vec(&[1, 9], up), &[t], 1.0, gamma).unwrap();
            prop_assert!(base >= 0.0 && higher < base);
        }
    }
}
