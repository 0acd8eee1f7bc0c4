//! Cross-entropy losses in numerically stable form.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Multi-class cross entropy `logsumexp(z) - z[y]`, accumulated in `f64`.
pub fn ce_loss_slice(logits: &[f32], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = max + logits.iter().map(|&z| (z as f64 - max).exp()).sum::<f64>().ln();
    Ok((lse - logits[label] as f64).max(0.0))
}

pub fn ce_loss(logits: &Tensor, label: usize) -> Result<f32> {
    if logits.rank() != 1 {
        return Err(Error::InvalidArgument(format!("ce_loss expects [L] logits, got {:?}", logits.shape())));
    }
    ce_loss_slice(logits.data(), label).map(|l| l as f32)
}

/// Binary cross entropy on a logit, `softplus(z) - y z`, accumulated in `f64`.
pub fn bce_loss_f64(logit: f32, label: f32) -> Result<f64> {
    if label != 0.0 && label != 1.0 {
        return Err(Error::InvalidArgument(format!("binary label must be 0 or 1, got {label}")));
    }
    let z = logit as f64;
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    Ok((softplus - label as f64 * z).max(0.0))
}

pub fn bce_loss(logit: f32, label: u8) -> Result<f32> {
    bce_loss_f64(logit, label as f32).map(|l| l as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_zero_is_ln2() {
        assert!((bce_loss(0.0, 1).unwrap() - std::f32::consts::LN_2).abs() < 1e-7);
        assert!((bce_loss(0.0, 0).unwrap() - std::f32::consts::LN_2).abs() < 1e-7);
    }

    #[test]
    fn bce_saturates() {
        assert!(bce_loss(20.0, 1).unwrap() <= 1e-8);
        assert!((bce_loss(-30.0, 1).unwrap() - 30.0).abs() < 1e-5);
        assert!(bce_loss(1e30, 0).unwrap().is_finite());
    }

    #[test]
    fn ce_uniform_matches_log_classes() {
        // Oracle: softmax of equal logits is 1/L, so the loss is ln L.
        let oracle = (5f64).ln();
        let l = ce_loss(&Tensor::from_vec(vec![0.3; 5]), 2).unwrap();
        assert!((l as f64 - oracle).abs() < 1e-6);
        assert!((oracle - 1.60944).abs() < 1e-5);
    }

    #[test]
    fn ce_is_stable_for_large_logits() {
        let l = ce_loss(&Tensor::from_vec(vec![1000.0, 0.0, -1000.0]), 0).unwrap();
        assert!(l.abs() < 1e-6);
        let l = ce_loss(&Tensor::from_vec(vec![1000.0, 0.0]), 1).unwrap();
        assert!((l - 1000.0).abs() < 1e-3);
    }

    #[test]
    fn labels_out_of_range_are_rejected() {
        assert!(ce_loss(&Tensor::from_vec(vec![0.0; 3]), 3).is_err());
        assert!(bce_loss(0.0, 2).is_err());
    }
}
