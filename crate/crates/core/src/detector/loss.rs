use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy on logits and its gradient with respect to
/// each logit.
///
/// Uses `max(z, 0) - z·y + ln(1 + e^{-|z|})`, which stays finite for any
/// finite logit.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} logits and {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Argument(format!("label {y} is not 0 or 1")));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - y) / n);
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry_point() {
        let (loss, grad) = bce_with_logits(&[0.0], &[1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad, vec![-0.5]);
    }

    #[test]
    fn saturation_stays_finite() {
        let (loss, grad) = bce_with_logits(&[100.0], &[1.0]).unwrap();
        assert!((0.0..1e-40).contains(&loss));
        assert!(grad[0].abs() < 1e-40);
        for z in [-1e4, -700.0, 700.0, 1e4] {
            for y in [0.0, 1.0] {
                let (loss, grad) = bce_with_logits(&[z], &[y]).unwrap();
                assert!(loss.is_finite() && grad[0].is_finite(), "z={z} y={y}");
            }
        }
        let (loss, _) = bce_with_logits(&[-1e4], &[1.0]).unwrap();
        assert_eq!(loss, 1e4);
    }

    #[test]
    fn rejects_bad_labels_and_lengths() {
        assert!(bce_with_logits(&[0.0], &[0.5]).is_err());
        assert!(bce_with_logits(&[0.0, 1.0], &[1.0]).is_err());
        assert!(bce_with_logits(&[], &[]).is_err());
    }

    #[test]
    fn sigmoid_is_monotone_and_bounded() {
        let zs = [-800.0, -30.0, -1.0, 0.0, 1e-9, 2.0, 40.0];
        let s: Vec<f64> = zs.iter().map(|&z| sigmoid(z)).collect();
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
