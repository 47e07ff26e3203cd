use crate::error::{Error, Result};
use crate::nets::TeacherNet;
use crate::tensor::Tensor;

/// `exp(mean_x KL(p(y|x) ‖ p(y)))` on contiguous splits, `p(y)` being the
/// split's mean prediction. Returns mean and population standard
/// deviation over the splits.
pub fn inception_score_from_probs(probs: &[Vec<f64>], n_splits: usize) -> Result<(f64, f64)> {
    if probs.is_empty() {
        return Err(Error::Metric("inception score of zero predictions".into()));
    }
    if n_splits == 0 || n_splits > probs.len() {
        return Err(Error::Metric(format!(
            "{n_splits} splits for {} predictions",
            probs.len()
        )));
    }
    let k = probs[0].len();
    if k == 0 || probs.iter().any(|p| p.len() != k) {
        return Err(Error::Metric("predictions must share one class count".into()));
    }
    let n = probs.len();
    let scores: Vec<f64> = (0..n_splits)
        .map(|s| {
            let part = &probs[s * n / n_splits..(s + 1) * n / n_splits];
            let mut marginal = vec![0.0; k];
            for p in part {
                for (m, v) in marginal.iter_mut().zip(p) {
                    *m += v;
                }
            }
            for m in &mut marginal {
                *m /= part.len() as f64;
            }
            let kl: f64 = part
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&marginal)
                        .filter(|(&pi, _)| pi > 0.0)
                        .map(|(&pi, &mi)| pi * (pi.ln() - mi.ln()))
                        .sum::<f64>()
                })
                .sum();
            (kl / part.len() as f64).exp()
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / n_splits as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n_splits as f64;
    Ok((mean, var.sqrt()))
}

/// Inception score with the teacher's classification head standing in for
/// the external classifier. Images are `[N, H, W, 3]`.
pub fn surrogate_inception_score(
    images: &Tensor,
    classifier: &TeacherNet,
    n_splits: usize,
) -> Result<(f64, f64)> {
    if images.shape().first().copied().unwrap_or(0) == 0 {
        return Err(Error::Metric("inception score of zero images".into()));
    }
    inception_score_from_probs(&classifier.predict_proba(images)?, n_splits)
}
