use crate::error::{Error, Result};

/// `steps` embeddings `(1 − α)·e1 + α·e2` for `α` evenly spaced over
/// `[0, 1]`. The endpoints are copies of the inputs.
pub fn interpolate(e1: &[f32], e2: &[f32], steps: usize) -> Result<Vec<Vec<f32>>> {
    if steps < 2 {
        return Err(Error::Config(format!("interpolation needs ≥ 2 steps, got {steps}")));
    }
    if e1.len() != e2.len() {
        return Err(Error::Shape(format!(
            "embeddings of length {} and {}",
            e1.len(),
            e2.len()
        )));
    }
    Ok((0..steps)
        .map(|i| {
            if i == 0 {
                return e1.to_vec();
            }
            if i == steps - 1 {
                return e2.to_vec();
            }
            let a = i as f64 / (steps - 1) as f64;
            e1.iter()
                .zip(e2)
                .map(|(&x, &y)| ((1.0 - a) * f64::from(x) + a * f64::from(y)) as f32)
                .collect()
        })
        .collect())
}
