//! Gaussian kernel density estimation with Silverman's bandwidth rule.

use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KdeError {
    #[error("sample is degenerate (zero variance) or too small ({0} points)")]
    DegenerateSample(usize),
}

/// Silverman's rule of thumb: `0.9 min(sd, iqr/1.34) m^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, KdeError> {
    let m = samples.len();
    if m < 2 {
        return Err(KdeError::DegenerateSample(m));
    }
    let mean = samples.iter().sum::<f64>() / m as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quartile = |p: f64| -> f64 {
        let idx = p * (m as f64 - 1.0);
        let lo = idx.floor() as usize;
        let frac = idx - lo as f64;
        if lo + 1 < m {
            sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
        } else {
            sorted[lo]
        }
    };
    let iqr = quartile(0.75) - quartile(0.25);
    let sd = var.sqrt();
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(KdeError::DegenerateSample(m));
    }
    Ok(0.9 * spread * (m as f64).powf(-0.2))
}

/// Gaussian-kernel density of `samples` evaluated on `grid`.
pub fn kernel_density(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>, KdeError> {
    if samples.len() < 30 {
        return Err(KdeError::DegenerateSample(samples.len()));
    }
    let h = silverman_bandwidth(samples)?;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    Ok(grid
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &s in samples {
                let z = (x - s) / h;
                acc += (-0.5 * z * z).exp();
            }
            acc * norm
        })
        .collect())
}
