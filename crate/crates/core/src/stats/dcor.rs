//! Sample distance correlation (uncorrected V-statistic form).

use crate::error::{Error, Result};

/// Double-centred pairwise distance matrix, row-major n×n.
fn centered_distances(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (v[i] - v[j]).abs();
        }
    }
    let row: Vec<f64> = (0..n)
        .map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row.iter().sum::<f64>() / n as f64;
    // symmetric, so column means equal row means
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row[i] - row[j];
        }
    }
    d
}

/// Distance correlation in [0, 1]; 0 when either sample has zero distance
/// variance.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            available: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "samples contain non-finite values".into(),
        ));
    }
    let a = centered_distances(x);
    let b = centered_distances(y);
    let mean =
        |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).sum::<f64>() / p.len() as f64;
    let dcov2 = mean(&a, &b);
    let dvar_x = mean(&a, &a);
    let dvar_y = mean(&b, &b);
    if dvar_x <= 0.0 || dvar_y <= 0.0 {
        return Ok(0.0);
    }
    // dcor = dcov / sqrt(dvar_x * dvar_y) with dcov, dvar taken as square roots
    let r2 = dcov2.max(0.0) / (dvar_x * dvar_y).sqrt();
    Ok(r2.sqrt().clamp(0.0, 1.0))
}
