//! Shapiro–Wilk W test using Royston's AS R94 approximation (3 ≤ n ≤ 5000).

use super::special::{normal_quantile, normal_sf};
use super::TestResult;
use crate::error::{Error, Result};

const MAX_N: usize = 5000;

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Half-vector of AS R94 coefficients; the full weight for the i-th
/// smallest value is `-a[i]` and for the i-th largest `+a[i]`.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an = n as f64;
    let m: Vec<f64> = (1..=half)
        .map(|i| normal_quantile((i as f64 - 0.375) / (an + 0.25)))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let mut a = vec![0.0; half];
    let (first_scaled, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        a[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    a[0] = a1;
    for i in first_scaled..half {
        a[i] = -m[i] / fac;
    }
    a
}

pub fn shapiro_wilk(x: &[f64]) -> Result<TestResult> {
    let n = x.len();
    if !(3..=MAX_N).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "Shapiro-Wilk needs 3 <= n <= {MAX_N}, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "sample contains non-finite values".into(),
        ));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[n - 1] - sorted[0];
    if !(range > 0.0) {
        return Err(Error::InvalidInput("sample has zero variance".into()));
    }

    let a = coefficients(n);
    let half = n / 2;
    let mut weights = vec![0.0; n];
    for i in 0..half {
        weights[i] = -a[i];
        weights[n - 1 - i] = a[i];
    }
    // W is the squared correlation between weights and ordered values.
    let scaled: Vec<f64> = sorted.iter().map(|v| v / range).collect();
    let mean_x = scaled.iter().sum::<f64>() / n as f64;
    let mean_w = weights.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut sww) = (0.0, 0.0, 0.0);
    for (xv, wv) in scaled.iter().zip(&weights) {
        let (dx, dw) = (xv - mean_x, wv - mean_w);
        sxy += dx * dw;
        sxx += dx * dx;
        sww += dw * dw;
    }
    let w = (sxy * sxy / (sxx * sww)).min(1.0);

    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::PI / 3.0;
        (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else {
        let an = n as f64;
        let mut w1 = (1.0 - w).ln();
        let (mean, sd) = if n <= 11 {
            let gamma = poly(&G, an);
            if w1 >= gamma {
                return Ok(TestResult::new(w, 1e-99, vec![n], "shapiro-wilk (AS R94)"));
            }
            w1 = -(gamma - w1).ln();
            (poly(&C3, an), poly(&C4, an).exp())
        } else {
            let ln_n = an.ln();
            (poly(&C5, ln_n), poly(&C6, ln_n).exp())
        };
        normal_sf((w1 - mean) / sd)
    };
    Ok(TestResult::new(w, p, vec![n], "shapiro-wilk (AS R94)"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_sequence_is_near_one() {
        let n = 20;
        let x: Vec<f64> = (1..=n)
            .map(|i| normal_quantile((i as f64 - 0.375) / (n as f64 + 0.25)))
            .collect();
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.statistic > 0.98, "W = {}", r.statistic);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn bimodal_rejects() {
        let x: Vec<f64> = (0..20)
            .map(|i| if i < 10 { 0.0 } else { 1.0 } + (i as f64) * 1e-3)
            .collect();
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.p_value < 0.05, "p = {}", r.p_value);
    }

    #[test]
    fn input_validation() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(shapiro_wilk(&[3.0; 10]).is_err());
        assert!(shapiro_wilk(&vec![0.5; 5001]).is_err());
        assert!(shapiro_wilk(&[1.0, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn coefficients_are_unit_norm() {
        for n in [4, 5, 6, 11, 12, 50, 501] {
            let a = coefficients(n);
            let norm: f64 = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-12, "n = {n}: {norm}");
        }
    }
}
