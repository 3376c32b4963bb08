//! Analysis battery: distance correlation, normality, Kruskal–Wallis,
//! Dunn's post hoc test, medians and histograms.

mod dcor;
mod rank;
mod shapiro;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dcor::distance_correlation;
pub use rank::{
    adjust_p_values, average_ranks, dunn_test, kruskal_wallis, tie_term, Adjustment, DunnCell,
    DunnResult,
};
pub use shapiro::shapiro_wilk;
pub use special::{chi_square_sf, normal_cdf, normal_quantile};

/// Named sample of finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub name: String,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self {
            name: name.into(),
            values,
        })
    }
}

impl AsRef<[f64]> for Sample {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: Vec<usize>,
    pub method: String,
}

impl TestResult {
    pub(crate) fn new(statistic: f64, p_value: f64, n: Vec<usize>, method: &str) -> Self {
        Self {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            n,
            method: method.to_string(),
        }
    }
}

/// Median; even lengths average the two middle order statistics.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("median of an empty group".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

pub fn group_medians<S: AsRef<[f64]>>(groups: &[S]) -> Result<Vec<f64>> {
    groups.iter().map(|g| median(g.as_ref())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins over [min, max]; bins are right-open except the last.
/// A constant sample puts everything in the first bin.
pub fn histogram(x: &[f64], bins: usize) -> Result<Vec<Bin>> {
    if x.is_empty() {
        return Err(Error::InvalidInput("histogram of an empty sample".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be >= 1".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<Bin> = (0..bins)
        .map(|i| Bin {
            lo: lo + width * i as f64,
            hi: if i + 1 == bins {
                hi
            } else {
                lo + width * (i + 1) as f64
            },
            count: 0,
        })
        .collect();
    for &v in x {
        let idx = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        out[idx].count += 1;
    }
    Ok(out)
}
