//! Kruskal–Wallis H test and Dunn's pairwise post hoc test.

use serde::{Deserialize, Serialize};

use super::special::{chi_square_sf, normal_sf};
use super::TestResult;
use crate::error::{Error, Result};

/// Ranks starting at 1 with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// `sum(t^3 - t)` over tie groups.
pub fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        acc += t * t * t - t;
        i = j;
    }
    acc
}

/// Pooled ranks split back into groups, with the tie term.
struct Pooled {
    sizes: Vec<usize>,
    mean_ranks: Vec<f64>,
    rank_sums: Vec<f64>,
    total: usize,
    ties: f64,
}

fn pool<S: AsRef<[f64]>>(groups: &[S]) -> Result<Pooled> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.as_ref().len()).collect();
    if let Some(i) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("group {i} is empty")));
    }
    let all: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.as_ref().iter().copied())
        .collect();
    if all.len() < 3 {
        return Err(Error::InsufficientData {
            required: 3,
            available: all.len(),
        });
    }
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "groups contain non-finite values".into(),
        ));
    }
    let ranks = average_ranks(&all);
    let mut rank_sums = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &n in &sizes {
        rank_sums.push(ranks[at..at + n].iter().sum::<f64>());
        at += n;
    }
    Ok(Pooled {
        mean_ranks: rank_sums
            .iter()
            .zip(&sizes)
            .map(|(r, &n)| r / n as f64)
            .collect(),
        rank_sums,
        total: all.len(),
        ties: tie_term(&all),
        sizes,
    })
}

/// Kruskal–Wallis H with tie correction; p from the chi-square tail with
/// k−1 degrees of freedom. All-identical values give H = 0, p = 1.
pub fn kruskal_wallis<S: AsRef<[f64]>>(groups: &[S]) -> Result<TestResult> {
    let p = pool(groups)?;
    let n = p.total as f64;
    let correction = 1.0 - p.ties / (n * n * n - n);
    let method = "kruskal-wallis";
    if correction <= 0.0 {
        return Ok(TestResult::new(0.0, 1.0, p.sizes, method));
    }
    let sum: f64 = p
        .rank_sums
        .iter()
        .zip(&p.sizes)
        .map(|(r, &k)| r * r / k as f64)
        .sum();
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    let pv = chi_square_sf(h, (groups.len() - 1) as f64)?;
    Ok(TestResult::new(h, pv, p.sizes, method))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjustment {
    #[default]
    Bonferroni,
    Holm,
    None,
}

impl std::str::FromStr for Adjustment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonferroni" => Ok(Adjustment::Bonferroni),
            "holm" => Ok(Adjustment::Holm),
            "none" => Ok(Adjustment::None),
            _ => Err(Error::InvalidInput(format!("unknown adjustment {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DunnCell {
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

/// Symmetric pairwise table; `pairwise[i][j]` is `None` on the diagonal.
/// `z` in cell (i, j) compares mean rank i minus mean rank j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnResult {
    pub pairwise: Vec<Vec<Option<DunnCell>>>,
    pub adjustment: Adjustment,
}

impl DunnResult {
    pub fn get(&self, i: usize, j: usize) -> Option<DunnCell> {
        self.pairwise.get(i)?.get(j).copied().flatten()
    }
}

/// Adjust a family of p-values.
pub fn adjust_p_values(p: &[f64], adjustment: Adjustment) -> Vec<f64> {
    let m = p.len() as f64;
    match adjustment {
        Adjustment::None => p.to_vec(),
        Adjustment::Bonferroni => p.iter().map(|v| (v * m).min(1.0)).collect(),
        Adjustment::Holm => {
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            let mut out = vec![0.0; p.len()];
            let mut running = 0.0f64;
            for (rank, &i) in order.iter().enumerate() {
                let v = ((m - rank as f64) * p[i]).min(1.0);
                running = running.max(v);
                out[i] = running;
            }
            out
        }
    }
}

/// Dunn's test over every pair of groups.
pub fn dunn_test<S: AsRef<[f64]>>(groups: &[S], adjustment: Adjustment) -> Result<DunnResult> {
    let p = pool(groups)?;
    let k = groups.len();
    let n = p.total as f64;
    let spread = n * (n + 1.0) / 12.0 - p.ties / (12.0 * (n - 1.0));
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let se = (spread * (1.0 / p.sizes[i] as f64 + 1.0 / p.sizes[j] as f64)).sqrt();
            let z = if se > 0.0 {
                (p.mean_ranks[i] - p.mean_ranks[j]) / se
            } else {
                0.0
            };
            let p_raw = (2.0 * normal_sf(z.abs())).min(1.0);
            pairs.push((i, j, z, p_raw));
        }
    }
    let raw: Vec<f64> = pairs.iter().map(|t| t.3).collect();
    let adjusted = adjust_p_values(&raw, adjustment);
    let mut pairwise = vec![vec![None; k]; k];
    for (&(i, j, z, p_raw), &p_adj) in pairs.iter().zip(&adjusted) {
        let p_adjusted = p_adj.max(p_raw).min(1.0);
        pairwise[i][j] = Some(DunnCell {
            z,
            p_raw,
            p_adjusted,
        });
        pairwise[j][i] = Some(DunnCell {
            z: 0.0 - z,
            p_raw,
            p_adjusted,
        });
    }
    Ok(DunnResult {
        pairwise,
        adjustment,
    })
}
