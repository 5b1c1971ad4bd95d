#![allow(dead_code)]

use proxsurr::data::{CombinedDataset, UnitRecord};

/// Mean bias of the plain surrogate index on `DGPConfig::confounded()`,
/// frozen from a brute-force simulation at n = 10⁶ (5 seeds, Monte Carlo
/// SE ≈ 0.005; the closed-form value is 0.2585).
pub const NAIVE_SI_BIAS: f64 = 0.260;

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (m, (ss / (n - 1.0)).sqrt())
}

/// Monte Carlo standard error of a replication mean.
pub fn mc_se(v: &[f64]) -> f64 {
    mean_sd(v).1 / (v.len() as f64).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn column(data: &CombinedDataset, experimental: bool, f: impl Fn(&UnitRecord) -> f64) -> Vec<f64> {
    data.records()
        .iter()
        .filter(|r| r.is_experimental() == experimental)
        .map(f)
        .collect()
}
