//! Reference estimators: the randomized-trial benchmark, the standard
//! surrogate index, and OLS / IV surrogacy diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{split_by_sample, CombinedDataset, ExperimentalSource, FullRecord};
use crate::error::{Error, Result};
use crate::estimators::{EstimateReport, EstimatorKind, DEFAULT_ALPHA};
use crate::linalg::{ols, tsls};
use crate::normal::two_sided_p;

/// Linear regression coefficients with HC0 standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coeffs: Vec<f64>,
    pub robust_se: Vec<f64>,
    pub names: Vec<String>,
}

impl RegressionFit {
    /// `(coefficient, robust SE)` for a named regressor.
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((self.coeffs[j], self.robust_se[j]))
    }
}

fn names(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |j| format!("{prefix}{j}"))
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, ncols: usize) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_row_iterator(n, ncols, rows.into_iter().flatten())
}

fn treat(a: bool) -> f64 {
    if a {
        1.0
    } else {
        0.0
    }
}

/// OLS of `y` on `(1, a, x)` over a fully observed experiment. The
/// coefficient on `a` is the benchmark effect.
pub fn rct_benchmark(source: &ExperimentalSource) -> Result<RegressionFit> {
    let dx = source.dims().x;
    let rows: Vec<Vec<f64>> = source
        .records()
        .iter()
        .map(|r| {
            let mut row = vec![1.0, treat(r.a)];
            row.extend_from_slice(&r.x);
            row
        })
        .collect();
    let x = matrix_from_rows(rows, 2 + dx);
    let y = DVector::from_iterator(source.len(), source.records().iter().map(|r| r.y));
    let fit = ols(&x, &y)?;
    Ok(RegressionFit {
        coeffs: fit.coeffs.iter().copied().collect(),
        robust_se: fit.se_hc0.iter().copied().collect(),
        names: ["const".to_string(), "a".to_string()]
            .into_iter()
            .chain(names("x", dx))
            .collect(),
    })
}

/// Standard surrogate index. Fits `y` on `(1, s, x)` in the observational
/// sample (plus `w` and `z` when `include_proxies`), predicts for experimental
/// units, and reads the effect off an OLS of the predictions on `(1, a, x)`.
///
/// `z` is never observed in the experimental sample; with proxies the
/// prediction substitutes its observational-sample mean.
pub fn surrogate_index_estimate(data: &CombinedDataset, include_proxies: bool) -> Result<EstimateReport> {
    let dims = data.dims();
    let (e_view, o_view) = split_by_sample(data);
    let z_mean: Vec<f64> = {
        let mut m = vec![0.0; dims.z];
        for r in &o_view {
            for (acc, v) in m.iter_mut().zip(r.z.as_deref().unwrap_or(&[])) {
                *acc += v;
            }
        }
        m.iter().map(|v| v / o_view.len() as f64).collect()
    };
    let features = |s: &[f64], x: &[f64], w: &[f64], z: &[f64]| {
        let mut row = vec![1.0];
        row.extend_from_slice(s);
        row.extend_from_slice(x);
        if include_proxies {
            row.extend_from_slice(w);
            row.extend_from_slice(z);
        }
        row
    };
    let p = 1 + dims.s + dims.x + if include_proxies { dims.w + dims.z } else { 0 };
    let o_rows = o_view
        .iter()
        .map(|r| features(&r.s, &r.x, &r.w, r.z.as_deref().unwrap_or(&z_mean)))
        .collect();
    let y = DVector::from_iterator(o_view.len(), o_view.iter().map(|r| r.y.unwrap_or(f64::NAN)));
    let mu = ols(&matrix_from_rows(o_rows, p), &y)?.coeffs;

    let pred = DVector::from_iterator(
        e_view.len(),
        e_view.iter().map(|r| {
            let f = features(&r.s, &r.x, &r.w, &z_mean);
            f.iter().zip(mu.iter()).map(|(a, b)| a * b).sum::<f64>()
        }),
    );
    let e_rows = e_view
        .iter()
        .map(|r| {
            let mut row = vec![1.0, treat(r.a.unwrap_or(false))];
            row.extend_from_slice(&r.x);
            row
        })
        .collect();
    let second = ols(&matrix_from_rows(e_rows, 2 + dims.x), &pred)?;
    Ok(EstimateReport {
        estimator: if include_proxies {
            EstimatorKind::SurrogateIndexProxies
        } else {
            EstimatorKind::SurrogateIndex
        },
        tau_hat: second.coeffs[1],
        variance_hat: None,
        ci: None,
        alpha: DEFAULT_ALPHA,
        k_folds: None,
        seed: None,
        n_e: data.n_e(),
        n_o: data.n_o(),
        clipped_propensities: 0,
        per_fold_diagnostics: Vec::new(),
    })
}

/// OLS and IV rows of the surrogacy diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub ols_coef_on_a: f64,
    pub ols_se: f64,
    pub ols_p: f64,
    pub iv_coef_on_a: f64,
    pub iv_se: f64,
    pub iv_p: f64,
    /// Partial F of `z` in the first stage, one per `w` column.
    pub first_stage_f: Vec<f64>,
    pub n: usize,
}

fn wald_p(coef: f64, se: f64) -> f64 {
    if se > 0.0 {
        two_sided_p(coef / se)
    } else if coef == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// On a fully observed experiment: OLS of `y` on `(1, a, s, x)`, then 2SLS of
/// `y` on `(1, a, s, x, w)` with `z` instrumenting `w`. Under valid surrogacy
/// the coefficient on `a` is zero; a latent confounder shows up in the OLS
/// row and is removed by the IV row.
pub fn diagnose_surrogacy(source: &ExperimentalSource) -> Result<DiagnosticReport> {
    let d = source.dims();
    if d.z == 0 || d.w == 0 {
        return Err(Error::Validation(
            "diagnostics need at least one w and one z column".into(),
        ));
    }
    let recs = source.records();
    let n = recs.len();
    let exog_row = |r: &FullRecord| {
        let mut row = vec![1.0, treat(r.a)];
        row.extend_from_slice(&r.s);
        row.extend_from_slice(&r.x);
        row
    };
    let k1 = 2 + d.s + d.x;
    let exog = matrix_from_rows(recs.iter().map(exog_row).collect(), k1);
    let endog = matrix_from_rows(recs.iter().map(|r| r.w.clone()).collect(), d.w);
    let excluded = matrix_from_rows(recs.iter().map(|r| r.z.clone()).collect(), d.z);
    let y = DVector::from_iterator(n, recs.iter().map(|r| r.y));

    let o = ols(&exog, &y)?;
    let iv = tsls(&y, &exog, &endog, &excluded)?;
    Ok(DiagnosticReport {
        ols_coef_on_a: o.coeffs[1],
        ols_se: o.se_hc0[1],
        ols_p: wald_p(o.coeffs[1], o.se_hc0[1]),
        iv_coef_on_a: iv.coeffs[1],
        iv_se: iv.se_hc0[1],
        iv_p: wald_p(iv.coeffs[1], iv.se_hc0[1]),
        first_stage_f: iv.first_stage_f,
        n,
    })
}
