//! Propensity score `e(x)` on the experimental sample and the pseudo-outcome
//! regression `h̄(a, x) = E[h(w, s, x) | a, x, E]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{fit_basis, BasisSpec, FittedBasis};
use crate::bridge::{dot, Arm, BridgeFunction};
use crate::data::{RoleAccess, UnitRecord};
use crate::error::{Error, Result};
use crate::linalg::lstsq;

pub const DEFAULT_CLIP_EPS: f64 = 0.01;
pub const IRLS_TOL: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;
/// Ridge penalty (per unit) of the fallback fit used when IRLS diverges.
pub const FALLBACK_PENALTY: f64 = 1e-4;
/// Coefficient magnitude treated as divergence (quasi-separation).
const DIVERGENCE_BOUND: f64 = 30.0;

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PropensityKind {
    Logistic {
        basis: FittedBasis,
        coeffs: Vec<f64>,
    },
    /// Known assignment probability.
    Fixed {
        p: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityFitInfo {
    pub iterations: usize,
    pub converged: bool,
    /// The ridge-penalized fallback was used.
    pub penalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub kind: PropensityKind,
    pub clip_eps: f64,
    pub fit_info: Option<PropensityFitInfo>,
}

fn check_clip(clip_eps: f64) -> Result<()> {
    if clip_eps > 0.0 && clip_eps < 0.5 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "clip_eps must be in (0, 0.5), got {clip_eps}"
        )))
    }
}

impl PropensityModel {
    /// Constant propensity, e.g. a known randomization probability.
    pub fn fixed(p: f64, clip_eps: f64) -> Self {
        Self {
            kind: PropensityKind::Fixed { p },
            clip_eps,
            fit_info: None,
        }
    }

    /// Unclipped prediction.
    pub fn predict_raw<R: RoleAccess + ?Sized>(&self, rec: &R) -> Result<f64> {
        match &self.kind {
            PropensityKind::Fixed { p } => Ok(*p),
            PropensityKind::Logistic { basis, coeffs } => Ok(logistic(dot(&basis.eval(rec)?, coeffs))),
        }
    }

    /// Clipped prediction and whether the clip was active.
    pub fn predict_flagged<R: RoleAccess + ?Sized>(&self, rec: &R) -> Result<(f64, bool)> {
        let raw = self.predict_raw(rec)?;
        let lo = self.clip_eps;
        let hi = 1.0 - self.clip_eps;
        if raw < lo {
            Ok((lo, true))
        } else if raw > hi {
            Ok((hi, true))
        } else {
            Ok((raw, false))
        }
    }

    pub fn predict<R: RoleAccess + ?Sized>(&self, rec: &R) -> Result<f64> {
        Ok(self.predict_flagged(rec)?.0)
    }
}

pub fn eval_propensity<R: RoleAccess + ?Sized>(m: &PropensityModel, rec: &R) -> Result<f64> {
    m.predict(rec)
}

fn treatments(e_view: &[&UnitRecord]) -> Result<Vec<f64>> {
    let a: Vec<f64> = e_view
        .iter()
        .map(|r| {
            r.a.map(|a| if a { 1.0 } else { 0.0 }).ok_or(Error::RoleUnavailable {
                role: crate::data::Role::A,
                context: "experimental view required".into(),
            })
        })
        .collect::<Result<_>>()?;
    let treated = a.iter().filter(|&&v| v == 1.0).count();
    if treated == 0 || treated == a.len() {
        return Err(Error::DegenerateTreatment(format!(
            "{treated} treated of {} experimental units; both arms are required",
            a.len()
        )));
    }
    Ok(a)
}

struct IrlsOutcome {
    coeffs: DVector<f64>,
    iterations: usize,
    converged: bool,
}

/// Newton / IRLS for the logistic likelihood with an optional ridge on the
/// non-intercept coefficients (`penalty · n · ‖β‖²/2`).
fn irls(x: &DMatrix<f64>, a: &[f64], penalty: f64, has_intercept: bool) -> IrlsOutcome {
    let (n, p) = x.shape();
    let mut beta = DVector::zeros(p);
    let pen = penalty * n as f64;
    for it in 1..=IRLS_MAX_ITER {
        let eta = x * &beta;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let mu = logistic(eta[i]);
            let w = mu * (1.0 - mu);
            let r = a[i] - mu;
            let row = x.row(i);
            for j in 0..p {
                grad[j] += row[j] * r;
                let wj = w * row[j];
                for k in j..p {
                    hess[(j, k)] += wj * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                hess[(j, k)] = hess[(k, j)];
            }
        }
        let start = usize::from(has_intercept);
        for j in start..p {
            hess[(j, j)] += pen;
            grad[j] -= pen * beta[j];
        }
        let Some(ch) = hess.cholesky() else {
            return IrlsOutcome {
                coeffs: beta,
                iterations: it,
                converged: false,
            };
        };
        let step = ch.solve(&grad);
        beta += &step;
        if !beta.iter().all(|b| b.is_finite()) || beta.amax() > DIVERGENCE_BOUND {
            return IrlsOutcome {
                coeffs: beta,
                iterations: it,
                converged: false,
            };
        }
        if step.amax() < IRLS_TOL {
            return IrlsOutcome {
                coeffs: beta,
                iterations: it,
                converged: true,
            };
        }
    }
    IrlsOutcome {
        coeffs: beta,
        iterations: IRLS_MAX_ITER,
        converged: false,
    }
}

/// Logistic regression of `a` on `basis(x)` over the experimental view.
pub fn fit_propensity(e_view: &[&UnitRecord], basis: &BasisSpec, clip_eps: f64) -> Result<PropensityModel> {
    check_clip(clip_eps)?;
    let a = treatments(e_view)?;
    let fb = fit_basis(basis, e_view)?;
    let x = fb.design_matrix(e_view)?;
    let intercept = fb.spec().include_intercept;
    let mut out = irls(&x, &a, 0.0, intercept);
    let mut penalized = false;
    if !out.converged {
        log::warn!(
            "propensity IRLS did not converge after {} iterations; refitting with ridge {FALLBACK_PENALTY}",
            out.iterations
        );
        out = irls(&x, &a, FALLBACK_PENALTY, intercept);
        penalized = true;
        if !out.coeffs.iter().all(|b| b.is_finite()) {
            return Err(Error::Singular("penalized propensity fit diverged".into()));
        }
    }
    Ok(PropensityModel {
        kind: PropensityKind::Logistic {
            basis: fb,
            coeffs: out.coeffs.iter().copied().collect(),
        },
        clip_eps,
        fit_info: Some(PropensityFitInfo {
            iterations: out.iterations,
            converged: out.converged,
            penalized,
        }),
    })
}

/// Per-arm linear regression of a pseudo-outcome on `basis(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBarModel {
    pub basis: FittedBasis,
    pub arm0: Vec<f64>,
    pub arm1: Vec<f64>,
}

impl HBarModel {
    /// `h̄(0, ·) ≡ c0`, `h̄(1, ·) ≡ c1`.
    pub fn constant(c0: f64, c1: f64) -> Self {
        Self {
            basis: FittedBasis::intercept_only(),
            arm0: vec![c0],
            arm1: vec![c1],
        }
    }

    pub fn coeffs(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Control => &self.arm0,
            Arm::Treated => &self.arm1,
        }
    }

    pub fn eval<R: RoleAccess + ?Sized>(&self, arm: Arm, rec: &R) -> Result<f64> {
        Ok(dot(&self.basis.eval(rec)?, self.coeffs(arm)))
    }

    /// Both arms from one basis evaluation: `(h̄(0, x), h̄(1, x))`.
    pub fn eval_both<R: RoleAccess + ?Sized>(&self, rec: &R) -> Result<(f64, f64)> {
        let phi = self.basis.eval(rec)?;
        Ok((dot(&phi, &self.arm0), dot(&phi, &self.arm1)))
    }
}

pub fn eval_hbar<R: RoleAccess + ?Sized>(m: &HBarModel, a: Arm, rec: &R) -> Result<f64> {
    m.eval(a, rec)
}

/// Regresses `pseudo[i]` (aligned with `e_view`) on `basis(x)` within each arm.
pub fn fit_hbar_pseudo(e_view: &[&UnitRecord], pseudo: &[f64], basis: &BasisSpec) -> Result<HBarModel> {
    if pseudo.len() != e_view.len() {
        return Err(Error::Validation(
            "pseudo-outcome length does not match the view".into(),
        ));
    }
    let a = treatments(e_view)?;
    let fb = fit_basis(basis, e_view)?;
    let x = fb.design_matrix(e_view)?;
    let fit_arm = |arm: f64| -> Result<Vec<f64>> {
        let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] == arm).collect();
        let xs = x.select_rows(&rows);
        let ys = DVector::from_iterator(rows.len(), rows.iter().map(|&i| pseudo[i]));
        Ok(lstsq(&xs, &ys)?.iter().copied().collect())
    };
    Ok(HBarModel {
        arm0: fit_arm(0.0)?,
        arm1: fit_arm(1.0)?,
        basis: fb,
    })
}

/// Computes the pseudo-outcome `h(w, s, x)` on the experimental view and
/// regresses it on `(a, x)` arm by arm.
pub fn fit_hbar(e_view: &[&UnitRecord], h: &BridgeFunction, basis: &BasisSpec) -> Result<HBarModel> {
    let pseudo: Vec<f64> = e_view.iter().map(|r| h.eval(*r)).collect::<Result<_>>()?;
    fit_hbar_pseudo(e_view, &pseudo, basis)
}
