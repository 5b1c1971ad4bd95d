//! Outcome and surrogate bridge functions as regularized linear
//! conditional-moment systems.
//!
//! The outcome bridge `h(w, s, x) = ψ(w, s, x)'α` solves the instrumented
//! moments `E_O[b(z, s, x)(y − ψ'α)] = 0`; the over-identified case uses the
//! two-stage weighting `α = (Ψ'P_BΨ + nλI)⁻¹Ψ'P_B y`.
//!
//! The surrogate bridge `q_a(z, s, x) = φ(z, s, x)'β` solves, for every test
//! function `g_j(w, s, x)`,
//!
//! ```text
//! (1/n_O) Σ_O g_j φ'β = (1/n_E) Σ_E 1{a_i = a} g_j / ê_a(x_i)
//! ```
//!
//! which integrates the defining conditional restriction against the test
//! functions under the observational law. The right-hand side is the
//! experimental inverse-propensity average, so the arm-`a` target law enters
//! through the experimental sample only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{fit_basis, BasisSpec, FittedBasis};
use crate::data::{RoleAccess, UnitRecord};
use crate::error::{Error, Result};
use crate::linalg::{solve_min_distance, WARN_COND};
use crate::nuisance::PropensityModel;

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn indicator(self, treated: bool) -> bool {
        matches!((self, treated), (Arm::Treated, true) | (Arm::Control, false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BridgeKind {
    Outcome,
    Surrogate { arm: Arm },
}

/// A basis expansion with its coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeFunction {
    pub kind: BridgeKind,
    pub basis: FittedBasis,
    pub coeffs: Vec<f64>,
    pub ridge: f64,
}

impl BridgeFunction {
    /// The constant function `c`.
    pub fn constant(kind: BridgeKind, c: f64) -> Self {
        Self {
            kind,
            basis: FittedBasis::intercept_only(),
            coeffs: vec![c],
            ridge: 0.0,
        }
    }

    /// Same basis, coefficients replaced.
    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != self.basis.out_dim() {
            return Err(Error::Validation(format!(
                "bridge expects {} coefficients, got {}",
                self.basis.out_dim(),
                coeffs.len()
            )));
        }
        Ok(Self { coeffs, ..self.clone() })
    }

    pub fn eval<R: RoleAccess + ?Sized>(&self, rec: &R) -> Result<f64> {
        let phi = self.basis.eval(rec)?;
        Ok(dot(&phi, &self.coeffs))
    }

    /// Coefficients in raw variable units (`[intercept, slopes..]`), for
    /// degree-1 bases only.
    pub fn raw_coeffs(&self) -> Option<Vec<f64>> {
        self.basis.unstandardize_linear(&self.coeffs)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Free function form of [`BridgeFunction::eval`].
pub fn eval_bridge<R: RoleAccess + ?Sized>(bf: &BridgeFunction, rec: &R) -> Result<f64> {
    bf.eval(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDiagnostics {
    pub max_abs_moment: f64,
    pub gram_condition: f64,
    pub n_instruments: usize,
    pub n_params: usize,
    pub ill_conditioned: bool,
    pub min_norm: bool,
    /// Propensity predictions that hit the clip bounds (surrogate solves).
    pub clipped_propensities: usize,
}

/// Ridge and fallback settings shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeOptions {
    pub ridge: f64,
    pub allow_min_norm: bool,
}

pub const DEFAULT_RIDGE: f64 = 1e-6;

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            ridge: DEFAULT_RIDGE,
            allow_min_norm: false,
        }
    }
}

impl BridgeOptions {
    pub fn unregularized() -> Self {
        Self {
            ridge: 0.0,
            allow_min_norm: false,
        }
    }
}

/// Averaged `A'B / n` for row-aligned design matrices.
fn cross_mean(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    (a.transpose() * b) / a.nrows() as f64
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn precheck_dims<R: RoleAccess>(
    view: &[&R],
    params: &BasisSpec,
    instruments: &BasisSpec,
) -> Result<(FittedBasis, FittedBasis)> {
    let p = fit_basis(params, view)?;
    let b = fit_basis(instruments, view)?;
    if b.out_dim() < p.out_dim() {
        return Err(Error::UnderIdentified {
            n_instruments: b.out_dim(),
            n_params: p.out_dim(),
        });
    }
    Ok((p, b))
}

/// Solves the outcome bridge on an observational view.
pub fn solve_outcome_bridge(
    o_view: &[&UnitRecord],
    psi: &BasisSpec,
    b: &BasisSpec,
    opts: &BridgeOptions,
) -> Result<(BridgeFunction, MomentDiagnostics)> {
    if o_view.is_empty() {
        return Err(Error::Validation(
            "outcome bridge needs a non-empty observational view".into(),
        ));
    }
    let (psi_basis, b_basis) = precheck_dims(o_view, psi, b)?;
    let y = DVector::from_iterator(
        o_view.len(),
        o_view
            .iter()
            .map(|r| {
                r.y.ok_or(Error::RoleUnavailable {
                    role: crate::data::Role::Y,
                    context: "outcome bridge requires observational units".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?,
    );
    let psi_m = psi_basis.design_matrix(o_view)?;
    let b_m = b_basis.design_matrix(o_view)?;
    let cross = cross_mean(&b_m, &psi_m);
    let gram = cross_mean(&b_m, &b_m);
    let target = (b_m.transpose() * &y) / o_view.len() as f64;
    let sol = solve_min_distance(&cross, &gram, &target, opts.ridge, opts.allow_min_norm)?;
    let moments = &target - &cross * &sol.coeffs;
    let diag = MomentDiagnostics {
        max_abs_moment: max_abs(&moments),
        gram_condition: sol.condition,
        n_instruments: b_basis.out_dim(),
        n_params: psi_basis.out_dim(),
        ill_conditioned: sol.condition > WARN_COND,
        min_norm: sol.min_norm,
        clipped_propensities: 0,
    };
    let bf = BridgeFunction {
        kind: BridgeKind::Outcome,
        basis: psi_basis,
        coeffs: sol.coeffs.iter().copied().collect(),
        ridge: opts.ridge,
    };
    Ok((bf, diag))
}

/// Solves the arm-`a` surrogate bridge from an observational view (left side
/// of the moments) and an experimental view (right side).
pub fn solve_surrogate_bridge(
    o_view: &[&UnitRecord],
    e_view: &[&UnitRecord],
    arm: Arm,
    phi: &BasisSpec,
    g: &BasisSpec,
    propensity: &PropensityModel,
    opts: &BridgeOptions,
) -> Result<(BridgeFunction, MomentDiagnostics)> {
    if o_view.is_empty() || e_view.is_empty() {
        return Err(Error::Validation(
            "surrogate bridge needs non-empty views of both samples".into(),
        ));
    }
    let (phi_basis, g_basis) = precheck_dims(o_view, phi, g)?;
    let phi_m = phi_basis.design_matrix(o_view)?;
    let g_o = g_basis.design_matrix(o_view)?;
    let cross = cross_mean(&g_o, &phi_m);
    let gram = cross_mean(&g_o, &g_o);

    let m = g_basis.out_dim();
    let mut target = DVector::zeros(m);
    let mut clipped = 0;
    let mut row = Vec::with_capacity(m);
    for rec in e_view {
        let treated = rec.a.ok_or(Error::RoleUnavailable {
            role: crate::data::Role::A,
            context: "surrogate bridge right side requires experimental units".into(),
        })?;
        if !arm.indicator(treated) {
            continue;
        }
        let (e, was_clipped) = propensity.predict_flagged(*rec)?;
        clipped += usize::from(was_clipped);
        let weight = match arm {
            Arm::Treated => 1.0 / e,
            Arm::Control => 1.0 / (1.0 - e),
        };
        g_basis.eval_into(*rec, &mut row)?;
        for (t, v) in target.iter_mut().zip(&row) {
            *t += weight * v;
        }
    }
    target /= e_view.len() as f64;

    let sol = solve_min_distance(&cross, &gram, &target, opts.ridge, opts.allow_min_norm)?;
    let moments = &target - &cross * &sol.coeffs;
    let diag = MomentDiagnostics {
        max_abs_moment: max_abs(&moments),
        gram_condition: sol.condition,
        n_instruments: m,
        n_params: phi_basis.out_dim(),
        ill_conditioned: sol.condition > WARN_COND,
        min_norm: sol.min_norm,
        clipped_propensities: clipped,
    };
    let bf = BridgeFunction {
        kind: BridgeKind::Surrogate { arm },
        basis: phi_basis,
        coeffs: sol.coeffs.iter().copied().collect(),
        ridge: opts.ridge,
    };
    Ok((bf, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::data::{Role, Sample};
    use crate::nuisance::PropensityModel;

    fn o_rec(y: f64, w: f64, z: f64, s: f64, x: f64) -> UnitRecord {
        UnitRecord {
            y: Some(y),
            w: vec![w],
            z: Some(vec![z]),
            s: vec![s],
            a: None,
            x: vec![x],
            g: Sample::Observational,
        }
    }

    fn e_rec(a: bool, w: f64, s: f64, x: f64) -> UnitRecord {
        UnitRecord {
            y: None,
            w: vec![w],
            z: None,
            s: vec![s],
            a: Some(a),
            x: vec![x],
            g: Sample::Experimental,
        }
    }

    /// Small deterministic pseudo-random stream for fixtures.
    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    fn o_sample(n: usize, seed: u64, y_of: impl Fn(f64, f64, f64, f64) -> f64) -> Vec<UnitRecord> {
        let mut st = seed;
        (0..n)
            .map(|_| {
                let u = lcg(&mut st);
                let w = u + lcg(&mut st);
                let z = u + lcg(&mut st);
                let s = u + lcg(&mut st);
                let x = lcg(&mut st);
                o_rec(y_of(u, s, x, lcg(&mut st)), w, z, s, x)
            })
            .collect()
    }

    #[test]
    fn constant_outcome_recovered() {
        let recs = o_sample(200, 3, |_, _, _, _| 5.0);
        let view: Vec<&UnitRecord> = recs.iter().collect();
        let psi = BasisSpec::linear(&[Role::W, Role::S, Role::X]);
        let b = BasisSpec::linear(&[Role::Z, Role::S, Role::X]);
        let (h, d) = solve_outcome_bridge(&view, &psi, &b, &BridgeOptions::unregularized()).unwrap();
        assert!((h.coeffs[0] - 5.0).abs() < 1e-8);
        assert!(h.coeffs[1..].iter().all(|c| c.abs() < 1e-8));
        assert!(d.max_abs_moment < 1e-8);
        assert_eq!((d.n_instruments, d.n_params), (4, 4));
    }

    #[test]
    fn under_identified_rejected() {
        let recs = o_sample(50, 5, |u, s, _, e| s + u + e);
        let view: Vec<&UnitRecord> = recs.iter().collect();
        let psi = BasisSpec::linear(&[Role::W, Role::S, Role::X]);
        let b = BasisSpec::linear(&[Role::S, Role::X]);
        assert!(matches!(
            solve_outcome_bridge(&view, &psi, &b, &BridgeOptions::default()),
            Err(Error::UnderIdentified {
                n_instruments: 3,
                n_params: 4
            })
        ));
    }

    #[test]
    fn rank_deficient_without_ridge() {
        // w duplicated as s makes ψ collinear
        let recs: Vec<UnitRecord> = o_sample(50, 9, |u, s, _, e| s + u + e)
            .into_iter()
            .map(|mut r| {
                r.s = r.w.clone();
                r
            })
            .collect();
        let view: Vec<&UnitRecord> = recs.iter().collect();
        let psi = BasisSpec::linear(&[Role::W, Role::S]).with_standardize(false);
        let b = BasisSpec::linear(&[Role::Z, Role::S, Role::X]).with_standardize(false);
        assert!(matches!(
            solve_outcome_bridge(&view, &psi, &b, &BridgeOptions::unregularized()),
            Err(Error::Singular(_))
        ));
        let min_norm = BridgeOptions {
            ridge: 0.0,
            allow_min_norm: true,
        };
        let (h, d) = solve_outcome_bridge(&view, &psi, &b, &min_norm).unwrap();
        assert!(d.min_norm);
        assert!((h.coeffs[1] - h.coeffs[2]).abs() < 1e-6);
    }

    #[test]
    fn eval_examples() {
        let r = o_rec(0.0, 1.0, 0.0, 1.0, 0.0);
        let three = BridgeFunction::constant(BridgeKind::Outcome, 3.0);
        assert_eq!(eval_bridge(&three, &r).unwrap(), 3.0);
        let zero = BridgeFunction::constant(BridgeKind::Outcome, 0.0);
        assert_eq!(eval_bridge(&zero, &r).unwrap(), 0.0);
    }

    #[test]
    fn eval_missing_role() {
        let recs = o_sample(20, 1, |_, s, _, _| s);
        let view: Vec<&UnitRecord> = recs.iter().collect();
        let spec = BasisSpec::linear(&[Role::Z]);
        let (q, _) = solve_outcome_bridge(&view, &spec, &spec, &BridgeOptions::default()).unwrap();
        let e = e_rec(true, 0.0, 0.0, 0.0);
        assert!(matches!(q.eval(&e), Err(Error::RoleUnavailable { role: Role::Z, .. })));
    }

    #[test]
    fn surrogate_bridge_normalizes_under_constant_propensity() {
        let o = o_sample(300, 11, |u, s, _, e| s + u + e);
        let mut st = 77u64;
        let e: Vec<UnitRecord> = (0..300)
            .map(|i| {
                let u = lcg(&mut st);
                e_rec(i % 3 == 0, u + lcg(&mut st), u + lcg(&mut st), lcg(&mut st))
            })
            .collect();
        let o_view: Vec<&UnitRecord> = o.iter().collect();
        let e_view: Vec<&UnitRecord> = e.iter().collect();
        let share = e.iter().filter(|r| r.a == Some(true)).count() as f64 / e.len() as f64;
        let prop = PropensityModel::fixed(share, 0.01);
        let phi = BasisSpec::linear(&[Role::Z, Role::S, Role::X]);
        let g = BasisSpec::linear(&[Role::W, Role::S, Role::X]);
        let opts = BridgeOptions::unregularized();
        let mut sum = 0.0;
        for arm in [Arm::Treated, Arm::Control] {
            let (q, d) = solve_surrogate_bridge(&o_view, &e_view, arm, &phi, &g, &prop, &opts).unwrap();
            assert!(d.max_abs_moment < 1e-10);
            let mean: f64 = o.iter().map(|r| q.eval(r).unwrap()).sum::<f64>() / o.len() as f64;
            assert!((mean - 1.0).abs() < 1e-10, "{arm:?}: {mean}");
            sum += mean;
        }
        assert!((sum - 2.0).abs() < 1e-10);
    }

    #[test]
    fn bridge_artifact_round_trips() {
        let recs = o_sample(40, 2, |u, s, _, e| 2.0 * s + u + e);
        let view: Vec<&UnitRecord> = recs.iter().collect();
        let (h, _) = solve_outcome_bridge(
            &view,
            &BasisSpec::linear(&[Role::W, Role::S, Role::X]),
            &BasisSpec::linear(&[Role::Z, Role::S, Role::X]),
            &BridgeOptions::default(),
        )
        .unwrap();
        let text = serde_json::to_string(&h).unwrap();
        let back: BridgeFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(back, h);
        for r in &recs {
            assert_eq!(back.eval(r).unwrap().to_bits(), h.eval(r).unwrap().to_bits());
        }
    }
}
