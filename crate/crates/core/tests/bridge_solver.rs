use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proxsurr::basis::BasisSpec;
use proxsurr::bridge::*;
use proxsurr::data::{split_by_sample, Role, UnitRecord};
use proxsurr::nuisance::{fit_propensity, PropensityModel};
use proxsurr::synth::{generate, DGPConfig};

fn wsx() -> BasisSpec {
    BasisSpec::linear(&[Role::W, Role::S, Role::X])
}

fn zsx() -> BasisSpec {
    BasisSpec::linear(&[Role::Z, Role::S, Role::X])
}

/// Raw-unit design rows `[1, roles...]` built without the basis module.
fn raw_rows(view: &[&UnitRecord], f: impl Fn(&UnitRecord) -> Vec<f64>) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = view
        .iter()
        .map(|r| {
            let mut v = vec![1.0];
            v.extend(f(r));
            v
        })
        .collect();
    DMatrix::from_row_iterator(rows.len(), rows[0].len(), rows.into_iter().flatten())
}

#[test]
fn just_identified_moments_vanish() {
    let (d, _) = generate(&DGPConfig::confounded(), 5000, 0.5, 21).unwrap();
    let (_, o) = split_by_sample(&d);
    let (h, diag) = solve_outcome_bridge(&o, &wsx(), &zsx(), &BridgeOptions::unregularized()).unwrap();
    assert_eq!((diag.n_instruments, diag.n_params), (6, 6));
    let b = raw_rows(&o, |r| [r.z.clone().unwrap(), r.s.clone(), r.x.clone()].concat());
    let mut m = DVector::zeros(6);
    for (i, r) in o.iter().enumerate() {
        let resid = r.y.unwrap() - h.eval(*r).unwrap();
        m += b.row(i).transpose() * resid;
    }
    m /= o.len() as f64;
    assert!(m.amax() <= 1e-10, "{m}");
    assert!(diag.max_abs_moment <= 1e-10);
}

#[test]
fn no_proxy_bridge_is_ols() {
    let (d, _) = generate(&DGPConfig::confounded(), 3000, 0.5, 2).unwrap();
    let (_, o) = split_by_sample(&d);
    let sx = BasisSpec::linear(&[Role::S, Role::X]);
    let (h, _) = solve_outcome_bridge(&o, &sx, &sx, &BridgeOptions::unregularized()).unwrap();
    let x = raw_rows(&o, |r| [r.s.clone(), r.x.clone()].concat());
    let y = DVector::from_iterator(o.len(), o.iter().map(|r| r.y.unwrap()));
    let beta = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * y));
    for (a, b) in h.raw_coeffs().unwrap().iter().zip(beta.iter()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn recovers_closed_form_bridge() {
    let (d, oracle) = generate(&DGPConfig::confounded(), 200_000, 0.5, 5).unwrap();
    let (_, o) = split_by_sample(&d);
    assert_eq!(o.len(), 100_000);
    let (h, _) = solve_outcome_bridge(&o, &wsx(), &zsx(), &BridgeOptions::default()).unwrap();
    for (a, b) in h.raw_coeffs().unwrap().iter().zip(&oracle.true_h_coeffs) {
        assert!((a - b).abs() < 0.05, "{a} vs {b}");
    }
}

#[test]
fn surrogate_bridges_normalize_under_constant_propensity() {
    let (d, _) = generate(&DGPConfig::unconfounded(), 2000, 0.5, 6).unwrap();
    let (e, o) = split_by_sample(&d);
    let share = e.iter().filter(|r| r.a == Some(true)).count() as f64 / e.len() as f64;
    let p = PropensityModel::fixed(share, 0.01);
    let opts = BridgeOptions::unregularized();
    let mut total = 0.0;
    for arm in [Arm::Control, Arm::Treated] {
        let (q, _) = solve_surrogate_bridge(&o, &e, arm, &zsx(), &wsx(), &p, &opts).unwrap();
        let mean = o.iter().map(|r| q.eval(*r).unwrap()).sum::<f64>() / o.len() as f64;
        assert!((mean - 1.0).abs() < 1e-10, "{mean}");
        total += mean;
    }
    assert!((total - 2.0).abs() < 1e-10);
}

#[test]
fn reweighting_identity_on_held_out_functions() {
    let (d, _) = generate(&DGPConfig::confounded(), 200_000, 0.5, 0).unwrap();
    let (e, o) = split_by_sample(&d);
    let p = fit_propensity(&e, &BasisSpec::linear(&[Role::X]), 0.01).unwrap();
    let tests: [fn(&UnitRecord) -> f64; 6] = [
        |r| r.w[0] * r.w[0],
        |r| r.s[0] * r.s[0],
        |r| r.x[0] * r.x[0],
        |r| r.w[0] * r.s[0],
        |r| r.s[0] * r.x[0],
        |r| r.x[0] * r.x[1],
    ];
    for arm in [Arm::Control, Arm::Treated] {
        let (q, _) = solve_surrogate_bridge(&o, &e, arm, &zsx(), &wsx(), &p, &BridgeOptions::default()).unwrap();
        for g in tests {
            let lhs = o.iter().map(|r| q.eval(*r).unwrap() * g(r)).sum::<f64>() / o.len() as f64;
            let rhs = e
                .iter()
                .filter(|r| arm.indicator(r.a.unwrap()))
                .map(|r| {
                    let p1 = p.predict(*r).unwrap();
                    g(r) / if arm == Arm::Treated { p1 } else { 1.0 - p1 }
                })
                .sum::<f64>()
                / e.len() as f64;
            assert!((lhs - rhs).abs() < 0.05, "{arm:?}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn bridge_evaluation_examples() {
    let c = BridgeFunction::constant(BridgeKind::Outcome, 3.0);
    let (d, _) = generate(&DGPConfig::confounded(), 50, 0.5, 1).unwrap();
    for r in d.records() {
        assert_eq!(c.eval(r).unwrap(), 3.0);
    }
    let zero = c.with_coeffs(vec![0.0]).unwrap();
    assert_eq!(zero.eval(&d.records()[0]).unwrap(), 0.0);
}

#[test]
fn fitted_bridge_serializes_and_reloads() {
    let (d, _) = generate(&DGPConfig::confounded(), 400, 0.5, 3).unwrap();
    let (_, o) = split_by_sample(&d);
    let (h, _) = solve_outcome_bridge(&o, &wsx(), &zsx(), &BridgeOptions::default()).unwrap();
    let text = serde_json::to_string(&h).unwrap();
    let back: BridgeFunction = serde_json::from_str(&text).unwrap();
    for r in &o {
        assert_eq!(back.eval(*r).unwrap().to_bits(), h.eval(*r).unwrap().to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn more_ridge_never_grows_the_solution(seed in 0u64..1000, l1 in 0.0f64..1.0, dl in 1e-6f64..5.0) {
        let (d, _) = generate(&DGPConfig::confounded(), 300, 0.5, seed).unwrap();
        let (_, o) = split_by_sample(&d);
        let norm = |ridge: f64| {
            let opts = BridgeOptions { ridge, allow_min_norm: false };
            let (h, _) = solve_outcome_bridge(&o, &wsx(), &zsx(), &opts).unwrap();
            h.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
        };
        prop_assert!(norm(l1) >= norm(l1 + dl) - 1e-12);
    }

    #[test]
    fn outcome_scaling_scales_the_solution(seed in 0u64..1000, c in -5.0f64..5.0) {
        let (d, _) = generate(&DGPConfig::confounded(), 300, 0.5, seed).unwrap();
        let (_, o) = split_by_sample(&d);
        let scaled: Vec<UnitRecord> = o.iter().map(|r| UnitRecord { y: r.y.map(|y| c * y), ..(*r).clone() }).collect();
        let sv: Vec<&UnitRecord> = scaled.iter().collect();
        let opts = BridgeOptions::unregularized();
        let (h, _) = solve_outcome_bridge(&o, &wsx(), &zsx(), &opts).unwrap();
        let (hc, _) = solve_outcome_bridge(&sv, &wsx(), &zsx(), &opts).unwrap();
        for (a, b) in h.coeffs.iter().zip(&hc.coeffs) {
            prop_assert!((c * a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
