mod common;

use proptest::prelude::*;
use proxsurr::bridge::{Arm, BridgeFunction, BridgeKind};
use proxsurr::data::{CombinedDataset, Sample, UnitRecord};
use proxsurr::estimators::*;
use proxsurr::normal::normal_quantile;
use proxsurr::nuisance::{HBarModel, PropensityModel};
use proxsurr::synth::{generate, DGPConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn fitted(n: usize, seed: u64) -> (CombinedDataset, FoldAssignment, CrossFit) {
    let (d, _) = generate(&DGPConfig::confounded(), n, 0.5, seed).unwrap();
    let folds = make_folds(&d, 5, seed).unwrap();
    let fit = fit_all(&d, &folds, &EstimatorConfig::default()).unwrap();
    (d, folds, fit)
}

fn sums(d: &CombinedDataset, f: &FoldAssignment, n: &[NuisanceSet]) -> TermSums {
    TermSums::new(d, &unit_terms(d, f, n).unwrap())
}

fn estimate(kind: EstimatorKind, d: &CombinedDataset, f: &FoldAssignment, n: &[NuisanceSet]) -> f64 {
    sums(d, f, n).estimate(kind).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_are_stratified_partitions(n_e in 2usize..60, n_o in 2usize..60, k in 2usize..8, seed in any::<u64>()) {
        prop_assume!(k <= n_e.min(n_o));
        let n = n_e + n_o;
        let (d, _) = generate(&DGPConfig::confounded(), n.max(10), n_e as f64 / n as f64, seed).unwrap();
        prop_assume!(d.n_e() == n_e && k <= d.n_o());
        let f = make_folds(&d, k, seed).unwrap();
        prop_assert_eq!(&f, &make_folds(&d, k, seed).unwrap());
        let (e, o) = f.fold_sizes(&d);
        for sizes in [e, o] {
            let total: usize = sizes.iter().sum();
            let q = total / k;
            let r = total % k;
            for (i, s) in sizes.iter().enumerate() {
                prop_assert_eq!(*s, q + usize::from(i < r));
            }
        }
    }
}

#[test]
fn fold_count_out_of_range_is_rejected() {
    let (d, _) = generate(&DGPConfig::confounded(), 20, 0.5, 0).unwrap();
    assert!(make_folds(&d, 1, 0).unwrap_err().is_validation());
    assert!(make_folds(&d, 11, 0).unwrap_err().is_validation());
}

#[test]
fn fold_labels_do_not_matter() {
    let (d, folds, fit) = fitted(2000, 1);
    let perm = [3, 0, 4, 1, 2];
    let relabeled = folds.relabel(&perm).unwrap();
    let mut moved = fit.nuisances.clone();
    for (k, n) in fit.nuisances.iter().enumerate() {
        moved[perm[k]] = n.clone();
    }
    let refit = fit_all(&d, &relabeled, &EstimatorConfig::default()).unwrap();
    assert_eq!(refit.nuisances, moved);
    for kind in EstimatorKind::CROSS_FITTED {
        let a = estimate(kind, &d, &folds, &fit.nuisances);
        let b = estimate(kind, &d, &relabeled, &refit.nuisances);
        assert_eq!(a.to_bits(), b.to_bits(), "{kind}");
    }
}

#[test]
fn record_order_does_not_matter() {
    let (d, folds) = {
        let (d, _) = generate(&DGPConfig::confounded(), 2000, 0.5, 2).unwrap();
        let f = make_folds(&d, 4, 2).unwrap();
        (d, f)
    };
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
    let shuffled = CombinedDataset::new(order.iter().map(|&i| d.records()[i].clone()).collect(), d.dims()).unwrap();
    let sf = FoldAssignment::from_labels(&shuffled, 4, order.iter().map(|&i| folds.fold_of[i]).collect(), 2).unwrap();
    let cfg = EstimatorConfig::default();
    let a = estimate_all(&d, &folds, &cfg).unwrap();
    let b = estimate_all(&shuffled, &sf, &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(
            (x.tau_hat - y.tau_hat).abs() < 1e-12,
            "{} {} {}",
            x.estimator,
            x.tau_hat,
            y.tau_hat
        );
    }
}

#[test]
fn exact_reductions() {
    let (d, folds, fit) = fitted(3000, 3);
    let mut equal_q = fit.nuisances.clone();
    for n in &mut equal_q {
        n.q1 = n.q0.clone();
    }
    let s = sums(&d, &folds, &equal_q);
    assert_eq!(
        s.estimate(EstimatorKind::Mr).unwrap().to_bits(),
        s.mr_e_part().to_bits()
    );
    assert_eq!(s.estimate(EstimatorKind::Sb).unwrap(), 0.0);

    let mut zero_h = fit.nuisances.clone();
    for n in &mut zero_h {
        n.h = BridgeFunction::constant(BridgeKind::Outcome, 0.0);
        n.hbar = HBarModel::constant(0.0, 0.0);
    }
    let s = sums(&d, &folds, &zero_h);
    assert_eq!(
        s.estimate(EstimatorKind::Mr).unwrap().to_bits(),
        s.estimate(EstimatorKind::Sb).unwrap().to_bits()
    );
}

#[test]
fn constant_bridge_examples() {
    let (d, folds, fit) = fitted(2000, 4);
    let treated = d.records().iter().filter(|r| r.a == Some(true)).count() as f64 / d.n_e() as f64;
    let mut n = fit.nuisances.clone();
    for k in &mut n {
        k.h = BridgeFunction::constant(BridgeKind::Outcome, 2.5);
        k.hbar = HBarModel::constant(2.5, 2.5);
        k.e = PropensityModel::fixed(treated, 0.01);
    }
    assert_eq!(estimate(EstimatorKind::ObOr, &d, &folds, &n), 0.0);
    assert!(estimate(EstimatorKind::ObIpw, &d, &folds, &n).abs() < 1e-12);
}

#[test]
fn sb_examples() {
    let (d, folds, fit) = fitted(2000, 5);
    let mut n = fit.nuisances.clone();
    for k in &mut n {
        k.q0 = k.q1.clone();
    }
    assert_eq!(estimate(EstimatorKind::Sb, &d, &folds, &n), 0.0);

    let c = 3.0;
    let shifted = CombinedDataset::new(
        d.records()
            .iter()
            .map(|r| UnitRecord {
                y: r.y.map(|y| y + c),
                ..r.clone()
            })
            .collect(),
        d.dims(),
    )
    .unwrap();
    let cfg = EstimatorConfig::default();
    let base = estimate_sb(&d, &folds, &cfg).unwrap().tau_hat;
    let moved = estimate_sb(&shifted, &folds, &cfg).unwrap().tau_hat;
    let dq: f64 = d
        .records()
        .iter()
        .zip(&folds.fold_of)
        .filter(|(r, _)| r.g == Sample::Observational)
        .map(|(r, &k)| {
            fit.nuisances[k].q(Arm::Treated).eval(r).unwrap() - fit.nuisances[k].q(Arm::Control).eval(r).unwrap()
        })
        .sum::<f64>()
        / d.n_o() as f64;
    assert!((moved - base - c * dq).abs() < 1e-10);
}

#[test]
fn stored_contributions_reproduce_the_estimates() {
    let (d, folds, fit) = fitted(2000, 6);
    let terms = unit_terms(&d, &folds, &fit.nuisances).unwrap();
    let mean_contrast = d
        .records()
        .iter()
        .zip(&terms)
        .filter(|(r, _)| r.is_experimental())
        .map(|(_, t)| t.contrast)
        .sum::<f64>()
        / d.n_e() as f64;
    let rep = report_from_terms(EstimatorKind::ObOr, &d, &folds, &terms, &fit.diagnostics, 0.05).unwrap();
    assert_eq!(rep.tau_hat, mean_contrast);
    assert!(rep.variance_hat.is_none() && rep.ci.is_none());
    assert_eq!(rep.per_fold_diagnostics.len(), 5);
}

#[test]
fn mr_interval_is_exact() {
    let (d, folds, fit) = fitted(3000, 7);
    let terms = unit_terms(&d, &folds, &fit.nuisances).unwrap();
    let rep = report_from_terms(EstimatorKind::Mr, &d, &folds, &terms, &fit.diagnostics, 0.1).unwrap();
    let v = rep.variance_hat.unwrap();
    let (lo, hi) = rep.ci.unwrap();
    assert!(v >= 0.0 && lo <= rep.tau_hat && rep.tau_hat <= hi);
    let width = 2.0 * normal_quantile(0.95) * (v / d.len() as f64).sqrt();
    assert!((hi - lo - width).abs() < 1e-14);
}

#[test]
fn variance_vanishes_without_residual_terms() {
    let (d, _) = generate(&DGPConfig::confounded(), 100, 0.5, 1).unwrap();
    let terms: Vec<UnitTerms> = d
        .records()
        .iter()
        .map(|r| UnitTerms {
            contrast: if r.is_experimental() { 0.7 } else { 0.0 },
            ..UnitTerms::default()
        })
        .collect();
    assert_eq!(mr_variance(&d, &terms, 0.7), 0.0);
}

#[test]
fn single_arm_fold_aborts_with_fold_index() {
    let (d, _) = generate(&DGPConfig::confounded(), 200, 0.5, 1).unwrap();
    let folds = make_folds(&d, 2, 1).unwrap();
    let recs = d
        .records()
        .iter()
        .zip(&folds.fold_of)
        .map(|(r, &k)| UnitRecord {
            a: r.a.map(|a| if k == 0 { true } else { a }),
            ..r.clone()
        })
        .collect();
    let d = CombinedDataset::new(recs, d.dims()).unwrap();
    let err = estimate_mr(&d, &folds, &EstimatorConfig::default()).unwrap_err();
    assert_eq!(err.fold(), Some(1));
    assert!(!err.is_validation());
}

/// Replication means of two estimators sharing each dataset.
fn paired(cfg: &EstimatorConfig, a: EstimatorKind, b: EstimatorKind, n: usize, reps: u64) -> (Vec<f64>, Vec<f64>) {
    (0..reps)
        .map(|r| {
            let (d, _) = generate(&DGPConfig::confounded(), n, 0.5, 500 + r).unwrap();
            let folds = make_folds(&d, 5, r).unwrap();
            let out = estimate_many(&[a, b], &d, &folds, cfg).unwrap();
            (out[0].tau_hat, out[1].tau_hat)
        })
        .unzip()
}

#[test]
fn known_randomization_ipw_agrees_with_regression() {
    let cfg = EstimatorConfig {
        known_propensity: Some(0.5),
        ..EstimatorConfig::default()
    };
    let (ipw, or) = paired(&cfg, EstimatorKind::ObIpw, EstimatorKind::ObOr, 10_000, 60);
    let diff: Vec<f64> = ipw.iter().zip(&or).map(|(a, b)| a - b).collect();
    let (m, _) = common::mean_sd(&diff);
    assert!(m.abs() < 3.0 * common::mc_se(&diff), "{m}");
}

#[test]
fn boundary_propensity_biases_ipw() {
    let cfg = EstimatorConfig {
        known_propensity: Some(0.01),
        ..EstimatorConfig::default()
    };
    let (ipw, _) = paired(&cfg, EstimatorKind::ObIpw, EstimatorKind::ObOr, 4000, 20);
    let (m, _) = common::mean_sd(&ipw);
    let truth = DGPConfig::confounded().oracle().true_ate;
    assert!((m - truth).abs() > 5.0 * common::mc_se(&ipw));
}

#[test]
fn outcome_bridge_removes_most_of_the_naive_bias() {
    let (or, _) = paired(
        &EstimatorConfig::default(),
        EstimatorKind::ObOr,
        EstimatorKind::Mr,
        10_000,
        40,
    );
    let (m, _) = common::mean_sd(&or);
    let truth = DGPConfig::confounded().oracle().true_ate;
    assert!((m - truth).abs() < 0.2 * common::NAIVE_SI_BIAS, "{m}");
}

#[test]
fn surrogate_bridge_estimator_is_consistent() {
    let (sb, _) = paired(
        &EstimatorConfig::default(),
        EstimatorKind::Sb,
        EstimatorKind::Mr,
        200_000,
        12,
    );
    let (m, _) = common::mean_sd(&sb);
    let truth = DGPConfig::confounded().oracle().true_ate;
    assert!((m - truth).abs() < 3.0 * common::mc_se(&sb), "{m}");
}
