//! Evaluation designs: splitting a fully observed experiment into masked
//! experimental and observational halves, deliberate nuisance corruption,
//! and the Monte Carlo replication engine.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::surrogate_index_estimate;
use crate::bridge::{Arm, BridgeFunction, BridgeKind};
use crate::data::{CombinedDataset, ExperimentalSource, Sample, UnitRecord};
use crate::error::{Error, Result};
use crate::estimators::{
    confidence_interval, fit_all, make_folds, mr_variance, training_views, unit_terms, EstimatorConfig, EstimatorKind,
    FoldAssignment, NuisanceSet, TermSums,
};
use crate::normal::normal_quantile;
use crate::nuisance::{fit_hbar, HBarModel, PropensityModel};
use crate::synth::{generate, DGPConfig};

/// Share of units sent to the experimental sample, and the split seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskDesign {
    pub e_fraction: f64,
    pub seed: u64,
}

/// Sends each unit to the experimental sample with probability `e_fraction`
/// and masks `y`, `z` there and `a` in the observational sample.
pub fn split_and_mask(source: &ExperimentalSource, design: &MaskDesign) -> Result<CombinedDataset> {
    if !(design.e_fraction > 0.0 && design.e_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "e_fraction must be in (0, 1), got {}",
            design.e_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let records: Vec<UnitRecord> = source
        .records()
        .iter()
        .map(|r| {
            let to_e = rng.random::<f64>() < design.e_fraction;
            UnitRecord {
                y: (!to_e).then_some(r.y),
                w: r.w.clone(),
                z: (!to_e).then(|| r.z.clone()),
                s: r.s.clone(),
                a: to_e.then_some(r.a),
                x: r.x.clone(),
                g: if to_e {
                    Sample::Experimental
                } else {
                    Sample::Observational
                },
            }
        })
        .collect();
    let n_e = records.iter().filter(|r| r.is_experimental()).count();
    if n_e == 0 || n_e == records.len() {
        return Err(Error::Validation(format!(
            "split of {} units left an empty {} sample",
            records.len(),
            if n_e == 0 { "experimental" } else { "observational" }
        )));
    }
    CombinedDataset::new(records, source.dims())
}

/// Which nuisances are replaced by fixed wrong functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisspecRegime {
    AllCorrect,
    /// `h` and `h̄` correct; `e` and `q` corrupted.
    Case1,
    /// `h` and `e` correct; `h̄` and `q` corrupted.
    Case2,
    /// `q` and `e` correct; `h` and `h̄` corrupted.
    Case3,
    /// `q` correct and `h̄` refitted on the corrupted `h`; `e` and `h` corrupted.
    Case4,
    AllWrong,
}

/// Constant propensity used wherever `e` is corrupted.
pub const WRONG_PROPENSITY: f64 = 0.8;
/// Arm shift of the corrupted `h̄`.
pub const WRONG_HBAR_SHIFT: f64 = 1.0;

impl MisspecRegime {
    pub const ALL: [MisspecRegime; 6] = [
        Self::AllCorrect,
        Self::Case1,
        Self::Case2,
        Self::Case3,
        Self::Case4,
        Self::AllWrong,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AllCorrect => "all_correct",
            Self::Case1 => "case1",
            Self::Case2 => "case2",
            Self::Case3 => "case3",
            Self::Case4 => "case4",
            Self::AllWrong => "all_wrong",
        }
    }

    fn corrupts(self) -> Corrupt {
        let c = |e, h, hbar, q| Corrupt { e, h, hbar, q };
        match self {
            Self::AllCorrect => c(false, false, false, false),
            Self::Case1 => c(true, false, false, true),
            Self::Case2 => c(false, false, true, true),
            Self::Case3 => c(false, true, true, false),
            Self::Case4 => c(true, true, false, false),
            Self::AllWrong => c(true, true, true, true),
        }
    }

    /// Human-readable list of the replacements this regime applies.
    pub fn corruption(self) -> String {
        let c = self.corrupts();
        let mut parts = Vec::new();
        if c.e {
            parts.push(format!("e ← {WRONG_PROPENSITY}"));
        }
        if c.h {
            parts.push("h ← mean_O(y)".to_string());
        }
        if c.hbar {
            parts.push(format!("h̄(a,x) ← mean_O(y) + {WRONG_HBAR_SHIFT}·a"));
        } else if self == Self::Case4 {
            parts.push("h̄ refitted on the corrupted h".to_string());
        }
        if c.q {
            parts.push("q₀, q₁ ← 1".to_string());
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("; ")
        }
    }
}

struct Corrupt {
    e: bool,
    h: bool,
    hbar: bool,
    q: bool,
}

impl fmt::Display for MisspecRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MisspecRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|r| r.name() == key)
            .ok_or_else(|| Error::Validation(format!("unknown regime `{s}`")))
    }
}

/// Replaces the nuisances a regime marks as wrong for fold `k`. Constants
/// use the observational outcome mean of that fold's training set.
pub fn apply_misspec(
    nuisances: &NuisanceSet,
    regime: MisspecRegime,
    data: &CombinedDataset,
    folds: &FoldAssignment,
    k: usize,
    config: &EstimatorConfig,
) -> Result<NuisanceSet> {
    let c = regime.corrupts();
    let mut out = nuisances.clone();
    if regime == MisspecRegime::AllCorrect {
        return Ok(out);
    }
    let (e_train, o_train) = training_views(data, folds, k);
    let y_mean = o_train.iter().filter_map(|r| r.y).sum::<f64>() / o_train.len() as f64;
    if c.e {
        out.e = PropensityModel::fixed(WRONG_PROPENSITY, config.clip_eps);
    }
    if c.h {
        out.h = BridgeFunction::constant(BridgeKind::Outcome, y_mean);
    }
    if c.hbar {
        out.hbar = HBarModel::constant(y_mean, y_mean + WRONG_HBAR_SHIFT);
    } else if c.h {
        out.hbar = fit_hbar(&e_train, &out.h, &config.hbar).map_err(|e| e.in_fold(k, "h-bar refit"))?;
    }
    if c.q {
        out.q0 = BridgeFunction::constant(BridgeKind::Surrogate { arm: Arm::Control }, 1.0);
        out.q1 = BridgeFunction::constant(BridgeKind::Surrogate { arm: Arm::Treated }, 1.0);
    }
    Ok(out)
}

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub dgp: DGPConfig,
    pub n: usize,
    pub pi: f64,
    pub estimators: Vec<EstimatorKind>,
    pub regimes: Vec<MisspecRegime>,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub estimator_config: EstimatorConfig,
}

/// Largest share of failed replications tolerated before a run aborts.
pub const MAX_FAILURE_SHARE: f64 = 0.02;

/// Fold seed for a replication, kept apart from the data seed.
pub fn fold_seed(seed: u64) -> u64 {
    seed ^ 0x5DEE_CE66_D1CE_5EED
}

/// One estimate from one replication under one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationEntry {
    pub regime: MisspecRegime,
    pub estimator: EstimatorKind,
    pub tau_hat: f64,
    /// `√(V̂/N)`, MR only.
    pub std_error: Option<f64>,
    /// CI at the configured level, MR only.
    pub ci: Option<(f64, f64)>,
    /// MR only: the experimental and observational parts of the estimate.
    pub mr_parts: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub seed: u64,
    pub entries: Vec<ReplicationEntry>,
}

/// Runs replication `r` (data seed `base_seed + r`).
pub fn run_replication(spec: &MonteCarloSpec, r: usize) -> Result<ReplicationOutcome> {
    let seed = spec.base_seed.wrapping_add(r as u64);
    let (data, _) = generate(&spec.dgp, spec.n, spec.pi, seed)?;
    let cfg = &spec.estimator_config;
    let mut entries = Vec::new();
    let cross: Vec<EstimatorKind> = spec
        .estimators
        .iter()
        .copied()
        .filter(|k| k.is_cross_fitted())
        .collect();
    let si: Vec<(EstimatorKind, f64)> = spec
        .estimators
        .iter()
        .filter(|k| !k.is_cross_fitted())
        .map(|&k| {
            surrogate_index_estimate(&data, k == EstimatorKind::SurrogateIndexProxies).map(|rep| (k, rep.tau_hat))
        })
        .collect::<Result<_>>()?;
    let fitted = if cross.is_empty() {
        None
    } else {
        let folds = make_folds(&data, cfg.k_folds, fold_seed(seed))?;
        let fit = fit_all(&data, &folds, cfg)?;
        Some((folds, fit))
    };
    for &regime in &spec.regimes {
        if let Some((folds, fit)) = &fitted {
            let nuisances: Vec<NuisanceSet> = (0..folds.k_folds)
                .map(|k| apply_misspec(&fit.nuisances[k], regime, &data, folds, k, cfg))
                .collect::<Result<_>>()?;
            let terms = unit_terms(&data, folds, &nuisances)?;
            let sums = TermSums::new(&data, &terms);
            for &kind in &cross {
                let tau_hat = sums.estimate(kind)?;
                let (std_error, ci, mr_parts) = if kind == EstimatorKind::Mr {
                    let v = mr_variance(&data, &terms, tau_hat);
                    let ci = confidence_interval(tau_hat, v, data.len(), cfg.alpha)?;
                    (
                        Some((v / data.len() as f64).sqrt()),
                        Some(ci),
                        Some((sums.mr_e_part(), sums.mr_o_part())),
                    )
                } else {
                    (None, None, None)
                };
                entries.push(ReplicationEntry {
                    regime,
                    estimator: kind,
                    tau_hat,
                    std_error,
                    ci,
                    mr_parts,
                });
            }
        }
        for &(kind, tau_hat) in &si {
            entries.push(ReplicationEntry {
                regime,
                estimator: kind,
                tau_hat,
                std_error: None,
                ci: None,
                mr_parts: None,
            });
        }
    }
    for e in &entries {
        if !e.tau_hat.is_finite() {
            return Err(Error::Singular(format!(
                "{} under {} is not finite",
                e.estimator, e.regime
            )));
        }
    }
    Ok(ReplicationOutcome {
        replication: r,
        seed,
        entries,
    })
}

/// Replication statistics for one estimator under one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub mean: f64,
    pub bias: f64,
    /// Spread with divisor `R`, so that `rmse² = bias² + sd²`.
    pub sd: f64,
    /// Monte Carlo standard error of the mean, `s/√R` with `s` the sample sd.
    pub mc_se: f64,
    pub rmse: f64,
    /// Share of 95% intervals covering the truth (MR only).
    pub coverage_95: Option<f64>,
    /// Average `√(V̂/N)` (MR only).
    pub mean_std_error: Option<f64>,
    pub n_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: MisspecRegime,
    pub corruption: String,
    pub estimators: Vec<EstimatorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub true_ate: f64,
    pub n: usize,
    pub pi: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub failed: usize,
    pub failures: Vec<FailureRecord>,
    pub regimes: Vec<RegimeReport>,
}

impl MCReport {
    pub fn summary(&self, regime: MisspecRegime, estimator: EstimatorKind) -> Option<&EstimatorSummary> {
        self.regimes
            .iter()
            .find(|r| r.regime == regime)?
            .estimators
            .iter()
            .find(|e| e.estimator == estimator)
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "true ATE {:.6}   n {}   pi {}   replications {} ({} failed)   base seed {}",
            self.true_ate, self.n, self.pi, self.replications, self.failed, self.base_seed
        );
        let _ = writeln!(
            s,
            "{:<12} {:<11} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9}",
            "regime", "estimator", "mean", "bias", "sd", "mc_se", "rmse", "cover95"
        );
        for reg in &self.regimes {
            for e in &reg.estimators {
                let cov = e.coverage_95.map_or("-".to_string(), |c| format!("{c:.3}"));
                let _ = writeln!(
                    s,
                    "{:<12} {:<11} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>9}",
                    reg.regime.name(),
                    e.estimator.name(),
                    e.mean,
                    e.bias,
                    e.sd,
                    e.mc_se,
                    e.rmse,
                    cov
                );
            }
        }
        s
    }
}

fn summarize(estimator: EstimatorKind, entries: &[&ReplicationEntry], truth: f64) -> EstimatorSummary {
    let r = entries.len() as f64;
    let mean = entries.iter().map(|e| e.tau_hat).sum::<f64>() / r;
    let ss = entries.iter().map(|e| (e.tau_hat - mean).powi(2)).sum::<f64>();
    let sd = (ss / r).sqrt();
    let sample_sd = if entries.len() > 1 {
        (ss / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    let bias = mean - truth;
    let z95 = normal_quantile(0.975);
    let with_se: Vec<f64> = entries.iter().filter_map(|e| e.std_error).collect();
    let (coverage_95, mean_std_error) = if with_se.len() == entries.len() && !with_se.is_empty() {
        let covered = entries
            .iter()
            .filter(|e| {
                let se = e.std_error.unwrap_or(0.0);
                (e.tau_hat - truth).abs() <= z95 * se
            })
            .count();
        (Some(covered as f64 / r), Some(with_se.iter().sum::<f64>() / r))
    } else {
        (None, None)
    };
    EstimatorSummary {
        estimator,
        mean,
        bias,
        sd,
        mc_se: sample_sd / r.sqrt(),
        rmse: (bias * bias + sd * sd).sqrt(),
        coverage_95,
        mean_std_error,
        n_replications: entries.len(),
    }
}

/// Runs every replication and keeps the per-replication outcomes.
pub fn run_monte_carlo_detailed(spec: &MonteCarloSpec) -> Result<(MCReport, Vec<ReplicationOutcome>)> {
    if spec.replications < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 replications, got {}",
            spec.replications
        )));
    }
    if spec.estimators.is_empty() || spec.regimes.is_empty() {
        return Err(Error::Validation(
            "at least one estimator and one regime are required".into(),
        ));
    }
    spec.dgp.validate()?;
    spec.estimator_config.validate()?;
    let truth = spec.dgp.oracle().true_ate;
    let results: Vec<Result<ReplicationOutcome>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, r))
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                if e.is_validation() && e.fold().is_none() {
                    return Err(e);
                }
                failures.push(FailureRecord {
                    replication: r,
                    seed: spec.base_seed.wrapping_add(r as u64),
                    error: e.to_string(),
                })
            }
        }
    }
    let allowed = (MAX_FAILURE_SHARE * spec.replications as f64).floor() as usize;
    if failures.len() > allowed {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            replications: spec.replications,
            allowed,
            first: failures[0].error.clone(),
        });
    }
    for f in &failures {
        log::warn!("replication {} (seed {}) failed: {}", f.replication, f.seed, f.error);
    }
    let regimes = spec
        .regimes
        .iter()
        .map(|&regime| {
            let estimators = spec
                .estimators
                .iter()
                .map(|&kind| {
                    let entries: Vec<&ReplicationEntry> = outcomes
                        .iter()
                        .flat_map(|o| &o.entries)
                        .filter(|e| e.regime == regime && e.estimator == kind)
                        .collect();
                    summarize(kind, &entries, truth)
                })
                .collect();
            RegimeReport {
                regime,
                corruption: regime.corruption(),
                estimators,
            }
        })
        .collect();
    let report = MCReport {
        true_ate: truth,
        n: spec.n,
        pi: spec.pi,
        replications: spec.replications,
        base_seed: spec.base_seed,
        failed: failures.len(),
        failures,
        regimes,
    };
    Ok((report, outcomes))
}

pub fn run_monte_carlo(spec: &MonteCarloSpec) -> Result<MCReport> {
    Ok(run_monte_carlo_detailed(spec)?.0)
}
