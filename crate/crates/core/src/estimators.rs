//! Cross-fitted estimators of the long-term average treatment effect.
//!
//! Nuisances for fold `k` are fitted on every unit outside fold `k` and
//! evaluated on the units inside it. Each estimator is a normalized sum of
//! per-unit terms, always accumulated in record order, so the result does not
//! depend on fold labels or on the order in which folds finish.
//!
//! ```text
//! OB-OR  = (1/N_E) Σ_E [h̄(1,x) − h̄(0,x)]
//! OB-IPW = (1/N_E) Σ_E [a h/e − (1−a) h/(1−e)]
//! SB     = (1/N_O) Σ_O (q₁ − q₀) y
//! MR     = (1/N_E) Σ_E [a(h − h̄(1,x))/e − (1−a)(h − h̄(0,x))/(1−e) + h̄(1,x) − h̄(0,x)]
//!        + (1/N_O) Σ_O (q₁ − q₀)(y − h)
//! ```
//!
//! The sample shares enter only through these realized `N_E`, `N_O`
//! normalizations; a known population share is never plugged in.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::bridge::{
    solve_outcome_bridge, solve_surrogate_bridge, Arm, BridgeFunction, BridgeOptions, MomentDiagnostics, DEFAULT_RIDGE,
};
use crate::data::{CombinedDataset, Role, Sample, UnitRecord};
use crate::error::{Error, Result};
use crate::normal::normal_quantile;
use crate::nuisance::{fit_hbar, fit_propensity, HBarModel, PropensityFitInfo, PropensityModel, DEFAULT_CLIP_EPS};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "OB-OR")]
    ObOr,
    #[serde(rename = "OB-IPW")]
    ObIpw,
    #[serde(rename = "SB")]
    Sb,
    #[serde(rename = "MR")]
    Mr,
    /// Surrogate index on `(S, X)`.
    #[serde(rename = "SI")]
    SurrogateIndex,
    /// Surrogate index with the proxies as extra covariates.
    #[serde(rename = "SI-proxies")]
    SurrogateIndexProxies,
}

impl EstimatorKind {
    pub const CROSS_FITTED: [EstimatorKind; 4] = [Self::ObOr, Self::ObIpw, Self::Sb, Self::Mr];

    pub fn name(self) -> &'static str {
        match self {
            Self::ObOr => "OB-OR",
            Self::ObIpw => "OB-IPW",
            Self::Sb => "SB",
            Self::Mr => "MR",
            Self::SurrogateIndex => "SI",
            Self::SurrogateIndexProxies => "SI-proxies",
        }
    }

    pub fn is_cross_fitted(self) -> bool {
        Self::CROSS_FITTED.contains(&self)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "ob-or" => Self::ObOr,
            "ob-ipw" => Self::ObIpw,
            "sb" => Self::Sb,
            "mr" => Self::Mr,
            "si" => Self::SurrogateIndex,
            "si-proxies" => Self::SurrogateIndexProxies,
            _ => return Err(Error::Validation(format!("unknown estimator `{s}`"))),
        })
    }
}

/// Stratified fold labels, one per record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k_folds: usize,
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    /// Wraps explicit labels after checking them against `data`.
    pub fn from_labels(data: &CombinedDataset, k_folds: usize, fold_of: Vec<usize>, seed: u64) -> Result<Self> {
        let f = Self { k_folds, fold_of, seed };
        f.check(data)?;
        Ok(f)
    }

    fn check(&self, data: &CombinedDataset) -> Result<()> {
        if self.fold_of.len() != data.len() {
            return Err(Error::Validation(format!(
                "fold assignment covers {} units, dataset has {}",
                self.fold_of.len(),
                data.len()
            )));
        }
        if self.k_folds < 2 {
            return Err(Error::Validation(format!("K must be ≥ 2, got {}", self.k_folds)));
        }
        if let Some(&bad) = self.fold_of.iter().find(|&&f| f >= self.k_folds) {
            return Err(Error::Validation(format!(
                "fold label {bad} is out of range for K = {}",
                self.k_folds
            )));
        }
        let (e, o) = self.fold_sizes(data);
        if e.contains(&0) || o.contains(&0) {
            return Err(Error::Validation("every fold needs units from both samples".into()));
        }
        Ok(())
    }

    /// Per-fold unit counts `(experimental, observational)`.
    pub fn fold_sizes(&self, data: &CombinedDataset) -> (Vec<usize>, Vec<usize>) {
        let mut e = vec![0; self.k_folds];
        let mut o = vec![0; self.k_folds];
        for (r, &f) in data.records().iter().zip(&self.fold_of) {
            if r.is_experimental() {
                e[f] += 1;
            } else {
                o[f] += 1;
            }
        }
        (e, o)
    }

    /// Same partition with fold `f` renamed to `perm[f]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.k_folds];
        if perm.len() != self.k_folds
            || perm
                .iter()
                .any(|&p| p >= self.k_folds || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Validation(
                "relabeling must be a permutation of the fold labels".into(),
            ));
        }
        Ok(Self {
            fold_of: self.fold_of.iter().map(|&f| perm[f]).collect(),
            ..self.clone()
        })
    }
}

/// Shuffles each sample's indices with a seeded generator and deals them out
/// round-robin, so fold sizes within a sample differ by at most one and the
/// extra units sit in the lowest-numbered folds.
pub fn make_folds(data: &CombinedDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Validation(format!("K must be ≥ 2, got {k}")));
    }
    if k > data.n_e().min(data.n_o()) {
        return Err(Error::Validation(format!(
            "K = {k} exceeds min(n_e, n_o) = {}",
            data.n_e().min(data.n_o())
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; data.len()];
    for sample in [Sample::Experimental, Sample::Observational] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.records()[i].g == sample).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok(FoldAssignment {
        k_folds: k,
        fold_of,
        seed,
    })
}

/// Bases, regularization and inference settings for the cross-fitted estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub k_folds: usize,
    /// Outcome bridge `h(w, s, x)`.
    pub psi: BasisSpec,
    /// Instruments for the outcome bridge, functions of `(z, s, x)`.
    pub b: BasisSpec,
    /// Surrogate bridges `q_a(z, s, x)`.
    pub phi: BasisSpec,
    /// Instruments for the surrogate bridges, functions of `(w, s, x)`.
    pub g: BasisSpec,
    pub propensity: BasisSpec,
    pub hbar: BasisSpec,
    pub ridge_h: f64,
    pub ridge_q: f64,
    pub allow_min_norm: bool,
    pub clip_eps: f64,
    /// Uses this treatment probability instead of fitting the propensity.
    pub known_propensity: Option<f64>,
    pub alpha: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k_folds: DEFAULT_K,
            psi: BasisSpec::linear(&[Role::W, Role::S, Role::X]),
            b: BasisSpec::linear(&[Role::Z, Role::S, Role::X]),
            phi: BasisSpec::linear(&[Role::Z, Role::S, Role::X]),
            g: BasisSpec::linear(&[Role::W, Role::S, Role::X]),
            propensity: BasisSpec::linear(&[Role::X]),
            hbar: BasisSpec::linear(&[Role::X]),
            ridge_h: DEFAULT_RIDGE,
            ridge_q: DEFAULT_RIDGE,
            allow_min_norm: false,
            clip_eps: DEFAULT_CLIP_EPS,
            known_propensity: None,
            alpha: DEFAULT_ALPHA,
        }
    }
}

fn check_roles(name: &str, spec: &BasisSpec, allowed: &[Role]) -> Result<()> {
    spec.validate()?;
    match spec.roles.iter().find(|r| !allowed.contains(r)) {
        Some(r) => Err(Error::Validation(format!(
            "basis `{name}` may not use role `{r}` (allowed: {})",
            allowed.iter().map(Role::to_string).collect::<Vec<_>>().join(", ")
        ))),
        None => Ok(()),
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::Validation(format!("K must be ≥ 2, got {}", self.k_folds)));
        }
        for (name, v) in [("ridge_h", self.ridge_h), ("ridge_q", self.ridge_q)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::Validation(format!(
                "clip_eps must be in (0, 0.5), got {}",
                self.clip_eps
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(p) = self.known_propensity {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Validation(format!(
                    "known_propensity must be in (0, 1), got {p}"
                )));
            }
        }
        let wsx = [Role::W, Role::S, Role::X];
        let zsx = [Role::Z, Role::S, Role::X];
        check_roles("psi", &self.psi, &wsx)?;
        check_roles("g", &self.g, &wsx)?;
        check_roles("b", &self.b, &zsx)?;
        check_roles("phi", &self.phi, &zsx)?;
        check_roles("propensity", &self.propensity, &[Role::X])?;
        check_roles("hbar", &self.hbar, &[Role::X])
    }

    fn h_options(&self) -> BridgeOptions {
        BridgeOptions {
            ridge: self.ridge_h,
            allow_min_norm: self.allow_min_norm,
        }
    }

    fn q_options(&self) -> BridgeOptions {
        BridgeOptions {
            ridge: self.ridge_q,
            allow_min_norm: self.allow_min_norm,
        }
    }
}

/// Everything the estimators evaluate on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    pub e: PropensityModel,
    pub h: BridgeFunction,
    pub hbar: HBarModel,
    pub q0: BridgeFunction,
    pub q1: BridgeFunction,
}

impl NuisanceSet {
    pub fn q(&self, arm: Arm) -> &BridgeFunction {
        match arm {
            Arm::Control => &self.q0,
            Arm::Treated => &self.q1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub n_train_e: usize,
    pub n_train_o: usize,
    pub h: MomentDiagnostics,
    pub q0: MomentDiagnostics,
    pub q1: MomentDiagnostics,
    pub propensity: Option<PropensityFitInfo>,
}

/// Fitted nuisances for every fold, indexed by fold label.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFit {
    pub nuisances: Vec<NuisanceSet>,
    pub diagnostics: Vec<FoldDiagnostics>,
}

/// Experimental and observational units outside fold `k`, in record order.
pub fn training_views<'a>(
    data: &'a CombinedDataset,
    folds: &FoldAssignment,
    k: usize,
) -> (Vec<&'a UnitRecord>, Vec<&'a UnitRecord>) {
    let mut e = Vec::new();
    let mut o = Vec::new();
    for (r, &f) in data.records().iter().zip(&folds.fold_of) {
        if f == k {
            continue;
        }
        if r.is_experimental() {
            e.push(r);
        } else {
            o.push(r);
        }
    }
    (e, o)
}

/// Fits the nuisances for fold `k` on the units outside it.
pub fn fit_fold_nuisances(
    data: &CombinedDataset,
    folds: &FoldAssignment,
    k: usize,
    config: &EstimatorConfig,
) -> Result<(NuisanceSet, FoldDiagnostics)> {
    if k >= folds.k_folds {
        return Err(Error::Validation(format!(
            "fold {k} is out of range for K = {}",
            folds.k_folds
        )));
    }
    let (e_view, o_view) = training_views(data, folds, k);
    if e_view.is_empty() || o_view.is_empty() {
        return Err(Error::Validation("training complement is empty in one sample".into()).in_fold(k, "training split"));
    }
    let e = match config.known_propensity {
        Some(p) => PropensityModel::fixed(p, config.clip_eps),
        None => {
            fit_propensity(&e_view, &config.propensity, config.clip_eps).map_err(|err| err.in_fold(k, "propensity"))?
        }
    };
    let (h, h_diag) = solve_outcome_bridge(&o_view, &config.psi, &config.b, &config.h_options())
        .map_err(|err| err.in_fold(k, "outcome bridge"))?;
    let hbar = fit_hbar(&e_view, &h, &config.hbar).map_err(|err| err.in_fold(k, "h-bar regression"))?;
    let q_opts = config.q_options();
    let (q0, q0_diag) = solve_surrogate_bridge(&o_view, &e_view, Arm::Control, &config.phi, &config.g, &e, &q_opts)
        .map_err(|err| err.in_fold(k, "surrogate bridge q0"))?;
    let (q1, q1_diag) = solve_surrogate_bridge(&o_view, &e_view, Arm::Treated, &config.phi, &config.g, &e, &q_opts)
        .map_err(|err| err.in_fold(k, "surrogate bridge q1"))?;
    let diag = FoldDiagnostics {
        fold: k,
        n_train_e: e_view.len(),
        n_train_o: o_view.len(),
        h: h_diag,
        q0: q0_diag,
        q1: q1_diag,
        propensity: e.fit_info,
    };
    Ok((NuisanceSet { e, h, hbar, q0, q1 }, diag))
}

/// Fits all folds in parallel. On failure the lowest failing fold is reported.
pub fn fit_all(data: &CombinedDataset, folds: &FoldAssignment, config: &EstimatorConfig) -> Result<CrossFit> {
    config.validate()?;
    folds.check(data)?;
    let results: Vec<_> = (0..folds.k_folds)
        .into_par_iter()
        .map(|k| fit_fold_nuisances(data, folds, k, config))
        .collect();
    let mut nuisances = Vec::with_capacity(folds.k_folds);
    let mut diagnostics = Vec::with_capacity(folds.k_folds);
    for r in results {
        let (n, d) = r?;
        nuisances.push(n);
        diagnostics.push(d);
    }
    Ok(CrossFit { nuisances, diagnostics })
}

/// Per-unit contributions. Experimental units fill the first four fields,
/// observational units the last two; the rest stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UnitTerms {
    /// `h̄(1, x) − h̄(0, x)`.
    pub contrast: f64,
    /// `a h/e − (1−a) h/(1−e)`.
    pub ipw: f64,
    /// `a(h − h̄(1,x))/e − (1−a)(h − h̄(0,x))/(1−e)`.
    pub aipw: f64,
    pub clipped: bool,
    /// `(q₁ − q₀) y`.
    pub sb: f64,
    /// `(q₁ − q₀)(y − h)`.
    pub mr_o: f64,
}

fn unit_terms_one(rec: &UnitRecord, n: &NuisanceSet) -> Result<UnitTerms> {
    let mut t = UnitTerms::default();
    if rec.is_experimental() {
        let a = rec.a.expect("experimental units carry a treatment");
        let h = n.h.eval(rec)?;
        let (hb0, hb1) = n.hbar.eval_both(rec)?;
        let (e, clipped) = n.e.predict_flagged(rec)?;
        t.contrast = hb1 - hb0;
        t.clipped = clipped;
        if a {
            t.ipw = h / e;
            t.aipw = (h - hb1) / e;
        } else {
            t.ipw = -h / (1.0 - e);
            t.aipw = -(h - hb0) / (1.0 - e);
        }
    } else {
        let y = rec.y.expect("observational units carry an outcome");
        let dq = n.q1.eval(rec)? - n.q0.eval(rec)?;
        t.sb = dq * y;
        t.mr_o = dq * (y - n.h.eval(rec)?);
    }
    Ok(t)
}

/// Evaluates every unit with the nuisances of its own fold.
pub fn unit_terms(data: &CombinedDataset, folds: &FoldAssignment, nuisances: &[NuisanceSet]) -> Result<Vec<UnitTerms>> {
    folds.check(data)?;
    if nuisances.len() != folds.k_folds {
        return Err(Error::Validation(format!(
            "{} nuisance sets for {} folds",
            nuisances.len(),
            folds.k_folds
        )));
    }
    data.records()
        .par_iter()
        .zip(folds.fold_of.par_iter())
        .map(|(r, &f)| unit_terms_one(r, &nuisances[f]).map_err(|e| e.in_fold(f, "evaluation")))
        .collect()
}

/// Record-order sums of the per-unit terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermSums {
    pub n_e: usize,
    pub n_o: usize,
    pub contrast: f64,
    pub ipw: f64,
    /// `Σ_E [aipw + contrast]`.
    pub mr_e: f64,
    pub sb: f64,
    pub mr_o: f64,
    pub clipped: usize,
}

impl TermSums {
    pub fn new(data: &CombinedDataset, terms: &[UnitTerms]) -> Self {
        let mut s = TermSums {
            n_e: data.n_e(),
            n_o: data.n_o(),
            contrast: 0.0,
            ipw: 0.0,
            mr_e: 0.0,
            sb: 0.0,
            mr_o: 0.0,
            clipped: 0,
        };
        for (r, t) in data.records().iter().zip(terms) {
            if r.is_experimental() {
                s.contrast += t.contrast;
                s.ipw += t.ipw;
                s.mr_e += t.aipw + t.contrast;
                s.clipped += usize::from(t.clipped);
            } else {
                s.sb += t.sb;
                s.mr_o += t.mr_o;
            }
        }
        s
    }

    /// Experimental part of MR: `(1/N_E) Σ_E [aipw + contrast]`.
    pub fn mr_e_part(&self) -> f64 {
        self.mr_e / self.n_e as f64
    }

    /// Observational part of MR: `(1/N_O) Σ_O (q₁ − q₀)(y − h)`.
    pub fn mr_o_part(&self) -> f64 {
        self.mr_o / self.n_o as f64
    }

    pub fn estimate(&self, kind: EstimatorKind) -> Result<f64> {
        let ne = self.n_e as f64;
        let no = self.n_o as f64;
        Ok(match kind {
            EstimatorKind::ObOr => self.contrast / ne,
            EstimatorKind::ObIpw => self.ipw / ne,
            EstimatorKind::Sb => self.sb / no,
            EstimatorKind::Mr => self.mr_e_part() + self.mr_o_part(),
            other => return Err(Error::Validation(format!("{other} is not a cross-fitted estimator"))),
        })
    }
}

/// Plug-in variance of MR:
/// `N/N_E² Σ_E (aipw + contrast − τ)² + N/N_O² Σ_O [(q₁ − q₀)(y − h)]²`.
pub fn mr_variance(data: &CombinedDataset, terms: &[UnitTerms], tau_hat: f64) -> f64 {
    let (mut se, mut so) = (0.0, 0.0);
    for (r, t) in data.records().iter().zip(terms) {
        if r.is_experimental() {
            let d = t.aipw + t.contrast - tau_hat;
            se += d * d;
        } else {
            so += t.mr_o * t.mr_o;
        }
    }
    let n = data.len() as f64;
    let ne = data.n_e() as f64;
    let no = data.n_o() as f64;
    n / (ne * ne) * se + n / (no * no) * so
}

/// `τ̂ ∓ Φ⁻¹(1 − α/2) √(V̂/N)`.
pub fn confidence_interval(tau_hat: f64, v_hat: f64, n: usize, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Validation(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if !(v_hat >= 0.0 && v_hat.is_finite()) {
        return Err(Error::Validation(format!(
            "variance must be finite and ≥ 0, got {v_hat}"
        )));
    }
    if n == 0 {
        return Err(Error::Validation("confidence interval needs N ≥ 1".into()));
    }
    let half = normal_quantile(1.0 - alpha / 2.0) * (v_hat / n as f64).sqrt();
    Ok((tau_hat - half, tau_hat + half))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub tau_hat: f64,
    pub variance_hat: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub alpha: f64,
    pub k_folds: Option<usize>,
    pub seed: Option<u64>,
    pub n_e: usize,
    pub n_o: usize,
    pub clipped_propensities: usize,
    pub per_fold_diagnostics: Vec<FoldDiagnostics>,
}

impl EstimateReport {
    /// `√(V̂/N)` when a variance is present.
    pub fn std_error(&self) -> Option<f64> {
        self.variance_hat.map(|v| (v / (self.n_e + self.n_o) as f64).sqrt())
    }
}

/// Builds a report from already evaluated unit terms.
pub fn report_from_terms(
    kind: EstimatorKind,
    data: &CombinedDataset,
    folds: &FoldAssignment,
    terms: &[UnitTerms],
    diagnostics: &[FoldDiagnostics],
    alpha: f64,
) -> Result<EstimateReport> {
    let sums = TermSums::new(data, terms);
    let tau_hat = sums.estimate(kind)?;
    if !tau_hat.is_finite() {
        return Err(Error::Singular(format!("{kind} produced a non-finite estimate")));
    }
    let (variance_hat, ci) = if kind == EstimatorKind::Mr {
        let v = mr_variance(data, terms, tau_hat);
        (Some(v), Some(confidence_interval(tau_hat, v, data.len(), alpha)?))
    } else {
        (None, None)
    };
    let uses_e = matches!(kind, EstimatorKind::ObIpw | EstimatorKind::Mr);
    let clipped = if uses_e { sums.clipped } else { 0 };
    if clipped > 0 {
        log::warn!("{kind}: {clipped} propensity predictions clipped");
    }
    Ok(EstimateReport {
        estimator: kind,
        tau_hat,
        variance_hat,
        ci,
        alpha,
        k_folds: Some(folds.k_folds),
        seed: Some(folds.seed),
        n_e: data.n_e(),
        n_o: data.n_o(),
        clipped_propensities: clipped,
        per_fold_diagnostics: diagnostics.to_vec(),
    })
}

/// Fits the nuisances once and reports each requested cross-fitted estimator.
pub fn estimate_many(
    kinds: &[EstimatorKind],
    data: &CombinedDataset,
    folds: &FoldAssignment,
    config: &EstimatorConfig,
) -> Result<Vec<EstimateReport>> {
    let fit = fit_all(data, folds, config)?;
    let terms = unit_terms(data, folds, &fit.nuisances)?;
    kinds
        .iter()
        .map(|&k| report_from_terms(k, data, folds, &terms, &fit.diagnostics, config.alpha))
        .collect()
}

fn estimate_one(
    kind: EstimatorKind,
    data: &CombinedDataset,
    folds: &FoldAssignment,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    Ok(estimate_many(&[kind], data, folds, config)?.remove(0))
}

pub fn estimate_ob_or(
    data: &CombinedDataset,
    folds: &FoldAssignment,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate_one(EstimatorKind::ObOr, data, folds, config)
}

pub fn estimate_ob_ipw(
    data: &CombinedDataset,
    folds: &FoldAssignment,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate_one(EstimatorKind::ObIpw, data, folds, config)
}

pub fn estimate_sb(data: &CombinedDataset, folds: &FoldAssignment, config: &EstimatorConfig) -> Result<EstimateReport> {
    estimate_one(EstimatorKind::Sb, data, folds, config)
}

pub fn estimate_mr(data: &CombinedDataset, folds: &FoldAssignment, config: &EstimatorConfig) -> Result<EstimateReport> {
    estimate_one(EstimatorKind::Mr, data, folds, config)
}

/// OB-OR, OB-IPW, SB and MR from a single set of fitted nuisances.
pub fn estimate_all(
    data: &CombinedDataset,
    folds: &FoldAssignment,
    config: &EstimatorConfig,
) -> Result<Vec<EstimateReport>> {
    estimate_many(&EstimatorKind::CROSS_FITTED, data, folds, config)
}
