//! Linear-Gaussian structural model with a latent confounder `U`.
//!
//! ```text
//! U ~ N(0, 1),  X ~ N(0, I)                       (independent)
//! A ~ Bernoulli(p_treat)                            experimental units
//! A ~ Bernoulli(σ(logit p_treat + κ U))             observational units, κ = 0 unless flagged
//! S = β_a A + β_u U + B_x X + ε_s
//! Y = γ_s·S + γ_u U + γ_x·X + ε_y
//! W = α_w U + ε_w
//! Z = α_z U + ε_z
//! ```
//!
//! Because `ε_w` is independent of `(Z, S, X)`, `E[W | Z, S, X] = α_w E[U | Z, S, X]`
//! and the outcome bridge is linear:
//! `h₀(w, s, x) = γ_s·s + (γ_u/α_w) w + γ_x·x`. There is no direct effect of
//! `A` on `Y`, so the average treatment effect is `γ_s·β_a`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CombinedDataset, Dims, ExperimentalSource, FullRecord, Sample, UnitRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSd {
    pub s: f64,
    pub y: f64,
    pub w: f64,
    pub z: f64,
}

impl Default for NoiseSd {
    fn default() -> Self {
        Self {
            s: 1.0,
            y: 1.0,
            w: 1.0,
            z: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DGPConfig {
    /// Effect of `A` on each surrogate.
    pub beta_a: Vec<f64>,
    /// Effect of `U` on each surrogate.
    pub beta_u: Vec<f64>,
    /// Effect of `X` on the surrogates, `dim_s` rows of `dim_x` entries.
    #[serde(default)]
    pub beta_x: Vec<Vec<f64>>,
    pub gamma_s: Vec<f64>,
    pub gamma_u: f64,
    #[serde(default)]
    pub gamma_x: Vec<f64>,
    pub alpha_w: f64,
    pub alpha_z: f64,
    #[serde(default)]
    pub noise_sd: NoiseSd,
    pub dim_x: usize,
    pub p_treat: f64,
    /// Makes the latent observational-sample treatment depend on `U`.
    #[serde(default)]
    pub confound_treatment_in_o: bool,
    /// Logit-scale loading of `U` on the observational treatment, used when
    /// `confound_treatment_in_o` is set.
    #[serde(default = "default_u_to_a")]
    pub u_to_a_in_o: f64,
}

fn default_u_to_a() -> f64 {
    1.0
}

impl DGPConfig {
    /// `U` drives both surrogates and the outcome; the surrogate index is
    /// biased here.
    pub fn confounded() -> Self {
        Self {
            beta_a: vec![0.5, 0.3],
            beta_u: vec![1.0, 1.0],
            beta_x: vec![vec![0.2, -0.1], vec![0.1, 0.2]],
            gamma_s: vec![1.0, 0.5],
            gamma_u: 1.0,
            gamma_x: vec![0.5, -0.3],
            alpha_w: 1.0,
            alpha_z: 1.0,
            noise_sd: NoiseSd::default(),
            dim_x: 2,
            p_treat: 0.5,
            confound_treatment_in_o: false,
            u_to_a_in_o: 1.0,
        }
    }

    /// Same model with `U` cut from `S` and `Y`.
    pub fn unconfounded() -> Self {
        Self {
            beta_u: vec![0.0, 0.0],
            gamma_u: 0.0,
            ..Self::confounded()
        }
    }

    pub fn dim_s(&self) -> usize {
        self.beta_a.len()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            w: 1,
            z: 1,
            s: self.dim_s(),
            x: self.dim_x,
        }
    }

    fn beta_x_row(&self, j: usize) -> Option<&[f64]> {
        self.beta_x.get(j).map(Vec::as_slice)
    }

    fn gamma_x_or_zero(&self, k: usize) -> f64 {
        self.gamma_x.get(k).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        let ds = self.dim_s();
        if ds == 0 {
            return bad("at least one surrogate is required".into());
        }
        if self.beta_u.len() != ds || self.gamma_s.len() != ds {
            return bad(format!(
                "beta_a, beta_u and gamma_s must share one length (got {}, {}, {})",
                ds,
                self.beta_u.len(),
                self.gamma_s.len()
            ));
        }
        if !self.gamma_x.is_empty() && self.gamma_x.len() != self.dim_x {
            return bad(format!(
                "gamma_x has length {}, dim_x is {}",
                self.gamma_x.len(),
                self.dim_x
            ));
        }
        if !self.beta_x.is_empty() && (self.beta_x.len() != ds || self.beta_x.iter().any(|r| r.len() != self.dim_x)) {
            return bad("beta_x must be dim_s rows of dim_x entries".into());
        }
        let n = &self.noise_sd;
        if !(n.s > 0.0 && n.y > 0.0 && n.w > 0.0 && n.z > 0.0) {
            return bad("every noise_sd must be > 0".into());
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return bad(format!("p_treat must be in (0, 1), got {}", self.p_treat));
        }
        if self.alpha_w == 0.0 && self.gamma_u != 0.0 {
            return bad("alpha_w = 0 with gamma_u ≠ 0 admits no outcome bridge".into());
        }
        let all = self
            .beta_a
            .iter()
            .chain(&self.beta_u)
            .chain(self.beta_x.iter().flatten())
            .chain(&self.gamma_s)
            .chain(&self.gamma_x)
            .chain([&self.gamma_u, &self.alpha_w, &self.alpha_z, &self.u_to_a_in_o]);
        if !all.into_iter().all(|v| v.is_finite()) {
            return bad("non-finite DGP parameter".into());
        }
        Ok(())
    }

    /// Closed-form oracle quantities.
    pub fn oracle(&self) -> DGPOracle {
        let true_ate = self.gamma_s.iter().zip(&self.beta_a).map(|(g, b)| g * b).sum();
        let w_coef = if self.alpha_w == 0.0 {
            0.0
        } else {
            self.gamma_u / self.alpha_w
        };
        let mut true_h_coeffs = vec![0.0, w_coef];
        true_h_coeffs.extend_from_slice(&self.gamma_s);
        true_h_coeffs.extend((0..self.dim_x).map(|k| self.gamma_x_or_zero(k)));
        DGPOracle {
            true_ate,
            true_h_coeffs,
            notes: "ATE = gamma_s·beta_a (no direct effect of A on Y). \
                    h0(w,s,x) = gamma_s·s + (gamma_u/alpha_w)·w + gamma_x·x because \
                    E[W | Z,S,X,O] = alpha_w·E[U | Z,S,X,O]. Coefficient layout: \
                    [intercept, w, s.., x..]."
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGPOracle {
    pub true_ate: f64,
    /// `[intercept, w, s.., x..]` in raw units.
    pub true_h_coeffs: Vec<f64>,
    pub notes: String,
}

impl DGPOracle {
    /// `h₀(w, s, x)` evaluated from the stored coefficients.
    pub fn h0(&self, w: f64, s: &[f64], x: &[f64]) -> f64 {
        eval_linear_h(&self.true_h_coeffs, w, s, x)
    }
}

fn eval_linear_h(coeffs: &[f64], w: f64, s: &[f64], x: &[f64]) -> f64 {
    let mut v = coeffs[0] + coeffs[1] * w;
    for (c, sv) in coeffs[2..].iter().zip(s) {
        v += c * sv;
    }
    for (c, xv) in coeffs[2 + s.len()..].iter().zip(x) {
        v += c * xv;
    }
    v
}

struct Draw {
    u: f64,
    unit: FullRecord,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Draws one unit. Every call consumes the same number of variates, whatever
/// the sample, so unit `i` depends on the seed and `i` only.
fn draw_unit(cfg: &DGPConfig, rng: &mut ChaCha8Rng, observational: bool) -> Draw {
    let ds = cfg.dim_s();
    let u = normal(rng);
    let x: Vec<f64> = (0..cfg.dim_x).map(|_| normal(rng)).collect();
    let uniform: f64 = rng.random();
    let p = if observational && cfg.confound_treatment_in_o {
        let logit = (cfg.p_treat / (1.0 - cfg.p_treat)).ln();
        logistic(logit + cfg.u_to_a_in_o * u)
    } else {
        cfg.p_treat
    };
    let a = uniform < p;
    let af = if a { 1.0 } else { 0.0 };
    let mut s = Vec::with_capacity(ds);
    for j in 0..ds {
        let mut v = cfg.beta_a[j] * af + cfg.beta_u[j] * u + cfg.noise_sd.s * normal(rng);
        if let Some(row) = cfg.beta_x_row(j) {
            v += row.iter().zip(&x).map(|(b, xv)| b * xv).sum::<f64>();
        }
        s.push(v);
    }
    let mut y = cfg.gamma_u * u + cfg.noise_sd.y * normal(rng);
    y += cfg.gamma_s.iter().zip(&s).map(|(g, sv)| g * sv).sum::<f64>();
    y += (0..cfg.dim_x).map(|k| cfg.gamma_x_or_zero(k) * x[k]).sum::<f64>();
    let w = cfg.alpha_w * u + cfg.noise_sd.w * normal(rng);
    let z = cfg.alpha_z * u + cfg.noise_sd.z * normal(rng);
    Draw {
        u,
        unit: FullRecord {
            y,
            w: vec![w],
            z: vec![z],
            s,
            a,
            x,
        },
    }
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        Err(Error::Validation(format!("n must be ≥ {min}, got {n}")))
    } else {
        Ok(())
    }
}

/// Experimental count for `n` units and share `pi`, kept inside `[1, n − 1]`.
pub fn experimental_count(n: usize, pi: f64) -> usize {
    ((pi * n as f64).round() as usize).clamp(1, n - 1)
}

/// Draws a combined dataset: the first `round(pi·n)` units are experimental,
/// the rest observational, masked per the missingness contract.
pub fn generate(cfg: &DGPConfig, n: usize, pi: f64, seed: u64) -> Result<(CombinedDataset, DGPOracle)> {
    cfg.validate()?;
    check_n(n, 10)?;
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::Validation(format!("pi must be in (0, 1), got {pi}")));
    }
    let n_e = experimental_count(n, pi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut latent_o: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        let observational = i >= n_e;
        let Draw { u, unit } = draw_unit(cfg, &mut rng, observational);
        let record = if observational {
            if cfg!(debug_assertions) && cfg.confound_treatment_in_o {
                latent_o.push((if unit.a { 1.0 } else { 0.0 }, u));
            }
            UnitRecord {
                y: Some(unit.y),
                w: unit.w,
                z: Some(unit.z),
                s: unit.s,
                a: None,
                x: unit.x,
                g: Sample::Observational,
            }
        } else {
            UnitRecord {
                y: None,
                w: unit.w,
                z: None,
                s: unit.s,
                a: Some(unit.a),
                x: unit.x,
                g: Sample::Experimental,
            }
        };
        records.push(record);
    }
    if cfg!(debug_assertions) && latent_o.len() >= 1000 && cfg.u_to_a_in_o > 0.0 {
        let r = correlation(&latent_o);
        debug_assert!(r > 0.0, "latent observational treatment should load on U (corr {r})");
    }
    let data = CombinedDataset::new(records, cfg.dims())?;
    Ok((data, cfg.oracle()))
}

fn correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Draws a fully observed randomized experiment (every unit assigned with
/// `p_treat`, nothing masked).
pub fn generate_experimental(cfg: &DGPConfig, n: usize, seed: u64) -> Result<(ExperimentalSource, DGPOracle)> {
    cfg.validate()?;
    check_n(n, 10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n).map(|_| draw_unit(cfg, &mut rng, false).unit).collect();
    Ok((ExperimentalSource::new(records, cfg.dims())?, cfg.oracle()))
}

/// Raw `(z, s, x)` test battery: constant, every variable, and every product
/// `v_i v_j` with `i ≤ j`.
fn moment_battery(unit: &FullRecord) -> Vec<f64> {
    let vars: Vec<f64> = unit.z.iter().chain(&unit.s).chain(&unit.x).copied().collect();
    let mut out = Vec::with_capacity(1 + vars.len() + vars.len() * (vars.len() + 1) / 2);
    out.push(1.0);
    out.extend_from_slice(&vars);
    for i in 0..vars.len() {
        for j in i..vars.len() {
            out.push(vars[i] * vars[j]);
        }
    }
    out
}

/// Largest absolute empirical moment `(1/n) Σ b_j(z, s, x)(y − h(w, s, x))`
/// over the degree-≤2 battery, on `n` freshly simulated observational units.
/// `h_coeffs` uses the oracle layout `[intercept, w, s.., x..]`.
pub fn h_moment_residual(cfg: &DGPConfig, h_coeffs: &[f64], n: usize, seed: u64) -> Result<f64> {
    cfg.validate()?;
    check_n(n, 1)?;
    if h_coeffs.len() != 2 + cfg.dim_s() + cfg.dim_x {
        return Err(Error::Validation("h coefficient vector has the wrong length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums: Vec<f64> = Vec::new();
    for _ in 0..n {
        let unit = draw_unit(cfg, &mut rng, true).unit;
        let resid = unit.y - eval_linear_h(h_coeffs, unit.w[0], &unit.s, &unit.x);
        let b = moment_battery(&unit);
        if sums.is_empty() {
            sums = vec![0.0; b.len()];
        }
        for (acc, bj) in sums.iter_mut().zip(&b) {
            *acc += bj * resid;
        }
    }
    Ok(sums.iter().fold(0.0, |m, s| m.max((s / n as f64).abs())))
}

/// [`h_moment_residual`] at the closed-form bridge, for `n_large ≥ 10⁵`.
pub fn oracle_h_residual_check(cfg: &DGPConfig, n_large: usize, seed: u64) -> Result<f64> {
    check_n(n_large, 100_000)?;
    h_moment_residual(cfg, &cfg.oracle().true_h_coeffs, n_large, seed)
}
