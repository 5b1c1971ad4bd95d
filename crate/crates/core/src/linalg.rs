//! Dense linear-algebra helpers: regularized minimum-distance solves, least
//! squares with heteroskedasticity-robust (HC0) covariance, and two-stage
//! least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for rank decisions.
const RANK_TOL: f64 = 1e-12;

/// Condition number above which an unregularized normal matrix is treated
/// as singular.
const SINGULAR_COND: f64 = 1e15;

/// Condition number above which a solve is flagged as ill-conditioned.
pub const WARN_COND: f64 = 1e12;

/// Ratio of the largest to the smallest singular value (∞ when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * RANK_TOL * (m.nrows().max(m.ncols()) as f64);
    svd.pseudo_inverse(cutoff.max(f64::MIN_POSITIVE))
        .expect("svd computed with both factors")
}

fn spd_inverse_or_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    match m.clone().cholesky() {
        Some(ch) if condition_number(m) < SINGULAR_COND => ch.inverse(),
        _ => pseudo_inverse(m),
    }
}

#[derive(Debug, Clone)]
pub struct MinDistanceSolution {
    pub coeffs: DVector<f64>,
    /// Condition number of the regularized normal matrix.
    pub condition: f64,
    /// Whether the min-norm pseudo-inverse fallback was used.
    pub min_norm: bool,
}

/// Solves `min_β (Gβ − r)' W (Gβ − r) + λ‖β‖²` with `W = weight_gram⁻¹`.
///
/// `cross` is the m×p matrix of averaged instrument-by-regressor products,
/// `weight_gram` the m×m averaged instrument Gram matrix and `target` the
/// m-vector of averaged instrument-by-response products. With instruments
/// `B`, regressors `Ψ` and response `y` this is
/// `(Ψ'P_BΨ + nλI)⁻¹Ψ'P_B y`.
pub fn solve_min_distance(
    cross: &DMatrix<f64>,
    weight_gram: &DMatrix<f64>,
    target: &DVector<f64>,
    ridge: f64,
    allow_min_norm: bool,
) -> Result<MinDistanceSolution> {
    let (m, p) = cross.shape();
    if m < p {
        return Err(Error::UnderIdentified {
            n_instruments: m,
            n_params: p,
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Validation(format!("ridge must be finite and ≥ 0, got {ridge}")));
    }
    let w = spd_inverse_or_pinv(weight_gram);
    let gw = cross.transpose() * &w;
    let mut normal = &gw * cross;
    for i in 0..p {
        normal[(i, i)] += ridge;
    }
    let rhs = &gw * target;
    let condition = condition_number(&normal);
    if condition > WARN_COND {
        log::warn!("ill-conditioned moment system (condition {condition:.3e})");
    }
    if condition >= SINGULAR_COND {
        if !allow_min_norm {
            return Err(Error::Singular(format!(
                "normal matrix condition number {condition:.3e} with ridge {ridge}"
            )));
        }
        let coeffs = pseudo_inverse(&normal) * rhs;
        return Ok(MinDistanceSolution {
            coeffs,
            condition,
            min_norm: true,
        });
    }
    let coeffs = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => normal
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("normal matrix is not invertible".into()))?,
    };
    Ok(MinDistanceSolution {
        coeffs,
        condition,
        min_norm: false,
    })
}

/// Ordinary least squares with HC0 and model-based standard errors.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coeffs: DVector<f64>,
    pub residuals: DVector<f64>,
    pub se_hc0: DVector<f64>,
    pub se_model: DVector<f64>,
    /// `(X'X)⁻¹`.
    pub bread: DMatrix<f64>,
}

impl OlsFit {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

fn full_rank_svd(x: &DMatrix<f64>, what: &str) -> Result<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::RankDeficient(format!("{what}: {n} rows < {p} columns")));
    }
    let svd = x.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min <= max * RANK_TOL * (n as f64).sqrt() {
        return Err(Error::RankDeficient(format!(
            "{what}: design columns are collinear (singular values {max:.3e} .. {min:.3e})"
        )));
    }
    Ok(svd)
}

/// Least-squares coefficients only, full column rank required.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != x.nrows() {
        return Err(Error::Validation(format!(
            "response length {} ≠ {} rows",
            y.len(),
            x.nrows()
        )));
    }
    full_rank_svd(x, "least squares")?
        .solve(y, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))
}

/// Sandwich `bread · (Σ eᵢ² xᵢxᵢ') · bread`.
fn hc0(x: &DMatrix<f64>, resid: &DVector<f64>, bread: &DMatrix<f64>) -> DVector<f64> {
    let p = x.ncols();
    let mut meat = DMatrix::zeros(p, p);
    for (i, e) in resid.iter().enumerate() {
        let row = x.row(i);
        let e2 = e * e;
        for a in 0..p {
            let ra = row[a] * e2;
            for b in 0..p {
                meat[(a, b)] += ra * row[b];
            }
        }
    }
    let cov = bread * meat * bread;
    DVector::from_iterator(p, (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()))
}

/// OLS of `y` on the columns of `x` (no implicit intercept).
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Validation(format!("response length {} ≠ {n} rows", y.len())));
    }
    let svd = full_rank_svd(x, "least squares")?;
    let coeffs = svd.solve(y, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let residuals = y - x * &coeffs;
    // (X'X)⁻¹ = V Σ⁻² V'
    let v_t = svd.v_t.as_ref().expect("computed");
    let inv_sq = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / (s * s)));
    let bread = v_t.transpose() * inv_sq * v_t;
    let se_hc0 = hc0(x, &residuals, &bread);
    let dof = n.saturating_sub(p).max(1) as f64;
    let sigma2 = residuals.norm_squared() / dof;
    let se_model = DVector::from_iterator(p, (0..p).map(|j| (sigma2 * bread[(j, j)]).max(0.0).sqrt()));
    Ok(OlsFit {
        coeffs,
        residuals,
        se_hc0,
        se_model,
        bread,
    })
}

#[derive(Debug, Clone)]
pub struct TslsFit {
    /// Coefficients on `[exog, endog]`, in that order.
    pub coeffs: DVector<f64>,
    pub se_hc0: DVector<f64>,
    /// Partial first-stage F statistic of the excluded instruments, one per
    /// endogenous column.
    pub first_stage_f: Vec<f64>,
}

/// Minimum partial first-stage F accepted before the instrument is declared
/// degenerate.
pub const MIN_FIRST_STAGE_F: f64 = 1e-8;

/// Two-stage least squares. `exog` holds the included exogenous regressors
/// (intercept included by the caller), `endog` the endogenous regressors and
/// `excluded` the excluded instruments.
///
/// Residuals for the HC0 covariance use the observed endogenous columns, not
/// their first-stage fits.
pub fn tsls(y: &DVector<f64>, exog: &DMatrix<f64>, endog: &DMatrix<f64>, excluded: &DMatrix<f64>) -> Result<TslsFit> {
    let n = y.len();
    if exog.nrows() != n || endog.nrows() != n || excluded.nrows() != n {
        return Err(Error::Validation("2SLS inputs must have matching row counts".into()));
    }
    if excluded.ncols() < endog.ncols() {
        return Err(Error::UnderIdentified {
            n_instruments: excluded.ncols(),
            n_params: endog.ncols(),
        });
    }
    let k1 = exog.ncols();
    let k2 = endog.ncols();
    let m = excluded.ncols();
    let z_full = hstack(exog, excluded);
    let mut fitted = DMatrix::zeros(n, k2);
    let mut first_stage_f = Vec::with_capacity(k2);
    for j in 0..k2 {
        let col: DVector<f64> = endog.column(j).into_owned();
        let unrestricted = ols(&z_full, &col)
            .map_err(|e| Error::DegenerateInstrument(format!("first stage for endogenous column {j}: {e}")))?;
        let restricted = ols(exog, &col)?;
        let rss_u = unrestricted.rss();
        let rss_r = restricted.rss();
        let dof = n.saturating_sub(k1 + m).max(1) as f64;
        let f = if rss_u <= 0.0 {
            f64::INFINITY
        } else {
            ((rss_r - rss_u).max(0.0) / m as f64) / (rss_u / dof)
        };
        if !(f >= MIN_FIRST_STAGE_F) {
            return Err(Error::DegenerateInstrument(format!(
                "first-stage F on the excluded instruments is {f:.3e} for endogenous column {j}"
            )));
        }
        first_stage_f.push(f);
        fitted.set_column(j, &(col - &unrestricted.residuals));
    }
    let x_hat = hstack(exog, &fitted);
    let second = ols(&x_hat, y)?;
    let x_obs = hstack(exog, endog);
    let resid = y - x_obs * &second.coeffs;
    let se_hc0 = hc0(&x_hat, &resid, &second.bread);
    Ok(TslsFit {
        coeffs: second.coeffs,
        se_hc0,
        first_stage_f,
    })
}

pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, a.ncols() + b.ncols());
    out.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (n, b.ncols())).copy_from(b);
    out
}
