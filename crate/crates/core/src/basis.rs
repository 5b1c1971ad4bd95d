//! Deterministic polynomial feature maps over role-selected variables.
//!
//! Column layout of an evaluated basis:
//!
//! 1. the intercept, when requested;
//! 2. every raw variable to the first power, then every raw variable squared,
//!    and so on up to `degree` (raw variables are the concatenation of the
//!    selected roles in spec order);
//! 3. pairwise cross products between variables of *different* roles, when
//!    `interactions` is set.
//!
//! Interactions sit after the power terms, so enabling them never moves an
//! existing column. With `standardize`, every non-intercept column is
//! centered and scaled with statistics of the training view.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dims, Role, RoleAccess};
use crate::error::{Error, Result};

pub const MAX_DEGREE: u8 = 3;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub roles: Vec<Role>,
    #[serde(default = "default_degree")]
    pub degree: u8,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
    #[serde(default)]
    pub interactions: bool,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_degree() -> u8 {
    1
}

impl BasisSpec {
    /// Degree-1 basis with intercept and standardization.
    pub fn linear(roles: &[Role]) -> Self {
        Self {
            roles: roles.to_vec(),
            degree: 1,
            include_intercept: true,
            interactions: false,
            standardize: true,
        }
    }

    pub fn intercept_only() -> Self {
        Self::linear(&[])
    }

    pub fn with_degree(mut self, degree: u8) -> Self {
        self.degree = degree;
        self
    }

    pub fn with_interactions(mut self, on: bool) -> Self {
        self.interactions = on;
        self
    }

    pub fn with_standardize(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.degree > MAX_DEGREE {
            return Err(Error::Validation(format!(
                "basis degree must be in 1..={MAX_DEGREE}, got {}",
                self.degree
            )));
        }
        if self.roles.contains(&Role::Y) {
            return Err(Error::Validation("the outcome `y` cannot be a basis role".into()));
        }
        for (i, r) in self.roles.iter().enumerate() {
            if self.roles[..i].contains(r) {
                return Err(Error::Validation(format!("role `{r}` listed twice in basis")));
            }
        }
        if self.roles.is_empty() && !self.include_intercept {
            return Err(Error::Validation("basis has no columns".into()));
        }
        Ok(())
    }

    /// Evaluated dimension for the given role dimensionalities.
    pub fn out_dim(&self, dims: &Dims) -> usize {
        let role_dims: Vec<usize> = self.roles.iter().map(|&r| dims.of(r)).collect();
        out_dim_for(self, &role_dims)
    }
}

fn out_dim_for(spec: &BasisSpec, role_dims: &[usize]) -> usize {
    let m: usize = role_dims.iter().sum();
    let mut n = usize::from(spec.include_intercept) + usize::from(spec.degree) * m;
    if spec.interactions {
        for i in 0..role_dims.len() {
            for j in i + 1..role_dims.len() {
                n += role_dims[i] * role_dims[j];
            }
        }
    }
    n
}

/// A basis with its training-view standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBasis {
    spec: BasisSpec,
    role_dims: Vec<usize>,
    centers: Option<Vec<f64>>,
    scales: Option<Vec<f64>>,
    out_dim: usize,
}

/// Fits standardization statistics on `view`.
///
/// Role dimensionalities are read from the first record; every record must
/// supply every role with that dimensionality.
pub fn fit_basis<R: RoleAccess>(spec: &BasisSpec, view: &[&R]) -> Result<FittedBasis> {
    spec.validate()?;
    let role_dims = if spec.roles.is_empty() {
        Vec::new()
    } else {
        let first = view
            .first()
            .ok_or_else(|| Error::Validation("cannot fit a basis on an empty view".into()))?;
        let mut buf = Vec::new();
        let mut dims = Vec::with_capacity(spec.roles.len());
        for &role in &spec.roles {
            buf.clear();
            if !first.extend_role(role, &mut buf) {
                return Err(Error::RoleUnavailable {
                    role,
                    context: "absent in the fitting view".into(),
                });
            }
            dims.push(buf.len());
        }
        dims
    };
    let out_dim = out_dim_for(spec, &role_dims);
    if out_dim == 0 {
        return Err(Error::Validation(
            "basis has no columns for these role dimensions".into(),
        ));
    }
    let mut fb = FittedBasis {
        spec: spec.clone(),
        role_dims,
        centers: None,
        scales: None,
        out_dim,
    };
    if spec.standardize && !view.is_empty() {
        let n = view.len() as f64;
        let mut sum = vec![0.0; out_dim];
        let mut row = Vec::with_capacity(out_dim);
        let mut rows = Vec::with_capacity(view.len() * out_dim);
        for rec in view {
            fb.raw_features(*rec, &mut row)?;
            for (s, v) in sum.iter_mut().zip(&row) {
                *s += v;
            }
            rows.extend_from_slice(&row);
        }
        let centers: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut ss = vec![0.0; out_dim];
        for chunk in rows.chunks_exact(out_dim) {
            for ((acc, v), c) in ss.iter_mut().zip(chunk).zip(&centers) {
                *acc += (v - c) * (v - c);
            }
        }
        let mut scales: Vec<f64> = ss
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let mut centers = centers;
        if spec.include_intercept {
            centers[0] = 0.0;
            scales[0] = 1.0;
        }
        fb.centers = Some(centers);
        fb.scales = Some(scales);
    } else {
        for rec in view {
            fb.check_record(*rec)?;
        }
    }
    Ok(fb)
}

impl FittedBasis {
    /// The constant basis `(1)`; needs no data.
    pub fn intercept_only() -> Self {
        Self {
            spec: BasisSpec {
                roles: Vec::new(),
                degree: 1,
                include_intercept: true,
                interactions: false,
                standardize: false,
            },
            role_dims: Vec::new(),
            centers: None,
            scales: None,
            out_dim: 1,
        }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn centers(&self) -> Option<&[f64]> {
        self.centers.as_deref()
    }

    pub fn scales(&self) -> Option<&[f64]> {
        self.scales.as_deref()
    }

    fn check_record<R: RoleAccess + ?Sized>(&self, rec: &R) -> Result<()> {
        let mut buf = Vec::new();
        self.raw_features(rec, &mut buf)
    }

    fn raw_features<R: RoleAccess + ?Sized>(&self, rec: &R, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        if self.spec.include_intercept {
            out.push(1.0);
        }
        let base = out.len();
        for (&role, &dim) in self.spec.roles.iter().zip(&self.role_dims) {
            let before = out.len();
            if !rec.extend_role(role, out) {
                return Err(Error::RoleUnavailable {
                    role,
                    context: "missing on record".into(),
                });
            }
            if out.len() - before != dim {
                return Err(Error::Validation(format!(
                    "role `{role}` has {} values, basis expects {dim}",
                    out.len() - before
                )));
            }
        }
        let n_vars = out.len() - base;
        for d in 2..=i32::from(self.spec.degree) {
            for j in base..base + n_vars {
                out.push(out[j].powi(d));
            }
        }
        if self.spec.interactions {
            let k = self.role_dims.len();
            let mut start_i = base;
            for i in 0..k {
                let mut start_j = start_i + self.role_dims[i];
                for j in i + 1..k {
                    for a in start_i..start_i + self.role_dims[i] {
                        for b in start_j..start_j + self.role_dims[j] {
                            out.push(out[a] * out[b]);
                        }
                    }
                    start_j += self.role_dims[j];
                }
                start_i += self.role_dims[i];
            }
        }
        debug_assert_eq!(out.len(), self.out_dim);
        Ok(())
    }

    /// Evaluates the basis on one record into `out` (cleared first).
    pub fn eval_into<R: RoleAccess + ?Sized>(&self, rec: &R, out: &mut Vec<f64>) -> Result<()> {
        self.raw_features(rec, out)?;
        if let (Some(c), Some(s)) = (&self.centers, &self.scales) {
            for ((v, c), s) in out.iter_mut().zip(c).zip(s) {
                *v = (*v - c) / s;
            }
        }
        Ok(())
    }

    pub fn eval<R: RoleAccess + ?Sized>(&self, rec: &R) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.out_dim);
        self.eval_into(rec, &mut out)?;
        Ok(out)
    }

    /// Row-per-record design matrix.
    pub fn design_matrix<R: RoleAccess>(&self, view: &[&R]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(view.len(), self.out_dim);
        let mut row = Vec::with_capacity(self.out_dim);
        for (i, rec) in view.iter().enumerate() {
            self.eval_into(*rec, &mut row)?;
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }

    /// Maps coefficients on the (possibly standardized) columns of a degree-1,
    /// interaction-free, intercept-bearing basis back to raw variable units:
    /// `[intercept, slope_1, ..]`. `None` for any other basis shape.
    pub fn unstandardize_linear(&self, coeffs: &[f64]) -> Option<Vec<f64>> {
        if self.spec.degree != 1
            || self.spec.interactions
            || !self.spec.include_intercept
            || coeffs.len() != self.out_dim
        {
            return None;
        }
        let (Some(c), Some(s)) = (&self.centers, &self.scales) else {
            return Some(coeffs.to_vec());
        };
        let mut raw = Vec::with_capacity(coeffs.len());
        let mut intercept = coeffs[0];
        raw.push(0.0);
        for j in 1..coeffs.len() {
            let slope = coeffs[j] / s[j];
            intercept -= slope * c[j];
            raw.push(slope);
        }
        raw[0] = intercept;
        Some(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, UnitRecord};

    fn rec(w: Vec<f64>, s: Vec<f64>, x: Vec<f64>, z: Option<Vec<f64>>) -> UnitRecord {
        let g = if z.is_some() {
            Sample::Observational
        } else {
            Sample::Experimental
        };
        UnitRecord {
            y: z.as_ref().map(|_| 0.0),
            w,
            z,
            s,
            a: if g == Sample::Experimental { Some(true) } else { None },
            x,
            g,
        }
    }

    #[test]
    fn out_dim_linear_s_x() {
        let r = rec(vec![0.0], vec![1.0, 2.0], vec![1.0, 2.0, 3.0], None);
        let fb = fit_basis(&BasisSpec::linear(&[Role::S, Role::X]), &[&r]).unwrap();
        assert_eq!(fb.out_dim(), 6);
        let dims = Dims { w: 1, z: 0, s: 2, x: 3 };
        assert_eq!(BasisSpec::linear(&[Role::S, Role::X]).out_dim(&dims), 6);
    }

    #[test]
    fn out_dim_quadratic_w() {
        let r = rec(vec![2.0], vec![], vec![], None);
        let spec = BasisSpec::linear(&[Role::W]).with_degree(2).with_standardize(false);
        let fb = fit_basis(&spec, &[&r]).unwrap();
        assert_eq!(fb.out_dim(), 3);
        assert_eq!(fb.eval(&r).unwrap(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn z_on_experimental_view_is_unavailable() {
        let r = rec(vec![0.0], vec![0.0], vec![], None);
        let err = fit_basis(&BasisSpec::linear(&[Role::Z, Role::S]), &[&r]).unwrap_err();
        assert!(matches!(err, Error::RoleUnavailable { role: Role::Z, .. }));
    }

    #[test]
    fn intercept_only_is_one() {
        let r = rec(vec![5.0], vec![], vec![], None);
        assert_eq!(FittedBasis::intercept_only().eval(&r).unwrap(), vec![1.0]);
        let fb = fit_basis(&BasisSpec::intercept_only(), &Vec::<&UnitRecord>::new()).unwrap();
        assert_eq!(fb.eval(&r).unwrap(), vec![1.0]);
    }

    #[test]
    fn direct_read_off() {
        let r = rec(vec![0.0], vec![2.0, -1.0], vec![], None);
        let spec = BasisSpec::linear(&[Role::S]).with_standardize(false);
        let fb = fit_basis(&spec, &[&r]).unwrap();
        assert_eq!(fb.eval(&r).unwrap(), vec![1.0, 2.0, -1.0]);
    }

    #[test]
    fn standardized_at_mean_is_zero() {
        let recs: Vec<UnitRecord> = (0..10)
            .map(|i| rec(vec![i as f64], vec![(i * i) as f64, 1.0 - i as f64], vec![], None))
            .collect();
        let view: Vec<&UnitRecord> = recs.iter().collect();
        let fb = fit_basis(&BasisSpec::linear(&[Role::W, Role::S]), &view).unwrap();
        let n = recs.len() as f64;
        let mean = |f: &dyn Fn(&UnitRecord) -> f64| recs.iter().map(f).sum::<f64>() / n;
        let at_mean = rec(
            vec![mean(&|r| r.w[0])],
            vec![mean(&|r| r.s[0]), mean(&|r| r.s[1])],
            vec![],
            None,
        );
        let v = fb.eval(&at_mean).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|x| x.abs() < 1e-12), "{v:?}");

        let m = fb.design_matrix(&view).unwrap();
        for j in 1..m.ncols() {
            let col = m.column(j);
            let mu = col.mean();
            let sd = (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
            assert!(mu.abs() < 1e-8 && (sd - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn interactions_keep_prefix() {
        let recs: Vec<UnitRecord> = (0..5)
            .map(|i| rec(vec![i as f64], vec![2.0 * i as f64 + 1.0], vec![-(i as f64)], None))
            .collect();
        let view: Vec<&UnitRecord> = recs.iter().collect();
        let base = BasisSpec::linear(&[Role::W, Role::S, Role::X]).with_degree(2);
        let plain = fit_basis(&base, &view).unwrap();
        let inter = fit_basis(&base.clone().with_interactions(true), &view).unwrap();
        assert_eq!(inter.out_dim(), plain.out_dim() + 3);
        for r in &recs {
            let a = plain.eval(r).unwrap();
            let b = inter.eval(r).unwrap();
            assert_eq!(&b[..a.len()], &a[..]);
        }
    }

    #[test]
    fn degree_guard() {
        assert!(BasisSpec::linear(&[Role::W]).with_degree(4).validate().is_err());
        assert!(BasisSpec::linear(&[Role::Y]).validate().is_err());
    }

    #[test]
    fn unstandardize_matches_raw_evaluation() {
        let recs: Vec<UnitRecord> = (0..7)
            .map(|i| rec(vec![0.3 * i as f64], vec![(i % 3) as f64, 2.0 - i as f64], vec![], None))
            .collect();
        let view: Vec<&UnitRecord> = recs.iter().collect();
        let fb = fit_basis(&BasisSpec::linear(&[Role::W, Role::S]), &view).unwrap();
        let coeffs = [0.5, -1.0, 2.0, 0.25];
        let raw = fb.unstandardize_linear(&coeffs).unwrap();
        for r in &recs {
            let std_val: f64 = fb.eval(r).unwrap().iter().zip(&coeffs).map(|(a, b)| a * b).sum();
            let raw_val = raw[0] + raw[1] * r.w[0] + raw[2] * r.s[0] + raw[3] * r.s[1];
            assert!((std_val - raw_val).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn eval_is_pure_and_sized(
            vals in proptest::collection::vec(-50.0f64..50.0, 12),
            deg in 1u8..=3,
            inter in proptest::bool::ANY,
        ) {
            let recs: Vec<UnitRecord> = vals
                .chunks(4)
                .map(|c| rec(vec![c[0]], vec![c[1], c[2]], vec![c[3]], None))
                .collect();
            let view: Vec<&UnitRecord> = recs.iter().collect();
            let spec = BasisSpec::linear(&[Role::W, Role::S, Role::X])
                .with_degree(deg)
                .with_interactions(inter);
            let fb = fit_basis(&spec, &view).unwrap();
            for r in &recs {
                let a = fb.eval(r).unwrap();
                let b = fb.eval(r).unwrap();
                proptest::prop_assert_eq!(a.len(), fb.out_dim());
                proptest::prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}
