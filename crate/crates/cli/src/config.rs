//! TOML run configuration. Command-line flags override these values.

use std::path::{Path, PathBuf};

use proxsurr::basis::BasisSpec;
use proxsurr::data::{CsvSchema, Role};
use proxsurr::estimators::{EstimatorConfig, EstimatorKind};
use proxsurr::harness::MisspecRegime;
use proxsurr::synth::DGPConfig;
use proxsurr::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: CsvSchema,
    pub estimator: EstimatorConfig,
    pub dgp: DGPConfig,
    pub estimate: EstimateSection,
    pub simulate: SimulateSection,
    pub diagnose: DiagnoseSection,
    pub gen_data: GenDataSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: CsvSchema::default(),
            estimator: EstimatorConfig::default(),
            dgp: DGPConfig::confounded(),
            estimate: EstimateSection::default(),
            simulate: SimulateSection::default(),
            diagnose: DiagnoseSection::default(),
            gen_data: GenDataSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub data: Option<PathBuf>,
    /// Estimator names, or `all` for the four cross-fitted ones.
    pub estimators: Vec<String>,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            data: None,
            estimators: vec!["mr".into()],
            seed: 0,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub pi: f64,
    pub replications: usize,
    pub base_seed: u64,
    /// Regime names, or `all`.
    pub regimes: Vec<String>,
    pub estimators: Vec<String>,
    pub output: Option<PathBuf>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n: 40_000,
            pi: 0.5,
            replications: 200,
            base_seed: 0,
            regimes: vec!["all_correct".into()],
            estimators: ["ob-or", "ob-ipw", "sb", "mr", "si"].map(String::from).to_vec(),
            output: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataSection {
    pub n: usize,
    pub pi: f64,
    pub seed: u64,
    /// Writes a fully observed experiment instead of a masked combined dataset.
    pub full: bool,
    pub output: Option<PathBuf>,
}

impl Default for GenDataSection {
    fn default() -> Self {
        Self {
            n: 10_000,
            pi: 0.5,
            seed: 0,
            full: false,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {}", path.display(), e.message())))
    }

    /// Basis and schema checks shared by every command that reads a CSV.
    pub fn check_schema(&self) -> Result<()> {
        let s = &self.schema;
        for (name, v) in [
            ("y", &s.y),
            ("a", &s.a),
            ("g", &s.g),
            ("label_e", &s.label_e),
            ("label_o", &s.label_o),
        ] {
            if v.trim().is_empty() {
                return Err(Error::Validation(format!("schema.{name} is empty")));
            }
        }
        if s.label_e == s.label_o {
            return Err(Error::Validation(
                "schema labels for the two samples must differ".into(),
            ));
        }
        let e = &self.estimator;
        let specs: [(&str, &BasisSpec); 6] = [
            ("psi", &e.psi),
            ("b", &e.b),
            ("phi", &e.phi),
            ("g", &e.g),
            ("propensity", &e.propensity),
            ("hbar", &e.hbar),
        ];
        for (name, spec) in specs {
            for &role in &spec.roles {
                let mapped = match role {
                    Role::W => !s.w.is_empty(),
                    Role::Z => !s.z.is_empty(),
                    Role::S => !s.s.is_empty(),
                    Role::X => !s.x.is_empty(),
                    Role::A | Role::Y => true,
                };
                if !mapped {
                    return Err(Error::Validation(format!(
                        "estimator.{name} uses role `{role}`, which the schema maps to no column"
                    )));
                }
            }
        }
        e.validate()
    }
}

/// `all` expands to the four cross-fitted estimators.
pub fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorKind>> {
    let mut out = Vec::new();
    for name in names.iter().flat_map(|n| n.split(',')) {
        if name.trim().eq_ignore_ascii_case("all") {
            out.extend(EstimatorKind::CROSS_FITTED);
        } else {
            out.push(name.parse()?);
        }
    }
    out.dedup();
    if out.is_empty() {
        return Err(Error::Validation("no estimator requested".into()));
    }
    Ok(out)
}

pub fn parse_regimes(names: &[String]) -> Result<Vec<MisspecRegime>> {
    let mut out = Vec::new();
    for name in names.iter().flat_map(|n| n.split(',')) {
        if name.trim().eq_ignore_ascii_case("all") {
            out.extend(MisspecRegime::ALL);
        } else {
            out.push(name.parse()?);
        }
    }
    out.dedup();
    if out.is_empty() {
        return Err(Error::Validation("no regime requested".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[estimator]\nk_fold = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("seeds = 1\n").is_err());
    }

    #[test]
    fn nested_sections_parse() {
        let cfg: RunConfig = toml::from_str(
            "[estimator]\nk_folds = 3\nridge_h = 0.01\n[estimator.psi]\nroles = [\"w\", \"s\"]\ndegree = 2\n\
             [simulate]\nregimes = [\"all\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.estimator.k_folds, 3);
        assert_eq!(cfg.estimator.psi.degree, 2);
        assert_eq!(parse_regimes(&cfg.simulate.regimes).unwrap().len(), 6);
    }

    #[test]
    fn unmapped_roles_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.schema.z.clear();
        assert!(cfg.check_schema().unwrap_err().is_validation());
    }

    #[test]
    fn name_lists() {
        let all = parse_estimators(&["all".into()]).unwrap();
        assert_eq!(all, EstimatorKind::CROSS_FITTED);
        assert_eq!(parse_estimators(&["mr,si".into()]).unwrap().len(), 2);
        assert!(parse_estimators(&["bogus".into()]).is_err());
        assert!(parse_regimes(&["case9".into()]).is_err());
    }
}
