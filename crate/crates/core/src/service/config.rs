use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::cdm::CohortFiles;

pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_PORT: u16 = 8080;
pub const CONFIG_ENV: &str = "TRAJVIS_CONFIG";

fn default_host() -> String {
    DEFAULT_HOST.to_string()
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

/// Service settings, read from TOML. Relative paths resolve against the
/// directory of the config file.
///
/// ```toml
/// port = 8080
/// model_artifact_path = "out/model.json"
/// enrichment_report_path = "out/enrichment.json"
/// cohort_dir = "data"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub model_artifact_path: PathBuf,
    /// Recomputed from model and cohort at startup when absent.
    #[serde(default)]
    pub enrichment_report_path: Option<PathBuf>,
    /// Directory holding `patients.csv`, `observations.csv` and `catalog.json`.
    #[serde(default)]
    pub cohort_dir: Option<PathBuf>,
    #[serde(default)]
    pub patients_path: Option<PathBuf>,
    #[serde(default)]
    pub observations_path: Option<PathBuf>,
    #[serde(default)]
    pub catalog_path: Option<PathBuf>,
    #[serde(default)]
    pub static_assets_path: Option<PathBuf>,
    #[serde(default)]
    pub request_log: bool,
}

impl ServiceConfig {
    pub fn new(model_artifact_path: PathBuf, cohort_dir: PathBuf) -> Self {
        Self {
            host: default_host(),
            port: default_port(),
            model_artifact_path,
            enrichment_report_path: None,
            cohort_dir: Some(cohort_dir),
            patients_path: None,
            observations_path: None,
            catalog_path: None,
            static_assets_path: None,
            request_log: false,
        }
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let mut c: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut c.model_artifact_path);
        for p in [
            &mut c.enrichment_report_path,
            &mut c.cohort_dir,
            &mut c.patients_path,
            &mut c.observations_path,
            &mut c.catalog_path,
            &mut c.static_assets_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Cohort files, explicit paths taking precedence over `cohort_dir`.
    pub fn cohort_files(&self) -> Result<CohortFiles, ServiceError> {
        let from_dir = self.cohort_dir.as_deref().map(CohortFiles::in_dir);
        let pick = |explicit: &Option<PathBuf>, f: fn(&CohortFiles) -> &PathBuf, name: &str| {
            explicit
                .clone()
                .or_else(|| from_dir.as_ref().map(|d| f(d).clone()))
                .ok_or_else(|| ServiceError::Config(format!("set cohort_dir or {name}")))
        };
        Ok(CohortFiles {
            patients: pick(&self.patients_path, |d| &d.patients, "patients_path")?,
            observations: pick(&self.observations_path, |d| &d.observations, "observations_path")?,
            catalog: pick(&self.catalog_path, |d| &d.catalog, "catalog_path")?,
        })
    }

    /// Checks that every referenced file exists.
    pub fn validate(&self) -> Result<(), ServiceError> {
        let files = self.cohort_files()?;
        let mut required = vec![&self.model_artifact_path, &files.patients, &files.observations, &files.catalog];
        required.extend(&self.enrichment_report_path);
        for p in required {
            if !p.is_file() {
                return Err(ServiceError::Config(format!("{} does not exist", p.display())));
            }
        }
        if let Some(dir) = &self.static_assets_path {
            if !dir.is_dir() {
                return Err(ServiceError::Config(format!("static assets directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    pub fn addr(&self) -> Result<SocketAddr, ServiceError> {
        format!("{}:{}", self.host, self.port)
            .parse()
            .map_err(|e| ServiceError::Config(format!("bad listen address {}:{}: {e}", self.host, self.port)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let c = ServiceConfig::from_toml(
            "port = 9000\nmodel_artifact_path = \"m.json\"\ncohort_dir = \"data\"\ncatalog_path = \"/abs/cat.json\"\n",
            Path::new("/etc/trajvis"),
        )
        .unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.host, DEFAULT_HOST);
        assert_eq!(c.model_artifact_path, PathBuf::from("/etc/trajvis/m.json"));
        let f = c.cohort_files().unwrap();
        assert_eq!(f.patients, PathBuf::from("/etc/trajvis/data/patients.csv"));
        assert_eq!(f.catalog, PathBuf::from("/abs/cat.json"));
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_and_missing_cohort_rejected() {
        assert!(ServiceConfig::from_toml("model_artifact_path = \"m\"\nprot = 1\n", Path::new(".")).is_err());
        let c = ServiceConfig::from_toml("model_artifact_path = \"m\"\n", Path::new(".")).unwrap();
        assert!(c.cohort_files().is_err());
    }
}
