//! Clinical common data model: feature catalog, cohort records, derived
//! features and cohort generators.

mod archetype;
mod catalog;
mod cohort;
mod derive;
mod io;
mod synth;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub(crate) use archetype::{draw_visit_values, LabProfile, Noise};
pub use archetype::{planted_egfr, simulate_archetype_cohort, Archetype, ArchetypeCohort, ArchetypeMix, END_STAGE_EGFR, FAST_HGB_SHIFT};
pub use catalog::{EgfrEquation, FeatureCatalog, FeatureCategory, FeatureDef, FeatureKind, AGE, EGFR, RACE, SEX};
pub use cohort::{Cohort, Encounter, Patient, Sex, Value};
pub use derive::{classify_value, creatinine_for_egfr, derive_age, derive_egfr, Band, DAYS_PER_YEAR};
pub use io::{
    export_cohort, ingest_cohort, ingest_dir, parse_date, read_labels_csv, write_labels_csv, write_observations_csv,
    write_patients_csv, CohortFiles, LABELS_HEADER, OBSERVATIONS_HEADER, PATIENTS_HEADER,
};
pub use synth::{generate_synthetic, SynthReport, SyntheticCohort, DEFAULT_MAX_SHIFT_DAYS, DEFAULT_SWAP_FRACTION};

/// A row-level problem found while reading or validating cohort data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub file: Option<PathBuf>,
    pub line: Option<u64>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(message: impl Into<String>) -> Self {
        Self { file: None, line: None, message: message.into() }
    }

    pub fn at(file: &Path, line: u64, message: impl Into<String>) -> Self {
        Self { file: Some(file.to_path_buf()), line: Some(line), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(file), Some(line)) => write!(f, "{}:{}: {}", file.display(), line, self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum CdmError {
    #[error("{0}")]
    Io(String),
    #[error("invalid catalog: {0}")]
    Catalog(String),
    #[error("{} invalid row(s):\n{}", .0.len(), join_lines(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("derivation failed: {0}")]
    Derive(String),
    #[error("cannot classify: {0}")]
    Classify(String),
    #[error("synthetic generation: {0}")]
    Synth(String),
}

impl CdmError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CdmError::Io(format!("{}: {err}", path.display()))
    }
}

fn join_lines(d: &[Diagnostic]) -> String {
    d.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}
