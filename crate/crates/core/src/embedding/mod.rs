//! Per-visit representation: the age-similarity visit graph, a standardized
//! feature matrix, a principal-component baseline latent space (or an
//! imported one), and its 2-D projection.

mod graph;
mod pca;
mod standardize;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{Cohort, Encounter, AGE};

pub use graph::{build_age_similarity_graph, AgeSimilarityGraph};
pub use pca::{baseline_embed, PcaBasis};
pub use standardize::{
    standardize_features, standardize_matrix, visit_matrix, FeatureImputation, ImputationReport, VisitMatrix,
};
pub(crate) use standardize::median;

pub const DEFAULT_LATENT_DIM: usize = 18;
pub const DEFAULT_WINDOW_DAYS: u32 = 30;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{0}")]
    Precondition(String),
    #[error("requested {requested} components but the data has rank {achievable}")]
    Rank { requested: usize, achievable: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{path}: {message}")]
    Import { path: PathBuf, message: String },
}

impl EmbeddingError {
    fn import(path: &Path, message: impl Into<String>) -> Self {
        EmbeddingError::Import { path: path.to_path_buf(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VisitRef {
    pub patient_id: String,
    pub encounter_id: String,
}

impl VisitRef {
    pub fn of(e: &Encounter) -> Self {
        Self { patient_id: e.patient_id.clone(), encounter_id: e.encounter_id.clone() }
    }
}

/// Indices (into `cohort.encounters()`) of visits carrying at least one
/// numeric observation besides the derived age.
pub fn visit_indices(cohort: &Cohort) -> Vec<usize> {
    let numeric: Vec<&str> = cohort.catalog().numeric().map(|f| f.code.as_str()).filter(|c| *c != AGE).collect();
    cohort
        .encounters()
        .iter()
        .enumerate()
        .filter(|(_, e)| numeric.iter().any(|c| e.number(c).is_some()))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Baseline,
    Imported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSpace {
    pub visits: Vec<VisitRef>,
    pub ages: Vec<f64>,
    pub latent: DMatrix<f64>,
    pub coords2d: Vec<[f64; 2]>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Pca,
    Import(PathBuf),
}

fn read_keyed_matrix(
    path: &Path,
    visits: &[VisitRef],
    value_columns: Option<&[&str]>,
    value_prefix: &str,
) -> Result<DMatrix<f64>, EmbeddingError> {
    let file = std::fs::File::open(path).map_err(|e| EmbeddingError::import(path, e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| EmbeddingError::import(path, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < 3 || header[0] != "patient_id" || header[1] != "encounter_id" {
        return Err(EmbeddingError::import(path, "header must start with patient_id,encounter_id"));
    }
    let d = header.len() - 2;
    match value_columns {
        Some(cols) => {
            if header[2..] != *cols {
                return Err(EmbeddingError::import(path, format!("expected value columns {}", cols.join(","))));
            }
        }
        None => {
            for (k, name) in header[2..].iter().enumerate() {
                if *name != format!("{value_prefix}{}", k + 1) {
                    return Err(EmbeddingError::import(
                        path,
                        format!("column {} should be {value_prefix}{}, found {name:?}", k + 3, k + 1),
                    ));
                }
            }
        }
    }
    let index: HashMap<(&str, &str), usize> = visits
        .iter()
        .enumerate()
        .map(|(i, v)| ((v.patient_id.as_str(), v.encounter_id.as_str()), i))
        .collect();
    let mut out = DMatrix::zeros(visits.len(), d);
    let mut seen = vec![false; visits.len()];
    for row in reader.records() {
        let row = row.map_err(|e| EmbeddingError::import(path, e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != d + 2 {
            return Err(EmbeddingError::import(path, format!("line {line}: expected {} fields", d + 2)));
        }
        let key = (row[0].trim(), row[1].trim());
        let Some(&i) = index.get(&key) else {
            return Err(EmbeddingError::import(
                path,
                format!("line {line}: visit ({}, {}) is not in the cohort", key.0, key.1),
            ));
        };
        if std::mem::replace(&mut seen[i], true) {
            return Err(EmbeddingError::import(
                path,
                format!("line {line}: duplicate visit ({}, {})", key.0, key.1),
            ));
        }
        for k in 0..d {
            let v: f64 = row[k + 2]
                .trim()
                .parse()
                .map_err(|_| EmbeddingError::import(path, format!("line {line}: {:?} is not a number", &row[k + 2])))?;
            if !v.is_finite() {
                return Err(EmbeddingError::import(path, format!("line {line}: non-finite entry")));
            }
            out[(i, k)] = v;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(EmbeddingError::import(
            path,
            format!("visit ({}, {}) is missing", visits[i].patient_id, visits[i].encounter_id),
        ));
    }
    Ok(out)
}

/// Reads an externally computed latent representation keyed by visit.
pub fn import_latent(path: &Path, cohort: &Cohort) -> Result<LatentSpace, EmbeddingError> {
    let idx = visit_indices(cohort);
    let encounters = cohort.encounters();
    let visits: Vec<VisitRef> = idx.iter().map(|&i| VisitRef::of(&encounters[i])).collect();
    let latent = read_keyed_matrix(path, &visits, None, "u")?;
    let coords2d = project_2d(&latent, &visits, &Projection::Pca)?;
    Ok(LatentSpace {
        ages: idx.iter().map(|&i| encounters[i].age()).collect(),
        visits,
        latent,
        coords2d,
        provenance: Provenance::Imported,
    })
}

pub fn project_2d(latent: &DMatrix<f64>, visits: &[VisitRef], method: &Projection) -> Result<Vec<[f64; 2]>, EmbeddingError> {
    let m = match method {
        Projection::Pca => baseline_embed(latent, 2)?,
        Projection::Import(path) => read_keyed_matrix(path, visits, Some(&["x", "y"]), "")?,
    };
    Ok((0..m.nrows()).map(|r| [m[(r, 0)], m[(r, 1)]]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub dim: usize,
    pub latent_import: Option<PathBuf>,
    pub coords_import: Option<PathBuf>,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self { dim: DEFAULT_LATENT_DIM, latent_import: None, coords_import: None }
    }
}

/// Standardize → baseline (or imported) latent → 2-D projection.
pub fn embed_cohort(cohort: &Cohort, options: &EmbedOptions) -> Result<(LatentSpace, Option<ImputationReport>), EmbeddingError> {
    let (mut space, report) = match &options.latent_import {
        Some(path) => (import_latent(path, cohort)?, None),
        None => {
            let (m, z, report) = standardize_features(cohort)?;
            let latent = baseline_embed(&z, options.dim)?;
            let coords2d = project_2d(&latent, &m.visits, &Projection::Pca)?;
            (
                LatentSpace { visits: m.visits, ages: m.ages, latent, coords2d, provenance: Provenance::Baseline },
                Some(report),
            )
        }
    };
    if let Some(path) = &options.coords_import {
        space.coords2d = project_2d(&space.latent, &space.visits, &Projection::Import(path.clone()))?;
    }
    Ok((space, report))
}

/// Writes a latent matrix in the import format.
pub fn write_latent_csv<W: std::io::Write>(space: &LatentSpace, out: W) -> Result<(), EmbeddingError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| EmbeddingError::Precondition(e.to_string());
    let mut header = vec!["patient_id".to_string(), "encounter_id".to_string()];
    header.extend((1..=space.latent.ncols()).map(|k| format!("u{k}")));
    w.write_record(&header).map_err(err)?;
    for (r, v) in space.visits.iter().enumerate() {
        let mut rec = vec![v.patient_id.clone(), v.encounter_id.clone()];
        rec.extend(space.latent.row(r).iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| EmbeddingError::Precondition(e.to_string()))
}
