use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{visit_indices, EmbeddingError, VisitRef};
use crate::cdm::Cohort;

/// Dense visit-by-feature matrix over the numeric catalog features (catalog
/// order) with the observedness mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitMatrix {
    pub visits: Vec<VisitRef>,
    pub ages: Vec<f64>,
    pub features: Vec<String>,
    /// Rows are visits; masked-off entries are 0.0 and carry no meaning.
    pub values: DMatrix<f64>,
    pub mask: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImputation {
    pub feature_code: String,
    pub missing_fraction: f64,
    pub imputed: usize,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub zero_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub features: Vec<FeatureImputation>,
}

pub fn visit_matrix(cohort: &Cohort) -> VisitMatrix {
    let features: Vec<String> = cohort.catalog().numeric().map(|f| f.code.clone()).collect();
    let idx = visit_indices(cohort);
    let encounters = cohort.encounters();
    let mut values = DMatrix::zeros(idx.len(), features.len());
    let mut mask = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        let e = &encounters[i];
        let mut row = vec![false; features.len()];
        for (c, code) in features.iter().enumerate() {
            if let Some(v) = e.number(code) {
                values[(r, c)] = v;
                row[c] = true;
            }
        }
        mask.push(row);
    }
    VisitMatrix {
        visits: idx.iter().map(|&i| VisitRef::of(&encounters[i])).collect(),
        ages: idx.iter().map(|&i| encounters[i].age()).collect(),
        features,
        values,
        mask,
    }
}

pub(crate) fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median-imputes missing entries, then centers and scales each column to
/// unit sample standard deviation. Zero-variance columns become all zeros.
pub fn standardize_matrix(m: &VisitMatrix) -> Result<(DMatrix<f64>, ImputationReport), EmbeddingError> {
    let (n, p) = m.values.shape();
    if n < 2 {
        return Err(EmbeddingError::Precondition(format!("need at least 2 visits, got {n}")));
    }
    let mut out = m.values.clone();
    let mut report = Vec::with_capacity(p);
    for c in 0..p {
        let mut observed: Vec<f64> = (0..n).filter(|&r| m.mask[r][c]).map(|r| m.values[(r, c)]).collect();
        if observed.is_empty() {
            return Err(EmbeddingError::Precondition(format!(
                "feature {:?} has no observations",
                m.features[c]
            )));
        }
        observed.sort_by(f64::total_cmp);
        let med = median(&observed);
        let imputed = n - observed.len();
        for r in 0..n {
            if !m.mask[r][c] {
                out[(r, c)] = med;
            }
        }
        let mean = out.column(c).iter().sum::<f64>() / n as f64;
        let ss: f64 = out.column(c).iter().map(|v| (v - mean).powi(2)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        let zero_variance = !(sd > 1e-12 * mean.abs().max(1.0));
        for r in 0..n {
            out[(r, c)] = if zero_variance { 0.0 } else { (out[(r, c)] - mean) / sd };
        }
        report.push(FeatureImputation {
            feature_code: m.features[c].clone(),
            missing_fraction: imputed as f64 / n as f64,
            imputed,
            median: med,
            mean,
            sd,
            zero_variance,
        });
    }
    Ok((out, ImputationReport { features: report }))
}

pub fn standardize_features(cohort: &Cohort) -> Result<(VisitMatrix, DMatrix<f64>, ImputationReport), EmbeddingError> {
    let m = visit_matrix(cohort);
    let (z, report) = standardize_matrix(&m)?;
    Ok((m, z, report))
}
