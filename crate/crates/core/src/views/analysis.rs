use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ViewError;
use crate::cdm::{Cohort, EGFR};
use crate::trajectory::{TrajectoryLabel, TrajectoryModel, TrajectoryProbability};

pub const DEFAULT_AGE_BIN_YEARS: f64 = 1.0;
/// 5-year bins over 0–100.
pub const AGE_HIST_EDGES: (f64, f64, usize) = (0.0, 100.0, 20);
/// 10-unit bins over 0–150.
pub const EGFR_HIST_EDGES: (f64, f64, usize) = (0.0, 150.0, 15);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub age_bin: [f64; 2],
    pub n: usize,
    pub lower: f64,
    pub central: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCurve {
    pub trajectory: TrajectoryLabel,
    pub bins: Vec<CurveBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub trajectory: TrajectoryLabel,
    pub patients: usize,
    pub sex: BTreeMap<String, usize>,
    pub race: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges; values outside fall in the end bins.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn fixed((lo, hi, n): (f64, f64, usize), values: impl Iterator<Item = f64>) -> Self {
        let width = (hi - lo) / n as f64;
        let mut counts = vec![0; n];
        for v in values {
            let k = ((v - lo) / width).floor();
            counts[k.clamp(0.0, (n - 1) as f64) as usize] += 1;
        }
        Self { edges: (0..=n).map(|k| lo + k as f64 * width).collect(), counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub patient_id: String,
    pub age_bin_years: f64,
    pub curves: Vec<TrajectoryCurve>,
    pub probability: TrajectoryProbability,
    pub demographics: Vec<Demographics>,
    /// Patients by age at their last encounter.
    pub age_histogram: Histogram,
    /// Every encounter with an eGFR value.
    pub egfr_histogram: Histogram,
}

/// Lower quartile, median and upper quartile by linear interpolation between
/// order statistics (position p·(n − 1)).
pub fn quartiles(values: &[f64]) -> Option<[f64; 3]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some([q(0.25), q(0.5), q(0.75)])
}

pub fn analysis_bundle(
    model: &TrajectoryModel,
    cohort: &Cohort,
    patient_id: &str,
    age_bin_years: f64,
) -> Result<AnalysisBundle, ViewError> {
    if !(age_bin_years > 0.0 && age_bin_years.is_finite()) {
        return Err(ViewError::Invalid(format!("bin width must be positive, got {age_bin_years}")));
    }
    if cohort.patient(patient_id).is_none() {
        return Err(ViewError::UnknownPatient(patient_id.to_string()));
    }
    let probability =
        model.trajectory_probability(patient_id).map_err(|_| ViewError::UnknownPatient(patient_id.to_string()))?;

    let mut per: BTreeMap<TrajectoryLabel, BTreeMap<i64, Vec<f64>>> = BTreeMap::new();
    for i in 0..model.visits.len() {
        if let (Some(l), Some(e)) = (model.visit_label(i), model.egfr[i]) {
            let k = (model.ages[i] / age_bin_years).floor() as i64;
            per.entry(l).or_default().entry(k).or_default().push(e);
        }
    }
    let curves = model
        .named_trajectories()
        .into_iter()
        .map(|t| TrajectoryCurve {
            trajectory: t,
            bins: per
                .get(&t)
                .map(|bins| {
                    bins.iter()
                        .map(|(&k, vals)| {
                            let [lower, central, upper] = quartiles(vals).expect("nonempty bin");
                            CurveBin {
                                age_bin: [k as f64 * age_bin_years, (k + 1) as f64 * age_bin_years],
                                n: vals.len(),
                                lower,
                                central,
                                upper,
                            }
                        })
                        .collect()
                })
                .unwrap_or_default(),
        })
        .collect();

    let memberships = model.memberships();
    let demographics = model
        .named_trajectories()
        .into_iter()
        .map(|t| {
            let mut d = Demographics { trajectory: t, patients: 0, sex: BTreeMap::new(), race: BTreeMap::new() };
            for p in memberships.iter().filter(|(_, l)| **l == t).filter_map(|(pid, _)| cohort.patient(pid)) {
                d.patients += 1;
                *d.sex.entry(p.sex.to_string()).or_default() += 1;
                *d.race.entry(p.race.clone()).or_default() += 1;
            }
            d
        })
        .collect();

    let last_ages = cohort.patients().iter().filter_map(|p| cohort.encounters_of(&p.patient_id).last().map(|e| e.age()));
    let egfr_values = cohort.encounters().iter().filter_map(|e| e.number(EGFR));
    Ok(AnalysisBundle {
        patient_id: patient_id.to_string(),
        age_bin_years,
        curves,
        probability,
        demographics,
        age_histogram: Histogram::fixed(AGE_HIST_EDGES, last_ages),
        egfr_histogram: Histogram::fixed(EGFR_HIST_EDGES, egfr_values),
    })
}
