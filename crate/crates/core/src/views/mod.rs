//! Data products behind the four clinician panels: indicator series, the
//! trajectory map, indicator glyphs and the analysis bundle.

mod analysis;
mod glyphs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{classify_value, Band, Cohort, FeatureDef};
use crate::trajectory::{TrajectoryLabel, TrajectoryModel};

pub use analysis::{
    analysis_bundle, quartiles, AnalysisBundle, CurveBin, Demographics, Histogram, TrajectoryCurve, AGE_HIST_EDGES,
    DEFAULT_AGE_BIN_YEARS, EGFR_HIST_EDGES,
};
pub use glyphs::{availability_matrix, cluster_indicators, indicator_glyphs, jaccard_distance, GlyphBin, IndicatorGlyphs, DEFAULT_GLYPH_BIN_YEARS};

#[derive(Debug, Error, PartialEq)]
pub enum ViewError {
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPoint {
    pub age: f64,
    pub value: f64,
    /// `None` for features without a normal range.
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    pub patient_id: String,
    pub feature_code: String,
    pub name: String,
    pub units: String,
    pub normal_low: Option<f64>,
    pub normal_high: Option<f64>,
    pub points: Vec<IndicatorPoint>,
}

pub(crate) fn band_of(def: &FeatureDef, value: f64) -> Option<(Band, f64)> {
    classify_value(def, value).ok()
}

/// Age-ordered series of one or two numeric indicators of a patient.
pub fn patient_series(cohort: &Cohort, patient_id: &str, feature_codes: &[&str]) -> Result<Vec<IndicatorSeries>, ViewError> {
    if cohort.patient(patient_id).is_none() {
        return Err(ViewError::UnknownPatient(patient_id.to_string()));
    }
    if feature_codes.is_empty() || feature_codes.len() > 2 {
        return Err(ViewError::Invalid(format!("expected 1 or 2 indicators, got {}", feature_codes.len())));
    }
    let encounters = cohort.encounters_of(patient_id);
    feature_codes
        .iter()
        .map(|code| {
            let def = cohort.catalog().get(code).ok_or_else(|| ViewError::UnknownFeature(code.to_string()))?;
            if !def.is_numeric() {
                return Err(ViewError::Invalid(format!("{code} is categorical")));
            }
            let mut points: Vec<IndicatorPoint> = encounters
                .iter()
                .filter_map(|e| {
                    let value = e.number(code)?;
                    Some(IndicatorPoint { age: e.age(), value, band: band_of(def, value).map(|b| b.0) })
                })
                .collect();
            points.sort_by(|a, b| a.age.total_cmp(&b.age));
            Ok(IndicatorSeries {
                patient_id: patient_id.to_string(),
                feature_code: def.code.clone(),
                name: def.name.clone(),
                units: def.units.clone(),
                normal_low: def.normal_low,
                normal_high: def.normal_high,
                points,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorBy {
    #[default]
    Egfr,
    Age,
    Trajectory,
}

impl std::str::FromStr for ColorBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "egfr" => Ok(ColorBy::Egfr),
            "age" => Ok(ColorBy::Age),
            "trajectory" => Ok(ColorBy::Trajectory),
            other => Err(format!("color_by must be egfr, age or trajectory, not {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub x: f64,
    pub y: f64,
    /// Scalar annotation for `egfr` and `age` coloring.
    pub value: Option<f64>,
    /// Attributed trajectory for `trajectory` coloring.
    pub trajectory: Option<TrajectoryLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTrajectory {
    pub branch_id: usize,
    pub label: TrajectoryLabel,
    /// Smoothed polyline from the fork outward.
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightedVisit {
    pub order: usize,
    pub visit_index: usize,
    pub encounter_id: String,
    pub age: f64,
    pub x: f64,
    pub y: f64,
    pub egfr: Option<f64>,
    pub trajectory: Option<TrajectoryLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMap {
    pub color_by: ColorBy,
    pub points: Vec<MapPoint>,
    pub landmarks: Vec<[f64; 2]>,
    pub edges: Vec<(usize, usize)>,
    pub trajectories: Vec<MapTrajectory>,
    pub highlight_patient: Option<String>,
    pub highlighted: Vec<HighlightedVisit>,
}

pub fn trajectory_map(model: &TrajectoryModel, color_by: ColorBy, highlight_patient: Option<&str>) -> Result<TrajectoryMap, ViewError> {
    let highlighted = match highlight_patient {
        Some(pid) => {
            let idx = model.patient_visits(pid);
            if idx.is_empty() {
                return Err(ViewError::UnknownPatient(pid.to_string()));
            }
            idx.into_iter()
                .enumerate()
                .map(|(order, i)| HighlightedVisit {
                    order,
                    visit_index: i,
                    encounter_id: model.visits[i].encounter_id.clone(),
                    age: model.ages[i],
                    x: model.coords2d[i][0],
                    y: model.coords2d[i][1],
                    egfr: model.egfr[i],
                    trajectory: model.visit_label(i),
                })
                .collect()
        }
        None => Vec::new(),
    };
    let points = (0..model.visits.len())
        .map(|i| MapPoint {
            x: model.coords2d[i][0],
            y: model.coords2d[i][1],
            value: match color_by {
                ColorBy::Egfr => model.egfr[i],
                ColorBy::Age => Some(model.ages[i]),
                ColorBy::Trajectory => None,
            },
            trajectory: if color_by == ColorBy::Trajectory { model.visit_label(i) } else { None },
        })
        .collect();
    let trajectories = model
        .named_trajectories()
        .into_iter()
        .filter_map(|label| {
            let b = model.branch_of(label)?;
            Some(MapTrajectory { branch_id: b.id, label, polyline: model.smoothed_curves.get(&b.id)?.clone() })
        })
        .collect();
    Ok(TrajectoryMap {
        color_by,
        points,
        landmarks: model.tree.landmarks.clone(),
        edges: model.tree.edges.clone(),
        trajectories,
        highlight_patient: highlight_patient.map(str::to_string),
        highlighted,
    })
}
