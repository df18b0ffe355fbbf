//! Trajectory learning: a principal tree over the 2-D visit map, segmented
//! into branches that are oriented by age, scored against eGFR, labeled,
//! smoothed, and used to attribute each visit to a trajectory.

mod branches;
mod label;
mod lowess;
mod mst;
mod probability;
mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::VisitRef;

pub use branches::{
    annotate_landmarks, describe_branches, egfr_slope, orient_branch, pearson, score_branch_ckd_relevance,
    segment_branches, Branch, BranchKind, LandmarkAnnotation, LandmarkStats,
};
pub use label::{label_trajectories, LabelParams, TrajectoryLabel, DEFAULT_FLAT_SLOPE};
pub use lowess::{lowess, smooth_trajectory, window_size, DEFAULT_ROBUST_ITERS, DEFAULT_SPAN};
pub use mst::{adjacency, degrees, is_spanning_tree, mst, mst_from_weights, UnionFind};
pub use probability::{attribute_visit, landmark_owners, probability_from_attributions, TrajectoryProbability};
pub use tree::{
    fit_principal_tree, fit_principal_tree_observed, kmeans_init, median_pairwise_distance, objective,
    IterationSnapshot, PrincipalTree, TreeParams, DEFAULT_LAMBDA, DEFAULT_LANDMARKS, DEFAULT_MAX_ITERS,
    DEFAULT_SIGMA_FACTOR, DEFAULT_TOL, SIGMA_SAMPLE,
};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("objective increased at iteration {iteration}: {previous} -> {current}")]
    Divergence { iteration: usize, previous: f64, current: f64 },
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub tree: TreeParams,
    pub span: f64,
    pub robust_iters: usize,
    pub labels: LabelParams,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            tree: TreeParams::default(),
            span: DEFAULT_SPAN,
            robust_iters: DEFAULT_ROBUST_ITERS,
            labels: LabelParams::default(),
        }
    }
}

/// Visit-level inputs, all aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryInput {
    pub visits: Vec<VisitRef>,
    pub ages: Vec<f64>,
    pub egfr: Vec<Option<f64>>,
    pub coords2d: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryModel {
    pub params: TrajectoryParams,
    pub tree: PrincipalTree,
    pub annotations: LandmarkAnnotation,
    pub branches: Vec<Branch>,
    /// Terminal branch id → label.
    pub labels: BTreeMap<usize, TrajectoryLabel>,
    /// Branch id → smoothed polyline along the age-oriented landmark chain.
    pub smoothed_curves: BTreeMap<usize, Vec<[f64; 2]>>,
    pub visits: Vec<VisitRef>,
    pub ages: Vec<f64>,
    pub egfr: Vec<Option<f64>>,
    pub coords2d: Vec<[f64; 2]>,
    /// Terminal branch per visit, `None` when undetermined.
    pub attributions: Vec<Option<usize>>,
    pub warnings: Vec<String>,
}

/// Fits the tree and derives every branch-level quantity.
pub fn learn_trajectories(input: &TrajectoryInput, params: &TrajectoryParams) -> Result<TrajectoryModel, TrajectoryError> {
    learn_trajectories_observed(input, params, |_| {})
}

pub fn learn_trajectories_observed(
    input: &TrajectoryInput,
    params: &TrajectoryParams,
    observer: impl FnMut(&IterationSnapshot<'_>),
) -> Result<TrajectoryModel, TrajectoryError> {
    let n = input.coords2d.len();
    if input.visits.len() != n || input.ages.len() != n || input.egfr.len() != n {
        return Err(TrajectoryError::Precondition("visit inputs have mismatched lengths".into()));
    }
    if !(params.span > 0.0 && params.span <= 1.0) {
        return Err(TrajectoryError::Precondition(format!("span must be in (0, 1], got {}", params.span)));
    }
    let tree = fit_principal_tree_observed(&input.coords2d, &params.tree, observer)?;
    let m = tree.len();
    let annotations = annotate_landmarks(m, &tree.assignments, &input.ages, &input.egfr);
    let mut branches = segment_branches(m, &tree.edges);
    let mut warnings = describe_branches(&mut branches, &annotations);
    let deg = tree.degrees();

    let owners = landmark_owners(m, &branches);
    let attributions: Vec<Option<usize>> = tree.assignments.iter().map(|&k| owners[k]).collect();
    let mut branch_visits = vec![0usize; branches.len()];
    for b in &branches {
        branch_visits[b.id] = b.landmarks.iter().map(|&k| annotations.landmarks[k].visit_count).sum();
    }
    let (labels, label_warnings) = label_trajectories(&branches, &deg, &branch_visits, &params.labels);
    warnings.extend(label_warnings);

    let mut smoothed_curves = BTreeMap::new();
    for b in &branches {
        let pts: Vec<[f64; 2]> = b.oriented().iter().map(|&k| tree.landmarks[k]).collect();
        let curve = if pts.len() >= 3 { smooth_trajectory(&pts, params.span, params.robust_iters)? } else { pts };
        smoothed_curves.insert(b.id, curve);
    }

    Ok(TrajectoryModel {
        params: params.clone(),
        tree,
        annotations,
        branches,
        labels,
        smoothed_curves,
        visits: input.visits.clone(),
        ages: input.ages.clone(),
        egfr: input.egfr.clone(),
        coords2d: input.coords2d.clone(),
        attributions,
        warnings,
    })
}

impl TrajectoryModel {
    pub fn branch(&self, id: usize) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn label_of(&self, branch_id: usize) -> TrajectoryLabel {
        self.labels.get(&branch_id).copied().unwrap_or(TrajectoryLabel::Unlabeled)
    }

    pub fn branch_of(&self, label: TrajectoryLabel) -> Option<&Branch> {
        if label == TrajectoryLabel::Unlabeled {
            return None;
        }
        self.labels.iter().find(|(_, l)| **l == label).and_then(|(id, _)| self.branch(*id))
    }

    /// Named trajectories present in the model, in label order.
    pub fn named_trajectories(&self) -> Vec<TrajectoryLabel> {
        TrajectoryLabel::NAMED.iter().copied().filter(|l| self.branch_of(*l).is_some()).collect()
    }

    /// Named trajectory of a visit; `None` for undetermined or unlabeled.
    pub fn visit_label(&self, visit: usize) -> Option<TrajectoryLabel> {
        let l = self.label_of(self.attributions[visit]?);
        (l != TrajectoryLabel::Unlabeled).then_some(l)
    }

    /// Visit indices of a patient, ordered by age.
    pub fn patient_visits(&self, patient_id: &str) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.visits.len()).filter(|&i| self.visits[i].patient_id == patient_id).collect();
        idx.sort_by(|&a, &b| self.ages[a].total_cmp(&self.ages[b]).then(a.cmp(&b)));
        idx
    }

    /// Attribution of an arbitrary map position.
    pub fn attribute(&self, p: &[f64; 2]) -> Option<usize> {
        attribute_visit(p, &self.tree, &self.branches)
    }

    pub fn trajectory_probability(&self, patient_id: &str) -> Result<TrajectoryProbability, TrajectoryError> {
        let idx = self.patient_visits(patient_id);
        if idx.is_empty() {
            return Err(TrajectoryError::UnknownPatient(patient_id.to_string()));
        }
        let ages: Vec<f64> = idx.iter().map(|&i| self.ages[i]).collect();
        let labels: Vec<Option<TrajectoryLabel>> = idx.iter().map(|&i| self.visit_label(i)).collect();
        Ok(probability_from_attributions(patient_id, &ages, &labels))
    }

    /// Majority named trajectory over a patient's labeled visits; ties and
    /// patients without labeled visits have no membership.
    pub fn patient_membership(&self, patient_id: &str) -> Option<TrajectoryLabel> {
        membership_of(self.patient_visits(patient_id).iter().filter_map(|&i| self.visit_label(i)))
    }

    /// Membership for every patient that has one.
    pub fn memberships(&self) -> BTreeMap<String, TrajectoryLabel> {
        let mut per: BTreeMap<&str, Vec<TrajectoryLabel>> = BTreeMap::new();
        for i in 0..self.visits.len() {
            let entry = per.entry(self.visits[i].patient_id.as_str()).or_default();
            if let Some(l) = self.visit_label(i) {
                entry.push(l);
            }
        }
        per.into_iter().filter_map(|(p, ls)| Some((p.to_string(), membership_of(ls.into_iter())?))).collect()
    }
}

pub fn membership_of(labels: impl Iterator<Item = TrajectoryLabel>) -> Option<TrajectoryLabel> {
    let mut counts: BTreeMap<TrajectoryLabel, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    let mut top = counts.iter().filter(|(_, c)| **c == best);
    let first = top.next().map(|(l, _)| *l);
    if top.next().is_some() {
        None
    } else {
        first
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TrajectoryLabel::*;

    #[test]
    fn membership_majority_and_ties() {
        assert_eq!(membership_of([Healthy, Healthy, FastProgression].into_iter()), Some(Healthy));
        assert_eq!(membership_of([Healthy, FastProgression].into_iter()), None);
        assert_eq!(membership_of(std::iter::empty()), None);
    }
}
