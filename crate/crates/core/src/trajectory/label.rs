use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::branches::{Branch, BranchKind};

/// eGFR change (per year) below which a branch counts as flat.
pub const DEFAULT_FLAT_SLOPE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryLabel {
    Healthy,
    LateProgression,
    FastProgression,
    Unlabeled,
}

impl TrajectoryLabel {
    pub const NAMED: [TrajectoryLabel; 3] =
        [TrajectoryLabel::Healthy, TrajectoryLabel::LateProgression, TrajectoryLabel::FastProgression];

    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryLabel::Healthy => "healthy",
            TrajectoryLabel::LateProgression => "late_progression",
            TrajectoryLabel::FastProgression => "fast_progression",
            TrajectoryLabel::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for TrajectoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrajectoryLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "healthy" => Ok(TrajectoryLabel::Healthy),
            "late_progression" | "late" => Ok(TrajectoryLabel::LateProgression),
            "fast_progression" | "fast" => Ok(TrajectoryLabel::FastProgression),
            "unlabeled" => Ok(TrajectoryLabel::Unlabeled),
            other => Err(format!("unknown trajectory label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelParams {
    pub flat_slope: f64,
    /// Terminal branches with fewer assigned visits are not labeled.
    pub min_branch_visits: usize,
}

impl Default for LabelParams {
    fn default() -> Self {
        Self { flat_slope: DEFAULT_FLAT_SLOPE, min_branch_visits: 0 }
    }
}

/// Whether a terminal branch runs from its fork (or other end) toward its
/// leaf in increasing age. A path with no fork qualifies either way.
fn points_outward(b: &Branch, degrees: &[usize]) -> bool {
    let Some(leaf) = b.leaf(degrees) else { return false };
    if b.fork_landmark.is_none() {
        return true;
    }
    let oriented = b.oriented();
    *oriented.last().unwrap() == leaf && b.direction_sign != 0
}

/// Assigns labels to terminal branches.
///
/// Candidates are terminal branches with a defined relevance and slope that
/// age outward toward their leaf. Progressive candidates (r < 0 and slope
/// below `−flat_slope`) are ranked by slope, then r, then id: the first is
/// fast progression, the second late progression. The flattest remaining
/// candidate with |slope| < `flat_slope` is healthy. Every other terminal
/// branch is unlabeled.
pub fn label_trajectories(
    branches: &[Branch],
    degrees: &[usize],
    branch_visits: &[usize],
    params: &LabelParams,
) -> (BTreeMap<usize, TrajectoryLabel>, Vec<String>) {
    let mut labels: BTreeMap<usize, TrajectoryLabel> = BTreeMap::new();
    let mut warnings = Vec::new();
    let terminal: Vec<&Branch> = branches.iter().filter(|b| b.kind == BranchKind::Terminal).collect();
    if terminal.is_empty() {
        warnings.push("tree has no terminal branch; nothing labeled".to_string());
        return (labels, warnings);
    }
    for b in &terminal {
        labels.insert(b.id, TrajectoryLabel::Unlabeled);
    }
    let candidates: Vec<(&Branch, f64, f64)> = terminal
        .iter()
        .filter(|b| branch_visits[b.id] >= params.min_branch_visits && points_outward(b, degrees))
        .filter_map(|b| Some((*b, b.ckd_relevance_r?, b.egfr_slope?)))
        .collect();

    let mut progressive: Vec<&(&Branch, f64, f64)> =
        candidates.iter().filter(|(_, r, s)| *r < 0.0 && *s < -params.flat_slope).collect();
    progressive.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.1.total_cmp(&b.1)).then(a.0.id.cmp(&b.0.id)));
    if let Some(c) = progressive.first() {
        labels.insert(c.0.id, TrajectoryLabel::FastProgression);
    }
    if let Some(c) = progressive.get(1) {
        labels.insert(c.0.id, TrajectoryLabel::LateProgression);
    }
    let healthy = candidates
        .iter()
        .filter(|(b, _, s)| s.abs() < params.flat_slope && labels[&b.id] == TrajectoryLabel::Unlabeled)
        .min_by(|a, b| a.2.abs().total_cmp(&b.2.abs()).then(a.0.id.cmp(&b.0.id)));
    if let Some(c) = healthy {
        labels.insert(c.0.id, TrajectoryLabel::Healthy);
    }
    let assigned = labels.values().filter(|l| **l != TrajectoryLabel::Unlabeled).count();
    if assigned < 3 {
        let missing: Vec<&str> = TrajectoryLabel::NAMED
            .iter()
            .filter(|l| !labels.values().any(|v| v == *l))
            .map(|l| l.as_str())
            .collect();
        warnings.push(format!("only {assigned} trajectory label(s) assigned; missing {}", missing.join(", ")));
    }
    (labels, warnings)
}
