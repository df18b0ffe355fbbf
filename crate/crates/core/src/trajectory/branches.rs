//! Landmark annotation, branch segmentation, orientation and CKD relevance.

use serde::{Deserialize, Serialize};

use super::mst::{adjacency, degrees};
use super::TrajectoryError;
use crate::embedding::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkStats {
    pub visit_count: usize,
    pub median_age: Option<f64>,
    /// Over assigned visits that carry an eGFR value.
    pub median_egfr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkAnnotation {
    pub landmarks: Vec<LandmarkStats>,
}

impl LandmarkAnnotation {
    pub fn empty_landmarks(&self) -> Vec<usize> {
        (0..self.landmarks.len()).filter(|&k| self.landmarks[k].visit_count == 0).collect()
    }
}

fn median_of(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(median(&v))
}

/// Per-landmark medians over the visits assigned to it. `ages` and `egfr` are
/// aligned with `assignments`.
pub fn annotate_landmarks(m: usize, assignments: &[usize], ages: &[f64], egfr: &[Option<f64>]) -> LandmarkAnnotation {
    let mut age_lists = vec![Vec::new(); m];
    let mut egfr_lists = vec![Vec::new(); m];
    for (i, &k) in assignments.iter().enumerate() {
        age_lists[k].push(ages[i]);
        if let Some(v) = egfr[i] {
            egfr_lists[k].push(v);
        }
    }
    let landmarks = age_lists
        .into_iter()
        .zip(egfr_lists)
        .map(|(a, e)| LandmarkStats { visit_count: a.len(), median_age: median_of(a), median_egfr: median_of(e) })
        .collect();
    LandmarkAnnotation { landmarks }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Terminal,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    /// Chain from the lower-index endpoint to the higher-index endpoint.
    pub landmarks: Vec<usize>,
    pub kind: BranchKind,
    /// Sign of the age change along `landmarks`; 0 on a tie or when fewer than
    /// two landmarks are annotated.
    pub direction_sign: i8,
    /// Whether the age-oriented order is `landmarks` as stored (true) or reversed.
    pub forward: bool,
    pub ckd_relevance_r: Option<f64>,
    /// eGFR change per year of landmark median age (least squares).
    pub egfr_slope: Option<f64>,
    /// For a terminal branch, its non-leaf endpoint when that is a fork.
    pub fork_landmark: Option<usize>,
}

impl Branch {
    pub fn oriented(&self) -> Vec<usize> {
        if self.forward {
            self.landmarks.clone()
        } else {
            self.landmarks.iter().rev().copied().collect()
        }
    }

    pub fn edge_count(&self) -> usize {
        self.landmarks.len() - 1
    }

    /// Landmarks other than the two endpoints.
    pub fn interior(&self) -> &[usize] {
        &self.landmarks[1..self.landmarks.len() - 1]
    }

    /// The leaf endpoint of a terminal branch (the higher index when both are leaves).
    pub fn leaf(&self, degrees: &[usize]) -> Option<usize> {
        let (a, b) = (self.landmarks[0], *self.landmarks.last().unwrap());
        if degrees[b] == 1 {
            Some(b)
        } else if degrees[a] == 1 {
            Some(a)
        } else {
            None
        }
    }
}

/// Splits the tree into maximal chains whose interior nodes have degree 2.
/// Branch ids follow the lexicographic order of the stored landmark chains.
/// Orientation, relevance and slope are left unset.
pub fn segment_branches(m: usize, edges: &[(usize, usize)]) -> Vec<Branch> {
    let deg = degrees(m, edges);
    let adj = adjacency(m, edges);
    let is_endpoint = |k: usize| deg[k] != 2;
    let mut chains: Vec<Vec<usize>> = Vec::new();
    for start in 0..m {
        if !is_endpoint(start) {
            continue;
        }
        for &first in &adj[start] {
            let mut chain = vec![start, first];
            let (mut prev, mut cur) = (start, first);
            while !is_endpoint(cur) {
                let next = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
                chain.push(next);
                prev = cur;
                cur = next;
            }
            // each chain is found from both ends; keep the walk from the lower end
            if start < cur || (start == cur && chain[1] <= chain[chain.len() - 2]) {
                chains.push(chain);
            }
        }
    }
    chains.sort();
    chains
        .into_iter()
        .enumerate()
        .map(|(id, landmarks)| {
            let (a, b) = (landmarks[0], *landmarks.last().unwrap());
            let terminal = deg[a] == 1 || deg[b] == 1;
            let fork_landmark = if !terminal {
                None
            } else if deg[a] >= 3 {
                Some(a)
            } else if deg[b] >= 3 {
                Some(b)
            } else {
                None
            };
            Branch {
                id,
                landmarks,
                kind: if terminal { BranchKind::Terminal } else { BranchKind::Internal },
                direction_sign: 0,
                forward: true,
                ckd_relevance_r: None,
                egfr_slope: None,
                fork_landmark,
            }
        })
        .collect()
}

/// Sign of Σ (age_{i+1} − age_i) over the annotated landmarks of the chain,
/// i.e. of last age minus first age.
pub fn orient_branch(landmarks: &[usize], annotations: &LandmarkAnnotation) -> Result<i8, TrajectoryError> {
    let ages: Vec<f64> = landmarks.iter().filter_map(|&k| annotations.landmarks[k].median_age).collect();
    if ages.len() < 2 {
        return Err(TrajectoryError::Precondition(format!(
            "branch has {} annotated landmark(s); orientation needs 2",
            ages.len()
        )));
    }
    let sum: f64 = ages.windows(2).map(|w| w[1] - w[0]).sum();
    Ok(if sum > 0.0 {
        1
    } else if sum < 0.0 {
        -1
    } else {
        0
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson r between rank (1, 2, ...) along the oriented chain and landmark
/// median eGFR. Landmarks without eGFR are skipped. `None` when fewer than
/// three landmarks carry eGFR or the eGFR values are all equal.
pub fn score_branch_ckd_relevance(oriented: &[usize], annotations: &LandmarkAnnotation) -> Option<f64> {
    let egfr: Vec<f64> = oriented.iter().filter_map(|&k| annotations.landmarks[k].median_egfr).collect();
    if egfr.len() < 3 {
        return None;
    }
    let ranks: Vec<f64> = (1..=egfr.len()).map(|i| i as f64).collect();
    pearson(&ranks, &egfr)
}

/// Least-squares slope of landmark median eGFR against landmark median age.
pub fn egfr_slope(landmarks: &[usize], annotations: &LandmarkAnnotation) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = landmarks
        .iter()
        .filter_map(|&k| {
            let s = &annotations.landmarks[k];
            Some((s.median_age?, s.median_egfr?))
        })
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let me = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(pairs.iter().map(|p| (p.0 - ma) * (p.1 - me)).sum::<f64>() / sxx)
}

/// Orients every branch, scores relevance and slope, and returns warnings for
/// ties and unorientable branches. Ties go toward the higher-index endpoint,
/// which is the stored order.
pub fn describe_branches(branches: &mut [Branch], annotations: &LandmarkAnnotation) -> Vec<String> {
    let mut warnings = Vec::new();
    for b in branches.iter_mut() {
        match orient_branch(&b.landmarks, annotations) {
            Ok(sign) => {
                b.direction_sign = sign;
                if sign == 0 {
                    warnings.push(format!(
                        "branch {}: endpoint ages tie; oriented toward landmark {}",
                        b.id,
                        b.landmarks.last().unwrap()
                    ));
                }
            }
            Err(e) => {
                b.direction_sign = 0;
                warnings.push(format!("branch {}: {e}; oriented toward landmark {}", b.id, b.landmarks.last().unwrap()));
            }
        }
        b.forward = b.direction_sign >= 0;
        b.ckd_relevance_r = score_branch_ckd_relevance(&b.oriented(), annotations);
        b.egfr_slope = egfr_slope(&b.landmarks, annotations);
    }
    warnings
}
