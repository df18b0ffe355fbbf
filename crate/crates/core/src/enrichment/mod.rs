//! Predictors and markers of each labeled trajectory: two-sample tests on
//! visits split at the trajectory's fork landmark, with Benjamini–Hochberg
//! adjustment per (trajectory, phase) family.

mod special;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{Cohort, Encounter, FeatureKind, Value};
use crate::trajectory::{adjacency, TrajectoryLabel, TrajectoryModel};

pub use special::{
    chi_square_sf, ln_beta, ln_gamma, reg_inc_beta, reg_lower_gamma, reg_upper_gamma, student_t_two_sided,
};
pub use stats::{bh_fdr, chi_square_test, welch_t_test, ChiSquareResult, WelchResult};

pub const DEFAULT_ALPHA_FDR: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EnrichmentError {
    #[error("invalid sample: {0}")]
    Sample(String),
    #[error("cannot split {trajectory}: {reason}")]
    Split { trajectory: TrajectoryLabel, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreFork,
    PostFork,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::PreFork, Phase::PostFork];

    pub fn role(self) -> Role {
        match self {
            Phase::PreFork => Role::Predictor,
            Phase::PostFork => Role::Marker,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreFork => "pre_fork",
            Phase::PostFork => "post_fork",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "pre_fork" | "predictor" => Ok(Phase::PreFork),
            "post_fork" | "marker" => Ok(Phase::PostFork),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Predictor,
    Marker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectDirection {
    HigherInTrajectory,
    LowerInTrajectory,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every visit is one observation.
    #[default]
    Visit,
    /// One observation per patient: the mean of numeric values, the first
    /// observed level of categorical ones.
    PatientMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkSplit {
    pub trajectory: TrajectoryLabel,
    pub fork_landmark: usize,
    pub phase: Phase,
    /// The other named trajectories on the far side of the fork.
    pub complement: Vec<TrajectoryLabel>,
    pub patients_a: Vec<String>,
    pub patients_b: Vec<String>,
    /// Model visit indices.
    pub group_a: Vec<usize>,
    pub group_b: Vec<usize>,
}

/// Named trajectories in the rest of the graph once the fork of `label` is
/// removed, i.e. outside the component that holds `label`'s own branch.
pub fn comparison_trajectories(model: &TrajectoryModel, label: TrajectoryLabel) -> Result<(usize, Vec<TrajectoryLabel>), EnrichmentError> {
    let split_err = |reason: &str| EnrichmentError::Split { trajectory: label, reason: reason.to_string() };
    let branch = model.branch_of(label).ok_or_else(|| split_err("trajectory is not in the model"))?;
    let fork = branch.fork_landmark.ok_or_else(|| split_err("trajectory has no fork landmark"))?;
    let m = model.tree.len();
    let adj = adjacency(m, &model.tree.edges);
    let mut component = vec![usize::MAX; m];
    for (c, &start) in adj[fork].iter().enumerate() {
        let mut stack = vec![start];
        component[start] = c;
        while let Some(k) = stack.pop() {
            for &nb in &adj[k] {
                if nb != fork && component[nb] == usize::MAX {
                    component[nb] = c;
                    stack.push(nb);
                }
            }
        }
    }
    let component_of = |b: &crate::trajectory::Branch| b.landmarks.iter().find(|&&k| k != fork).map(|&k| component[k]);
    let own = component_of(branch);
    let mut complement = Vec::new();
    for (&id, &l) in &model.labels {
        if l == TrajectoryLabel::Unlabeled || l == label {
            continue;
        }
        let c = model.branch(id).and_then(component_of);
        if c.is_some() && c != own {
            complement.push(l);
        }
    }
    complement.sort();
    Ok((fork, complement))
}

/// Splits visits for one trajectory and phase. Each patient's membership is
/// the strict-majority label among their visits attributed to the trajectory
/// or its complement; the fork time is their first such visit.
pub fn build_fork_split(model: &TrajectoryModel, trajectory: TrajectoryLabel, phase: Phase) -> Result<ForkSplit, EnrichmentError> {
    let (fork, complement) = comparison_trajectories(model, trajectory)?;
    let mut in_scope: BTreeSet<TrajectoryLabel> = complement.iter().copied().collect();
    in_scope.insert(trajectory);

    let mut per_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..model.visits.len() {
        per_patient.entry(model.visits[i].patient_id.as_str()).or_default().push(i);
    }
    let mut split = ForkSplit {
        trajectory,
        fork_landmark: fork,
        phase,
        complement,
        patients_a: Vec::new(),
        patients_b: Vec::new(),
        group_a: Vec::new(),
        group_b: Vec::new(),
    };
    for (pid, mut idx) in per_patient {
        idx.sort_by(|&a, &b| model.ages[a].total_cmp(&model.ages[b]).then(a.cmp(&b)));
        let scoped: Vec<(usize, TrajectoryLabel)> = idx
            .iter()
            .filter_map(|&i| model.visit_label(i).filter(|l| in_scope.contains(l)).map(|l| (i, l)))
            .collect();
        let Some(member) = crate::trajectory::membership_of(scoped.iter().map(|(_, l)| *l)) else { continue };
        let first_age = model.ages[scoped[0].0];
        let chosen: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| match phase {
                Phase::PreFork => model.ages[i] < first_age,
                Phase::PostFork => model.ages[i] >= first_age,
            })
            .collect();
        if chosen.is_empty() {
            continue;
        }
        if member == trajectory {
            split.patients_a.push(pid.to_string());
            split.group_a.extend(chosen);
        } else {
            split.patients_b.push(pid.to_string());
            split.group_b.extend(chosen);
        }
    }
    if split.patients_a.is_empty() {
        return Err(EnrichmentError::Split { trajectory, reason: format!("no member patients in the {} phase", phase.as_str()) });
    }
    Ok(split)
}

/// Observations of one feature in the two groups.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSamples {
    Numeric { a: Vec<f64>, b: Vec<f64> },
    Categorical { a: Vec<String>, b: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub feature_code: String,
    pub role: Role,
    pub trajectory: TrajectoryLabel,
    pub phase: Phase,
    pub test: String,
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub q_value: f64,
    pub significant: bool,
    pub n_a: usize,
    pub n_b: usize,
    pub effect_direction: EffectDirection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTest {
    pub trajectory: TrajectoryLabel,
    pub phase: Phase,
    /// `None` when the whole family was skipped.
    pub feature_code: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentReport {
    pub alpha_fdr: f64,
    pub aggregation: Aggregation,
    pub results: Vec<TestResult>,
    pub skipped: Vec<SkippedTest>,
}

impl EnrichmentReport {
    pub fn filter(&self, trajectory: Option<TrajectoryLabel>, phase: Option<Phase>) -> Vec<&TestResult> {
        self.results
            .iter()
            .filter(|r| trajectory.is_none_or(|t| r.trajectory == t) && phase.is_none_or(|p| r.phase == p))
            .collect()
    }

    pub fn find(&self, trajectory: TrajectoryLabel, phase: Phase, feature_code: &str) -> Option<&TestResult> {
        self.results.iter().find(|r| r.trajectory == trajectory && r.phase == phase && r.feature_code == feature_code)
    }

    pub fn significant_count(&self) -> usize {
        self.results.iter().filter(|r| r.significant).count()
    }
}

struct Scored {
    feature_code: String,
    test: &'static str,
    statistic: f64,
    df: f64,
    p: f64,
    n_a: usize,
    n_b: usize,
    direction: EffectDirection,
    means: Option<(f64, f64)>,
}

fn score_feature(code: &str, samples: &FeatureSamples) -> Result<Scored, String> {
    match samples {
        FeatureSamples::Numeric { a, b } => {
            if a.len() < 2 || b.len() < 2 {
                return Err(format!("insufficient samples ({} vs {})", a.len(), b.len()));
            }
            let r = welch_t_test(a, b).map_err(|e| e.to_string())?;
            if !r.t.is_finite() || (r.t == 0.0 && r.p == 1.0 && a.iter().chain(b).all(|v| *v == a[0])) {
                return Err("zero variance in both groups".into());
            }
            Ok(Scored {
                feature_code: code.to_string(),
                test: "welch_t",
                statistic: r.t,
                df: r.df,
                p: r.p,
                n_a: a.len(),
                n_b: b.len(),
                direction: if r.mean_a >= r.mean_b {
                    EffectDirection::HigherInTrajectory
                } else {
                    EffectDirection::LowerInTrajectory
                },
                means: Some((r.mean_a, r.mean_b)),
            })
        }
        FeatureSamples::Categorical { a, b } => {
            if a.is_empty() || b.is_empty() {
                return Err(format!("insufficient samples ({} vs {})", a.len(), b.len()));
            }
            let levels: BTreeSet<&str> = a.iter().chain(b).map(String::as_str).collect();
            if levels.len() < 2 {
                return Err("a single level observed".into());
            }
            let table: Vec<Vec<u64>> = levels
                .iter()
                .map(|lv| {
                    vec![
                        a.iter().filter(|x| x.as_str() == *lv).count() as u64,
                        b.iter().filter(|x| x.as_str() == *lv).count() as u64,
                    ]
                })
                .collect();
            let r = chi_square_test(&table).map_err(|e| e.to_string())?;
            Ok(Scored {
                feature_code: code.to_string(),
                test: "chi_square",
                statistic: r.statistic,
                df: r.df,
                p: r.p,
                n_a: a.len(),
                n_b: b.len(),
                direction: EffectDirection::Categorical,
                means: None,
            })
        }
    }
}

/// Tests one family of features and applies BH within it.
pub fn test_family(
    trajectory: TrajectoryLabel,
    phase: Phase,
    features: &[(String, FeatureSamples)],
    alpha_fdr: f64,
) -> (Vec<TestResult>, Vec<SkippedTest>) {
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for (code, samples) in features {
        match score_feature(code, samples) {
            Ok(s) => scored.push(s),
            Err(reason) => skipped.push(SkippedTest { trajectory, phase, feature_code: Some(code.clone()), reason }),
        }
    }
    let p: Vec<f64> = scored.iter().map(|s| s.p).collect();
    let q = bh_fdr(&p).expect("p-values come from the tests and lie in [0, 1]");
    let results = scored
        .into_iter()
        .zip(q)
        .map(|(s, q)| TestResult {
            feature_code: s.feature_code,
            role: phase.role(),
            trajectory,
            phase,
            test: s.test.to_string(),
            statistic: s.statistic,
            df: s.df,
            p_value: s.p,
            q_value: q,
            significant: q < alpha_fdr,
            n_a: s.n_a,
            n_b: s.n_b,
            effect_direction: s.direction,
            mean_a: s.means.map(|m| m.0),
            mean_b: s.means.map(|m| m.1),
        })
        .collect();
    (results, skipped)
}

fn collect_samples(
    cohort: &Cohort,
    model: &TrajectoryModel,
    encounters: &[Option<&Encounter>],
    split: &ForkSplit,
    aggregation: Aggregation,
) -> Vec<(String, FeatureSamples)> {
    let gather_numeric = |group: &[usize], code: &str| -> Vec<f64> {
        let values = group.iter().filter_map(|&i| Some((i, encounters[i]?.number(code)?)));
        match aggregation {
            Aggregation::Visit => values.map(|(_, v)| v).collect(),
            Aggregation::PatientMean => {
                let mut per: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
                for (i, v) in values {
                    let e = per.entry(model.visits[i].patient_id.as_str()).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
                per.values().map(|(s, c)| s / *c as f64).collect()
            }
        }
    };
    let gather_categorical = |group: &[usize], code: &str| -> Vec<String> {
        let values = group.iter().filter_map(|&i| match cohort.value_of(encounters[i]?, code)? {
            Value::Category(s) => Some((i, s)),
            Value::Number(_) => None,
        });
        match aggregation {
            Aggregation::Visit => values.map(|(_, v)| v).collect(),
            Aggregation::PatientMean => {
                let mut per: BTreeMap<&str, String> = BTreeMap::new();
                for (i, v) in values {
                    per.entry(model.visits[i].patient_id.as_str()).or_insert(v);
                }
                per.into_values().collect()
            }
        }
    };
    cohort
        .catalog()
        .features()
        .iter()
        .map(|f| {
            let samples = match f.kind {
                FeatureKind::Numeric => FeatureSamples::Numeric {
                    a: gather_numeric(&split.group_a, &f.code),
                    b: gather_numeric(&split.group_b, &f.code),
                },
                FeatureKind::Categorical => FeatureSamples::Categorical {
                    a: gather_categorical(&split.group_a, &f.code),
                    b: gather_categorical(&split.group_b, &f.code),
                },
            };
            (f.code.clone(), samples)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrichOptions {
    pub alpha_fdr: f64,
    pub aggregation: Aggregation,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        Self { alpha_fdr: DEFAULT_ALPHA_FDR, aggregation: Aggregation::Visit }
    }
}

/// Runs every named trajectory × phase × catalog feature. Results are sorted
/// by q-value, then |statistic| (descending), then trajectory, phase, feature.
pub fn find_predictors_and_markers(model: &TrajectoryModel, cohort: &Cohort, options: &EnrichOptions) -> EnrichmentReport {
    let lookup: HashMap<(&str, &str), &Encounter> =
        cohort.encounters().iter().map(|e| ((e.patient_id.as_str(), e.encounter_id.as_str()), e)).collect();
    let encounters: Vec<Option<&Encounter>> = model
        .visits
        .iter()
        .map(|v| lookup.get(&(v.patient_id.as_str(), v.encounter_id.as_str())).copied())
        .collect();
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for trajectory in model.named_trajectories() {
        for phase in Phase::BOTH {
            match build_fork_split(model, trajectory, phase) {
                Ok(split) => {
                    if split.patients_b.is_empty() {
                        skipped.push(SkippedTest {
                            trajectory,
                            phase,
                            feature_code: None,
                            reason: "no comparison patients past the fork".into(),
                        });
                        continue;
                    }
                    let samples = collect_samples(cohort, model, &encounters, &split, options.aggregation);
                    let (r, s) = test_family(trajectory, phase, &samples, options.alpha_fdr);
                    results.extend(r);
                    skipped.extend(s);
                }
                Err(e) => skipped.push(SkippedTest { trajectory, phase, feature_code: None, reason: e.to_string() }),
            }
        }
    }
    results.sort_by(|a, b| {
        a.q_value
            .total_cmp(&b.q_value)
            .then(b.statistic.abs().total_cmp(&a.statistic.abs()))
            .then(a.trajectory.cmp(&b.trajectory))
            .then(a.phase.cmp(&b.phase))
            .then(a.feature_code.cmp(&b.feature_code))
    });
    EnrichmentReport { alpha_fdr: options.alpha_fdr, aggregation: options.aggregation, results, skipped }
}
