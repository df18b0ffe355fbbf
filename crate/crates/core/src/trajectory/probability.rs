use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::branches::{Branch, BranchKind};
use super::label::TrajectoryLabel;
use super::tree::PrincipalTree;

/// Terminal branch owning each landmark, or `None` for forks, landmarks on
/// internal branches and isolated landmarks. A leaf or degree-2 landmark lies
/// on exactly one branch; a fork lies on several.
pub fn landmark_owners(m: usize, branches: &[Branch]) -> Vec<Option<usize>> {
    let mut count = vec![0usize; m];
    let mut owner: Vec<Option<usize>> = vec![None; m];
    for b in branches {
        for &k in &b.landmarks {
            count[k] += 1;
            if owner[k].is_none() || b.id < owner[k].unwrap() {
                owner[k] = Some(b.id);
            }
        }
    }
    (0..m)
        .map(|k| {
            let id = owner[k]?;
            (count[k] == 1 && branches.iter().find(|b| b.id == id)?.kind == BranchKind::Terminal).then_some(id)
        })
        .collect()
}

/// Terminal branch of the landmark nearest to `p`, or `None` (undetermined).
pub fn attribute_visit(p: &[f64; 2], tree: &PrincipalTree, branches: &[Branch]) -> Option<usize> {
    landmark_owners(tree.len(), branches)[tree.nearest_landmark(p)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryProbability {
    pub patient_id: String,
    /// Distinct visit ages, ascending.
    pub age_grid: Vec<f64>,
    /// Number of visits at or before each grid age.
    pub denominators: Vec<usize>,
    /// One step function per named trajectory, aligned with `age_grid`.
    pub probabilities: BTreeMap<TrajectoryLabel, Vec<f64>>,
    pub undetermined: Vec<f64>,
}

impl TrajectoryProbability {
    /// Value of the step function at an arbitrary age (0 before the first visit).
    pub fn at(&self, label: TrajectoryLabel, age: f64) -> f64 {
        let series = match label {
            TrajectoryLabel::Unlabeled => &self.undetermined,
            l => &self.probabilities[&l],
        };
        match self.age_grid.partition_point(|a| *a <= age) {
            0 => 0.0,
            i => series[i - 1],
        }
    }
}

/// Cumulative visit shares per trajectory. `labels[i]` is the trajectory of
/// visit `i`; `None` and `Unlabeled` both count as undetermined.
pub fn probability_from_attributions(
    patient_id: &str,
    ages: &[f64],
    labels: &[Option<TrajectoryLabel>],
) -> TrajectoryProbability {
    let mut order: Vec<usize> = (0..ages.len()).collect();
    order.sort_by(|&a, &b| ages[a].total_cmp(&ages[b]).then(a.cmp(&b)));
    let mut counts: BTreeMap<TrajectoryLabel, usize> = TrajectoryLabel::NAMED.iter().map(|l| (*l, 0)).collect();
    let mut undetermined_count = 0usize;
    let mut total = 0usize;
    let mut out = TrajectoryProbability {
        patient_id: patient_id.to_string(),
        age_grid: Vec::new(),
        denominators: Vec::new(),
        probabilities: TrajectoryLabel::NAMED.iter().map(|l| (*l, Vec::new())).collect(),
        undetermined: Vec::new(),
    };
    let mut i = 0;
    while i < order.len() {
        let age = ages[order[i]];
        while i < order.len() && ages[order[i]] == age {
            match labels[order[i]] {
                Some(l) if l != TrajectoryLabel::Unlabeled => *counts.get_mut(&l).unwrap() += 1,
                _ => undetermined_count += 1,
            }
            total += 1;
            i += 1;
        }
        out.age_grid.push(age);
        out.denominators.push(total);
        let mut labeled_sum = 0.0;
        for (l, c) in &counts {
            let p = *c as f64 / total as f64;
            labeled_sum += p;
            out.probabilities.get_mut(l).unwrap().push(p);
        }
        // complement keeps the sum at exactly 1 up to one rounding
        let u = undetermined_count as f64 / total as f64;
        debug_assert!((labeled_sum + u - 1.0).abs() < 1e-12);
        out.undetermined.push(u);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TrajectoryLabel::*;

    #[test]
    fn seven_of_ten() {
        let ages: Vec<f64> = (0..10).map(|i| 40.0 + i as f64).collect();
        let labels: Vec<Option<TrajectoryLabel>> =
            (0..10).map(|i| if i < 7 { Some(FastProgression) } else { None }).collect();
        let p = probability_from_attributions("p", &ages, &labels);
        assert_eq!(p.probabilities[&FastProgression][9], 0.7);
        assert_eq!(p.undetermined[9], 0.3);
        assert_eq!(p.at(FastProgression, 49.5), 0.7);
        assert_eq!(p.at(FastProgression, 39.0), 0.0);
    }

    #[test]
    fn four_visit_hand_count() {
        let p = probability_from_attributions("p", &[50.0, 51.0, 52.0, 53.0], &[
            Some(Healthy),
            Some(Healthy),
            Some(LateProgression),
            None,
        ]);
        assert_eq!(p.probabilities[&Healthy][3], 0.5);
        assert_eq!(p.probabilities[&LateProgression][3], 0.25);
        assert_eq!(p.undetermined[3], 0.25);
        assert_eq!(p.denominators, vec![1, 2, 3, 4]);
        assert_eq!(p.probabilities[&LateProgression][1], 0.0);
    }

    #[test]
    fn all_undetermined() {
        let p = probability_from_attributions("p", &[1.0, 2.0], &[None, Some(Unlabeled)]);
        assert!(p.undetermined.iter().all(|u| *u == 1.0));
        assert!(p.probabilities.values().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn same_age_visits_share_a_grid_point() {
        let p = probability_from_attributions("p", &[2.0, 1.0, 2.0], &[Some(Healthy), None, None]);
        assert_eq!(p.age_grid, vec![1.0, 2.0]);
        assert_eq!(p.denominators, vec![1, 3]);
        assert_eq!(p.probabilities[&Healthy], vec![0.0, 1.0 / 3.0]);
    }

    #[test]
    fn owners_exclude_forks_and_internal() {
        use crate::trajectory::branches::segment_branches;
        // 0-1-2 fork at 2 with leaves 3 and 4 via 2-3, 2-5-4
        let branches = segment_branches(6, &[(0, 1), (1, 2), (2, 3), (2, 5), (4, 5)]);
        let owners = landmark_owners(6, &branches);
        assert_eq!(owners[2], None);
        assert!(owners[0].is_some() && owners[0] == owners[1]);
        assert!(owners[4].is_some() && owners[4] == owners[5]);
        let h = segment_branches(8, &[(0, 2), (1, 2), (2, 3), (3, 5), (5, 6), (5, 7), (4, 7)]);
        assert_eq!(landmark_owners(8, &h)[3], None);
    }

    fn label_strategy() -> impl Strategy<Value = Option<TrajectoryLabel>> {
        prop_oneof![Just(None), Just(Some(Healthy)), Just(Some(LateProgression)), Just(Some(FastProgression)), Just(Some(Unlabeled))]
    }

    proptest! {
        #[test]
        fn masses_sum_to_one(visits in proptest::collection::vec((0u8..40, label_strategy()), 1..60)) {
            let ages: Vec<f64> = visits.iter().map(|v| 30.0 + v.0 as f64 * 0.5).collect();
            let labels: Vec<_> = visits.iter().map(|v| v.1).collect();
            let p = probability_from_attributions("p", &ages, &labels);
            prop_assert!(p.age_grid.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(p.denominators.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*p.denominators.last().unwrap(), ages.len());
            for g in 0..p.age_grid.len() {
                let s: f64 = p.probabilities.values().map(|v| v[g]).sum::<f64>() + p.undetermined[g];
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }
}
