use serde::{Deserialize, Serialize};

use super::{visit_indices, EmbeddingError, VisitRef};
use crate::cdm::{Cohort, DAYS_PER_YEAR};

/// Visits joined when their ages differ by less than `window_days`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSimilarityGraph {
    pub nodes: Vec<VisitRef>,
    pub ages: Vec<f64>,
    /// Sorted `(i, j)` pairs with `i < j`.
    pub edges: Vec<(usize, usize)>,
    pub window_days: u32,
}

impl AgeSimilarityGraph {
    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|(i, j)| *i == node || *j == node).count()
    }
}

pub fn build_age_similarity_graph(cohort: &Cohort, window_days: u32) -> Result<AgeSimilarityGraph, EmbeddingError> {
    if window_days == 0 {
        return Err(EmbeddingError::Precondition("window_days must be positive".into()));
    }
    let idx = visit_indices(cohort);
    if idx.is_empty() {
        return Err(EmbeddingError::Precondition("cohort has no visits with numeric observations".into()));
    }
    let encounters = cohort.encounters();
    let nodes: Vec<VisitRef> = idx.iter().map(|&i| VisitRef::of(&encounters[i])).collect();
    let ages: Vec<f64> = idx.iter().map(|&i| encounters[i].age()).collect();
    let window = window_days as f64;

    let mut by_age: Vec<usize> = (0..ages.len()).collect();
    by_age.sort_by(|&a, &b| ages[a].total_cmp(&ages[b]).then(a.cmp(&b)));
    let mut edges = Vec::new();
    for (k, &i) in by_age.iter().enumerate() {
        for &j in &by_age[k + 1..] {
            if (ages[j] - ages[i]) * DAYS_PER_YEAR >= window {
                break;
            }
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    Ok(AgeSimilarityGraph { nodes, ages, edges, window_days })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdm::{simulate_archetype_cohort, ArchetypeMix, Cohort, Encounter, FeatureCatalog, Patient, Sex, Value};
    use chrono::{Duration, NaiveDate};
    use std::collections::BTreeMap;

    fn cohort_with_ages(day_offsets: &[i64]) -> Cohort {
        let birth = NaiveDate::from_ymd_opt(1950, 1, 1).unwrap();
        let patients = vec![Patient { patient_id: "A".into(), sex: Sex::Male, race: "white".into(), birth_date: birth }];
        let encounters = day_offsets
            .iter()
            .enumerate()
            .map(|(k, d)| Encounter {
                encounter_id: format!("E{k}"),
                patient_id: "A".into(),
                date: birth + Duration::days(*d),
                values: BTreeMap::from([("hgb".to_string(), Value::Number(14.0))]),
            })
            .collect();
        Cohort::new(FeatureCatalog::clinic_default(), patients, encounters).unwrap()
    }

    #[test]
    fn threshold_examples() {
        // 50.00 vs 50.05 years is about 18.3 days apart
        let base = (50.0 * DAYS_PER_YEAR) as i64;
        let g = build_age_similarity_graph(&cohort_with_ages(&[base, base + 18]), 30).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        // 50.00 vs 50.10 years is about 36.5 days apart
        let g = build_age_similarity_graph(&cohort_with_ages(&[base, base + 37]), 30).unwrap();
        assert!(g.edges.is_empty());
        // strict inequality at exactly 30 days
        let g = build_age_similarity_graph(&cohort_with_ages(&[base, base + 30]), 30).unwrap();
        assert!(g.edges.is_empty());
        let g = build_age_similarity_graph(&cohort_with_ages(&[base]), 30).unwrap();
        assert_eq!((g.nodes.len(), g.edges.len()), (1, 0));
    }

    #[test]
    fn zero_window_rejected() {
        assert!(build_age_similarity_graph(&cohort_with_ages(&[100]), 0).is_err());
    }

    #[test]
    fn matches_brute_force_double_loop() {
        let sim = simulate_archetype_cohort(40, &ArchetypeMix::even(), 21).unwrap();
        assert!(sim.cohort.encounters().len() <= 1000);
        for window in [10u32, 30, 200] {
            let g = build_age_similarity_graph(&sim.cohort, window).unwrap();
            let n = g.ages.len();
            let mut brute = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && (g.ages[i] - g.ages[j]).abs() * DAYS_PER_YEAR < window as f64 && i < j {
                        brute.push((i, j));
                    }
                }
            }
            assert_eq!(g.edges, brute);
            let sym: usize = (0..n).map(|i| g.degree(i)).sum();
            assert_eq!(sym, 2 * g.edges.len());
        }
    }
}
