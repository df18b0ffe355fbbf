use std::collections::BTreeMap;

use chrono::Duration;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, Encounter, Patient, Sex, Value};
use super::CdmError;

pub const DEFAULT_MAX_SHIFT_DAYS: i64 = 183;
pub const DEFAULT_SWAP_FRACTION: f64 = 0.10;
/// Age window (years) for swap partners.
pub const SWAP_AGE_WINDOW: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub target_swaps: usize,
    pub swapped: usize,
    /// Encounters drawn for swapping that had no eligible partner.
    pub skipped_no_partner: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    /// (source patient id, issued patient id) in patient order.
    pub patient_map: Vec<(String, String)>,
    /// Per output encounter (same order as the source cohort's encounters).
    pub swapped: Vec<bool>,
    pub report: SynthReport,
}

/// De-identifying transform: per-patient date shift plus value-map swapping
/// between similar encounters of different patients.
///
/// The shift is drawn once per patient and applied to the birth date as well,
/// so within-patient intervals and all ages are preserved. Swap partners have
/// the same sex, a different patient, age within [`SWAP_AGE_WINDOW`] years;
/// the nearest age wins, ties to the lower encounter index. Drawn encounters
/// without a partner are counted and the next draw is tried.
pub fn generate_synthetic(
    source: &Cohort,
    max_shift_days: i64,
    swap_fraction: f64,
    seed: u64,
) -> Result<SyntheticCohort, CdmError> {
    if !(0.0..=1.0).contains(&swap_fraction) {
        return Err(CdmError::Synth(format!("swap_fraction {swap_fraction} outside [0, 1]")));
    }
    if max_shift_days < 0 {
        return Err(CdmError::Synth(format!("max_shift_days {max_shift_days} is negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patients = source.patients();
    let encounters = source.encounters();

    let shifts: Vec<i64> = patients
        .iter()
        .map(|_| rng.random_range(-max_shift_days..=max_shift_days))
        .collect();
    let mut numbering: Vec<usize> = (0..patients.len()).collect();
    numbering.shuffle(&mut rng);
    let width = patients.len().to_string().len().max(6);
    let new_ids: Vec<String> = numbering.iter().map(|k| format!("S{:0width$}", k + 1)).collect();

    // swap selection over the source encounters
    let n = encounters.len();
    let target = (swap_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let patient_pos: Vec<usize> = (0..patients.len())
        .flat_map(|p| std::iter::repeat_n(p, source.encounter_range(p).len()))
        .collect();
    let mut by_sex: BTreeMap<Sex, Vec<(f64, usize)>> = BTreeMap::new();
    for (i, e) in encounters.iter().enumerate() {
        by_sex.entry(patients[patient_pos[i]].sex).or_default().push((e.age(), i));
    }
    for list in by_sex.values_mut() {
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }

    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut swapped_count = 0;
    let mut skipped = 0;
    for &i in &order {
        if swapped_count == target {
            break;
        }
        let sex = patients[patient_pos[i]].sex;
        let list = &by_sex[&sex];
        match nearest_partner(list, encounters[i].age(), |j| patient_pos[j] != patient_pos[i]) {
            Some(j) => {
                partner[i] = Some(j);
                swapped_count += 1;
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} encounters had no swap partner within {SWAP_AGE_WINDOW} years");
    }

    let new_patients: Vec<Patient> = patients
        .iter()
        .zip(&shifts)
        .zip(&new_ids)
        .map(|((p, &s), id)| Patient {
            patient_id: id.clone(),
            sex: p.sex,
            race: p.race.clone(),
            birth_date: p.birth_date + Duration::days(s),
        })
        .collect();
    let mut new_encounters = Vec::with_capacity(n);
    for (pi, p) in new_patients.iter().enumerate() {
        for (k, i) in source.encounter_range(pi).enumerate() {
            let e = &encounters[i];
            let donor = partner[i].map(|j| &encounters[j]).unwrap_or(e);
            let values: BTreeMap<String, Value> = donor
                .values
                .iter()
                .filter(|(code, _)| !source.is_rederived(donor, code))
                .map(|(c, v)| (c.clone(), v.clone()))
                .collect();
            new_encounters.push(Encounter {
                encounter_id: format!("{}-{:04}", p.patient_id, k + 1),
                patient_id: p.patient_id.clone(),
                date: e.date + Duration::days(shifts[pi]),
                values,
            });
        }
    }
    let cohort = Cohort::new(source.catalog().clone(), new_patients, new_encounters)?;
    Ok(SyntheticCohort {
        cohort,
        patient_map: patients.iter().map(|p| p.patient_id.clone()).zip(new_ids).collect(),
        swapped: partner.iter().map(Option::is_some).collect(),
        report: SynthReport { target_swaps: target, swapped: swapped_count, skipped_no_partner: skipped },
    })
}

fn nearest_partner(list: &[(f64, usize)], age: f64, eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let pos = list.partition_point(|(a, _)| *a < age);
    let mut best: Option<(f64, usize)> = None;
    let up = list[pos..].iter().map(|&(a, j)| (a - age, j));
    let down = list[..pos].iter().rev().map(|&(a, j)| (age - a, j));
    for side in [Box::new(up) as Box<dyn Iterator<Item = (f64, usize)>>, Box::new(down)] {
        for (gap, j) in side {
            if gap > SWAP_AGE_WINDOW || best.is_some_and(|(g, _)| gap > g) {
                break;
            }
            if !eligible(j) {
                continue;
            }
            let better = match best {
                None => true,
                Some((g, b)) => gap < g || (gap == g && j < b),
            };
            if better {
                best = Some((gap, j));
            }
        }
    }
    best.map(|(_, j)| j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdm::{simulate_archetype_cohort, ArchetypeMix};

    fn fixture() -> Cohort {
        simulate_archetype_cohort(60, &ArchetypeMix::even(), 11).unwrap().cohort
    }

    #[test]
    fn identity_without_shift_or_swap() {
        let src = fixture();
        let out = generate_synthetic(&src, 0, 0.0, 1).unwrap();
        assert_eq!(out.report.swapped, 0);
        for (a, b) in src.encounters().iter().zip(out.cohort.encounters()) {
            assert_eq!(a.values, b.values);
            assert_eq!(a.date, b.date);
        }
    }

    #[test]
    fn shifts_bounded_order_preserved_and_count_exact() {
        let src = fixture();
        let out = generate_synthetic(&src, 183, 0.10, 5).unwrap();
        let n = src.encounters().len();
        assert_eq!(out.cohort.encounters().len(), n);
        assert_eq!(out.report.swapped, (0.10 * n as f64).round() as usize);
        assert_eq!(out.swapped.iter().filter(|s| **s).count(), out.report.swapped);
        for (a, b) in src.encounters().iter().zip(out.cohort.encounters()) {
            assert!((b.date - a.date).num_days().abs() <= 183);
            assert_eq!(a.age(), b.age());
        }
        for (pi, _) in src.patients().iter().enumerate() {
            let ra = src.encounter_range(pi);
            let rb = out.cohort.encounter_range(pi);
            assert_eq!(ra.len(), rb.len());
            let dates: Vec<_> = out.cohort.encounters()[rb].iter().map(|e| e.date).collect();
            assert!(dates.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let src = fixture();
        let a = generate_synthetic(&src, 183, 0.1, 9).unwrap();
        let b = generate_synthetic(&src, 183, 0.1, 9).unwrap();
        assert_eq!(a.cohort, b.cohort);
        assert_eq!(a.patient_map, b.patient_map);
    }

    #[test]
    fn swapped_values_come_from_similar_other_patient() {
        let src = fixture();
        let out = generate_synthetic(&src, 0, 0.3, 2).unwrap();
        let mut changed = 0;
        for (i, (a, b)) in src.encounters().iter().zip(out.cohort.encounters()).enumerate() {
            if !out.swapped[i] {
                assert_eq!(a.values, b.values);
            } else if a.values != b.values {
                changed += 1;
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn invalid_parameters() {
        let src = fixture();
        assert!(generate_synthetic(&src, 10, 1.5, 0).is_err());
        assert!(generate_synthetic(&src, -1, 0.1, 0).is_err());
    }

    #[test]
    fn lone_patient_has_no_partners() {
        let src = simulate_archetype_cohort(3, &ArchetypeMix::even(), 1).unwrap().cohort;
        let (cat, pats, encs) = src.into_parts();
        let pid = pats[0].patient_id.clone();
        let encs: Vec<_> = encs.into_iter().filter(|e| e.patient_id == pid).collect();
        let one = Cohort::new(cat, vec![pats[0].clone()], encs).unwrap();
        let out = generate_synthetic(&one, 10, 0.5, 0).unwrap();
        assert_eq!(out.report.swapped, 0);
        assert_eq!(out.report.skipped_no_partner, one.encounters().len());
    }

    #[test]
    fn swap_count_arithmetic_at_published_scale() {
        assert_eq!((DEFAULT_SWAP_FRACTION * 508_731.0f64).round() as usize, 50_873);
    }
}
