//! Demo cohort: the planted-archetype cohort plus two scripted case-study
//! patients with acute kidney injury episodes.
//!
//! `42747` (white male) dips below eGFR 60 at 57.6, has AKIs at 58.5 and
//! 59.3 and stays in stage G3 afterwards; hemoglobin runs low and falls
//! below range from 57. `58314` (black female) keeps near-normal kidney
//! function through six AKIs from 48.2 on, with an unstable diastolic
//! pressure.

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cdm::{
    draw_visit_values, simulate_archetype_cohort, Archetype, ArchetypeCohort, ArchetypeMix, CdmError, Cohort, Encounter,
    LabProfile, Noise, Patient, Sex, Value, DAYS_PER_YEAR,
};

pub const DEMO_PATIENTS: usize = 300;
pub const DEMO_SEED: u64 = 7;
pub const CASE_PROGRESSOR: &str = "42747";
pub const CASE_RESILIENT: &str = "58314";

struct Scripted {
    patient: Patient,
    archetype: Archetype,
    profile: LabProfile,
    /// (age, eGFR, hemoglobin override, diastolic override)
    visits: Vec<(f64, f64, Option<f64>, Option<f64>)>,
}

fn scripted() -> Vec<Scripted> {
    let mut progressor = Vec::new();
    for k in 0..24 {
        let age = 45.0 + 0.5 * k as f64;
        if age >= 57.0 {
            break;
        }
        progressor.push((age, 90.0 - 0.8 * (age - 45.0), None, None));
    }
    progressor.extend([
        (57.0, 80.0, Some(11.6), None),
        (57.6, 56.0, Some(11.4), None),
        (58.0, 74.0, Some(11.5), None),
        (58.5, 33.0, Some(10.9), None),
        (58.75, 71.0, Some(11.2), None),
        (59.3, 31.0, Some(10.6), None),
        (59.6, 48.0, Some(10.8), None),
        (60.2, 45.0, Some(10.5), None),
        (61.0, 41.0, Some(10.3), None),
        (61.8, 36.0, Some(10.1), None),
        (62.6, 31.0, Some(9.9), None),
        (63.4, 27.0, Some(9.7), None),
    ]);

    let aki = [48.2, 50.1, 52.4, 54.0, 55.7, 57.3];
    let mut resilient = Vec::new();
    let mut age = 45.0;
    let mut k = 0;
    while age <= 60.0 {
        let dbp = if k % 2 == 0 { 64.0 } else { 96.0 };
        resilient.push((age, 93.0 - 0.15 * (age - 45.0), None, Some(dbp)));
        k += 1;
        age += 0.7;
    }
    for (j, &a) in aki.iter().enumerate() {
        resilient.push((a, 44.0 + 2.0 * j as f64, None, Some(if j % 2 == 0 { 101.0 } else { 62.0 })));
        resilient.push((a + 0.2, 86.0, None, None));
    }
    resilient.sort_by(|a, b| a.0.total_cmp(&b.0));

    vec![
        Scripted {
            patient: Patient {
                patient_id: CASE_PROGRESSOR.into(),
                sex: Sex::Male,
                race: "white".into(),
                birth_date: NaiveDate::from_ymd_opt(1950, 3, 14).expect("valid date"),
            },
            archetype: Archetype::Fast,
            profile: LabProfile { sex: Sex::Male, hgb_base: 12.9, height: 178.0, weight_base: 88.0 },
            visits: progressor,
        },
        Scripted {
            patient: Patient {
                patient_id: CASE_RESILIENT.into(),
                sex: Sex::Female,
                race: "black".into(),
                birth_date: NaiveDate::from_ymd_opt(1956, 9, 2).expect("valid date"),
            },
            archetype: Archetype::Healthy,
            profile: LabProfile { sex: Sex::Female, hgb_base: 13.8, height: 163.0, weight_base: 74.0 },
            visits: resilient,
        },
    ]
}

/// The two case-study patients with their encounters and nominal archetypes.
pub fn case_study_records(catalog: &crate::cdm::FeatureCatalog) -> Result<Vec<(Patient, Vec<Encounter>, Archetype)>, CdmError> {
    let eq = catalog.egfr_equation().ok_or_else(|| CdmError::Synth("catalog has no eGFR equation".into()))?;
    let noise = Noise::new();
    let mut rng = ChaCha8Rng::seed_from_u64(42_747);
    scripted()
        .into_iter()
        .map(|s| {
            let mut encounters = Vec::new();
            for (n, (age, egfr, hgb, dbp)) in s.visits.iter().enumerate() {
                let date = s.patient.birth_date + Duration::days((age * DAYS_PER_YEAR).round() as i64);
                let true_age = (date - s.patient.birth_date).num_days() as f64 / DAYS_PER_YEAR;
                let mut values = draw_visit_values(&mut rng, &noise, eq, &s.profile, true_age, *egfr)?;
                if let Some(h) = hgb {
                    values.insert("hgb".into(), Value::Number(*h));
                }
                if let Some(d) = dbp {
                    values.insert("dbp".into(), Value::Number(*d));
                }
                encounters.push(Encounter {
                    encounter_id: format!("{}-E{:02}", s.patient.patient_id, n + 1),
                    patient_id: s.patient.patient_id.clone(),
                    date,
                    values,
                });
            }
            Ok((s.patient, encounters, s.archetype))
        })
        .collect()
}

/// Archetype cohort of `n` patients plus the case-study patients.
pub fn demo_cohort(n: usize, seed: u64) -> Result<ArchetypeCohort, CdmError> {
    let sim = simulate_archetype_cohort(n, &ArchetypeMix::even(), seed)?;
    let (catalog, mut patients, mut encounters) = sim.cohort.into_parts();
    let mut labels = sim.labels;
    for (p, e, a) in case_study_records(&catalog)? {
        labels.push((p.patient_id.clone(), a));
        patients.push(p);
        encounters.extend(e);
    }
    Ok(ArchetypeCohort { cohort: Cohort::new(catalog, patients, encounters)?, labels })
}

pub fn default_demo_cohort() -> Result<ArchetypeCohort, CdmError> {
    demo_cohort(DEMO_PATIENTS, DEMO_SEED)
}
