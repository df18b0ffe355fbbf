//! Desk-scale cohorts with planted progression archetypes.
//!
//! Every patient follows one of three eGFR-vs-age shapes: flat near 90
//! (`healthy`), decline after about 60 (`late`), or a steep decline from about
//! 50 (`fast`). Creatinine is written so that the derived eGFR reproduces the
//! planted curve. Auxiliary labs carry age and kidney-function coupling, and
//! hemoglobin is planted two within-group standard deviations lower for
//! `fast` patients at every visit.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::catalog::{EgfrEquation, FeatureCatalog};
use super::cohort::{Cohort, Encounter, Patient, Sex, Value};
use super::derive::{creatinine_for_egfr, DAYS_PER_YEAR};
use super::CdmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Healthy,
    Late,
    Fast,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Healthy, Archetype::Late, Archetype::Fast];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Healthy => "healthy",
            Archetype::Late => "late",
            Archetype::Fast => "fast",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Archetype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "healthy" => Ok(Archetype::Healthy),
            "late" => Ok(Archetype::Late),
            "fast" => Ok(Archetype::Fast),
            other => Err(format!("unknown archetype {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeMix {
    pub healthy: f64,
    pub late: f64,
    pub fast: f64,
}

impl ArchetypeMix {
    pub fn even() -> Self {
        Self { healthy: 1.0 / 3.0, late: 1.0 / 3.0, fast: 1.0 / 3.0 }
    }

    pub fn only(a: Archetype) -> Self {
        let mut m = Self { healthy: 0.0, late: 0.0, fast: 0.0 };
        match a {
            Archetype::Healthy => m.healthy = 1.0,
            Archetype::Late => m.late = 1.0,
            Archetype::Fast => m.fast = 1.0,
        }
        m
    }

    fn proportions(&self) -> [f64; 3] {
        [self.healthy, self.late, self.fast]
    }

    pub fn validate(&self) -> Result<(), CdmError> {
        let p = self.proportions();
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(CdmError::Synth(format!("mix proportions must be nonnegative: {p:?}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CdmError::Synth(format!("mix proportions sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` patients.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let p = self.proportions();
        let exact: Vec<f64> = p.iter().map(|x| x * n as f64).collect();
        let mut counts: [usize; 3] = [0; 3];
        for k in 0..3 {
            counts[k] = (exact[k] + 1e-9).floor() as usize;
        }
        let mut left = n - counts.iter().sum::<usize>();
        let mut by_remainder: Vec<usize> = (0..3).collect();
        by_remainder.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for k in by_remainder {
            if left == 0 {
                break;
            }
            if p[k] > 0.0 {
                counts[k] += 1;
                left -= 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone)]
pub struct ArchetypeCohort {
    pub cohort: Cohort,
    /// Ground-truth sidecar, in patient order.
    pub labels: Vec<(String, Archetype)>,
}

impl ArchetypeCohort {
    pub fn label_rows(&self) -> Vec<(String, String)> {
        self.labels.iter().map(|(p, a)| (p.clone(), a.to_string())).collect()
    }
}

/// Planted eGFR (mL/min/1.73m2) at `age` for an archetype with onset jitter.
pub fn planted_egfr(archetype: Archetype, age: f64, onset_shift: f64) -> f64 {
    let base = 95.0 - 0.15 * (age - 40.0);
    let v = match archetype {
        Archetype::Healthy => base,
        Archetype::Late => base - 3.0 * (age - (60.0 + onset_shift)).max(0.0),
        Archetype::Fast => base - 5.5 * (age - (50.0 + onset_shift)).max(0.0),
    };
    v.max(5.0)
}

/// Planted eGFR below which a patient leaves follow-up (dialysis or transplant).
pub const END_STAGE_EGFR: f64 = 15.0;

/// Hemoglobin offset (g/dL) planted for fast progressors.
pub const FAST_HGB_SHIFT: f64 = -1.6;

pub(crate) struct Noise {
    std: Normal<f64>,
}

impl Noise {
    pub(crate) fn new() -> Self {
        Self { std: Normal::new(0.0, 1.0).expect("unit normal") }
    }

    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng, sd: f64) -> f64 {
        sd * self.std.sample(rng)
    }
}

/// Patient-level lab baselines.
pub(crate) struct LabProfile {
    pub sex: Sex,
    pub hgb_base: f64,
    pub height: f64,
    pub weight_base: f64,
}

/// Lab panel of one visit with the given eGFR; creatinine is inverted from it.
pub(crate) fn draw_visit_values(
    rng: &mut ChaCha8Rng,
    noise: &Noise,
    eq: &EgfrEquation,
    p: &LabProfile,
    true_age: f64,
    egfr: f64,
) -> Result<BTreeMap<String, Value>, CdmError> {
    let deficit = (90.0 - egfr).max(0.0);
    let mut values = BTreeMap::new();
    let mut put = |code: &str, v: f64| {
        values.insert(code.to_string(), Value::Number(round_to(v, 4)));
    };
    put("creatinine", creatinine_for_egfr(eq, egfr, true_age, p.sex)?);
    put("hgb", p.hgb_base + noise.draw(rng, 0.6) - 0.02 * deficit);
    put("sbp", 118.0 + 0.35 * (true_age - 40.0) + 0.2 * deficit + noise.draw(rng, 6.0));
    put("hba1c", 5.2 + 0.02 * (true_age - 40.0) + noise.draw(rng, 0.25));
    put("chol", 175.0 + 0.8 * (true_age - 40.0) + noise.draw(rng, 12.0));
    put("uacr", (10f64.ln() + 0.04 * deficit + noise.draw(rng, 0.4)).exp());
    put("dbp", 72.0 + 0.2 * (true_age - 40.0) + noise.draw(rng, 5.0));
    put("height", p.height - 0.05 * (true_age - 40.0) + noise.draw(rng, 0.5));
    put("weight", p.weight_base + noise.draw(rng, 2.0));
    // (code, value at 40, change per year, noise sd)
    let optional: [(&str, f64, f64, f64); 9] = [
        ("alt", 25.0, 0.0, 8.0),
        ("ast", 24.0, 0.0, 7.0),
        ("alp", 75.0, 0.8, 12.0),
        ("ldl", 100.0, 0.9, 14.0),
        ("hdl", 56.0, -0.25, 6.0),
        ("ck", 110.0, 0.0, 40.0),
        ("tg", 120.0, 1.5, 20.0),
        ("inr", 1.0, 0.0, 0.08),
        ("troponin", 0.008, 0.0002, 0.002),
    ];
    for (code, base, per_year, sd) in optional {
        let mean = base + per_year * (true_age - 40.0);
        let draw = (mean + noise.draw(rng, sd)).max(base * 0.05);
        if rng.random_bool(0.9) {
            put(code, draw);
        }
    }
    Ok(values)
}

pub fn simulate_archetype_cohort(n_patients: usize, mix: &ArchetypeMix, seed: u64) -> Result<ArchetypeCohort, CdmError> {
    if n_patients < 3 {
        return Err(CdmError::Synth(format!("need at least 3 patients, got {n_patients}")));
    }
    mix.validate()?;
    let catalog = FeatureCatalog::clinic_default();
    let eq = catalog.egfr_equation().expect("default catalog carries eGFR").clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Noise::new();

    let counts = mix.counts(n_patients);
    let mut kinds: Vec<Archetype> = Archetype::ALL
        .iter()
        .zip(counts)
        .flat_map(|(a, c)| std::iter::repeat_n(*a, c))
        .collect();
    kinds.shuffle(&mut rng);

    let epoch = NaiveDate::from_ymd_opt(1935, 1, 1).expect("valid date");
    let races = [("white", 0.70), ("black", 0.18), ("asian", 0.06), ("other", 0.06)];
    let width = n_patients.to_string().len().max(4);

    let mut patients = Vec::with_capacity(n_patients);
    let mut encounters = Vec::new();
    let mut labels = Vec::with_capacity(n_patients);
    for (k, &kind) in kinds.iter().enumerate() {
        let patient_id = format!("P{:0width$}", k + 1);
        let sex = if rng.random_bool(0.55) { Sex::Female } else { Sex::Male };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut race = races[races.len() - 1].0;
        for (name, p) in races {
            acc += p;
            if u < acc {
                race = name;
                break;
            }
        }
        let birth_date = epoch + Duration::days(rng.random_range(0..(25.0 * DAYS_PER_YEAR) as i64));
        let first_age: f64 = rng.random_range(38.0..44.0);
        let last_age: f64 = rng.random_range(74.0..80.0);
        let onset_shift = noise.draw(&mut rng, 1.5);
        let hgb_base = 14.2 + noise.draw(&mut rng, 0.5) + if kind == Archetype::Fast { FAST_HGB_SHIFT } else { 0.0 };
        let (h_mean, w_mean) = if sex == Sex::Female { (162.0, 68.0) } else { (176.0, 82.0) };
        let height = h_mean + noise.draw(&mut rng, 7.0);
        let weight_base = w_mean + noise.draw(&mut rng, 10.0);

        let mut age = first_age;
        let mut visit = 0;
        while age <= last_age && planted_egfr(kind, age, onset_shift) >= END_STAGE_EGFR {
            visit += 1;
            let date = birth_date + Duration::days((age * DAYS_PER_YEAR).round() as i64);
            let true_age = (date - birth_date).num_days() as f64 / DAYS_PER_YEAR;
            let egfr = (planted_egfr(kind, true_age, onset_shift) + noise.draw(&mut rng, 3.0)).max(5.0);
            let profile = LabProfile { sex, hgb_base, height, weight_base };
            let values = draw_visit_values(&mut rng, &noise, &eq, &profile, true_age, egfr)?;
            encounters.push(Encounter {
                encounter_id: format!("{patient_id}-E{visit:02}"),
                patient_id: patient_id.clone(),
                date,
                values,
            });
            age += rng.random_range(1.2..2.4);
        }
        patients.push(Patient { patient_id: patient_id.clone(), sex, race: race.to_string(), birth_date });
        labels.push((patient_id, kind));
    }
    let cohort = Cohort::new(catalog, patients, encounters)?;
    Ok(ArchetypeCohort { cohort, labels })
}

fn round_to(v: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    (v * scale).round() / scale
}
