use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::catalog::{FeatureCatalog, FeatureCategory, FeatureKind, AGE, EGFR};
use super::derive::{derive_age, derive_egfr};
use super::{CdmError, Diagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
            Sex::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            "unknown" | "u" | "" => Ok(Sex::Unknown),
            other => Err(format!("unrecognized sex {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: String,
    pub sex: Sex,
    pub race: String,
    pub birth_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(s) => Some(s),
            Value::Number(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encounter {
    pub encounter_id: String,
    pub patient_id: String,
    pub date: NaiveDate,
    pub values: BTreeMap<String, Value>,
}

impl Encounter {
    pub fn number(&self, code: &str) -> Option<f64> {
        self.values.get(code).and_then(Value::as_number)
    }

    pub fn age(&self) -> f64 {
        self.number(AGE).expect("age is materialized on every encounter")
    }
}

/// Validated cohort. Encounters are stored grouped by patient (in patient
/// order) and sorted by date, then encounter id, within each patient.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    catalog: FeatureCatalog,
    patients: Vec<Patient>,
    encounters: Vec<Encounter>,
    patient_index: HashMap<String, usize>,
    ranges: Vec<Range<usize>>,
}

impl Cohort {
    /// Validates the records and materializes derived features (age, eGFR).
    pub fn new(
        catalog: FeatureCatalog,
        patients: Vec<Patient>,
        encounters: Vec<Encounter>,
    ) -> Result<Self, CdmError> {
        let mut diagnostics = Vec::new();
        let mut patient_index = HashMap::with_capacity(patients.len());
        for (i, p) in patients.iter().enumerate() {
            if patient_index.insert(p.patient_id.clone(), i).is_some() {
                diagnostics.push(Diagnostic::new(format!("duplicate patient_id {:?}", p.patient_id)));
            }
        }
        let mut buckets: Vec<Vec<Encounter>> = vec![Vec::new(); patients.len()];
        let mut seen_encounters = HashMap::new();
        for mut e in encounters {
            let Some(&pi) = patient_index.get(&e.patient_id) else {
                diagnostics.push(Diagnostic::new(format!(
                    "encounter {:?} references unknown patient {:?}",
                    e.encounter_id, e.patient_id
                )));
                continue;
            };
            if seen_encounters.insert((e.patient_id.clone(), e.encounter_id.clone()), ()).is_some() {
                diagnostics.push(Diagnostic::new(format!(
                    "duplicate encounter {:?} for patient {:?}",
                    e.encounter_id, e.patient_id
                )));
                continue;
            }
            if let Err(msg) = validate_values(&catalog, &e) {
                diagnostics.push(Diagnostic::new(msg));
                continue;
            }
            match materialize_derived(&catalog, &patients[pi], &mut e) {
                Ok(()) => buckets[pi].push(e),
                Err(err) => diagnostics.push(Diagnostic::new(err.to_string())),
            }
        }
        if !diagnostics.is_empty() {
            return Err(CdmError::Invalid(diagnostics));
        }
        let mut ranges = Vec::with_capacity(patients.len());
        let mut flat = Vec::new();
        for mut bucket in buckets {
            bucket.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.encounter_id.cmp(&b.encounter_id)));
            let start = flat.len();
            flat.extend(bucket);
            ranges.push(start..flat.len());
        }
        Ok(Self { catalog, patients, encounters: flat, patient_index, ranges })
    }

    pub fn catalog(&self) -> &FeatureCatalog {
        &self.catalog
    }

    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    pub fn encounters(&self) -> &[Encounter] {
        &self.encounters
    }

    pub fn patient(&self, patient_id: &str) -> Option<&Patient> {
        self.patient_index.get(patient_id).map(|&i| &self.patients[i])
    }

    pub fn patient_position(&self, patient_id: &str) -> Option<usize> {
        self.patient_index.get(patient_id).copied()
    }

    /// Encounters of one patient in nondecreasing date order.
    pub fn encounters_of(&self, patient_id: &str) -> &[Encounter] {
        match self.patient_index.get(patient_id) {
            Some(&i) => &self.encounters[self.ranges[i].clone()],
            None => &[],
        }
    }

    /// Index range into [`Cohort::encounters`] for the patient at `position`.
    pub fn encounter_range(&self, position: usize) -> Range<usize> {
        self.ranges[position].clone()
    }

    pub fn patient_of(&self, encounter_index: usize) -> &Patient {
        let pid = &self.encounters[encounter_index].patient_id;
        self.patient(pid).expect("encounters reference existing patients")
    }

    pub fn encounter(&self, patient_id: &str, encounter_id: &str) -> Option<&Encounter> {
        self.encounters_of(patient_id).iter().find(|e| e.encounter_id == encounter_id)
    }

    /// Value of a feature for an encounter, resolving demographic categorical
    /// features from the patient record.
    pub fn value_of(&self, encounter: &Encounter, code: &str) -> Option<Value> {
        match code {
            super::catalog::SEX => {
                self.patient(&encounter.patient_id).map(|p| Value::Category(p.sex.to_string()))
            }
            super::catalog::RACE => {
                self.patient(&encounter.patient_id).map(|p| Value::Category(p.race.clone()))
            }
            _ => encounter.values.get(code).cloned(),
        }
    }

    pub fn into_parts(self) -> (FeatureCatalog, Vec<Patient>, Vec<Encounter>) {
        (self.catalog, self.patients, self.encounters)
    }

    /// Whether `code` on `encounter` is recomputed on ingest rather than read.
    pub(crate) fn is_rederived(&self, encounter: &Encounter, code: &str) -> bool {
        is_rederived(&self.catalog, self.patient(&encounter.patient_id), encounter, code)
    }
}

fn validate_values(catalog: &FeatureCatalog, e: &Encounter) -> Result<(), String> {
    for (code, value) in &e.values {
        let Some(def) = catalog.get(code) else {
            return Err(format!("unknown feature code {code:?} in encounter {:?}", e.encounter_id));
        };
        if def.category == FeatureCategory::Demographic {
            return Err(format!("demographic feature {code:?} belongs in the patients file"));
        }
        match (def.kind, value) {
            (FeatureKind::Numeric, Value::Number(v)) if v.is_finite() => {}
            (FeatureKind::Numeric, _) => {
                return Err(format!("feature {code:?} needs a finite number in encounter {:?}", e.encounter_id))
            }
            (FeatureKind::Categorical, Value::Category(_)) => {}
            (FeatureKind::Categorical, Value::Number(_)) => {
                return Err(format!("feature {code:?} is categorical in encounter {:?}", e.encounter_id))
            }
        }
    }
    Ok(())
}

fn is_rederived(catalog: &FeatureCatalog, patient: Option<&Patient>, e: &Encounter, code: &str) -> bool {
    match code {
        AGE => true,
        EGFR => match (catalog.egfr_equation(), patient) {
            (Some(eq), Some(p)) => p.sex != Sex::Unknown && e.values.contains_key(&eq.creatinine_code),
            _ => false,
        },
        _ => false,
    }
}

fn materialize_derived(catalog: &FeatureCatalog, patient: &Patient, e: &mut Encounter) -> Result<(), CdmError> {
    let age = derive_age(patient.birth_date, e.date).map_err(|err| {
        CdmError::Derive(format!("encounter {:?}: {err}", e.encounter_id))
    })?;
    e.values.insert(AGE.to_string(), Value::Number(age));
    if is_rederived(catalog, Some(patient), e, EGFR) {
        let eq = catalog.egfr_equation().expect("checked by is_rederived");
        let scr = e.number(&eq.creatinine_code).expect("numeric creatinine");
        if age > 0.0 {
            let egfr = derive_egfr(eq, scr, age, patient.sex)
                .map_err(|err| CdmError::Derive(format!("encounter {:?}: {err}", e.encounter_id)))?;
            e.values.insert(EGFR.to_string(), Value::Number(egfr));
        }
    }
    Ok(())
}
