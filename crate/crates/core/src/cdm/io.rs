use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::catalog::{FeatureCatalog, FeatureKind};
use super::cohort::{Cohort, Encounter, Patient, Sex, Value};
use super::{CdmError, Diagnostic};

pub const PATIENTS_HEADER: [&str; 4] = ["patient_id", "sex", "race", "birth_date"];
pub const OBSERVATIONS_HEADER: [&str; 5] = ["patient_id", "encounter_id", "date", "feature_code", "value"];
pub const LABELS_HEADER: [&str; 2] = ["patient_id", "archetype"];

/// Conventional file names inside a cohort directory.
#[derive(Debug, Clone)]
pub struct CohortFiles {
    pub patients: PathBuf,
    pub observations: PathBuf,
    pub catalog: PathBuf,
}

impl CohortFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            patients: dir.join("patients.csv"),
            observations: dir.join("observations.csv"),
            catalog: dir.join("catalog.json"),
        }
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<std::fs::File>, CdmError> {
    let file = std::fs::File::open(path).map_err(|e| CdmError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| CdmError::Invalid(vec![Diagnostic::at(path, 1, e.to_string())]))?
        .clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(CdmError::Invalid(vec![Diagnostic::at(
            path,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), found.join(",")),
        )]));
    }
    Ok(reader)
}

/// Reads and validates a cohort from its three files.
pub fn ingest_cohort(
    patients_file: &Path,
    observations_file: &Path,
    catalog_file: &Path,
) -> Result<Cohort, CdmError> {
    let catalog = FeatureCatalog::load(catalog_file)?;
    let mut diagnostics = Vec::new();

    let mut patients = Vec::new();
    let mut reader = open_csv(patients_file, &PATIENTS_HEADER)?;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                diagnostics.push(Diagnostic::at(patients_file, line, e.to_string()));
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let sex = row[1].parse::<Sex>();
        let birth = parse_date(&row[3]);
        match (sex, birth) {
            (Ok(sex), Ok(birth_date)) => patients.push(Patient {
                patient_id: row[0].trim().to_string(),
                sex,
                race: row[2].trim().to_string(),
                birth_date,
            }),
            (Err(m), _) | (_, Err(m)) => diagnostics.push(Diagnostic::at(patients_file, line, m)),
        }
    }

    // encounter key -> (date, values, first line)
    let mut encounters: BTreeMap<(String, String), (NaiveDate, BTreeMap<String, Value>, u64)> = BTreeMap::new();
    let mut order: Vec<(String, String)> = Vec::new();
    let mut reader = open_csv(observations_file, &OBSERVATIONS_HEADER)?;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                diagnostics.push(Diagnostic::at(observations_file, line, e.to_string()));
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let pid = row[0].trim().to_string();
        let eid = row[1].trim().to_string();
        let date = match parse_date(&row[2]) {
            Ok(d) => d,
            Err(m) => {
                diagnostics.push(Diagnostic::at(observations_file, line, m));
                continue;
            }
        };
        let code = row[3].trim();
        let Some(def) = catalog.get(code) else {
            diagnostics.push(Diagnostic::at(observations_file, line, format!("unknown feature code {code:?}")));
            continue;
        };
        let raw = row[4].trim();
        let value = match def.kind {
            FeatureKind::Numeric => match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Value::Number(v),
                _ => {
                    diagnostics.push(Diagnostic::at(
                        observations_file,
                        line,
                        format!("feature {code:?}: {raw:?} is not a finite number"),
                    ));
                    continue;
                }
            },
            FeatureKind::Categorical => Value::Category(raw.to_string()),
        };
        let key = (pid, eid);
        match encounters.get_mut(&key) {
            Some((d, values, _)) => {
                if *d != date {
                    diagnostics.push(Diagnostic::at(
                        observations_file,
                        line,
                        format!("encounter {:?} has conflicting dates {d} and {date}", key.1),
                    ));
                    continue;
                }
                if values.insert(code.to_string(), value).is_some() {
                    diagnostics.push(Diagnostic::at(
                        observations_file,
                        line,
                        format!("feature {code:?} repeated in encounter {:?}", key.1),
                    ));
                }
            }
            None => {
                order.push(key.clone());
                encounters.insert(key, (date, BTreeMap::from([(code.to_string(), value)]), line));
            }
        }
    }
    if !diagnostics.is_empty() {
        return Err(CdmError::Invalid(diagnostics));
    }

    let known: HashMap<&str, ()> = patients.iter().map(|p| (p.patient_id.as_str(), ())).collect();
    let mut list = Vec::with_capacity(order.len());
    for key in order {
        let (date, values, line) = encounters.remove(&key).expect("key recorded once");
        if !known.contains_key(key.0.as_str()) {
            diagnostics.push(Diagnostic::at(
                observations_file,
                line,
                format!("encounter {:?} references unknown patient {:?}", key.1, key.0),
            ));
            continue;
        }
        list.push(Encounter { encounter_id: key.1, patient_id: key.0, date, values });
    }
    if !diagnostics.is_empty() {
        return Err(CdmError::Invalid(diagnostics));
    }
    Cohort::new(catalog, patients, list)
}

pub fn ingest_dir(dir: &Path) -> Result<Cohort, CdmError> {
    let files = CohortFiles::in_dir(dir);
    ingest_cohort(&files.patients, &files.observations, &files.catalog)
}

pub fn write_patients_csv<W: Write>(cohort: &Cohort, out: W) -> Result<(), CdmError> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| CdmError::Io(e.to_string());
    w.write_record(PATIENTS_HEADER).map_err(map)?;
    for p in cohort.patients() {
        w.write_record([
            p.patient_id.as_str(),
            p.sex.as_str(),
            p.race.as_str(),
            &p.birth_date.format("%Y-%m-%d").to_string(),
        ])
        .map_err(map)?;
    }
    w.flush().map_err(|e| CdmError::Io(e.to_string()))
}

/// Long-format observations. Values that ingest recomputes (age, and eGFR
/// when creatinine is present) are omitted.
pub fn write_observations_csv<W: Write>(cohort: &Cohort, out: W) -> Result<(), CdmError> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| CdmError::Io(e.to_string());
    w.write_record(OBSERVATIONS_HEADER).map_err(map)?;
    for e in cohort.encounters() {
        let date = e.date.format("%Y-%m-%d").to_string();
        for (code, value) in &e.values {
            if cohort.is_rederived(e, code) {
                continue;
            }
            let text = match value {
                Value::Number(v) => v.to_string(),
                Value::Category(s) => s.clone(),
            };
            w.write_record([e.patient_id.as_str(), e.encounter_id.as_str(), &date, code, &text])
                .map_err(map)?;
        }
    }
    w.flush().map_err(|e| CdmError::Io(e.to_string()))
}

/// Writes `patients.csv`, `observations.csv` and `catalog.json` into `dir`.
pub fn export_cohort(cohort: &Cohort, dir: &Path) -> Result<CohortFiles, CdmError> {
    std::fs::create_dir_all(dir).map_err(|e| CdmError::io(dir, e))?;
    let files = CohortFiles::in_dir(dir);
    let create = |p: &Path| {
        std::fs::File::create(p).map(std::io::BufWriter::new).map_err(|e| CdmError::io(p, e))
    };
    write_patients_csv(cohort, create(&files.patients)?)?;
    write_observations_csv(cohort, create(&files.observations)?)?;
    cohort.catalog().save(&files.catalog)?;
    Ok(files)
}

pub fn write_labels_csv<W: Write>(labels: &[(String, String)], out: W) -> Result<(), CdmError> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| CdmError::Io(e.to_string());
    w.write_record(LABELS_HEADER).map_err(map)?;
    for (pid, label) in labels {
        w.write_record([pid, label]).map_err(map)?;
    }
    w.flush().map_err(|e| CdmError::Io(e.to_string()))
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, String)>, CdmError> {
    let mut reader = open_csv(path, &LABELS_HEADER)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CdmError::Io(e.to_string()))?;
        out.push((row[0].to_string(), row[1].to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdm::derive::derive_egfr;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn catalog_file(dir: &Path) -> PathBuf {
        let p = dir.join("catalog.json");
        FeatureCatalog::clinic_default().save(&p).unwrap();
        p
    }

    const PATIENTS: &str = "patient_id,sex,race,birth_date\nP1,male,white,1970-03-01\nP2,female,black,1955-07-15\n";

    #[test]
    fn ingest_counts_and_derives_egfr() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "patients.csv", PATIENTS);
        let o = write(
            dir.path(),
            "observations.csv",
            "patient_id,encounter_id,date,feature_code,value\n\
             P1,E1,2020-03-01,creatinine,1.0\n\
             P1,E1,2020-03-01,hgb,14.2\n\
             P1,E2,2021-03-01,sbp,130\n\
             P2,E3,2019-01-01,creatinine,0.8\n",
        );
        let c = catalog_file(dir.path());
        let cohort = ingest_cohort(&p, &o, &c).unwrap();
        assert_eq!(cohort.patients().len(), 2);
        assert_eq!(cohort.encounters().len(), 3);

        let e1 = &cohort.encounters_of("P1")[0];
        let age = e1.age();
        assert_eq!(age, 18263.0 / 365.25);
        // CKD-EPI 2021 male, creatinine 1.0 over kappa 0.9
        let by_hand = 142.0 * (1.0f64 / 0.9).powf(-1.2) * 0.9938f64.powf(age);
        assert!((e1.number("egfr").unwrap() - by_hand).abs() < 1e-10);
        let eq = cohort.catalog().egfr_equation().unwrap();
        assert_eq!(e1.number("egfr"), Some(derive_egfr(eq, 1.0, age, Sex::Male).unwrap()));
        // no creatinine, no eGFR
        assert!(cohort.encounters_of("P1")[1].number("egfr").is_none());
    }

    #[test]
    fn unknown_feature_reports_code_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "patients.csv", PATIENTS);
        let o = write(
            dir.path(),
            "observations.csv",
            "patient_id,encounter_id,date,feature_code,value\nP1,E1,2020-03-01,hgb,14\nP1,E1,2020-03-01,XYZ,1\n",
        );
        let c = catalog_file(dir.path());
        let err = ingest_cohort(&p, &o, &c).unwrap_err();
        let CdmError::Invalid(diags) = err else { panic!("expected diagnostics") };
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("XYZ"));
        assert_eq!(diags[0].line, Some(3));
    }

    #[test]
    fn bad_dates_and_numbers_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "patients.csv", PATIENTS);
        let o = write(
            dir.path(),
            "observations.csv",
            "patient_id,encounter_id,date,feature_code,value\nP1,E1,2020-13-01,hgb,14\nP1,E2,2020-01-01,hgb,abc\nP1,E3,1960-01-01,hgb,12\n",
        );
        let c = catalog_file(dir.path());
        let CdmError::Invalid(diags) = ingest_cohort(&p, &o, &c).unwrap_err() else { panic!() };
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].line, Some(2));
        assert_eq!(diags[1].line, Some(3));
    }

    #[test]
    fn encounter_before_birth_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "patients.csv", PATIENTS);
        let o = write(
            dir.path(),
            "observations.csv",
            "patient_id,encounter_id,date,feature_code,value\nP1,E3,1960-01-01,hgb,12\n",
        );
        let c = catalog_file(dir.path());
        assert!(matches!(ingest_cohort(&p, &o, &c), Err(CdmError::Invalid(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = catalog_file(dir.path());
        let err = ingest_cohort(&dir.path().join("nope.csv"), &dir.path().join("x.csv"), &c).unwrap_err();
        assert!(matches!(err, CdmError::Io(_)));
    }

    #[test]
    fn export_then_ingest_round_trips() {
        let cohort = crate::cdm::simulate_archetype_cohort(12, &crate::cdm::ArchetypeMix::even(), 3).unwrap().cohort;
        let dir = tempfile::tempdir().unwrap();
        let files = export_cohort(&cohort, dir.path()).unwrap();
        let back = ingest_cohort(&files.patients, &files.observations, &files.catalog).unwrap();
        assert_eq!(back, cohort);
    }
}
