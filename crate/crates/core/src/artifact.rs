//! Versioned, checksummed JSON artifacts and atomic file writes.
//!
//! An artifact is `{"schema_version", "kind", "sha256", "payload"}` where the
//! digest covers the exact payload bytes. Floats are written in shortest
//! round-trip form, so a load returns bit-identical values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::enrichment::EnrichmentReport;
use crate::trajectory::TrajectoryModel;

pub const SCHEMA_VERSION: u32 = 1;
pub const MODEL_KIND: &str = "trajectory_model";
pub const REPORT_KIND: &str = "enrichment_report";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: schema_version {found} is not supported (expected {expected})")]
    Version { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: checksum verification failed: {reason}")]
    Checksum { path: PathBuf, reason: String },
    #[error("{path}: expected a {expected} artifact, found {found}")]
    Kind { path: PathBuf, expected: String, found: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    schema_version: u32,
    kind: &'a str,
    sha256: String,
    payload: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    schema_version: u32,
    kind: String,
    sha256: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path).map_err(|source| ArtifactError::Io { path: path.to_path_buf(), source })?;
    Ok(sha256_hex(&bytes))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let io = |source| ArtifactError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

pub fn encode<T: Serialize>(kind: &str, payload: &T) -> String {
    let raw = serde_json::to_string(payload).expect("artifact payloads serialize");
    let raw = RawValue::from_string(raw).expect("serde_json output is valid JSON");
    let env = EnvelopeOut { schema_version: SCHEMA_VERSION, kind, sha256: sha256_hex(raw.get().as_bytes()), payload: &raw };
    let mut s = serde_json::to_string(&env).expect("envelope serializes");
    s.push('\n');
    s
}

/// Kind of a verified artifact text, and its payload.
pub fn decode_raw<'a>(path: &Path, text: &'a str) -> Result<(String, &'a RawValue), ArtifactError> {
    let env: EnvelopeIn<'a> = serde_json::from_str(text).map_err(|e| {
        if e.is_eof() {
            ArtifactError::Checksum { path: path.to_path_buf(), reason: "file is truncated".into() }
        } else {
            ArtifactError::Format { path: path.to_path_buf(), message: e.to_string() }
        }
    })?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(ArtifactError::Version { path: path.to_path_buf(), expected: SCHEMA_VERSION, found: env.schema_version });
    }
    let found = sha256_hex(env.payload.get().as_bytes());
    if found != env.sha256 {
        return Err(ArtifactError::Checksum {
            path: path.to_path_buf(),
            reason: format!("payload digest {found} does not match recorded {}", env.sha256),
        });
    }
    Ok((env.kind, env.payload))
}

pub fn decode<T: DeserializeOwned>(path: &Path, kind: &str, text: &str) -> Result<T, ArtifactError> {
    let (found, raw) = decode_raw(path, text)?;
    if found != kind {
        return Err(ArtifactError::Kind { path: path.to_path_buf(), expected: kind.into(), found });
    }
    serde_json::from_str(raw.get()).map_err(|e| ArtifactError::Format { path: path.to_path_buf(), message: e.to_string() })
}

fn read_text(path: &Path) -> Result<String, ArtifactError> {
    fs::read_to_string(path).map_err(|source| ArtifactError::Io { path: path.to_path_buf(), source })
}

pub fn persist_model(model: &TrajectoryModel, path: &Path) -> Result<(), ArtifactError> {
    write_atomic(path, encode(MODEL_KIND, model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<TrajectoryModel, ArtifactError> {
    decode(path, MODEL_KIND, &read_text(path)?)
}

pub fn persist_report(report: &EnrichmentReport, path: &Path) -> Result<(), ArtifactError> {
    write_atomic(path, encode(REPORT_KIND, report).as_bytes())
}

pub fn load_report(path: &Path) -> Result<EnrichmentReport, ArtifactError> {
    decode(path, REPORT_KIND, &read_text(path)?)
}

/// Verifies envelope, checksum and payload schema of any artifact file;
/// returns its kind.
pub fn validate_artifact(path: &Path) -> Result<String, ArtifactError> {
    let text = read_text(path)?;
    let (kind, raw) = decode_raw(path, &text)?;
    let format = |e: serde_json::Error| ArtifactError::Format { path: path.to_path_buf(), message: e.to_string() };
    match kind.as_str() {
        MODEL_KIND => {
            serde_json::from_str::<TrajectoryModel>(raw.get()).map_err(format)?;
        }
        REPORT_KIND => {
            serde_json::from_str::<EnrichmentReport>(raw.get()).map_err(format)?;
        }
        other => {
            return Err(ArtifactError::Kind { path: path.to_path_buf(), expected: format!("{MODEL_KIND} or {REPORT_KIND}"), found: other.into() })
        }
    }
    Ok(kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enrichment::Aggregation;

    fn report() -> EnrichmentReport {
        EnrichmentReport { alpha_fdr: 0.05, aggregation: Aggregation::Visit, results: vec![], skipped: vec![] }
    }

    #[test]
    fn round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        persist_report(&report(), &path).unwrap();
        assert_eq!(load_report(&path).unwrap(), report());
        assert_eq!(validate_artifact(&path).unwrap(), REPORT_KIND);
        assert!(matches!(load_model(&path), Err(ArtifactError::Kind { .. })));

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_report(&path), Err(ArtifactError::Checksum { .. })));

        fs::write(&path, text.replace("\"schema_version\":1", "\"schema_version\":99")).unwrap();
        match load_report(&path) {
            Err(ArtifactError::Version { expected: 1, found: 99, .. }) => {}
            other => panic!("{other:?}"),
        }

        fs::write(&path, text.replace("0.05", "0.01")).unwrap();
        assert!(matches!(load_report(&path), Err(ArtifactError::Checksum { .. })));
    }

    #[test]
    fn floats_are_bit_exact() {
        let v = vec![0.1 + 0.2, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -0.0, 123456.789e-20, 2f64.sqrt()];
        let text = encode("numbers", &v);
        let back: Vec<f64> = decode(Path::new("x"), "numbers", &text).unwrap();
        assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), back.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}
