//! Chronic-kidney-disease progression trajectories from longitudinal clinical
//! records.
//!
//! The pipeline runs cohort ingest ([`cdm`]) → visit embedding
//! ([`embedding`]) → principal-tree trajectory learning ([`trajectory`]) →
//! predictor/marker enrichment ([`enrichment`]), and the results feed the
//! per-patient panels in [`views`], the REST API in [`service`] and the
//! `trajvis` command line ([`cli`]).

pub mod artifact;
pub mod cdm;
pub mod cli;
pub mod embedding;
pub mod enrichment;
pub mod fixtures;
pub mod pipeline;
pub mod service;
pub mod trajectory;
pub mod views;
