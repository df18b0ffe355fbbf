//! Cohort → embedding → trajectories → enrichment, as one call.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{Cohort, EGFR};
use crate::embedding::{embed_cohort, EmbedOptions, EmbeddingError, ImputationReport, LatentSpace};
use crate::enrichment::{find_predictors_and_markers, EnrichOptions, EnrichmentReport};
use crate::trajectory::{
    learn_trajectories_observed, IterationSnapshot, TrajectoryError, TrajectoryInput, TrajectoryModel, TrajectoryParams,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("embedding: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("trajectory: {0}")]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub embed: EmbedOptions,
    pub trajectory: TrajectoryParams,
    pub enrich: EnrichOptions,
}

#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub space: LatentSpace,
    pub imputation: Option<ImputationReport>,
    pub model: TrajectoryModel,
    pub report: EnrichmentReport,
}

/// Aligns the embedded visits with their eGFR values.
pub fn trajectory_input(cohort: &Cohort, space: &LatentSpace) -> TrajectoryInput {
    let egfr_of: HashMap<(&str, &str), Option<f64>> = cohort
        .encounters()
        .iter()
        .map(|e| ((e.patient_id.as_str(), e.encounter_id.as_str()), e.number(EGFR)))
        .collect();
    let egfr = space
        .visits
        .iter()
        .map(|v| egfr_of.get(&(v.patient_id.as_str(), v.encounter_id.as_str())).copied().flatten())
        .collect();
    TrajectoryInput { visits: space.visits.clone(), ages: space.ages.clone(), egfr, coords2d: space.coords2d.clone() }
}

pub fn run_pipeline(cohort: &Cohort, options: &PipelineOptions) -> Result<FittedPipeline, PipelineError> {
    run_pipeline_observed(cohort, options, |_| {})
}

pub fn run_pipeline_observed(
    cohort: &Cohort,
    options: &PipelineOptions,
    observer: impl FnMut(&IterationSnapshot<'_>),
) -> Result<FittedPipeline, PipelineError> {
    let (space, imputation) = embed_cohort(cohort, &options.embed)?;
    let input = trajectory_input(cohort, &space);
    let model = learn_trajectories_observed(&input, &options.trajectory, observer)?;
    let report = find_predictors_and_markers(&model, cohort, &options.enrich);
    Ok(FittedPipeline { space, imputation, model, report })
}
