//! Persist a fitted model and load it back bit-for-bit.

use trajvis::artifact::{load_model, persist_model};
use trajvis::cdm::{simulate_archetype_cohort, ArchetypeMix};
use trajvis::pipeline::{run_pipeline, PipelineOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = simulate_archetype_cohort(90, &ArchetypeMix::even(), 2)?;
    let fit = run_pipeline(&sim.cohort, &PipelineOptions::default())?;
    let dir = std::env::temp_dir().join("trajvis-artifact-example");
    let path = dir.join("model.json");
    persist_model(&fit.model, &path)?;
    let back = load_model(&path)?;
    println!("{} bytes, round trip equal: {}", std::fs::metadata(&path)?.len(), back == fit.model);
    Ok(())
}
