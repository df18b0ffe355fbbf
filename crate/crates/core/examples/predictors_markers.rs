//! Predictors (pre-fork) and markers (post-fork) of each trajectory.

use trajvis::cdm::{simulate_archetype_cohort, ArchetypeMix};
use trajvis::enrichment::Phase;
use trajvis::pipeline::{run_pipeline, PipelineOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = simulate_archetype_cohort(300, &ArchetypeMix::even(), 7)?;
    let fit = run_pipeline(&sim.cohort, &PipelineOptions::default())?;
    for t in fit.model.named_trajectories() {
        for phase in Phase::BOTH {
            let hits: Vec<String> = fit
                .report
                .filter(Some(t), Some(phase))
                .into_iter()
                .filter(|r| r.significant)
                .take(5)
                .map(|r| format!("{} (q={:.1e})", r.feature_code, r.q_value))
                .collect();
            println!("{:<17} {:<9} {}", t.as_str(), phase.as_str(), hits.join(", "));
        }
    }
    println!("{} skipped test(s)", fit.report.skipped.len());
    Ok(())
}
