//! Per-age trajectory probabilities of the case-study progressor.

use trajvis::fixtures::{default_demo_cohort, CASE_PROGRESSOR};
use trajvis::pipeline::{run_pipeline, PipelineOptions};
use trajvis::trajectory::TrajectoryLabel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = default_demo_cohort()?;
    let fit = run_pipeline(&demo.cohort, &PipelineOptions::default())?;
    let p = fit.model.trajectory_probability(CASE_PROGRESSOR)?;
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "age", "healthy", "late", "fast", "undet.");
    for (i, age) in p.age_grid.iter().enumerate() {
        let at = |l: TrajectoryLabel| p.probabilities[&l][i];
        println!(
            "{age:>6.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            at(TrajectoryLabel::Healthy),
            at(TrajectoryLabel::LateProgression),
            at(TrajectoryLabel::FastProgression),
            p.undetermined[i]
        );
    }
    Ok(())
}
