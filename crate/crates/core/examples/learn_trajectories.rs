//! Full trajectory learning on the planted cohort, scored against the
//! ground-truth sidecar.

use std::collections::HashMap;

use trajvis::cdm::{simulate_archetype_cohort, Archetype, ArchetypeMix};
use trajvis::pipeline::{run_pipeline, PipelineOptions};
use trajvis::trajectory::TrajectoryLabel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let sim = simulate_archetype_cohort(300, &ArchetypeMix::even(), seed)?;
    let start = std::time::Instant::now();
    let fit = run_pipeline(&sim.cohort, &PipelineOptions::default())?;
    let model = &fit.model;
    println!("fit in {:.2?}: {} iterations, {} branches", start.elapsed(), model.tree.iterations, model.branches.len());
    for b in &model.branches {
        println!(
            "  branch {} {:?} {:<17} r {:>6} slope {:>6}",
            b.id,
            b.kind,
            model.label_of(b.id).as_str(),
            b.ckd_relevance_r.map_or("-".into(), |r| format!("{r:.2}")),
            b.egfr_slope.map_or("-".into(), |s| format!("{s:.2}")),
        );
    }
    let truth: HashMap<&str, Archetype> = sim.labels.iter().map(|(p, a)| (p.as_str(), *a)).collect();
    let memberships = model.memberships();
    let correct = memberships
        .iter()
        .filter(|(p, l)| {
            matches!(
                (truth[p.as_str()], l),
                (Archetype::Healthy, TrajectoryLabel::Healthy)
                    | (Archetype::Late, TrajectoryLabel::LateProgression)
                    | (Archetype::Fast, TrajectoryLabel::FastProgression)
            )
        })
        .count();
    println!("membership agrees with the planted archetype for {correct} of {} patients", memberships.len());
    Ok(())
}
