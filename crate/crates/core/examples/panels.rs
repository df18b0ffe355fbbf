//! The four panel payloads for one patient.

use trajvis::fixtures::{default_demo_cohort, CASE_RESILIENT};
use trajvis::pipeline::{run_pipeline, PipelineOptions};
use trajvis::views::{analysis_bundle, indicator_glyphs, patient_series, trajectory_map, ColorBy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = default_demo_cohort()?;
    let fit = run_pipeline(&demo.cohort, &PipelineOptions::default())?;
    let id = CASE_RESILIENT;

    let series = patient_series(&demo.cohort, id, &["egfr", "dbp"])?;
    for s in &series {
        let abnormal = s.points.iter().filter(|p| p.band.is_some_and(|b| b != trajvis::cdm::Band::Normal)).count();
        println!("profile   {:<5} {} points, {abnormal} out of range", s.feature_code, s.points.len());
    }
    let map = trajectory_map(&fit.model, ColorBy::Age, Some(id))?;
    println!("map       {} points, {} highlighted, {} named polylines", map.points.len(), map.highlighted.len(), map.trajectories.len());
    let glyphs = indicator_glyphs(&demo.cohort, id, 0.25)?;
    println!("glyphs    rows {}", glyphs.row_order.join(" "));
    let bundle = analysis_bundle(&fit.model, &demo.cohort, id, 1.0)?;
    for c in &bundle.curves {
        println!("analysis  {:<17} {} age bins", c.trajectory.as_str(), c.bins.len());
    }
    Ok(())
}
