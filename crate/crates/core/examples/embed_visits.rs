//! Standardize visits, build the latent space and its 2-D map, and count the
//! age-similarity edges.

use trajvis::cdm::{simulate_archetype_cohort, ArchetypeMix};
use trajvis::embedding::{build_age_similarity_graph, embed_cohort, EmbedOptions, DEFAULT_WINDOW_DAYS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cohort = simulate_archetype_cohort(150, &ArchetypeMix::even(), 5)?.cohort;
    let (space, imputation) = embed_cohort(&cohort, &EmbedOptions::default())?;
    println!("visits × latent dims  {} × {}", space.latent.nrows(), space.latent.ncols());
    if let Some(report) = imputation {
        for f in report.features.iter().filter(|f| f.imputed > 0).take(5) {
            println!("  imputed {:>4} values of {:<10} with median {:.3}", f.imputed, f.feature_code, f.median);
        }
    }
    let graph = build_age_similarity_graph(&cohort, DEFAULT_WINDOW_DAYS)?;
    println!("age-similarity edges  {}", graph.edges.len());
    let [x, y] = space.coords2d[0];
    println!("first visit on map    ({x:.3}, {y:.3})");
    Ok(())
}
