//! Simulate a planted-archetype cohort and write it as CSV.
//!
//!     cargo run --example synth_archetypes -- [patients] [seed] [out_dir]

use std::path::PathBuf;

use trajvis::cdm::{export_cohort, simulate_archetype_cohort, Archetype, ArchetypeMix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("trajvis-archetypes"));

    let sim = simulate_archetype_cohort(n, &ArchetypeMix::even(), seed)?;
    let files = export_cohort(&sim.cohort, &out)?;
    for a in Archetype::ALL {
        let ids: Vec<&str> = sim.labels.iter().filter(|(_, k)| *k == a).map(|(p, _)| p.as_str()).collect();
        let visits: usize = ids.iter().map(|p| sim.cohort.encounters_of(p).len()).sum();
        println!("{:<8} {:>4} patients {:>6} visits", a.as_str(), ids.len(), visits);
    }
    println!("wrote {}", files.observations.display());
    Ok(())
}
