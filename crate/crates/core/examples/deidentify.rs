//! Date-shift and value-swap transform of a cohort.

use trajvis::cdm::{generate_synthetic, simulate_archetype_cohort, ArchetypeMix, DEFAULT_MAX_SHIFT_DAYS, DEFAULT_SWAP_FRACTION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = simulate_archetype_cohort(120, &ArchetypeMix::even(), 3)?.cohort;
    let out = generate_synthetic(&source, DEFAULT_MAX_SHIFT_DAYS, DEFAULT_SWAP_FRACTION, 11)?;

    let max_shift = source
        .encounters()
        .iter()
        .zip(out.cohort.encounters())
        .map(|(a, b)| (b.date - a.date).num_days().abs())
        .max()
        .unwrap_or(0);
    println!("encounters      {}", source.encounters().len());
    println!("swapped         {} (target {})", out.report.swapped, out.report.target_swaps);
    println!("largest shift   {max_shift} days");
    let (src, issued) = &out.patient_map[0];
    println!("patient {src} is issued as {issued}");
    Ok(())
}
