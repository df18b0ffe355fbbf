use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{band_of, ViewError};
use crate::cdm::{Band, Cohort, AGE};

pub const DEFAULT_GLYPH_BIN_YEARS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphBin {
    pub feature_code: String,
    /// `[start, end)` in years.
    pub age_bin: [f64; 2],
    pub n_below: usize,
    pub n_normal: usize,
    pub n_above: usize,
    /// Mean normalized deviation of the below-range values (0 without any).
    pub dev_below: f64,
    pub dev_above: f64,
    pub max_dev_below: f64,
    pub max_dev_above: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorGlyphs {
    pub patient_id: String,
    pub bin_width: f64,
    /// Measured features in dendrogram leaf order.
    pub row_order: Vec<String>,
    /// Bins grouped by row (in `row_order`), ascending age within a row.
    pub bins: Vec<GlyphBin>,
}

#[derive(Default)]
struct Acc {
    n: [usize; 3],
    sum: [f64; 2],
    max: [f64; 2],
}

/// Per-feature, per-age-bin band counts for one patient. Features without a
/// normal range count every value as normal.
pub fn indicator_glyphs(cohort: &Cohort, patient_id: &str, bin_width_years: f64) -> Result<IndicatorGlyphs, ViewError> {
    if cohort.patient(patient_id).is_none() {
        return Err(ViewError::UnknownPatient(patient_id.to_string()));
    }
    if !(bin_width_years > 0.0 && bin_width_years.is_finite()) {
        return Err(ViewError::Invalid(format!("bin width must be positive, got {bin_width_years}")));
    }
    let mut acc: BTreeMap<&str, BTreeMap<i64, Acc>> = BTreeMap::new();
    for e in cohort.encounters_of(patient_id) {
        let k = (e.age() / bin_width_years).floor() as i64;
        for def in cohort.catalog().numeric().filter(|f| f.code != AGE) {
            let Some(v) = e.number(&def.code) else { continue };
            let a = acc.entry(def.code.as_str()).or_default().entry(k).or_default();
            match band_of(def, v) {
                Some((Band::Below, d)) => {
                    a.n[0] += 1;
                    a.sum[0] += d;
                    a.max[0] = a.max[0].max(d);
                }
                Some((Band::Above, d)) => {
                    a.n[2] += 1;
                    a.sum[1] += d;
                    a.max[1] = a.max[1].max(d);
                }
                _ => a.n[1] += 1,
            }
        }
    }
    // catalog order is the input row order for clustering
    let codes: Vec<&str> = cohort.catalog().features().iter().map(|f| f.code.as_str()).filter(|c| acc.contains_key(c)).collect();
    let bin_keys: Vec<i64> = {
        let mut all: Vec<i64> = acc.values().flat_map(|m| m.keys().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let availability: Vec<Vec<bool>> =
        codes.iter().map(|c| bin_keys.iter().map(|k| acc[c].contains_key(k)).collect()).collect();
    let order = if codes.is_empty() { Vec::new() } else { cluster_indicators(&availability) };
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let mut bins = Vec::new();
    for &r in &order {
        for (&k, a) in &acc[codes[r]] {
            bins.push(GlyphBin {
                feature_code: codes[r].to_string(),
                age_bin: [k as f64 * bin_width_years, (k + 1) as f64 * bin_width_years],
                n_below: a.n[0],
                n_normal: a.n[1],
                n_above: a.n[2],
                dev_below: mean(a.sum[0], a.n[0]),
                dev_above: mean(a.sum[1], a.n[2]),
                max_dev_below: a.max[0],
                max_dev_above: a.max[1],
            });
        }
    }
    Ok(IndicatorGlyphs {
        patient_id: patient_id.to_string(),
        bin_width: bin_width_years,
        row_order: order.iter().map(|&r| codes[r].to_string()).collect(),
        bins,
    })
}

/// Feature × bin availability rows of a glyph payload, in its row order.
pub fn availability_matrix(glyphs: &IndicatorGlyphs) -> Vec<Vec<bool>> {
    let mut keys: Vec<f64> = glyphs.bins.iter().map(|b| b.age_bin[0]).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    glyphs
        .row_order
        .iter()
        .map(|code| {
            keys.iter()
                .map(|k| glyphs.bins.iter().any(|b| &b.feature_code == code && b.age_bin[0] == *k))
                .collect()
        })
        .collect()
}

/// 1 − |A∩B| / |A∪B|; two empty rows are at distance 0.
pub fn jaccard_distance(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

/// Average-linkage agglomerative clustering under Jaccard distance; returns
/// the dendrogram leaf order. Ties merge the pair whose smallest member
/// indices are lexicographically smallest, and the cluster with the smaller
/// smallest member goes left.
pub fn cluster_indicators(availability: &[Vec<bool>]) -> Vec<usize> {
    let n = availability.len();
    let d: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| jaccard_distance(&availability[i], &availability[j])).collect()).collect();
    // clusters kept sorted by their smallest member
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        s += d[i][j];
                    }
                }
                let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                if best.is_none_or(|(bd, _, _)| avg < bd) {
                    best = Some((avg, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters");
        let right = clusters.remove(b);
        clusters[a].extend(right);
    }
    clusters.pop().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::views::tests::tiny_cohort;
    use crate::cdm::FeatureCatalog;

    #[test]
    fn jaccard_values() {
        assert_eq!(jaccard_distance(&[true, true, false], &[true, false, true]), 1.0 - 1.0 / 3.0);
        assert_eq!(jaccard_distance(&[false, false], &[false, false]), 0.0);
        assert_eq!(jaccard_distance(&[true, false], &[false, true]), 1.0);
    }

    #[test]
    fn identical_rows_are_adjacent() {
        let rows = vec![vec![true, false, false], vec![false, true, true], vec![true, false, false]];
        let order = cluster_indicators(&rows);
        let pos = |r: usize| order.iter().position(|&x| x == r).unwrap();
        assert_eq!(pos(0).abs_diff(pos(2)), 1);
    }

    #[test]
    fn shared_bins_cluster_first() {
        // d(A,B) = 0, d(A,C) = d(B,C) = 1
        let rows = vec![vec![true, true, false], vec![false, false, true], vec![true, true, false]];
        assert_eq!(cluster_indicators(&rows), vec![0, 2, 1]);
        assert_eq!(cluster_indicators(&[vec![true]]), vec![0]);
    }

    #[test]
    fn egfr_bin_deviation() {
        let egfr = FeatureCatalog::clinic_default().get("egfr").unwrap().clone();
        assert_eq!((egfr.normal_low, egfr.normal_high), (Some(60.0), Some(120.0)));
        let (b55, d55) = band_of(&egfr, 55.0).unwrap();
        let (b65, _) = band_of(&egfr, 65.0).unwrap();
        assert_eq!((b55, b65), (Band::Below, Band::Normal));
        assert!((d55 - 5.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn glyph_conservation_and_order() {
        let c = tiny_cohort();
        let g = indicator_glyphs(&c, "p1", 0.25).unwrap();
        let mut sorted = g.row_order.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["dbp", "hgb"]);
        for code in ["hgb", "dbp"] {
            let total: usize =
                g.bins.iter().filter(|b| b.feature_code == code).map(|b| b.n_below + b.n_normal + b.n_above).sum();
            let observed = c.encounters_of("p1").iter().filter(|e| e.number(code).is_some()).count();
            assert_eq!(total, observed);
        }
        // dbp 85 and 95 against 60..80: deviations 0.25 and 0.75 in one bin
        let b = g.bins.iter().find(|b| b.feature_code == "dbp").unwrap();
        assert_eq!(b.age_bin, [60.0, 60.25]);
        assert_eq!((b.n_below, b.n_normal, b.n_above), (0, 0, 2));
        assert!((b.dev_above - 0.5).abs() < 1e-12);
        assert_eq!(b.max_dev_above, 0.75);
        assert_eq!(b.dev_below, 0.0);
        assert!(g.bins.iter().all(|b| b.feature_code != "sbp"));
        assert!(indicator_glyphs(&c, "p1", 0.0).is_err());
        assert!(indicator_glyphs(&c, "zz", 0.25).is_err());
    }
}
