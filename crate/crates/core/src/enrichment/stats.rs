use super::special::{chi_square_sf, student_t_two_sided};
use super::EnrichmentError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test, two-sided.
///
/// When both samples have zero variance the statistic is 0 with p = 1 for
/// equal means, and ±∞ with p = 0 otherwise; `df` is then `n_a + n_b − 2`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, EnrichmentError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EnrichmentError::Sample(format!(
            "each sample needs at least 2 values (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EnrichmentError::Sample("samples must be finite".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let (t, p) = if ma == mb { (0.0, 1.0) } else { ((ma - mb).signum() * f64::INFINITY, 0.0) };
        return Ok(WelchResult { t, df: na + nb - 2.0, p, mean_a: ma, mean_b: mb });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult { t, df, p: student_t_two_sided(t, df), mean_a: ma, mean_b: mb })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
}

/// Pearson chi-square test of independence on an r × c count table.
pub fn chi_square_test(table: &[Vec<u64>]) -> Result<ChiSquareResult, EnrichmentError> {
    let r = table.len();
    if r == 0 || table[0].is_empty() {
        return Err(EnrichmentError::Sample("empty contingency table".into()));
    }
    let c = table[0].len();
    if table.iter().any(|row| row.len() != c) {
        return Err(EnrichmentError::Sample("ragged contingency table".into()));
    }
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum::<u64>() as f64).collect();
    if let Some(i) = rows.iter().position(|v| *v == 0.0) {
        return Err(EnrichmentError::Sample(format!("row {i} has a zero marginal")));
    }
    if let Some(j) = cols.iter().position(|v| *v == 0.0) {
        return Err(EnrichmentError::Sample(format!("column {j} has a zero marginal")));
    }
    if r < 2 || c < 2 {
        return Err(EnrichmentError::Sample(format!("a {r}×{c} table has no degrees of freedom")));
    }
    let total: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = rows[i] * cols[j] / total;
            let d = table[i][j] as f64 - e;
            stat += d * d / e;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    Ok(ChiSquareResult { statistic: stat, df, p: chi_square_sf(stat, df) })
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn bh_fdr(p: &[f64]) -> Result<Vec<f64>, EnrichmentError> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(EnrichmentError::Sample(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let i = order[rank - 1];
        let scaled = if rank == m { p[i] } else { m as f64 * p[i] / rank as f64 };
        running = running.min(scaled);
        q[i] = running.min(1.0);
    }
    Ok(q)
}
