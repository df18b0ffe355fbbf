//! Principal-tree fitting (simple principal tree / reversed graph embedding).
//!
//! The objective over landmarks `Z`, soft responsibilities `R` and a spanning
//! tree `B` is
//!
//! ```text
//! J = (1/n) [Σ_n Σ_k r_nk ‖x_n − z_k‖² + σ Σ_n Σ_k r_nk ln r_nk] + (λ/M) Σ_{(i,j)∈B} ‖z_i − z_j‖²
//! ```
//!
//! Both terms are averages, so one λ means the same stiffness whatever the
//! number of points or landmarks.
//!
//! and each iteration minimizes it exactly over `B` (MST of the landmarks),
//! then `R` (row softmax of `−‖x − z‖²/σ`), then `Z` (the linear system
//! `(Γ + λ(n/M) L) Z = Rᵀ X`). Every step is a block minimization, so `J` cannot go
//! up except through rounding.

use nalgebra::{DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::mst::{is_spanning_tree, mst, sq_dist};
use super::TrajectoryError;

pub const DEFAULT_LANDMARKS: usize = 100;
pub const DEFAULT_SIGMA_FACTOR: f64 = 0.3;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-5;

/// Largest point count used when estimating the median pairwise distance.
pub const SIGMA_SAMPLE: usize = 2000;

const KMEANS_MAX_ITERS: usize = 100;

/// Relative objective increase still attributed to floating-point rounding.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub landmarks: usize,
    /// Bandwidth; `None` means `DEFAULT_SIGMA_FACTOR` × median pairwise distance.
    pub sigma: Option<f64>,
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Keep the final `n × M` responsibility matrix on the tree.
    #[serde(default)]
    pub keep_responsibilities: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            landmarks: DEFAULT_LANDMARKS,
            sigma: None,
            lambda: DEFAULT_LAMBDA,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            keep_responsibilities: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalTree {
    pub landmarks: Vec<[f64; 2]>,
    /// Sorted `(i, j)` pairs with `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// Nearest landmark per input point (lowest index on ties).
    pub assignments: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsibilities: Option<Vec<Vec<f64>>>,
    /// Objective after each completed iteration.
    pub fit_trace: Vec<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PrincipalTree {
    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn degrees(&self) -> Vec<usize> {
        super::mst::degrees(self.landmarks.len(), &self.edges)
    }

    pub fn nearest_landmark(&self, p: &[f64; 2]) -> usize {
        nearest(&self.landmarks, p)
    }
}

/// State after one iteration, handed to a fit observer.
#[derive(Debug, Clone, Copy)]
pub struct IterationSnapshot<'a> {
    pub iteration: usize,
    pub landmarks: &'a [[f64; 2]],
    pub edges: &'a [(usize, usize)],
    pub objective: f64,
}

pub(crate) fn nearest(landmarks: &[[f64; 2]], p: &[f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, z) in landmarks.iter().enumerate() {
        let d = sq_dist(p, z);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// Median Euclidean distance over all pairs, computed on an evenly strided
/// subsample of at most [`SIGMA_SAMPLE`] points.
pub fn median_pairwise_distance(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let sample: Vec<[f64; 2]> = if n > SIGMA_SAMPLE {
        (0..SIGMA_SAMPLE).map(|i| points[i * n / SIGMA_SAMPLE]).collect()
    } else {
        points.to_vec()
    };
    let mut d = Vec::with_capacity(sample.len() * sample.len().saturating_sub(1) / 2);
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            d.push(sq_dist(&sample[i], &sample[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// Lloyd's k-means with farthest-point seeding that starts from the point
/// closest to the data centroid. Empty clusters keep their previous centre.
pub fn kmeans_init(points: &[[f64; 2]], k: usize) -> Vec<[f64; 2]> {
    let n = points.len();
    let centroid = mean_of(points.iter());
    let first = nearest(points, &centroid);
    let mut centers = vec![points[first]];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centers.len() < k {
        let mut far = 0;
        for i in 1..n {
            if min_d[i] > min_d[far] {
                far = i;
            }
        }
        centers.push(points[far]);
        for i in 0..n {
            min_d[i] = min_d[i].min(sq_dist(&points[i], &points[far]));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let a = nearest(&centers, p);
            if a != assign[i] {
                assign[i] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            sums[assign[i]][0] += p[0];
            sums[assign[i]][1] += p[1];
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
    }
    centers
}

fn mean_of<'a>(it: impl Iterator<Item = &'a [f64; 2]>) -> [f64; 2] {
    let (mut sx, mut sy, mut c) = (0.0, 0.0, 0usize);
    for p in it {
        sx += p[0];
        sy += p[1];
        c += 1;
    }
    [sx / c as f64, sy / c as f64]
}

/// Row-wise softmax of `−‖x_n − z_k‖²/σ`, stabilized by the row minimum.
fn responsibilities(points: &[[f64; 2]], landmarks: &[[f64; 2]], sigma: f64) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|x| {
            let d: Vec<f64> = landmarks.iter().map(|z| sq_dist(x, z)).collect();
            let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
            let mut r: Vec<f64> = d.iter().map(|v| (-(v - dmin) / sigma).exp()).collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= s);
            r
        })
        .collect()
}

pub fn objective(
    points: &[[f64; 2]],
    landmarks: &[[f64; 2]],
    edges: &[(usize, usize)],
    r: &[Vec<f64>],
    sigma: f64,
    lambda: f64,
) -> f64 {
    let n = points.len() as f64;
    let m = landmarks.len() as f64;
    let mut fit = 0.0;
    let mut entropy = 0.0;
    for (x, row) in points.iter().zip(r) {
        for (z, &rk) in landmarks.iter().zip(row) {
            if rk > 0.0 {
                fit += rk * sq_dist(x, z);
                entropy += rk * rk.ln();
            }
        }
    }
    let smooth: f64 = edges.iter().map(|&(i, j)| sq_dist(&landmarks[i], &landmarks[j])).sum();
    (fit + sigma * entropy) / n + lambda / m * smooth
}

/// Minimizes the objective over landmark positions for fixed `R` and tree.
fn update_landmarks(
    points: &[[f64; 2]],
    current: &[[f64; 2]],
    edges: &[(usize, usize)],
    r: &[Vec<f64>],
    lambda: f64,
) -> Result<Vec<[f64; 2]>, TrajectoryError> {
    let m = current.len();
    let graph_weight = lambda * points.len() as f64 / m as f64;
    let mut gamma = vec![0.0; m];
    let mut rhs = vec![[0.0f64; 2]; m];
    for (x, row) in points.iter().zip(r) {
        for k in 0..m {
            let w = row[k];
            gamma[k] += w;
            rhs[k][0] += w * x[0];
            rhs[k][1] += w * x[1];
        }
    }
    if lambda == 0.0 {
        return Ok((0..m)
            .map(|k| if gamma[k] > 0.0 { [rhs[k][0] / gamma[k], rhs[k][1] / gamma[k]] } else { current[k] })
            .collect());
    }
    let mut a = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        a[(k, k)] = gamma[k];
    }
    for &(i, j) in edges {
        a[(i, i)] += graph_weight;
        a[(j, j)] += graph_weight;
        a[(i, j)] -= graph_weight;
        a[(j, i)] -= graph_weight;
    }
    let b = DMatrix::from_fn(m, 2, |k, c| rhs[k][c]);
    let chol = nalgebra::Cholesky::<f64, Dyn>::new(a)
        .ok_or_else(|| TrajectoryError::Numerical("landmark system is not positive definite".into()))?;
    let z = chol.solve(&b);
    let out: Vec<[f64; 2]> = (0..m).map(|k| [z[(k, 0)], z[(k, 1)]]).collect();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TrajectoryError::Numerical("landmark update produced non-finite positions".into()));
    }
    Ok(out)
}

pub fn fit_principal_tree(points: &[[f64; 2]], params: &TreeParams) -> Result<PrincipalTree, TrajectoryError> {
    fit_principal_tree_observed(points, params, |_| {})
}

/// As [`fit_principal_tree`], calling `observer` after every iteration with
/// the landmarks, the spanning tree used in that iteration and the objective.
pub fn fit_principal_tree_observed(
    points: &[[f64; 2]],
    params: &TreeParams,
    mut observer: impl FnMut(&IterationSnapshot<'_>),
) -> Result<PrincipalTree, TrajectoryError> {
    let n = points.len();
    let m = params.landmarks;
    if m == 0 {
        return Err(TrajectoryError::Precondition("landmark count must be at least 1".into()));
    }
    if m > n {
        return Err(TrajectoryError::Precondition(format!("{m} landmarks requested for {n} points")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TrajectoryError::Precondition("coordinates must be finite".into()));
    }
    if !(params.lambda >= 0.0) || !params.lambda.is_finite() {
        return Err(TrajectoryError::Precondition(format!("graph weight must be nonnegative, got {}", params.lambda)));
    }
    if !(params.tol >= 0.0) {
        return Err(TrajectoryError::Precondition(format!("tolerance must be nonnegative, got {}", params.tol)));
    }
    let sigma = match params.sigma {
        Some(s) => s,
        None => DEFAULT_SIGMA_FACTOR * median_pairwise_distance(points),
    };
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(TrajectoryError::Precondition(format!("bandwidth must be positive, got {sigma}")));
    }
    let lambda = params.lambda;

    let mut z = kmeans_init(points, m);
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..params.max_iters {
        let next_edges = mst(&z);
        let next_r = responsibilities(points, &z, sigma);
        let next_z = update_landmarks(points, &z, &next_edges, &next_r, lambda)?;
        let j = objective(points, &next_z, &next_edges, &next_r, sigma, lambda);
        if !j.is_finite() {
            return Err(TrajectoryError::Numerical(format!("objective is not finite at iteration {}", it + 1)));
        }
        if let Some(&prev) = trace.last() {
            let scale = prev.abs().max(f64::MIN_POSITIVE);
            if j > prev {
                if j - prev <= ROUNDING_SLACK * scale {
                    // rounding noise at the optimum: keep the previous state
                    converged = true;
                    break;
                }
                return Err(TrajectoryError::Divergence { iteration: it + 1, previous: prev, current: j });
            }
        }
        debug_assert!(is_spanning_tree(m, &next_edges));
        z = next_z;
        iterations = it + 1;
        observer(&IterationSnapshot { iteration: iterations, landmarks: &z, edges: &next_edges, objective: j });
        let prev = trace.last().copied();
        trace.push(j);
        if let Some(prev) = prev {
            if (prev - j).abs() <= params.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }

    let final_edges = mst(&z);
    let assignments = points.iter().map(|p| nearest(&z, p)).collect();
    let responsibilities = params.keep_responsibilities.then(|| responsibilities(points, &z, sigma));
    Ok(PrincipalTree {
        landmarks: z,
        edges: final_edges,
        assignments,
        responsibilities,
        fit_trace: trace,
        sigma,
        lambda,
        iterations,
        converged,
    })
}
