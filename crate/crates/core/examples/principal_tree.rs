//! Fit a principal tree to a noisy Y and print the objective trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajvis::trajectory::{degrees, fit_principal_tree_observed, TreeParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut points = Vec::new();
    for k in 0..600 {
        let t: f64 = rng.random_range(0.0..1.0);
        let p = match k % 3 {
            0 => [-t * 2.0, 0.0],
            1 => [t * 1.5, t * 1.5],
            _ => [t * 1.5, -t * 1.5],
        };
        points.push([p[0] + rng.random_range(-0.08..0.08), p[1] + rng.random_range(-0.08..0.08)]);
    }
    let params = TreeParams { landmarks: 30, ..TreeParams::default() };
    let tree = fit_principal_tree_observed(&points, &params, |s| {
        println!("iter {:>2}  J = {:.6}", s.iteration, s.objective);
    })?;
    let forks = degrees(tree.len(), &tree.edges).iter().filter(|&&d| d >= 3).count();
    println!("converged {} after {} iterations, {forks} fork(s)", tree.converged, tree.iterations);
    Ok(())
}
