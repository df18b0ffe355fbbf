//! Robust locally weighted regression (Cleveland 1979): tricube neighbourhood
//! weights, local linear fits, bisquare robustness reweighting.

use super::TrajectoryError;
use crate::embedding::median;

pub const DEFAULT_SPAN: f64 = 2.0 / 3.0;
pub const DEFAULT_ROBUST_ITERS: usize = 3;

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

fn bisquare(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        t * t
    }
}

/// Neighbourhood size `q = floor(span · n)`, clamped to `[2, n]`.
pub fn window_size(span: f64, n: usize) -> usize {
    ((span * n as f64 + 1e-7).floor() as usize).clamp(2, n)
}

/// Local linear fit at `x[i]` with neighbourhood weights times `robust`.
fn fit_at(x: &[f64], y: &[f64], robust: &[f64], i: usize, q: usize) -> f64 {
    let n = x.len();
    let mut dist: Vec<f64> = x.iter().map(|v| (v - x[i]).abs()).collect();
    let h = {
        let (_, kth, _) = dist.select_nth_unstable_by(q - 1, f64::total_cmp);
        *kth
    };
    dist.iter_mut().zip(x).for_each(|(d, v)| *d = (v - x[i]).abs());
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let mut w = vec![0.0; n];
    for j in 0..n {
        let base = if h > 0.0 { tricube(dist[j] / h) } else if dist[j] == 0.0 { 1.0 } else { 0.0 };
        w[j] = base * robust[j];
        sw += w[j];
        sx += w[j] * x[j];
        sy += w[j] * y[j];
    }
    if sw <= 0.0 {
        return y[i];
    }
    let mx = sx / sw;
    let my = sy / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for j in 0..n {
        sxx += w[j] * (x[j] - mx) * (x[j] - mx);
        sxy += w[j] * (x[j] - mx) * (y[j] - my);
    }
    let spread = x.iter().fold(0.0f64, |m, v| m.max((v - x[i]).abs()));
    if sxx <= 1e-12 * spread * spread * sw {
        my
    } else {
        my + sxy / sxx * (x[i] - mx)
    }
}

/// Smooths `y` against `x` with one plain fit followed by `robust_iters`
/// reweighted fits. Stops early once the residual scale is negligible.
pub fn lowess(x: &[f64], y: &[f64], span: f64, robust_iters: usize) -> Result<Vec<f64>, TrajectoryError> {
    let n = x.len();
    if n != y.len() {
        return Err(TrajectoryError::Precondition(format!("x has {n} values, y has {}", y.len())));
    }
    if n < 3 {
        return Err(TrajectoryError::Precondition(format!("smoothing needs at least 3 points, got {n}")));
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(TrajectoryError::Precondition(format!("span must be in (0, 1], got {span}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(TrajectoryError::Precondition("smoothing input must be finite".into()));
    }
    let q = window_size(span, n);
    let y_range = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut robust = vec![1.0; n];
    let mut fitted: Vec<f64> = (0..n).map(|i| fit_at(x, y, &robust, i, q)).collect();
    for _ in 0..robust_iters {
        let mut abs_res: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| (a - b).abs()).collect();
        abs_res.sort_by(f64::total_cmp);
        let s = median(&abs_res);
        if s <= 1e-12 * y_range {
            break;
        }
        for j in 0..n {
            robust[j] = bisquare((y[j] - fitted[j]).abs() / (6.0 * s));
        }
        fitted = (0..n).map(|i| fit_at(x, y, &robust, i, q)).collect();
    }
    Ok(fitted)
}

/// Smooths an ordered 2-D point sequence, each coordinate against rank.
pub fn smooth_trajectory(points: &[[f64; 2]], span: f64, robust_iters: usize) -> Result<Vec<[f64; 2]>, TrajectoryError> {
    let rank: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let sx = lowess(&rank, &xs, span, robust_iters)?;
    let sy = lowess(&rank, &ys, span, robust_iters)?;
    Ok(sx.into_iter().zip(sy).map(|(a, b)| [a, b]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_is_unchanged() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let out = lowess(&x, &[4.5; 10], DEFAULT_SPAN, 3).unwrap();
        assert!(out.iter().all(|v| *v == 4.5));
    }

    #[test]
    fn linear_is_reproduced() {
        for span in [0.1, 0.3, 2.0 / 3.0, 1.0] {
            let x: Vec<f64> = (0..25).map(|i| i as f64 * 0.7).collect();
            let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.5 * v).collect();
            let out = lowess(&x, &y, span, 3).unwrap();
            for (a, b) in out.iter().zip(&y) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn window_bounds() {
        assert_eq!(window_size(2.0 / 3.0, 3), 2);
        assert_eq!(window_size(2.0 / 3.0, 6), 4);
        assert_eq!(window_size(0.01, 10), 2);
        assert_eq!(window_size(1.0, 7), 7);
    }

    #[test]
    fn outlier_is_downweighted() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        y[10] += 30.0;
        let plain = lowess(&x, &y, DEFAULT_SPAN, 0).unwrap();
        let robust = lowess(&x, &y, DEFAULT_SPAN, 3).unwrap();
        assert!((robust[9] - 4.5).abs() < (plain[9] - 4.5).abs());
        assert!((robust[9] - 4.5).abs() < 0.1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(lowess(&[0.0, 1.0], &[0.0, 1.0], 0.5, 3).is_err());
        assert!(lowess(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 0.0, 3).is_err());
        assert!(lowess(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 1.5, 3).is_err());
        assert!(smooth_trajectory(&[[0.0, 0.0], [1.0, 1.0]], 0.5, 3).is_err());
    }

    proptest! {
        #[test]
        fn translation_and_scaling_equivariance(
            pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
            dx in -50.0f64..50.0,
            dy in -50.0f64..50.0,
            c in 0.1f64..10.0,
        ) {
            let p: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
            let moved: Vec<[f64; 2]> = p.iter().map(|q| [c * q[0] + dx, c * q[1] + dy]).collect();
            let a = smooth_trajectory(&p, DEFAULT_SPAN, 3).unwrap();
            let b = smooth_trajectory(&moved, DEFAULT_SPAN, 3).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((c * u[0] + dx - v[0]).abs() < 1e-6 * (1.0 + v[0].abs()));
                prop_assert!((c * u[1] + dy - v[1]).abs() < 1e-6 * (1.0 + v[1].abs()));
            }
            prop_assert_eq!(a.len(), p.len());
        }
    }
}
