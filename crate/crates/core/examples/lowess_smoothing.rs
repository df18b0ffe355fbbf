//! Robust LOWESS on a noisy sine with a few gross outliers.

use trajvis::trajectory::{lowess, DEFAULT_ROBUST_ITERS, DEFAULT_SPAN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x: Vec<f64> = (0..60).map(|i| i as f64 / 6.0).collect();
    let mut y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + 0.1 * ((i * 37 % 11) as f64 / 11.0 - 0.5)).collect();
    for i in [7, 23, 41] {
        y[i] += 4.0;
    }
    let plain = lowess(&x, &y, DEFAULT_SPAN, 0)?;
    let robust = lowess(&x, &y, DEFAULT_SPAN, DEFAULT_ROBUST_ITERS)?;
    println!("{:>6} {:>8} {:>8} {:>8}", "x", "y", "plain", "robust");
    for i in (0..x.len()).step_by(5) {
        println!("{:>6.2} {:>8.3} {:>8.3} {:>8.3}", x[i], y[i], plain[i], robust[i]);
    }
    Ok(())
}
