//! Composite Simpson rules on uniform grids.

use crate::error::{Error, Result};

/// Nodes and weights of the composite Simpson rule with `points` samples
/// (must be odd and at least 3) on `[a, b]`.
pub fn simpson_rule(a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(points >= 3 && points % 2 == 1, "Simpson needs an odd point count");
    let intervals = points - 1;
    let h = (b - a) / intervals as f64;
    let nodes = (0..points).map(|i| a + i as f64 * h).collect();
    let weights = (0..points)
        .map(|i| {
            let c = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, points: usize) -> f64 {
    let (x, w) = simpson_rule(a, b, points);
    x.iter().zip(&w).map(|(&x, &w)| w * f(x)).sum()
}

/// Simpson at `coarse` points, cross-checked against `fine` points. Errors if
/// the two disagree by more than `rel_tol` (relative to the fine value, or
/// absolute when the integral is below `abs_floor`).
pub fn checked_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    coarse: usize,
    fine: usize,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<f64> {
    let c = simpson(&f, a, b, coarse);
    let fv = simpson(&f, a, b, fine);
    if (c - fv).abs() > rel_tol * fv.abs().max(abs_floor) {
        return Err(Error::Quadrature { coarse: c, fine: fv });
    }
    Ok(fv)
}

/// Doubles the Simpson resolution, starting from `start` points, until two
/// successive estimates agree to `rel_tol`, up to `max_points`.
pub fn converged_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    start: usize,
    max_points: usize,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<f64> {
    let mut coarse = start;
    loop {
        let fine = 2 * coarse - 1;
        match checked_simpson(&f, a, b, coarse, fine, rel_tol, abs_floor) {
            Ok(v) => return Ok(v),
            Err(e) if fine >= max_points => return Err(e),
            Err(_) => coarse = fine,
        }
    }
}
