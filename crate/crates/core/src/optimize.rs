//! Scalar maximization of concentrated likelihoods: a coarse grid pass to
//! bracket the global optimum followed by golden-section search with
//! parabolic (Brent) refinement.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1; // 2 - phi

/// Maximizes `f` over the open interval (lo, hi).
///
/// A `grid_points`-point scan locates the best bracket (so secondary local
/// maxima do not trap the refinement), then Brent iterations shrink it until
/// the argument moves by less than `tol`. Errors if the iteration budget is
/// exhausted, reporting the last bracket.
pub fn maximize_scalar(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
    grid_points: usize,
    max_iter: usize,
) -> Result<(f64, f64)> {
    assert!(lo < hi, "empty search interval");
    assert!(grid_points >= 3);
    let step = (hi - lo) / (grid_points - 1) as f64;
    let mut best_idx = 0;
    let mut best_val = f64::NEG_INFINITY;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
    for (i, &g) in grid.iter().enumerate() {
        let v = f(g);
        if v > best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let a = if best_idx == 0 { grid[0] } else { grid[best_idx - 1] };
    let b = if best_idx + 1 == grid_points {
        grid[grid_points - 1]
    } else {
        grid[best_idx + 1]
    };

    let (x, neg_fx) = brent_min(|t| -f(t), a, b, tol, max_iter)?;
    // never return worse than the grid winner
    if -neg_fx >= best_val {
        Ok((x, -neg_fx))
    } else {
        Ok((grid[best_idx], best_val))
    }
}

/// Classic Brent minimization on [a, b].
fn brent_min(
    f: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64)> {
    let eps = f64::EPSILON.sqrt();
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + eps;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok((x, fx));
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // parabolic interpolation through (v, w, x)
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Err(Error::numerical(
        "maximize_scalar",
        format!("no convergence within iteration budget; last bracket [{a}, {b}]"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn finds_parabola_peak() {
        let (x, v) = maximize_scalar(|t| -(t - 0.3).powi(2) + 2.0, -1.0, 1.0, 1e-10, 33, 200)
            .unwrap();
        assert_relative_eq!(x, 0.3, epsilon = 1e-8);
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn picks_global_peak_among_two() {
        // two bumps: the taller one sits near 0.7
        let f = |t: f64| (-(t + 0.5).powi(2) * 40.0).exp() + 1.5 * (-(t - 0.7).powi(2) * 40.0).exp();
        let (x, _) = maximize_scalar(f, -1.0, 1.0, 1e-9, 65, 300).unwrap();
        assert_relative_eq!(x, 0.7, epsilon = 1e-6);
    }

    #[test]
    fn handles_peak_at_interval_edge() {
        let (x, _) = maximize_scalar(|t| t, 0.0, 1.0, 1e-9, 21, 200).unwrap();
        assert!(x > 1.0 - 1e-6);
    }
}
