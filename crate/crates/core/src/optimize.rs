//! One-dimensional maximization: dense grid scan, then golden-section
//! refinement around the best grid point.

use crate::error::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_WIDTH: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    /// The optimum sits on an end of the search interval.
    pub at_boundary: bool,
    /// Every grid value was equal.
    pub flat: bool,
}

fn finite_or_floor(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximize `f` over `[lo, hi]` using `grid_points` scan points and refining
/// to a bracket narrower than `width`.
pub fn maximize<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, grid_points: usize, width: f64) -> Result<Maximum> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
    }
    if grid_points < 3 {
        return Err(Error::Domain("at least 3 grid points are needed".into()));
    }
    if !(width > 0.0) {
        return Err(Error::Domain(format!("width must be positive, got {width}")));
    }
    let last = grid_points - 1;
    let xs: Vec<f64> = (0..grid_points)
        .map(|k| if k == last { hi } else { lo + (hi - lo) * k as f64 / last as f64 })
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&x| finite_or_floor(f(x))).collect();
    let mut evaluations = grid_points;

    let (best, &top) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty grid");
    let bottom = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let flat = top - bottom <= 1e-12 * top.abs().max(1.0);

    let (mut a, mut b) = (xs[best.saturating_sub(1)], xs[(best + 1).min(last)]);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (finite_or_floor(f(c)), finite_or_floor(f(d)));
    evaluations += 2;
    while b - a > width {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = finite_or_floor(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = finite_or_floor(f(d));
        }
        evaluations += 1;
    }
    let mid = 0.5 * (a + b);
    let fm = finite_or_floor(f(mid));
    evaluations += 1;
    let (x, value) = if top > fm { (xs[best], top) } else { (mid, fm) };
    let at_boundary = (x - lo).min(hi - x) <= 2.0 * width;
    Ok(Maximum {
        x,
        value,
        evaluations,
        at_boundary,
        flat,
    })
}
