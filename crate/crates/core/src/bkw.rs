//! Closed-form BKW solution of the homogeneous 2D Maxwell-molecule equation
//! with `B = 1 / (2 pi)`, unit density and unit temperature:
//!
//! ```text
//! K(t) = 1 - exp(-t / 8) / 2
//! f(t, v) = exp(-|v|^2 / (2K)) / (2 pi K^2) * (2K - 1 + (1 - K) |v|^2 / (2K))
//! ```
//!
//! Valid for `t >= 0` (`K >= 1/2` keeps `f` nonnegative).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Distribution, Velocity, VelocityGrid};

pub fn bkw_k(t: f64) -> f64 {
    1.0 - 0.5 * (-t / 8.0).exp()
}

fn bkw_k_dot(t: f64) -> f64 {
    (-t / 8.0).exp() / 16.0
}

fn check(grid: &VelocityGrid, t: f64) -> Result<()> {
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn r2(v: &Velocity) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

pub fn bkw_value(t: f64, v: &Velocity) -> f64 {
    let k = bkw_k(t);
    let s = r2(v);
    (-s / (2.0 * k)).exp() / (2.0 * PI * k * k) * (2.0 * k - 1.0 + (1.0 - k) * s / (2.0 * k))
}

/// Time derivative of [`bkw_value`]; equals `Q(f, f)` for the exact solution.
pub fn bkw_time_derivative(t: f64, v: &Velocity) -> f64 {
    let k = bkw_k(t);
    let s = r2(v);
    let e = (-s / (2.0 * k)).exp();
    let p = 2.0 * k - 1.0 + (1.0 - k) * s / (2.0 * k);
    // d/dK of e / (2 pi K^2) * p
    let de = e * s / (2.0 * k * k);
    let dp = 2.0 - s / (2.0 * k * k);
    let d = (de * p + e * dp) / (2.0 * PI * k * k) - 2.0 * e * p / (2.0 * PI * k * k * k);
    d * bkw_k_dot(t)
}

/// `int |v|^4 f dv = 8 K (2 - K)`.
pub fn bkw_fourth_moment(t: f64) -> f64 {
    let k = bkw_k(t);
    8.0 * k * (2.0 - k)
}

pub fn bkw_distribution(grid: &VelocityGrid, t: f64) -> Result<Distribution> {
    check(grid, t)?;
    Ok(Distribution::from_fn(*grid, |v| bkw_value(t, v)))
}

pub fn bkw_derivative_distribution(grid: &VelocityGrid, t: f64) -> Result<Distribution> {
    check(grid, t)?;
    Ok(Distribution::from_fn(*grid, |v| bkw_time_derivative(t, v)))
}

/// Discrete `sum w_j |v_j|^4 f_j`.
pub fn fourth_moment(f: &Distribution) -> f64 {
    let w = f.grid().cell_volume();
    f.grid().nodes().zip(f.values()).map(|(v, x)| r2(&v).powi(2) * x).sum::<f64>() * w
}
