//! 1D compressible Euler equations `u_t + F(u)_x = 0` with
//! `u = (rho, rho w, E)`, `F = (rho w, rho w^2 + p, (E + p) w)` and
//! `E = rho w^2 / 2 + p / (gamma - 1)`.
//!
//! [`euler_step`] is a first-order Rusanov finite-volume update;
//! [`ExactRiemann`] is the exact Riemann solution used to check it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::transport::SpatialMesh;

/// `(d + 2) / d`, the adiabatic exponent of a monatomic gas with `d`
/// velocity degrees of freedom.
pub fn gamma_for_dim(dim: usize) -> f64 {
    (dim as f64 + 2.0) / dim as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Primitive {
    pub rho: f64,
    pub w: f64,
    pub p: f64,
}

impl Primitive {
    pub fn sound_speed(&self, gamma: f64) -> f64 {
        (gamma * self.p / self.rho).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    gamma: f64,
    /// Conserved `(rho, rho w, E)` per cell.
    cells: Vec<[f64; 3]>,
}

impl FluidState {
    pub fn from_primitive(gamma: f64, states: &[Primitive]) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::invalid("gamma", format!("must exceed 1, got {gamma}")));
        }
        let cells = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if !(s.rho > 0.0) {
                    return Err(Error::PositivityLoss { cell: i, what: "density", value: s.rho });
                }
                if !(s.p > 0.0) {
                    return Err(Error::PositivityLoss { cell: i, what: "pressure", value: s.p });
                }
                Ok([s.rho, s.rho * s.w, 0.5 * s.rho * s.w * s.w + s.p / (gamma - 1.0)])
            })
            .collect::<Result<_>>()?;
        Ok(Self { gamma, cells })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn conserved(&self) -> &[[f64; 3]] {
        &self.cells
    }

    pub fn primitive(&self, i: usize) -> Primitive {
        let [rho, m, e] = self.cells[i];
        let w = m / rho;
        Primitive { rho, w, p: (self.gamma - 1.0) * (e - 0.5 * rho * w * w) }
    }

    pub fn primitives(&self) -> Vec<Primitive> {
        (0..self.cells.len()).map(|i| self.primitive(i)).collect()
    }

    pub fn densities(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c[0]).collect()
    }

    /// Largest `|w| + c` over cells.
    pub fn max_wave_speed(&self) -> f64 {
        (0..self.cells.len()).map(|i| self.wave_speed(i)).fold(0.0, f64::max)
    }

    fn wave_speed(&self, i: usize) -> f64 {
        let s = self.primitive(i);
        s.w.abs() + s.sound_speed(self.gamma)
    }

    fn flux(&self, i: usize) -> [f64; 3] {
        let s = self.primitive(i);
        let e = self.cells[i][2];
        [s.rho * s.w, s.rho * s.w * s.w + s.p, (e + s.p) * s.w]
    }
}

/// One Rusanov step. Fails when `dt (|w| + c)_max / dx > 1` or when the
/// update produces nonpositive density or pressure.
pub fn euler_step(s: &FluidState, dt: f64, mesh: &SpatialMesh) -> Result<FluidState> {
    let n = mesh.n_cells();
    if s.cells.len() != n {
        return Err(Error::GridMismatch(format!("{} fluid cells for a {n}-cell mesh", s.cells.len())));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let cfl = dt * s.max_wave_speed() / mesh.dx();
    if cfl > 1.0 {
        return Err(Error::CflViolation { cfl, limit: 1.0 });
    }
    let fluxes: Vec<[f64; 3]> = (0..n).map(|i| s.flux(i)).collect();
    let speeds: Vec<f64> = (0..n).map(|i| s.wave_speed(i)).collect();
    // Interface i carries the flux between cell i and its right neighbour.
    let interface = |i: usize| -> [f64; 3] {
        let (_, r) = mesh.neighbours(i);
        let a = speeds[i].max(speeds[r]);
        let mut f = [0.0; 3];
        for c in 0..3 {
            f[c] = 0.5 * (fluxes[i][c] + fluxes[r][c]) - 0.5 * a * (s.cells[r][c] - s.cells[i][c]);
        }
        f
    };
    let right: Vec<[f64; 3]> = (0..n).map(interface).collect();
    let lam = dt / mesh.dx();
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let (l, _) = mesh.neighbours(i);
        // With free outflow the leftmost cell's left interface is between
        // the cell and its own copy.
        let left_flux = if l == i { fluxes[i] } else { right[l] };
        let mut u = s.cells[i];
        for c in 0..3 {
            u[c] -= lam * (right[i][c] - left_flux[c]);
        }
        cells.push(u);
    }
    let out = FluidState { gamma: s.gamma, cells };
    for i in 0..n {
        let p = out.primitive(i);
        if !(p.rho > 0.0) {
            return Err(Error::PositivityLoss { cell: i, what: "density", value: p.rho });
        }
        if !(p.p > 0.0) {
            return Err(Error::PositivityLoss { cell: i, what: "pressure", value: p.p });
        }
    }
    Ok(out)
}

/// Runs [`euler_step`] to `t_end` with `dt = cfl dx / (|w| + c)_max`.
pub fn evolve_euler(s: &FluidState, t_end: f64, cfl: f64, mesh: &SpatialMesh) -> Result<FluidState> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::invalid("cfl", format!("must lie in (0, 1], got {cfl}")));
    }
    let mut state = s.clone();
    let mut t = 0.0;
    while t < t_end {
        let dt = (cfl * mesh.dx() / state.max_wave_speed()).min(t_end - t);
        state = euler_step(&state, dt, mesh)?;
        t += dt;
    }
    Ok(state)
}

/// Exact solution of the Riemann problem with states `left | right` at
/// `x = 0`, sampled along rays `xi = x / t`.
#[derive(Debug, Clone, Copy)]
pub struct ExactRiemann {
    left: Primitive,
    right: Primitive,
    gamma: f64,
    p_star: f64,
    w_star: f64,
}

impl ExactRiemann {
    pub fn new(left: Primitive, right: Primitive, gamma: f64) -> Result<Self> {
        let (cl, cr) = (left.sound_speed(gamma), right.sound_speed(gamma));
        if 2.0 / (gamma - 1.0) * (cl + cr) <= right.w - left.w {
            return Err(Error::invalid("riemann", "initial states generate a vacuum"));
        }
        let f = |p: f64, s: &Primitive| -> (f64, f64) {
            let c = s.sound_speed(gamma);
            if p > s.p {
                let a = 2.0 / ((gamma + 1.0) * s.rho);
                let b = (gamma - 1.0) / (gamma + 1.0) * s.p;
                let q = (a / (p + b)).sqrt();
                ((p - s.p) * q, q * (1.0 - 0.5 * (p - s.p) / (p + b)))
            } else {
                let r = p / s.p;
                let e = (gamma - 1.0) / (2.0 * gamma);
                (2.0 * c / (gamma - 1.0) * (r.powf(e) - 1.0), r.powf(-(gamma + 1.0) / (2.0 * gamma)) / (s.rho * c))
            }
        };
        let dw = right.w - left.w;
        let mut p = (0.5 * (left.p + right.p)).max(1e-8);
        for _ in 0..100 {
            let (fl, dl) = f(p, &left);
            let (fr, dr) = f(p, &right);
            let next = (p - (fl + fr + dw) / (dl + dr)).max(1e-12);
            let done = (next - p).abs() <= 1e-15 * (next + p);
            p = next;
            if done {
                break;
            }
        }
        let (fl, _) = f(p, &left);
        let (fr, _) = f(p, &right);
        let w_star = 0.5 * (left.w + right.w) + 0.5 * (fr - fl);
        Ok(Self { left, right, gamma, p_star: p, w_star })
    }

    pub fn star_pressure(&self) -> f64 {
        self.p_star
    }

    pub fn star_velocity(&self) -> f64 {
        self.w_star
    }

    pub fn sample(&self, xi: f64) -> Primitive {
        let g = self.gamma;
        let (ps, ws) = (self.p_star, self.w_star);
        let (s, sign) = if xi <= ws { (self.left, 1.0) } else { (self.right, -1.0) };
        // Mirror the right side onto the left-wave formulas.
        let (w, x) = (sign * s.w, sign * xi);
        let ws_m = sign * ws;
        let c = s.sound_speed(g);
        let out = if ps > s.p {
            let ratio = ps / s.p;
            let gm = (g - 1.0) / (g + 1.0);
            let shock = w - c * ((g + 1.0) / (2.0 * g) * ratio + (g - 1.0) / (2.0 * g)).sqrt();
            if x <= shock {
                Primitive { rho: s.rho, w, p: s.p }
            } else {
                Primitive { rho: s.rho * (ratio + gm) / (gm * ratio + 1.0), w: ws_m, p: ps }
            }
        } else {
            let c_star = c * (ps / s.p).powf((g - 1.0) / (2.0 * g));
            let head = w - c;
            let tail = ws_m - c_star;
            if x <= head {
                Primitive { rho: s.rho, w, p: s.p }
            } else if x >= tail {
                Primitive { rho: s.rho * (ps / s.p).powf(1.0 / g), w: ws_m, p: ps }
            } else {
                let k = 2.0 / (g + 1.0) + (g - 1.0) / ((g + 1.0) * c) * (w - x);
                let rho = s.rho * k.powf(2.0 / (g - 1.0));
                let wf = 2.0 / (g + 1.0) * (c + (g - 1.0) / 2.0 * w + x);
                Primitive { rho, w: wf, p: s.p * k.powf(2.0 * g / (g - 1.0)) }
            }
        };
        Primitive { w: sign * out.w, ..out }
    }

    /// Cell-centre samples at time `t` for a discontinuity at `x0`.
    pub fn profile(&self, mesh: &SpatialMesh, x0: f64, t: f64) -> Vec<Primitive> {
        mesh.centers().iter().map(|x| self.sample((x - x0) / t)).collect()
    }
}

/// The Sod states `(1, 0, 1) | (0.125, 0, 0.1)`.
pub fn sod_states() -> (Primitive, Primitive) {
    (Primitive { rho: 1.0, w: 0.0, p: 1.0 }, Primitive { rho: 0.125, w: 0.0, p: 0.1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{l1_distance, Boundary};

    #[test]
    fn uniform_state_is_steady() {
        let mesh = SpatialMesh::new(16, 0.0, 1.0, Boundary::Periodic).unwrap();
        let s = FluidState::from_primitive(2.0, &vec![Primitive { rho: 0.7, w: 0.3, p: 1.1 }; 16]).unwrap();
        let out = euler_step(&s, 0.01, &mesh).unwrap();
        for (a, b) in out.conserved().iter().zip(s.conserved()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn periodic_totals_are_conserved() {
        let mesh = SpatialMesh::new(50, 0.0, 1.0, Boundary::Periodic).unwrap();
        let states: Vec<Primitive> = mesh
            .centers()
            .iter()
            .map(|x| {
                let s = (2.0 * std::f64::consts::PI * x).sin();
                Primitive { rho: 1.0 + 0.3 * s, w: 0.2 * s, p: 1.0 + 0.1 * s }
            })
            .collect();
        let s0 = FluidState::from_primitive(2.0, &states).unwrap();
        let s1 = evolve_euler(&s0, 0.2, 0.8, &mesh).unwrap();
        for c in 0..3 {
            let a: f64 = s0.conserved().iter().map(|u| u[c]).sum();
            let b: f64 = s1.conserved().iter().map(|u| u[c]).sum();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "component {c}");
        }
    }

    #[test]
    fn exact_sod_star_state() {
        // Independent check: both pressure functions agree at p*, and for
        // gamma = 1.4 the classical values p* = 0.30313, w* = 0.92745.
        let (l, r) = sod_states();
        let e = ExactRiemann::new(l, r, 1.4).unwrap();
        assert!((e.star_pressure() - 0.30313).abs() < 1e-5);
        assert!((e.star_velocity() - 0.92745).abs() < 1e-5);
        let far_left = e.sample(-10.0);
        assert_eq!(far_left, l);
        assert_eq!(e.sample(10.0), r);
        // Continuity of pressure and velocity across the contact.
        let (a, b) = (e.sample(e.star_velocity() - 1e-9), e.sample(e.star_velocity() + 1e-9));
        assert!((a.p - b.p).abs() < 1e-9 && (a.w - b.w).abs() < 1e-9);
    }

    #[test]
    fn rusanov_sod_matches_exact_solution() {
        let mesh = SpatialMesh::new(400, 0.0, 1.0, Boundary::FreeOutflow).unwrap();
        let (l, r) = sod_states();
        let init: Vec<Primitive> = mesh.centers().iter().map(|&x| if x < 0.5 { l } else { r }).collect();
        let s = FluidState::from_primitive(gamma_for_dim(2), &init).unwrap();
        let out = evolve_euler(&s, 0.2, 0.9, &mesh).unwrap();
        let exact = ExactRiemann::new(l, r, 2.0).unwrap();
        let dens: Vec<f64> = exact.profile(&mesh, 0.5, 0.2).iter().map(|p| p.rho).collect();
        let err = l1_distance(&out.densities(), &dens, &mesh);
        assert!(err <= 0.02, "{err}");
    }

    #[test]
    fn rejects_cfl_and_vacuum() {
        let mesh = SpatialMesh::new(10, 0.0, 1.0, Boundary::Periodic).unwrap();
        let s = FluidState::from_primitive(2.0, &vec![Primitive { rho: 1.0, w: 0.0, p: 1.0 }; 10]).unwrap();
        assert!(matches!(euler_step(&s, 1.0, &mesh), Err(Error::CflViolation { .. })));
        let l = Primitive { rho: 1.0, w: -10.0, p: 0.1 };
        let r = Primitive { rho: 1.0, w: 10.0, p: 0.1 };
        assert!(ExactRiemann::new(l, r, 2.0).is_err());
        assert!(FluidState::from_primitive(2.0, &[Primitive { rho: -1.0, w: 0.0, p: 1.0 }]).is_err());
    }
}
