//! Acceptance criteria, one PASS/FAIL line each. Runs sequentially inside a
//! single test so the timing criterion is not disturbed by sibling tests.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use kinetic_core::dvm::{enumerate_collisions, Lattice};
use kinetic_core::grid::{compute_moments, equilibrium_of, maxwellian};
use kinetic_core::scenario::{run_scenario, RunOptions, RunReport, ScenarioConfig};
use kinetic_core::spectral::{
    collide_direct, collision_quadrature_oracle, compute_kernel_modes, decompose_kernel, forward_transform,
    inverse_transform, spectral_collision_direct, spectral_collision_fast, CollisionKernel, FastCollision,
    SeparatedKernel, SpectralCoefficients,
};
use kinetic_core::{Distribution, Moments, VelocityGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Verdict = (bool, String);

fn config(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ScenarioConfig::load(&path).unwrap()
}

fn run(name: &str) -> RunReport {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&config(name), dir.path(), RunOptions::default()).unwrap()
}

fn check_value(r: &RunReport, name: &str) -> (bool, f64) {
    let c = r.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no check {name}"));
    (c.passed, c.value)
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn uniform(g: VelocityGrid, rng: &mut ChaCha8Rng) -> Distribution {
    Distribution::from_fn(g, |_| rng.gen_range(0.0..1.0))
}

fn coeffs(g: VelocityGrid, rng: &mut ChaCha8Rng) -> SpectralCoefficients {
    forward_transform(&uniform(g, rng)).unwrap()
}

fn crit1() -> Verdict {
    let lattice = Lattice::cube(2, 0, 4).unwrap();
    let table = enumerate_collisions(&lattice, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f: Vec<f64> = (0..lattice.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let q = table.apply(&f).unwrap();
        let scale = f.iter().sum::<f64>() * table.max_rate();
        for moment in 0..4 {
            let s: f64 = (0..lattice.len())
                .map(|i| {
                    let v = lattice.velocity(i);
                    let phi = match moment {
                        0 => 1.0,
                        1 => v[0],
                        2 => v[1],
                        _ => v[0] * v[0] + v[1] * v[1],
                    };
                    q[i] * phi
                })
                .sum();
            worst = worst.max(s.abs() / scale);
        }
    }
    (worst <= 1e-12, format!("max |sum Q phi| / (|f|_1 max_rate) = {worst:.2e} (limit 1e-12)"))
}

fn crit2() -> Verdict {
    let lattice = Lattice::cube(2, 0, 4).unwrap();
    let table = enumerate_collisions(&lattice, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let a = rng.gen_range(-1.0..1.0);
        let b = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let c = rng.gen_range(-0.5..-0.05);
        let f: Vec<f64> = (0..lattice.len())
            .map(|i| {
                let v = lattice.velocity(i);
                f64::exp(a + b[0] * v[0] + b[1] * v[1] + c * (v[0] * v[0] + v[1] * v[1]))
            })
            .collect();
        let q = table.apply(&f).unwrap();
        let fmax = f.iter().fold(0.0f64, |m, x| m.max(*x));
        let qmax = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        worst = worst.max(qmax / (fmax * fmax));
    }
    (worst <= 1e-12, format!("max |Q|_inf / |f|_inf^2 = {worst:.2e} (limit 1e-12)"))
}

fn crit3() -> Verdict {
    let g = VelocityGrid::with_default_radius(2, 16, 6.0).unwrap();
    let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = coeffs(g, &mut rng);
        let q = spectral_collision_direct(&c, &km).unwrap();
        let l1 = c.l1_norm();
        worst = worst.max(q.get(&[0, 0]).norm() / (l1 * l1));
    }
    (worst <= 1e-12, format!("max |Q_0| / |f|_1^2 = {worst:.2e} (limit 1e-12)"))
}

fn crit4() -> Verdict {
    let mut residuals = Vec::new();
    for n in [8, 16, 24, 32] {
        let g = VelocityGrid::with_default_radius(2, n, 8.0).unwrap();
        let m = maxwellian(&Moments::new(2, 1.0, &[0.0, 0.0], 1.0), &g).unwrap();
        let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
        residuals.push(collide_direct(&m, &km).unwrap().max_abs());
    }
    let decreasing = residuals.windows(2).all(|w| w[1] < w[0]);
    let drop = residuals[0] / residuals[3];
    let shown: Vec<String> = residuals.iter().map(|r| format!("{r:.2e}")).collect();
    (
        decreasing && drop >= 1e3,
        format!("|Q(M,M)|_inf at n = 8,16,24,32: [{}], drop {drop:.2e} (need strictly decreasing, drop >= 1e3)", shown.join(", ")),
    )
}

fn crit5() -> Verdict {
    let mut errors = Vec::new();
    for (n, n_angle) in [(8, 16), (12, 32), (16, 64)] {
        let g = VelocityGrid::with_default_radius(2, n, 5.0).unwrap();
        let (t, u) = ([1.0, 0.5], [0.3, 0.0]);
        let f = Distribution::from_fn(g, |v| {
            (0..2).map(|a| (-(v[a] - u[a]).powi(2) / (2.0 * t[a])).exp() / (2.0 * PI * t[a]).sqrt()).product()
        });
        let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
        let direct = collide_direct(&f, &km).unwrap();
        let oracle = collision_quadrature_oracle(&f, CollisionKernel::Maxwell, n_angle, false).unwrap();
        errors.push(rel_l2(direct.values(), oracle.values()));
    }
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let last = errors[errors.len() - 1];
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    (
        monotone && last <= 5e-2,
        format!("relative L2 direct vs oracle: [{}] (need decreasing, final <= 5e-2)", shown.join(", ")),
    )
}

fn crit6() -> Verdict {
    let g = VelocityGrid::with_default_radius(2, 16, 6.0).unwrap();
    let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
    let m = km.n_modes();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs: Vec<SpectralCoefficients> = (0..20).map(|_| coeffs(g, &mut rng)).collect();
    let direct: Vec<SpectralCoefficients> =
        inputs.iter().map(|c| spectral_collision_direct(c, &km).unwrap()).collect();
    let mut worst_ratio = 0.0f64;
    let mut full_rank_err = 0.0f64;
    for rank in [1, 2, 4, 8, 16, 32, 64, 128, m] {
        let sk = decompose_kernel(&km, rank).unwrap();
        for (c, d) in inputs.iter().zip(&direct) {
            let err = spectral_collision_fast(c, &sk).unwrap().max_abs_diff(d);
            let l1 = c.l1_norm();
            let bound = sk.reconstruction_error() * l1 * l1 * sk.physical_scale();
            if rank == m {
                full_rank_err = full_rank_err.max(err);
            }
            worst_ratio = worst_ratio.max(err / bound.max(f64::MIN_POSITIVE));
        }
    }
    (
        worst_ratio <= 1.0 && full_rank_err <= 1e-9,
        format!("max error / certified bound = {worst_ratio:.3} (limit 1); full rank error {full_rank_err:.2e} (limit 1e-9)"),
    )
}

/// Per-call time: the minimum over `samples` batches, each batch repeating
/// the call until it spans at least 20 ms.
fn best_time(samples: usize, mut f: impl FnMut()) -> f64 {
    let t = Instant::now();
    f();
    let once = t.elapsed().as_secs_f64().max(1e-7);
    let reps = ((0.02 / once).ceil() as usize).max(1);
    (0..samples)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                f();
            }
            t.elapsed().as_secs_f64() / reps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn crit7() -> Verdict {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let rank = 8;
        let ns = [16usize, 32, 64];
        let mut cases = Vec::new();
        let mut direct_32 = 0.0;
        let mut fast_32 = 0.0;
        for &n in &ns {
            let g = VelocityGrid::with_default_radius(2, n, 6.0).unwrap();
            let c = forward_transform(&Distribution::from_fn(g, |v| (-v[0] * v[0] / 2.0 - v[1] * v[1]).exp())).unwrap();
            let m = (2 * g.max_mode() + 1).pow(2);
            // Cost at fixed rank depends only on the factors being even or
            // odd, as decomposed kernels are, so the largest grid avoids
            // building its full table.
            let centre = (m / 2) as f64;
            let factors: Vec<Vec<f64>> = (0..rank)
                .map(|p| {
                    (0..m)
                        .map(|i| {
                            let x = i as f64 - centre;
                            let y = x.abs() * 0.1 * (p + 1) as f64;
                            if p % 2 == 1 { x.signum() * y.sin() } else { y.cos() }
                        })
                        .collect()
                })
                .collect();
            let fast = FastCollision::new(SeparatedKernel::from_factors(g, factors.clone(), factors, vec![0.5; m]).unwrap());
            assert_eq!(fast.packed_terms(), rank + 1);
            if n == 32 {
                let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
                let real = FastCollision::new(decompose_kernel(&km, rank).unwrap());
                assert_eq!(real.packed_terms(), rank + 1);
                fast_32 = best_time(7, || {
                    std::hint::black_box(real.apply(&c).unwrap());
                });
                direct_32 = best_time(5, || {
                    std::hint::black_box(spectral_collision_direct(&c, &km).unwrap());
                });
            }
            cases.push((fast, c));
        }
        // Rounds interleave the sizes so a transient load spike cannot skew
        // one size against the others; each size keeps its best round.
        let mut fast_times = vec![f64::INFINITY; cases.len()];
        for _ in 0..5 {
            for ((fast, c), best) in cases.iter().zip(fast_times.iter_mut()) {
                let t = best_time(2, || {
                    std::hint::black_box(fast.apply(c).unwrap());
                });
                *best = best.min(t);
            }
        }
        // Least-squares slope of log t against log n.
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = fast_times.iter().map(|t| t.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        let speedup = direct_32 / fast_32;
        let shown: Vec<String> = fast_times.iter().map(|t| format!("{t:.2e}s")).collect();
        (
            slope <= 2.5 && speedup >= 5.0,
            format!(
                "fast A = {rank} at n = 16,32,64: [{}], fitted exponent {slope:.2} (limit 2.5); n = 32 direct {direct_32:.2e}s vs fast {fast_32:.2e}s, speedup {speedup:.1}x (need >= 5)",
                shown.join(", ")
            ),
        )
    })
}

fn crit8(bkw: &RunReport) -> Verdict {
    let (gate_ok, gate) = check_value(bkw, "gate_residual");
    let (ok, err) = check_value(bkw, "fourth_moment_error");
    (
        gate_ok && ok,
        format!("oracle gate residual {gate:.2e} (limit 1e-2); max relative M4 error {err:.2e} (limit 1e-2)"),
    )
}

fn crit9(bkw: &RunReport) -> Verdict {
    let (ok, inc) = check_value(bkw, "entropy_increase");
    (ok, format!("max per-step entropy change / |H| = {inc:.2e} (limit 1e-8)"))
}

fn crit10() -> Verdict {
    let r = run("ap_sweep.toml");
    let records = r.results["records"].as_array().unwrap();
    let of = |stepper: &'static str| records.iter().filter(move |x| x["stepper"] == stepper);
    let imex_stable = of("penalized-imex").all(|x| x["stable"] == Value::Bool(true));
    let at = |stepper: &'static str| of(stepper).find(|x| x["epsilon"].as_f64() == Some(1e-8)).unwrap().clone();
    let dist = at("penalized-imex")["first_step_equilibrium_distance"].as_f64().unwrap_or(f64::INFINITY);
    let rk4_flagged = at("rk4")["stable"] == Value::Bool(false);
    (
        imex_stable && dist <= 1e-6 && rk4_flagged,
        format!(
            "IMEX stable for all eps: {imex_stable}; |f - M[f]|_1/rho after one step at eps = 1e-8: {dist:.2e} (limit 1e-6); RK4 flagged unstable: {rk4_flagged}"
        ),
    )
}

fn crit11() -> Verdict {
    let r = run("sod_kinetic.toml");
    let (ok_k, k) = check_value(&r, "kinetic_euler_density_relative_l1");
    let (ok_e, e) = check_value(&r, "euler_exact_density_relative_l1");
    (ok_k && ok_e, format!("kinetic vs Euler {k:.2e} (limit 2e-2); Euler (400 cells) vs exact {e:.2e} (limit 2e-2)"))
}

fn crit12() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut transform = 0.0f64;
    for (dim, n) in [(1, 32), (2, 16), (3, 8)] {
        let g = VelocityGrid::with_default_radius(dim, n, 5.0).unwrap();
        for _ in 0..100 {
            let f = uniform(g, &mut rng);
            let c = forward_transform(&f).unwrap();
            let back = inverse_transform(&c);
            let scale = f.max_abs();
            let round_trip = back.values().iter().zip(f.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
            let energy: f64 = f.values().iter().map(|x| x * x).sum::<f64>() / g.len() as f64;
            let parseval = (c.raw().iter().map(|z| z.norm_sqr()).sum::<f64>() - energy).abs() / energy;
            let mass = compute_moments(&f).unwrap().density;
            let mass_err = (c.get(&[0; 3][..dim]).re * (2.0 * g.half_width()).powi(dim as i32) - mass).abs() / mass;
            let herm = c.hermitian_defect() / c.l1_norm();
            transform = transform.max(round_trip).max(parseval).max(mass_err).max(herm);
        }
    }
    let g = VelocityGrid::with_default_radius(2, 32, 8.0).unwrap();
    let mut projection = 0.0f64;
    for _ in 0..100 {
        let mut f = Distribution::zeros(g);
        for _ in 0..2 {
            let m = Moments::new(
                2,
                rng.gen_range(0.5..1.5),
                &[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                rng.gen_range(0.5..1.5),
            );
            f = f.axpy(1.0, &maxwellian(&m, &g).unwrap()).unwrap();
        }
        let m1 = equilibrium_of(&f).unwrap();
        let m2 = equilibrium_of(&m1).unwrap();
        let idem = m1.values().iter().zip(m2.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / m1.max_abs();
        let (cf, cm) = (f.conserved().as_vec(2), m1.conserved().as_vec(2));
        let moments = cf.iter().zip(&cm).fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / cf[0].abs().max(cf[3].abs())));
        projection = projection.max(idem).max(moments);
    }
    (
        transform <= 1e-12 && projection <= 1e-12,
        format!("transform identities {transform:.2e}, projection idempotence and moments {projection:.2e} (limit 1e-12)"),
    )
}

fn criterion(id: usize, budget_s: f64, f: impl FnOnce() -> Verdict) -> bool {
    let t = Instant::now();
    let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        }
    };
    let elapsed = t.elapsed().as_secs_f64();
    let in_time = elapsed < budget_s;
    let passed = ok && in_time;
    println!(
        "{} criterion {id:>2}: {detail}; {elapsed:.2}s (budget {budget_s}s{})",
        if passed { "PASS" } else { "FAIL" },
        if in_time { "" } else { ", exceeded" }
    );
    passed
}

#[test]
fn acceptance_criteria() {
    let mut results = vec![
        criterion(1, 1.0, crit1),
        criterion(2, 1.0, crit2),
        criterion(3, 10.0, crit3),
        criterion(4, 60.0, crit4),
        criterion(5, 120.0, crit5),
        criterion(6, 60.0, crit6),
        criterion(7, 120.0, crit7),
    ];
    let t = Instant::now();
    let bkw = catch_unwind(|| run("bkw_verification.toml"));
    let bkw_time = t.elapsed().as_secs_f64();
    match &bkw {
        Ok(r) => {
            results.push(criterion(8, 120.0 - bkw_time, || crit8(r)));
            results.push(criterion(9, 120.0 - bkw_time, || crit9(r)));
        }
        Err(_) => {
            println!("FAIL criterion  8: BKW run panicked");
            println!("FAIL criterion  9: BKW run panicked");
            results.extend([false, false]);
        }
    }
    println!("     (criteria 8 and 9 share one BKW run of {bkw_time:.1}s)");
    results.push(criterion(10, 60.0, crit10));
    results.push(criterion(11, 300.0, crit11));
    results.push(criterion(12, 5.0, crit12));
    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    assert_eq!(passed, results.len());
}
