use std::sync::OnceLock;

use kinetic_core::dvm::{dvm_collision, enumerate_collisions, CollisionTable, Lattice};
use kinetic_core::grid::{equilibrium_of, maxwellian};
use kinetic_core::spectral::{
    compute_kernel_modes, decompose_kernel, forward_transform, inverse_transform, spectral_collision_direct,
    CollisionKernel, FastCollision, KernelModes,
};
use kinetic_core::{Distribution, Moments, VelocityGrid};
use proptest::prelude::*;

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, len)
}

fn kernel() -> &'static (KernelModes, FastCollision) {
    static CELL: OnceLock<(KernelModes, FastCollision)> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = VelocityGrid::with_default_radius(2, 8, 5.0).unwrap();
        let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
        let fast = FastCollision::new(decompose_kernel(&km, km.n_modes()).unwrap());
        (km, fast)
    })
}

fn lattice_table() -> &'static CollisionTable {
    static CELL: OnceLock<CollisionTable> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = VelocityGrid::with_default_radius(2, 6, 3.0).unwrap();
        enumerate_collisions(&Lattice::from_grid(&g).unwrap(), 1.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_round_trip(dim in 1usize..=3, half in 2usize..=4, seed in values(512)) {
        let n = 2 * half;
        let g = VelocityGrid::with_default_radius(dim, n, 4.0).unwrap();
        let f = Distribution::new(g, seed[..g.len()].to_vec()).unwrap();
        let back = inverse_transform(&forward_transform(&f).unwrap());
        let err = back.values().iter().zip(f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12, "{err:e}");
    }

    #[test]
    fn equilibrium_projection_is_idempotent(
        rho in 0.2..3.0f64,
        ux in -0.8..0.8f64,
        uy in -0.8..0.8f64,
        t in 0.4..2.0f64,
    ) {
        let g = VelocityGrid::with_default_radius(2, 24, 8.0).unwrap();
        let m = maxwellian(&Moments::new(2, rho, &[ux, uy], t), &g).unwrap();
        let once = equilibrium_of(&m).unwrap();
        let twice = equilibrium_of(&once).unwrap();
        prop_assert!(twice.l1_distance(&once).unwrap() <= 1e-10 * once.l1_norm());
        let (a, b) = (once.conserved(), m.conserved());
        prop_assert!((a.density - b.density).abs() <= 1e-12 * b.density);
        prop_assert!((a.energy - b.energy).abs() <= 1e-10 * b.energy);
    }

    #[test]
    fn dvm_conserves_collision_invariants(seed in values(36)) {
        let table = lattice_table();
        let g = *table.lattice().grid().unwrap();
        let f = Distribution::new(g, seed).unwrap();
        let q = dvm_collision(&f, table).unwrap();
        let scale = table.max_rate() * f.l1_norm() * f.max_abs();
        let c = q.conserved();
        prop_assert!(c.density.abs() <= 1e-12 * scale);
        prop_assert!(c.momentum.iter().all(|p| p.abs() <= 1e-11 * scale));
        prop_assert!(c.energy.abs() <= 1e-11 * scale);
    }

    #[test]
    fn fast_matches_direct_and_is_bilinear(seed in values(64), scale in 0.1..4.0f64) {
        let (km, fast) = kernel();
        let f = Distribution::new(*km.grid(), seed).unwrap();
        let c = forward_transform(&f).unwrap();
        let d = spectral_collision_direct(&c, km).unwrap();
        let q = fast.apply(&c).unwrap();
        let size = d.truncated().iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(q.max_abs_diff(&d) <= 1e-10 * size.max(1e-300));
        let scaled = fast.apply(&forward_transform(&f.scaled(scale)).unwrap()).unwrap();
        let expect: Vec<_> = q.truncated().iter().map(|z| z * scale * scale).collect();
        let err = scaled.truncated().iter().zip(&expect).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10 * size * scale * scale);
        // Mass is conserved mode by mode at k = 0.
        prop_assert!(q.get(&[0, 0]).norm() <= 1e-12 * size);
    }
}
