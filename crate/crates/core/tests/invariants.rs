use bdglab_core::bdg::{evolve, BdGConfig};
use bdglab_core::grid::{wrap_periodic, PhaseGrid, SpatialGrid};
use bdglab_core::interaction::{InteractionKernel, KernelSpec};
use bdglab_core::kinetic::PhaseDensity;
use bdglab_core::metrics::{sobolev_negative_norm, w2_exact, DiscreteMeasure};
use bdglab_core::state::{quasifree_init, quasifree_residual, theta, PairingSymmetry};
use ndarray::{Array2, ArrayD, IxDyn};
use proptest::prelude::*;

fn symmetry(anti: bool) -> PairingSymmetry {
    if anti {
        PairingSymmetry::Antisymmetric
    } else {
        PairingSymmetry::Symmetric
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wrapping_lands_in_the_fundamental_cell(x in -50.0f64..50.0, l in 0.1f64..5.0) {
        let w = wrap_periodic(x, l);
        prop_assert!(w >= -0.5 * l && w < 0.5 * l);
        let k = (x - w) / l;
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn gaussian_densities_are_normalized_and_round_trip(
        cx in 0.0f64..1.0, cp in -0.3f64..0.3, wx in 0.05f64..0.3, wp in 0.1f64..0.35,
    ) {
        let g = PhaseGrid::new(SpatialGrid::new(1.0, 32, 0.01).unwrap(), 32, 2.0).unwrap();
        let f = PhaseDensity::gaussian(g, (cx, cp), (wx, wp)).unwrap();
        prop_assert!((f.mass() - 1.0).abs() < 1e-12);
        prop_assert!(f.values.iter().all(|v| *v >= 0.0));
        let mut buf = Vec::new();
        f.write_snapshot(&mut buf).unwrap();
        prop_assert_eq!(PhaseDensity::read_snapshot(&buf[..]).unwrap(), f);
    }

    #[test]
    fn exact_transport_of_a_translate_costs_the_squared_shift(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..12),
        vx in -0.5f64..0.5, vy in -0.5f64..0.5,
    ) {
        let n = pts.len();
        let a = Array2::from_shape_fn((n, 2), |(i, k)| if k == 0 { pts[i].0 } else { pts[i].1 });
        let b = Array2::from_shape_fn((n, 2), |(i, k)| a[[i, k]] + if k == 0 { vx } else { vy });
        let w = vec![1.0 / n as f64; n];
        let mu = DiscreteMeasure::euclidean(a, w.clone()).unwrap();
        let nu = DiscreteMeasure::euclidean(b, w).unwrap();
        let cost = w2_exact(&mu, &nu).unwrap().cost;
        prop_assert!((cost - (vx * vx + vy * vy)).abs() < 1e-9);
    }

    #[test]
    fn negative_sobolev_norms_decrease_with_the_index(
        vals in prop::collection::vec(-1.0f64..1.0, 64), s in 0.1f64..3.0,
    ) {
        let g = ArrayD::from_shape_vec(IxDyn(&[8, 8]), vals.clone()).unwrap();
        let periods = [1.0, 2.0];
        let l2 = sobolev_negative_norm(&g, &periods, 0.0).unwrap();
        let direct = (vals.iter().map(|v| v * v).sum::<f64>() * 2.0 / 64.0).sqrt();
        prop_assert!((l2 - direct).abs() < 1e-10 * direct.max(1.0));
        let hs = sobolev_negative_norm(&g, &periods, s).unwrap();
        prop_assert!(hs <= l2 + 1e-12);
        prop_assert!(sobolev_negative_norm(&g, &periods, s + 1.0).unwrap() <= hs + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quasifree_initial_data_is_admissible(
        cx in 0.3f64..0.7, wx in 0.2f64..0.35, wp in 0.3f64..0.5,
        target in 0.0f64..0.2, anti in any::<bool>(),
    ) {
        let grid = SpatialGrid::new(1.0, 24, 1.0 / (12.0 * std::f64::consts::PI)).unwrap();
        let pg = PhaseGrid::new(grid, 24, 2.0).unwrap();
        let f = PhaseDensity::gaussian(pg, (cx, 0.0), (wx, wp)).unwrap();
        let n = 0.5 / grid.h();
        let init = quasifree_init(&f, target, grid, n, symmetry(anti)).unwrap();
        let s = &init.state;
        prop_assert!((s.op.h_trace() - 1.0).abs() < 1e-10);
        let nh = n * grid.h();
        prop_assert!(s.op.spectrum().iter().all(|l| *l * nh > -1e-10 && *l * nh < 1.0 + 1e-10));
        let th = theta(&s.pairing);
        prop_assert!(th <= init.theta_max + 1e-12);
        prop_assert!((th - init.achieved_theta).abs() < 1e-10);
        prop_assert!(s.pairing.symmetry_defect() < 1e-10);
        prop_assert!(quasifree_residual(&s.op, &s.pairing) >= 0.0);
    }

    #[test]
    fn short_evolutions_conserve_trace_and_energy(a in 0.0f64..1.0, sigma in 0.1f64..0.3, anti in any::<bool>()) {
        let grid = SpatialGrid::new(1.0, 16, 1.0 / (8.0 * std::f64::consts::PI)).unwrap();
        let pg = PhaseGrid::new(grid, 16, 2.0).unwrap();
        let f = PhaseDensity::gaussian(pg, (0.5, 0.0), (0.3, 0.45)).unwrap();
        let init = quasifree_init(&f, 0.1, grid, 0.5 / grid.h(), symmetry(anti)).unwrap();
        let k = InteractionKernel::new(KernelSpec::Gaussian { a, sigma }, grid).unwrap();
        let cfg = BdGConfig { dt: 1e-3, t_final: 0.05, observer_stride: 1, ..BdGConfig::default() };
        let tr = evolve(&init.state, &k, &cfg, &[]).unwrap();
        let o0 = tr.observations[0];
        for o in &tr.observations {
            prop_assert!((o.trace - o0.trace).abs() < 1e-10);
            prop_assert!((o.energy - o0.energy).abs() < 1e-8 * o0.energy.abs());
            prop_assert!(o.theta < 1.0);
        }
    }
}
