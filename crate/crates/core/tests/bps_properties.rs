use bouncy::bps::{reflect, simulate, EventKind, PhaseState, RefreshKind, RefreshmentScheme};
use bouncy::factor_graph::{local_reflect, Factor};
use bouncy::models::{GaussianFactor, IsotropicGaussian};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vectors(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-10.0..10.0f64, d),
        prop::collection::vec(-10.0..10.0f64, d),
    )
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn reflection_is_an_involution((g, v) in (1usize..12).prop_flat_map(vectors)) {
        prop_assume!(dot(&g, &g) > 1e-6);
        let w = reflect(&g, &reflect(&g, &v).unwrap()).unwrap();
        for (a, b) in w.iter().zip(&v) {
            prop_assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn reflection_preserves_norm((g, v) in (1usize..12).prop_flat_map(vectors)) {
        prop_assume!(dot(&g, &g) > 1e-6);
        let w = reflect(&g, &v).unwrap();
        prop_assert!(close(dot(&w, &w).sqrt(), dot(&v, &v).sqrt(), 1e-12));
    }

    #[test]
    fn reflection_flips_intensity_sign((g, v) in (1usize..12).prop_flat_map(vectors)) {
        prop_assume!(dot(&g, &g) > 1e-6);
        let w = reflect(&g, &v).unwrap();
        let scale = dot(&g, &g).sqrt() * dot(&v, &v).sqrt();
        prop_assert!((dot(&g, &w) + dot(&g, &v)).abs() <= 1e-12 * (1.0 + scale));
    }

    #[test]
    fn local_reflection_leaves_other_bits(
        (x, v) in vectors(6),
        a in 0usize..6,
        b in 0usize..6,
    ) {
        prop_assume!(a != b);
        let (i, j) = (a.min(b), a.max(b));
        let f = GaussianFactor::pair(i, j, 0.7);
        let x_f = [x[i], x[j]];
        let mut g = [0.0; 2];
        f.gradient(&x_f, &mut g);
        prop_assume!(dot(&g, &g) > 1e-9);
        let w = local_reflect(&f, &x_f, &v).unwrap();
        for k in 0..6 {
            if k != i && k != j {
                prop_assert_eq!(w[k].to_bits(), v[k].to_bits());
            }
        }
    }

    #[test]
    fn restricted_refreshments_are_unit(seed in any::<u64>(), d in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = vec![0.3; d];
        for kind in [RefreshKind::RestrictedSphere, RefreshKind::RestrictedPartial { alpha: 1.0, beta: 4.0 }] {
            let w = RefreshmentScheme::new(kind, 1.0).unwrap().refresh(&v, &mut rng).unwrap();
            prop_assert!((dot(&w, &w).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectories_are_connected(seed in any::<u64>(), d in 1usize..6, rate in 0.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = IsotropicGaussian::new(d, 1.0).unwrap();
        let scheme = RefreshmentScheme::global(rate);
        let init = PhaseState::new(vec![0.5; d], scheme.initial_velocity(d, &mut rng)).unwrap();
        let traj = simulate(&model, &scheme, &init, 50.0, &mut rng).unwrap();
        for w in traj.segments.windows(2) {
            let end = w[0].end_position();
            for (a, b) in end.iter().zip(&w[1].start.position) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            prop_assert!((w[0].end_time() - w[1].start_time).abs() <= 1e-12 * (1.0 + w[1].start_time));
            prop_assert!(w[0].duration > 0.0);
        }
        prop_assert_eq!(traj.segments.last().unwrap().end, EventKind::Horizon);
        prop_assert!((traj.horizon() - 50.0).abs() < 1e-9);
    }
}
