use bouncy::bps::{
    intensity_from_gradient, simulate, simulate_into, ConvexLineSearch, Energy, EnergyModel, PhaseState,
    RefreshmentScheme, RunLimits, Thinned, Trajectory,
};
use bouncy::Error;
use bouncy::estimators::{reducibility_witness, MomentAccumulator, PathEstimate, DEFAULT_BATCHES};
use bouncy::models::{
    iso_gaussian_bounce_time, quadratic_ray_time, ExpFamilyPosterior, IsotropicGaussian, PoissonFamily, SparseGaussian,
    SparseSymmetric,
};
use bouncy::ppsim::{first_arrival_convex, first_arrival_thinning, IntensityEnvelope, LINE_SEARCH_TOL};
use bouncy::stats::ks_two_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn within(est: PathEstimate, truth: f64, k: f64) -> bool {
    (est.value - truth).abs() <= k * est.std_error
}

fn correlated() -> SparseGaussian {
    SparseGaussian::new(SparseSymmetric::from_triplets(2, [(0, 0, 2.0), (1, 1, 1.0), (0, 1, -0.8)])).unwrap()
}

fn run_moments<M: EnergyModel>(model: &M, horizon: f64, seed: u64) -> MomentAccumulator {
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scheme = RefreshmentScheme::global(1.0);
    let init = PhaseState::new(vec![0.1; d], scheme.initial_velocity(d, &mut rng)).unwrap();
    let mut acc = MomentAccumulator::new((0..d).collect(), horizon, DEFAULT_BATCHES);
    simulate_into(model, &scheme, &init, horizon, RunLimits::default(), &mut rng, &mut acc).unwrap();
    acc
}

#[test]
fn isotropic_gaussian_is_stationary() {
    let model = IsotropicGaussian::new(2, 1.0).unwrap();
    let acc = run_moments(&model, 2e4, 1);
    for m in &acc.moments {
        assert!(within(m.mean(), 0.0, 4.0), "{:?}", m.mean());
        assert!(within(m.second_moment(), 0.5, 4.0), "{:?}", m.second_moment());
    }
}

#[test]
fn strategies_agree_on_a_correlated_gaussian() {
    let truth = correlated().marginal_variances();
    let convex = ConvexLineSearch::new(correlated());
    let thinned = Thinned {
        model: correlated(),
        envelope: |x: &[f64], v: &[f64], s: f64| {
            let delta = 0.5;
            let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b * (s + delta)).collect();
            let mut g = vec![0.0; 2];
            correlated().gradient(&y, &mut g);
            IntensityEnvelope::new(intensity_from_gradient(&g, v), delta)
        },
    };
    let runs = [
        run_moments(&correlated(), 2e4, 2),
        run_moments(&convex, 2e4, 3),
        run_moments(&thinned, 2e4, 4),
    ];
    for acc in &runs {
        for (m, t) in acc.moments.iter().zip(&truth) {
            assert!(within(m.variance(), *t, 4.0), "{:?} vs {t}", m.variance());
        }
    }
}

#[test]
fn closed_form_matches_line_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(1..6);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let u: f64 = rng.random_range(1e-6..1.0);
        let closed = iso_gaussian_bounce_time(&x, &v, u);
        let ray = |t: f64| x.iter().zip(&v).map(|(a, b)| (a + b * t).powi(2)).sum::<f64>();
        let searched = first_arrival_convex(ray, -u.ln(), LINE_SEARCH_TOL, f64::INFINITY).unwrap();
        let t = searched.time().expect("quadratic energy always fires");
        worst = worst.max((t - closed).abs());
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn thinning_matches_inversion_for_linear_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (a, b) in [(0.5, 1.0), (-1.0, 2.0), (2.0, 0.0)] {
        let n = 10_000;
        let chi = |t: f64| (a + b * t).max(0.0);
        let thinned: Vec<f64> = (0..n)
            .map(|_| {
                let env = |s: f64| IntensityEnvelope::new(chi(s + 0.3), 0.3);
                first_arrival_thinning(chi, env, f64::INFINITY, &mut rng).unwrap().time().unwrap()
            })
            .collect();
        let inverted: Vec<f64> = (0..n)
            .map(|_| {
                let e = -rng.random::<f64>().ln();
                quadratic_ray_time(a, b, e).unwrap()
            })
            .collect();
        let ks = ks_two_sample(&thinned, &inverted, 0.01);
        assert!(ks.passes(), "a={a} b={b} {ks:?}");
    }
}

fn poisson_oracle(prior_scale: f64, y: f64) -> (f64, f64) {
    let n = 20_000;
    let (lo, hi) = (-12.0, 8.0);
    let h = (hi - lo) / n as f64;
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let x = lo + h * i as f64;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let p = w * (-(prior_scale * x * x - y * x + x.exp())).exp();
        z += p;
        m1 += p * x;
        m2 += p * x * x;
    }
    (m1 / z, m2 / z - (m1 / z).powi(2))
}

#[test]
fn superposition_targets_the_poisson_posterior() {
    for y in [0.0, 3.0] {
        let model = ExpFamilyPosterior::new(PoissonFamily, y, 0.5).unwrap();
        let acc = run_moments(&model, 3e4, 7 + y as u64);
        let (mean, var) = poisson_oracle(0.5, y);
        assert!(within(acc.moments[0].mean(), mean, 4.0), "{:?} vs {mean}", acc.moments[0].mean());
        assert!(within(acc.moments[0].variance(), var, 4.0), "{:?} vs {var}", acc.moments[0].variance());
    }
}

#[test]
fn refreshment_breaks_the_unit_ball_barrier() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let frozen = reducibility_witness(200, 0.0, f64::INFINITY, &mut rng).unwrap();
    assert!(frozen.min_norm >= 1.0 - 1e-9);
    assert!(frozen.recursion_error < 1e-9);
    let mixing = reducibility_witness(u64::MAX, 2.0, 100.0, &mut rng).unwrap();
    assert!(mixing.min_norm < 1.0, "{}", mixing.min_norm);
    assert!(mixing.refreshes > 0);
}

#[test]
fn event_cap_stops_the_run() {
    let model = IsotropicGaussian::new(3, 1.0).unwrap();
    let scheme = RefreshmentScheme::global(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let init = PhaseState::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
    let limits = RunLimits {
        max_events: Some(25),
        wall_clock: None,
    };
    let mut traj = Trajectory::new();
    let err = simulate_into(&model, &scheme, &init, 1e9, limits, &mut rng, &mut traj).unwrap_err();
    assert!(matches!(err, Error::EventCap(25)), "{err}");
    assert!(traj.segments.len() <= 26);
}

#[test]
fn same_seed_same_trajectory() {
    let model = IsotropicGaussian::new(4, 0.5).unwrap();
    let scheme = RefreshmentScheme::global(1.0);
    let init = PhaseState::new(vec![0.3; 4], vec![1.0, -1.0, 0.5, 0.0]).unwrap();
    let a = simulate(&model, &scheme, &init, 100.0, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let b = simulate(&model, &scheme, &init, 100.0, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    assert_eq!(a, b);
}
