//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Set `BOUNCY_ACCEPTANCE_STRICT=1` to exit nonzero on any failure, including
//! the known deviations listed in `KNOWN_DEVIATIONS`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use bouncy::bps::{standard_normal, PhaseState, RefreshKind, RefreshmentScheme};
use bouncy::estimators::{MomentAccumulator, DEFAULT_BATCHES};
use bouncy::factor_graph::{local_bps_queue, local_bps_thinning, LocalOptions, LocalTrajectory, ThinningOptions};
use bouncy::models::{
    iso_gaussian_bounce_time, logistic_energy_grad, logistic_local_bps, per_datum_bound, precompute_alias,
    quadratic_ray_time, sample_thinned_factor, ChainGmrf, GridPoissonGmrf, LogisticBpsOptions, LogisticData,
};
use bouncy::ppsim::{first_arrival_convex, first_arrival_thinning, IntensityEnvelope, LINE_SEARCH_TOL};
use bouncy::stats::{chi_square_gof, ks_two_sample, mean_variance};
use bouncy_cli::config::ExperimentConfig;
use bouncy_cli::Outcome;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KS_LEVEL: f64 = 0.01;
const CHI_SQUARE_LEVEL: f64 = 0.01;
const NORM_TOLERANCE: f64 = 1e-9;
const CLOSED_FORM_TOLERANCE: f64 = 1e-8;
const RELATIVE_TOLERANCE: f64 = 0.05;
const COMBINED_SE: f64 = 3.0;
const SLOPE_BAND: (f64, f64) = (-2.0, -1.0);

/// Criteria expected to fail; each has an entry in the project notes.
const KNOWN_DEVIATIONS: [u8; 1] = [10];

struct Verdict {
    passed: bool,
    detail: String,
    /// Everything the criterion computed, for the determinism check.
    fingerprint: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>, fingerprint: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
            fingerprint: fingerprint.into(),
        }
    }
}

fn config(file: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(file);
    let (config, source) = ExperimentConfig::load(&path).expect("config parses");
    let problems = config.problems(&source);
    assert!(problems.is_empty(), "{file}: {problems:?}");
    config
}

fn experiment(config: &ExperimentConfig) -> (Outcome, String) {
    let outcome = bouncy_cli::run(config).expect("experiment runs");
    let text = outcome.summary_text(config.kind.name(), config.seed(), config.replicates());
    (outcome, text)
}

fn all_pass(outcome: &Outcome, names: &[String]) -> (bool, String) {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in names {
        match outcome.check(name) {
            Some(c) => {
                ok &= c.passed;
                detail.push(format!("{}: {}", c.name, c.detail));
            }
            None => {
                ok = false;
                detail.push(format!("{name}: missing"));
            }
        }
    }
    for c in &outcome.checks[..2] {
        ok &= c.passed;
    }
    (ok, detail.join("; "))
}

fn gaussian_stationarity() -> Verdict {
    let c = config("gaussian_moments.toml");
    let pinned = c.model.dim == Some(2) && c.model.scale == Some(1.0) && c.refresh_rate() == 1.0 && c.horizon() == 1e5;
    let (outcome, text) = experiment(&c);
    let (ok, detail) = all_pass(&outcome, &["mean_within_3se".into(), "second_moment_within_3se".into()]);
    Verdict::new(pinned && ok, detail, text)
}

fn reducibility() -> Verdict {
    let frozen = config("reducibility.toml");
    let refreshed = config("reducibility_refresh.toml");
    let pinned = frozen.refresh_rate() == 0.0
        && frozen.run.events == Some(200)
        && refreshed.refresh_rate() == 2.0
        && refreshed.horizon() == 100.0;
    let (a, ta) = experiment(&frozen);
    let (b, tb) = experiment(&refreshed);
    let min_a = a.results["min_norm"].as_f64().unwrap_or(f64::NAN);
    let min_b = b.results["min_norm"].as_f64().unwrap_or(f64::NAN);
    let passed = pinned && min_a >= 1.0 - NORM_TOLERANCE && min_b < 1.0;
    Verdict::new(
        passed,
        format!("no refreshment: min norm {min_a}; refresh rate 2: min norm {min_b}"),
        ta + &tb,
    )
}

fn closed_form_agreement() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut times = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let d = rng.random_range(1..8);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let u: f64 = rng.random_range(1e-9..1.0);
        let closed = iso_gaussian_bounce_time(&x, &v, u);
        let ray = |t: f64| x.iter().zip(&v).map(|(a, b)| (a + b * t).powi(2)).sum::<f64>();
        let searched = first_arrival_convex(ray, -u.ln(), LINE_SEARCH_TOL, f64::INFINITY)
            .ok()
            .and_then(|a| a.time())
            .unwrap_or(f64::NAN);
        let gap = (searched - closed).abs();
        worst = if gap.is_nan() { f64::INFINITY } else { worst.max(gap) };
        times.push(closed);
    }
    Verdict::new(
        worst <= CLOSED_FORM_TOLERANCE,
        format!("largest |closed form - line search| = {worst:e} over 1000 draws"),
        format!("{worst:e} {times:?}"),
    )
}

fn thinning_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let mut passed = true;
    let mut detail = Vec::new();
    for (a, b) in [(0.5, 1.0), (-1.0, 2.0), (2.0, 0.0), (1.0, -0.5)] {
        let chi = |t: f64| (a + b * t).max(0.0);
        // a decreasing rate may never fire; compare the arrival times capped at a common value
        let cap = 50.0;
        let thinned: Vec<f64> = (0..n)
            .map(|_| {
                let env = |s: f64| IntensityEnvelope::new(chi(s).max(chi(s + 0.3)), 0.3);
                first_arrival_thinning(chi, env, cap, &mut rng)
                    .expect("envelope dominates")
                    .time()
                    .unwrap_or(cap)
            })
            .collect();
        let inverted: Vec<f64> = (0..n)
            .map(|_| {
                let e = -rng.random::<f64>().ln();
                quadratic_ray_time(a, b, e).map_or(cap, |t| t.min(cap))
            })
            .collect();
        let ks = ks_two_sample(&thinned, &inverted, KS_LEVEL);
        passed &= ks.passes();
        detail.push(format!("a={a} b={b}: D={:.4} (critical {:.4})", ks.statistic, ks.critical));
    }
    let detail = detail.join("; ");
    Verdict::new(passed, detail.clone(), detail)
}

fn local_equals_global() -> Verdict {
    let c = config("global_vs_local.toml");
    let engines = c.engines();
    let pinned = c.model.dim == Some(100) && c.model.rho == Some(0.5) && c.run.probes == Some(10) && engines.len() == 3;
    let (outcome, text) = experiment(&c);
    let mut names: Vec<String> = engines.iter().map(|e| format!("{}_within_5pct_of_oracle", e.name())).collect();
    for a in 0..engines.len() {
        for b in a + 1..engines.len() {
            names.push(format!("{}_vs_{}_within_3se", engines[a].name(), engines[b].name()));
        }
    }
    let (ok, detail) = all_pass(&outcome, &names);
    Verdict::new(pinned && ok, detail, text)
}

fn checked_bounces(traj: &LocalTrajectory) -> (u64, u64) {
    (traj.sparsity_checks, traj.stats.bounces)
}

fn sparsity_invariant() -> Verdict {
    let always_on = LocalOptions::default().check_sparsity;
    let options = LocalOptions {
        check_sparsity: true,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut runs = Vec::new();
    let chain = ChainGmrf::new(100, 0.5).expect("valid chain").factor_graph();
    let (grid, _) = GridPoissonGmrf::synthetic(6, 0.5, &mut rng).expect("valid grid");
    let grid = grid.factor_graph();
    for (name, graph, horizon) in [("chain", &chain, 500.0), ("grid", &grid, 2000.0)] {
        for kind in [RefreshKind::GlobalGaussian, RefreshKind::Local] {
            let scheme = RefreshmentScheme::new(kind, 1.0).expect("valid scheme");
            let init = PhaseState::new(vec![0.0; graph.dim()], standard_normal(graph.dim(), &mut rng)).unwrap();
            let q = local_bps_queue(graph, &scheme, &init, horizon, options, &mut rng).expect("queue run");
            runs.push((format!("{name}/queue/{kind:?}"), checked_bounces(&q)));
            let t = local_bps_thinning(graph, &scheme, &init, horizon, ThinningOptions::new(0.5), options, &mut rng)
                .expect("thinning run");
            runs.push((format!("{name}/thinning/{kind:?}"), checked_bounces(&t)));
        }
    }
    let (data, _) = LogisticData::synthetic(100, 3, 1.0, &mut rng).expect("valid data");
    let tables = precompute_alias(&data);
    let init = PhaseState::new(vec![0.0; 3], standard_normal(3, &mut rng)).unwrap();
    let run = logistic_local_bps(&data, &tables, &init, 500.0, LogisticBpsOptions::default(), &mut rng).expect("logistic run");
    runs.push(("logistic".into(), checked_bounces(&run.trajectory)));
    let every = runs.iter().all(|(_, (checked, bounces))| checked == bounces && *bounces > 0);
    let total: u64 = runs.iter().map(|(_, (c, _))| c).sum();
    Verdict::new(
        always_on && every,
        format!("{total} bounces over {} local runs checked bitwise; on by default in this build: {always_on}", runs.len()),
        format!("{runs:?}"),
    )
}

fn metropolis(data: &LogisticData, steps: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let d = data.dim();
    let batches = 50;
    let per = steps / batches;
    let mut x = vec![0.0; d];
    let mut e = logistic_energy_grad(data, &x).0;
    let mut means = vec![vec![0.0; batches]; d];
    for step in 0..batches * per {
        let noise = standard_normal(d, rng);
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, z)| a + 0.6 * z).collect();
        let f = logistic_energy_grad(data, &y).0;
        if rng.random::<f64>().ln() < e - f {
            x = y;
            e = f;
        }
        for k in 0..d {
            means[k][step / per] += x[k] / per as f64;
        }
    }
    means
        .iter()
        .map(|b| {
            let (m, var) = mean_variance(b);
            (m, (var / batches as f64).sqrt())
        })
        .collect()
}

fn logistic_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (data, _) = LogisticData::synthetic(100, 2, 1.0, &mut rng).expect("valid data");
    let tables = precompute_alias(&data);
    let init = PhaseState::new(vec![0.0; 2], standard_normal(2, &mut rng)).unwrap();
    let run = logistic_local_bps(&data, &tables, &init, 2e4, LogisticBpsOptions::default(), &mut rng);
    let mh = metropolis(&data, 2_000_000, &mut rng);
    let mut passed = true;
    let mut detail = Vec::new();
    let mut fingerprint = format!("{mh:?}");
    match run {
        Ok(run) => {
            let bps = MomentAccumulator::from_path(&run.trajectory, vec![0, 1], DEFAULT_BATCHES);
            for (k, (m, se)) in mh.iter().enumerate() {
                let est = bps.moments[k].mean();
                let z = (est.value - m).abs() / est.std_error.hypot(*se);
                passed &= z <= COMBINED_SE;
                detail.push(format!("x{k}: {:.4} vs MH {m:.4} ({z:.2} se)", est.value));
                fingerprint += &format!(" {:?}", est);
            }
            let ratio = run.counters.max_ratio_ppm as f64 * 1e-6;
            passed &= ratio <= 1.0;
            detail.push(format!("max intensity/bound {ratio:.6}"));
        }
        Err(e) => {
            passed = false;
            detail.push(format!("sampler error: {e}"));
        }
    }
    let c = config("logistic_bench.toml");
    let pinned = c.model.data_sizes.as_deref() == Some(&[100, 1000, 10000][..]);
    let (outcome, text) = experiment(&c);
    let (ok, bench) = all_pass(
        &outcome,
        &["one_gradient_per_data_candidate".into(), "bounds_never_violated".into()],
    );
    detail.push(bench);
    Verdict::new(passed && pinned && ok, detail.join("; "), fingerprint + &text)
}

fn alias_law() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = 20;
    let (data, _) = LogisticData::synthetic(r, 3, 1.0, &mut rng).expect("valid data");
    let tables = precompute_alias(&data);
    let v = standard_normal(3, &mut rng);
    let bounds: Vec<f64> = (0..r).map(|i| per_datum_bound(&data, i, &v)).collect();
    let total: f64 = bounds.iter().sum();
    let q: Vec<f64> = bounds.iter().map(|b| b / total).collect();
    let mut counts = vec![0u64; r];
    for _ in 0..100_000 {
        counts[sample_thinned_factor(&tables, &v, &mut rng).expect("positive total bound")] += 1;
    }
    let test = chi_square_gof(&counts, &q, CHI_SQUARE_LEVEL);
    Verdict::new(
        test.passes(),
        format!(
            "chi-square {:.2} on {} df (critical {:.2})",
            test.statistic, test.degrees_of_freedom, test.critical
        ),
        format!("{counts:?}"),
    )
}

fn invariant_family() -> Verdict {
    let c = config("radial_invariance.toml");
    let pinned =
        c.model.k_values.as_deref() == Some(&[2, 3, 5][..]) && c.model.samples == Some(10_000) && c.horizon() == 5.0;
    let (outcome, text) = experiment(&c);
    let names: Vec<String> = [2, 3, 5].iter().map(|k| format!("k{k}_invariant")).collect();
    let (ok, detail) = all_pass(&outcome, &names);
    Verdict::new(pinned && ok, detail, text)
}

fn dimension_sweep() -> Verdict {
    let c = config("dimension_sweep.toml");
    let pinned = c.model.dims.as_deref() == Some(&[2, 4, 8, 16, 32][..]) && c.refresh_rate() == 1.0;
    let (outcome, text) = experiment(&c);
    let r = &outcome.results;
    let slope = r["slope_ess_per_event"].as_f64().unwrap_or(f64::NAN);
    let in_band = slope >= SLOPE_BAND.0 && slope <= SLOPE_BAND.1;
    let (ok, _) = all_pass(&outcome, &["ess_per_event_slope_in_band".into()]);
    let detail = format!(
        "slope of ESS(x1)/event {slope:.4} vs [{}, {}]; supplementary: ESS(x1)/(event*d) {:.4}, ESS(|x|^2)/event {:.4}",
        SLOPE_BAND.0,
        SLOPE_BAND.1,
        r["slope_ess_per_event_dim"].as_f64().unwrap_or(f64::NAN),
        r["slope_ess_norm2_per_event"].as_f64().unwrap_or(f64::NAN),
    );
    Verdict::new(pinned && ok && in_band, detail, text)
}

fn refresh_schemes() -> Verdict {
    let mut c = config("refresh_comparison.toml");
    c.sampler.refresh_rates = Some(vec![1.0]);
    let pinned = c.refresh_rate() == 1.0 && c.sampler.schemes.as_ref().is_some_and(|s| s.len() == 4);
    let (outcome, text) = experiment(&c);
    let names: Vec<String> = ["global_gaussian", "restricted_sphere", "restricted_partial", "local"]
        .iter()
        .map(|s| format!("{s}_within_5pct_of_oracle"))
        .collect();
    let (ok, detail) = all_pass(&outcome, &names);
    let tolerance_pinned = bouncy_cli::experiments::ORACLE_TOLERANCE == RELATIVE_TOLERANCE;
    Verdict::new(pinned && ok && tolerance_pinned, detail, text)
}

type Body = fn() -> Verdict;

const CRITERIA: [(u8, &str, Option<f64>, Body); 11] = [
    (1, "Gaussian stationarity", Some(30.0), gaussian_stationarity),
    (2, "reducibility counter-example", Some(1.0), reducibility),
    (3, "closed-form bounce times", Some(5.0), closed_form_agreement),
    (4, "thinning correctness", Some(10.0), thinning_correctness),
    (5, "local equals global", Some(120.0), local_equals_global),
    (6, "sparsity invariant", None, sparsity_invariant),
    (7, "logistic correctness", Some(120.0), logistic_correctness),
    (8, "alias sampler law", Some(5.0), alias_law),
    (9, "radial invariant family", Some(30.0), invariant_family),
    (10, "dimension sweep slope", Some(180.0), dimension_sweep),
    (11, "refreshment schemes", None, refresh_schemes),
];

fn attempt(body: Body) -> Verdict {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Verdict::new(false, format!("panicked: {msg}"), "")
    })
}

fn line(id: u8, name: &str, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("[{tag}] C{id} {name}: {detail}");
}

fn main() {
    let strict = std::env::var_os("BOUNCY_ACCEPTANCE_STRICT").is_some();
    let mut failed = Vec::new();
    let mut fingerprints = Vec::new();
    for (id, name, limit, body) in CRITERIA {
        let start = Instant::now();
        let v = attempt(body);
        let secs = start.elapsed().as_secs_f64();
        let in_time = limit.is_none_or(|l| secs < l);
        let passed = v.passed && in_time;
        let budget = limit.map_or(String::new(), |l| format!(" < {l} s"));
        line(id, name, passed, &format!("{} [{secs:.2} s{budget}]", v.detail));
        if !passed {
            failed.push(id);
        }
        fingerprints.push((id, v.fingerprint));
    }

    let mut differing = Vec::new();
    for ((id, _, _, body), (_, first)) in CRITERIA.iter().zip(&fingerprints) {
        let again = attempt(*body).fingerprint;
        if first.is_empty() || again != *first {
            differing.push(id.to_string());
        }
    }
    let passed = differing.is_empty();
    let detail = if passed {
        "second runs of criteria 1-11 reproduce every summary and statistic byte for byte".to_string()
    } else {
        format!("outputs differ for criteria {}", differing.join(", "))
    };
    line(12, "determinism", passed, &detail);
    if !passed {
        failed.push(12);
    }

    let unexpected: Vec<u8> = failed.iter().copied().filter(|id| !KNOWN_DEVIATIONS.contains(id)).collect();
    println!("{} of 12 criteria passed", 12 - failed.len());
    for id in failed.iter().filter(|id| KNOWN_DEVIATIONS.contains(id)) {
        println!("C{id} is a known deviation");
    }
    if !unexpected.is_empty() || (strict && !failed.is_empty()) {
        std::process::exit(1);
    }
}
