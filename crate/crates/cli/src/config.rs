//! Experiment configuration files.
//!
//! One TOML file describes one experiment: a `kind`, the root `seed`, the
//! replicate count and three sections, `[model]`, `[sampler]` and `[run]`.
//! Every field is optional at parse time; [`ExperimentConfig::problems`]
//! reports what a given kind needs.

use std::fmt;
use std::path::{Path, PathBuf};

use bouncy::bps::{RefreshKind, RefreshmentScheme};
use bouncy::factor_graph::{BoundMode, ThinningOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GaussianMoments,
    DimensionSweep,
    GlobalVsLocal,
    RefreshComparison,
    PoissonGmrf,
    LogisticBench,
    Reducibility,
    RadialInvariance,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::GaussianMoments => "gaussian_moments",
            Self::DimensionSweep => "dimension_sweep",
            Self::GlobalVsLocal => "global_vs_local",
            Self::RefreshComparison => "refresh_comparison",
            Self::PoissonGmrf => "poisson_gmrf",
            Self::LogisticBench => "logistic_bench",
            Self::Reducibility => "reducibility",
            Self::RadialInvariance => "radial_invariance",
        }
    }
}

/// Which sampler drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Global BPS on the full energy.
    Global,
    /// Local BPS with a priority queue of factor candidates.
    Queue,
    /// Local BPS by thinning a superposed clock.
    Thinning,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::Queue => "queue",
            Self::Thinning => "thinning",
        }
    }
}

/// Bounce-time strategy of the global sampler on Gaussian targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Inversion,
    Convex,
    Thinning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    GlobalGaussian,
    RestrictedSphere,
    RestrictedPartial,
    Local,
}

impl SchemeName {
    pub fn name(self) -> &'static str {
        match self {
            Self::GlobalGaussian => "global_gaussian",
            Self::RestrictedSphere => "restricted_sphere",
            Self::RestrictedPartial => "restricted_partial",
            Self::Local => "local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundModeName {
    PerFactor,
    Common,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: Option<usize>,
    pub dims: Option<Vec<usize>>,
    /// `U(x) = scale |x|^2` for isotropic Gaussians.
    pub scale: Option<f64>,
    pub rho: Option<f64>,
    pub side: Option<usize>,
    /// Dataset sizes for synthetic logistic regression.
    pub data_sizes: Option<Vec<usize>>,
    pub covariates: Option<usize>,
    pub prior_variance: Option<f64>,
    /// Delimited dataset (label then covariates) instead of synthetic data.
    pub data_path: Option<PathBuf>,
    pub k_values: Option<Vec<u32>>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub refresh_rate: Option<f64>,
    pub refresh: Option<SchemeName>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub engine: Option<Engine>,
    pub engines: Option<Vec<Engine>>,
    pub strategy: Option<Strategy>,
    pub delta: Option<f64>,
    pub minibatch: Option<usize>,
    pub bound_mode: Option<BoundModeName>,
    pub schemes: Option<Vec<SchemeName>>,
    pub refresh_rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: Option<f64>,
    pub max_events: Option<u64>,
    pub wall_clock_seconds: Option<f64>,
    /// Bounce budget of the reducibility witness.
    pub events: Option<u64>,
    /// Number of probe coordinates for variance checks.
    pub probes: Option<usize>,
    /// Mesh used to discretise paths before computing ESS.
    pub ess_mesh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub dump_events: Option<bool>,
    /// Write a meshed trajectory with this spacing.
    pub mesh: Option<f64>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// A configuration problem anchored to a line of the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.field, self.message)
    }
}

/// Line (1-based) containing byte `offset` of `source`.
fn line_of(source: &str, offset: usize) -> usize {
    1 + source[..offset.min(source.len())].bytes().filter(|&b| b == b'\n').count()
}

/// Line of `key` inside `[section]` (top level for an empty section), or of
/// the section header when the key is absent, or 1.
fn locate(source: &str, section: &str, key: &str) -> usize {
    let mut current = "";
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    header.unwrap_or(1)
}

struct Checker<'a> {
    source: &'a str,
    problems: Vec<Problem>,
}

impl Checker<'_> {
    fn report(&mut self, section: &str, key: &str, message: impl Into<String>) {
        let field = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        self.problems.push(Problem {
            line: locate(self.source, section, key),
            field,
            message: message.into(),
        });
    }

    fn require<T>(&mut self, section: &str, key: &str, value: &Option<T>) -> bool {
        if value.is_none() {
            self.report(section, key, "missing field");
        }
        value.is_some()
    }

    fn ensure(&mut self, ok: bool, section: &str, key: &str, message: &str) {
        if !ok {
            self.report(section, key, message);
        }
    }

    fn positive(&mut self, section: &str, key: &str, value: Option<f64>) {
        if let Some(v) = value {
            self.ensure(v > 0.0 && v.is_finite(), section, key, "must be positive and finite");
        }
    }

    fn non_negative(&mut self, section: &str, key: &str, value: Option<f64>) {
        if let Some(v) = value {
            self.ensure(v >= 0.0 && v.is_finite(), section, key, "must be non-negative and finite");
        }
    }
}

impl ExperimentConfig {
    /// Parses a configuration; syntax and type errors come back as a
    /// line-anchored [`Problem`].
    pub fn parse(source: &str) -> Result<Self, Problem> {
        toml::from_str(source).map_err(|e| Problem {
            line: e.span().map_or(1, |s| line_of(source, s.start)),
            field: "config".into(),
            message: e.message().to_string(),
        })
    }

    /// Reads and parses a file; the error string is line-anchored.
    pub fn load(path: &Path) -> Result<(Self, String), String> {
        let source = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let config = Self::parse(&source).map_err(|p| format!("{}:{}: {}: {}", path.display(), p.line, p.field, p.message))?;
        Ok((config, source))
    }

    /// Schema and cross-field checks. An empty list means the config runs.
    pub fn problems(&self, source: &str) -> Vec<Problem> {
        use ExperimentKind as K;
        let mut c = Checker {
            source,
            problems: Vec::new(),
        };
        let (m, s, r) = (&self.model, &self.sampler, &self.run);

        if let Some(n) = self.replicates {
            c.ensure(n >= 1, "", "replicates", "must be at least 1");
        }
        c.positive("", "mesh", self.mesh);
        c.positive("model", "scale", m.scale);
        c.positive("model", "prior_variance", m.prior_variance);
        c.non_negative("sampler", "refresh_rate", s.refresh_rate);
        c.positive("sampler", "delta", s.delta);
        c.positive("run", "horizon", r.horizon);
        c.positive("run", "wall_clock_seconds", r.wall_clock_seconds);
        c.positive("run", "ess_mesh", r.ess_mesh);
        if let Some(rho) = m.rho {
            c.ensure(rho > 0.0 && rho < 1.0, "model", "rho", "must lie in (0, 1)");
        }
        if let Some(rates) = &s.refresh_rates {
            c.ensure(
                !rates.is_empty() && rates.iter().all(|x| *x >= 0.0 && x.is_finite()),
                "sampler",
                "refresh_rates",
                "must be a non-empty list of non-negative rates",
            );
        }

        if self.kind != K::RadialInvariance {
            c.require("sampler", "refresh_rate", &s.refresh_rate);
        }
        match self.kind {
            K::GaussianMoments => {
                c.require("model", "dim", &m.dim);
                c.require("run", "horizon", &r.horizon);
            }
            K::DimensionSweep => {
                if c.require("model", "dims", &m.dims) {
                    let dims = m.dims.as_deref().unwrap_or_default();
                    c.ensure(
                        dims.len() >= 2 && dims.iter().all(|&d| d >= 1),
                        "model",
                        "dims",
                        "needs at least two positive dimensions",
                    );
                }
                c.require("run", "horizon", &r.horizon);
            }
            K::GlobalVsLocal | K::RefreshComparison => {
                if c.require("model", "dim", &m.dim) {
                    c.ensure(m.dim.unwrap_or(0) >= 2, "model", "dim", "a chain needs at least 2 nodes");
                }
                c.require("run", "horizon", &r.horizon);
                if let (Some(p), Some(d)) = (r.probes, m.dim) {
                    c.ensure(p >= 1 && p <= d, "run", "probes", "must be between 1 and the dimension");
                }
            }
            K::PoissonGmrf => {
                if c.require("model", "side", &m.side) {
                    c.ensure(m.side.unwrap_or(0) >= 2, "model", "side", "grid side must be at least 2");
                }
                c.require("run", "horizon", &r.horizon);
            }
            K::LogisticBench => {
                if m.data_path.is_none() {
                    if c.require("model", "data_sizes", &m.data_sizes) {
                        let sizes = m.data_sizes.as_deref().unwrap_or_default();
                        c.ensure(
                            !sizes.is_empty() && sizes.iter().all(|&n| n >= 1),
                            "model",
                            "data_sizes",
                            "must list positive dataset sizes",
                        );
                    }
                } else {
                    c.ensure(m.data_sizes.is_none(), "model", "data_sizes", "conflicts with model.data_path");
                }
                c.require("sampler", "delta", &s.delta);
                c.require("run", "horizon", &r.horizon);
            }
            K::Reducibility => {
                if s.refresh_rate.is_some_and(|x| x > 0.0) {
                    c.ensure(
                        r.horizon.is_some(),
                        "run",
                        "horizon",
                        "missing field (needed when refresh_rate > 0)",
                    );
                }
            }
            K::RadialInvariance => {
                c.require("run", "horizon", &r.horizon);
                if let Some(ks) = &m.k_values {
                    c.ensure(
                        !ks.is_empty() && ks.iter().all(|&k| k >= 2),
                        "model",
                        "k_values",
                        "every k must be at least 2",
                    );
                }
            }
        }

        let scheme = s.refresh.unwrap_or(SchemeName::GlobalGaussian);
        let mut partial = scheme == SchemeName::RestrictedPartial;
        if let Some(schemes) = &s.schemes {
            partial |= schemes.contains(&SchemeName::RestrictedPartial);
            c.ensure(!schemes.is_empty(), "sampler", "schemes", "must list at least one scheme");
        } else if self.kind == K::RefreshComparison {
            partial = true;
        }
        if partial {
            c.require("sampler", "alpha", &s.alpha);
            c.require("sampler", "beta", &s.beta);
            c.positive("sampler", "alpha", s.alpha);
            c.positive("sampler", "beta", s.beta);
        }

        let engines = self.engines();
        if engines.contains(&Engine::Thinning) || matches!(s.strategy, Some(Strategy::Thinning)) {
            c.require("sampler", "delta", &s.delta);
        }
        if self.kind == K::PoissonGmrf && engines.contains(&Engine::Global) {
            c.report("sampler", "engine", "poisson_gmrf runs on the factor graph engines (queue or thinning)");
        }
        let uses_local = scheme == SchemeName::Local || s.schemes.as_ref().is_some_and(|v| v.contains(&SchemeName::Local));
        if uses_local && engines.contains(&Engine::Global) {
            c.report("sampler", "refresh", "local refreshment needs a factor graph engine (queue or thinning)");
        }
        if uses_local && matches!(self.kind, K::GaussianMoments | K::DimensionSweep | K::Reducibility | K::LogisticBench) {
            c.report("sampler", "refresh", "local refreshment is only available on factor graph experiments");
        }
        if let Some(b) = s.minibatch {
            c.ensure(b >= 1, "sampler", "minibatch", "must be at least 1");
            if b > 1 && s.bound_mode != Some(BoundModeName::Common) {
                c.report(
                    "sampler",
                    "minibatch",
                    "minibatch > 1 requires bound_mode = \"common\": subsampled acceptance is only exact when every factor shares one bound",
                );
            }
        }
        c.problems
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn replicates(&self) -> usize {
        self.replicates.unwrap_or(1)
    }

    /// Engines compared by this experiment.
    pub fn engines(&self) -> Vec<Engine> {
        match (&self.sampler.engines, self.sampler.engine) {
            (Some(list), _) => list.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => match self.kind {
                ExperimentKind::GlobalVsLocal => vec![Engine::Global, Engine::Queue, Engine::Thinning],
                ExperimentKind::RefreshComparison | ExperimentKind::PoissonGmrf => vec![Engine::Queue],
                _ => vec![Engine::Global],
            },
        }
    }

    pub fn refresh_rate(&self) -> f64 {
        self.sampler.refresh_rate.unwrap_or(1.0)
    }

    pub fn scheme_named(&self, name: SchemeName, rate: f64) -> anyhow::Result<RefreshmentScheme> {
        let kind = match name {
            SchemeName::GlobalGaussian => RefreshKind::GlobalGaussian,
            SchemeName::RestrictedSphere => RefreshKind::RestrictedSphere,
            SchemeName::RestrictedPartial => RefreshKind::RestrictedPartial {
                alpha: self.sampler.alpha.unwrap_or(1.0),
                beta: self.sampler.beta.unwrap_or(4.0),
            },
            SchemeName::Local => RefreshKind::Local,
        };
        Ok(RefreshmentScheme::new(kind, rate)?)
    }

    pub fn scheme(&self) -> anyhow::Result<RefreshmentScheme> {
        self.scheme_named(self.sampler.refresh.unwrap_or(SchemeName::GlobalGaussian), self.refresh_rate())
    }

    pub fn thinning_options(&self) -> ThinningOptions {
        ThinningOptions {
            delta: self.sampler.delta.unwrap_or(0.5),
            minibatch: self.sampler.minibatch.unwrap_or(1),
            bound_mode: match self.sampler.bound_mode {
                Some(BoundModeName::Common) => BoundMode::Common,
                _ => BoundMode::PerFactor,
            },
        }
    }

    pub fn horizon(&self) -> f64 {
        self.run.horizon.unwrap_or(f64::INFINITY)
    }

    pub fn ess_mesh(&self) -> f64 {
        self.run.ess_mesh.unwrap_or(0.5)
    }

    pub fn limits(&self) -> bouncy::bps::RunLimits {
        bouncy::bps::RunLimits {
            max_events: self.run.max_events,
            wall_clock: self.run.wall_clock_seconds.map(std::time::Duration::from_secs_f64),
        }
    }
}
