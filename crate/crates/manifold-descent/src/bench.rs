//! Multi-run experiments: method comparisons, parameter sweeps and the
//! perturbation persistence study.
//!
//! Runs are independent and evaluated on a rayon pool. Results always come
//! back in grid order, so the thread count never changes the output.

use std::time::Instant;

use manifold_descent_core::diagnostics::{diagnose, DiagnosticsConfig};
use manifold_descent_core::integrate::simulate;
use manifold_descent_core::{
    Family, IntegratorConfig, MethodSpec, PerturbationSpec, PhaseState, Quadratic, Termination, Trajectory,
};
use serde::Serialize;

/// Environment variable capping the runner's thread count (0 = one per core).
pub const THREADS_ENV: &str = "MANIFOLD_DESCENT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{THREADS_ENV} must be a non-negative integer, got `{0}`")]
    Threads(String),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Core(#[from] manifold_descent_core::Error),
}

/// Everything a run needs besides the method.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub objective: Quadratic,
    pub x0: PhaseState,
    pub integrator: IntegratorConfig,
    pub diagnostics: DiagnosticsConfig,
    pub perturbation: Option<PerturbationSpec>,
    /// Measure wall time per run. Off keeps output byte-reproducible.
    pub timing: bool,
}

impl RunSetup {
    pub fn new(objective: Quadratic, x0: PhaseState, integrator: IntegratorConfig) -> Self {
        Self {
            objective,
            x0,
            integrator,
            diagnostics: DiagnosticsConfig::default(),
            perturbation: None,
            timing: false,
        }
    }
}

/// One row of a comparison or sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub family: Family,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub s: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: f64,
    pub seed: Option<u64>,
    pub settling_time: f64,
    pub fitted_rate: Option<f64>,
    /// `f - f*` at the last sample.
    pub terminal_gap: f64,
    /// `|x1 - x*|` at the last sample.
    pub terminal_distance: f64,
    pub terminated_by: Termination,
    pub verdicts: String,
    pub wall_ms: Option<f64>,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.terminated_by == Termination::Divergence
    }
}

fn fmt_param(v: f64) -> String {
    format!("{v}")
}

/// Human-readable method label, e.g. `proposed(alpha=1,beta=0.9)`.
pub fn label(method: &MethodSpec) -> String {
    let f = method.family().name();
    match *method {
        MethodSpec::GdFlow | MethodSpec::HeavyBall => f.to_string(),
        MethodSpec::Hbf { lambda } => format!("{f}(lambda={})", fmt_param(lambda)),
        MethodSpec::Pni { alpha, beta } | MethodSpec::Proposed { alpha, beta } => {
            format!("{f}(alpha={},beta={})", fmt_param(alpha), fmt_param(beta))
        }
        MethodSpec::NagSc { mu, s } | MethodSpec::HbHighRes { mu, s } => {
            format!("{f}(mu={},s={})", fmt_param(mu), fmt_param(s))
        }
        MethodSpec::TripleMomentum { mu, s, gamma } => format!(
            "{f}(mu={},s={},gamma={})",
            fmt_param(mu),
            fmt_param(s),
            fmt_param(gamma)
        ),
    }
}

struct Params {
    alpha: Option<f64>,
    beta: Option<f64>,
    mu: Option<f64>,
    s: Option<f64>,
    lambda: Option<f64>,
    gamma: Option<f64>,
}

fn params(method: &MethodSpec) -> Params {
    let (alpha, beta) = method.alpha_beta().unzip();
    let mut p = Params {
        alpha,
        beta,
        mu: None,
        s: None,
        lambda: None,
        gamma: None,
    };
    match *method {
        MethodSpec::Hbf { lambda } => p.lambda = Some(lambda),
        MethodSpec::NagSc { mu, s } | MethodSpec::HbHighRes { mu, s } => {
            p.mu = Some(mu);
            p.s = Some(s);
        }
        MethodSpec::TripleMomentum { mu, s, gamma } => {
            p.mu = Some(mu);
            p.s = Some(s);
            p.gamma = Some(gamma);
        }
        _ => {}
    }
    p
}

fn verdict_string(report: &manifold_descent_core::DiagnosticsReport) -> String {
    report
        .verdicts
        .iter()
        .map(|v| format!("{}:{}", v.name, if v.pass { "pass" } else { "fail" }))
        .collect::<Vec<_>>()
        .join(";")
}

/// Simulates and diagnoses one method. Divergence is recorded, not raised.
pub fn run_one(
    method: &MethodSpec,
    setup: &RunSetup,
    perturbation: Option<&PerturbationSpec>,
) -> Result<(RunRecord, Trajectory), BenchError> {
    let start = setup.timing.then(Instant::now);
    let traj = simulate(method, &setup.objective, &setup.x0, &setup.integrator, perturbation)?;
    let report = diagnose(&traj, &setup.diagnostics);
    let wall_ms = start.map(|s| s.elapsed().as_secs_f64() * 1e3);
    let p = params(method);
    let active = perturbation.filter(|p| p.is_active());
    let rec = RunRecord {
        label: label(method),
        family: method.family(),
        alpha: p.alpha,
        beta: p.beta,
        mu: p.mu,
        s: p.s,
        lambda: p.lambda,
        gamma: p.gamma,
        delta: active.map_or(0.0, |p| p.delta),
        seed: active.map(|p| p.seed),
        settling_time: report.settling_time,
        fitted_rate: report.fitted_rate,
        terminal_gap: report.terminal_gap,
        terminal_distance: traj.terminal_distance(),
        terminated_by: traj.terminated_by,
        verdicts: verdict_string(&report),
        wall_ms,
    };
    Ok((rec, traj))
}

/// Thread count from [`THREADS_ENV`]; 0 or unset lets rayon decide.
pub fn threads_from_env() -> Result<usize, BenchError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| BenchError::Threads(v)),
        Err(_) => Ok(0),
    }
}

/// Maps `f` over `items` in parallel, keeping input order.
fn par_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>, BenchError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, BenchError> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads_from_env()?)
        .build()?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// One record per method, sorted by label. Every method sees the same start
/// and integrator settings.
pub fn compare(methods: &[MethodSpec], setup: &RunSetup) -> Result<Vec<RunRecord>, BenchError> {
    Ok(compare_with_trajectories(methods, setup)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

/// As [`compare`], also returning the trajectories (for plotting).
pub fn compare_with_trajectories(
    methods: &[MethodSpec],
    setup: &RunSetup,
) -> Result<Vec<(RunRecord, Trajectory)>, BenchError> {
    let mut out = par_map(methods, |m| run_one(m, setup, setup.perturbation.as_ref()))?;
    out.sort_by(|a, b| a.0.label.cmp(&b.0.label));
    Ok(out)
}

/// Places `template` at grid point `(alpha, beta)`.
///
/// Manifold families take the pair directly; the `(mu, s)` families take
/// `mu = alpha^2`, `s = beta^2`. The remaining families have no such
/// parameters and are returned unchanged.
pub fn instantiate(template: &MethodSpec, alpha: f64, beta: f64) -> MethodSpec {
    match *template {
        MethodSpec::Pni { .. } => MethodSpec::Pni { alpha, beta },
        MethodSpec::Proposed { .. } => MethodSpec::Proposed { alpha, beta },
        MethodSpec::NagSc { .. } => MethodSpec::NagSc {
            mu: alpha * alpha,
            s: beta * beta,
        },
        MethodSpec::HbHighRes { .. } => MethodSpec::HbHighRes {
            mu: alpha * alpha,
            s: beta * beta,
        },
        MethodSpec::TripleMomentum { gamma, .. } => MethodSpec::TripleMomentum {
            mu: alpha * alpha,
            s: beta * beta,
            gamma,
        },
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub methods: Vec<MethodSpec>,
    /// Perturbation seeds; ignored without an active perturbation.
    pub seeds: Vec<u64>,
}

/// Evaluates `alphas x betas x methods x seeds` in row-major order.
pub fn sweep(spec: &SweepSpec, setup: &RunSetup) -> Result<Vec<RunRecord>, BenchError> {
    let perturbations: Vec<Option<PerturbationSpec>> = match setup.perturbation {
        Some(p) if p.is_active() && !spec.seeds.is_empty() => spec
            .seeds
            .iter()
            .map(|&seed| Some(PerturbationSpec { seed, ..p }))
            .collect(),
        other => vec![other],
    };
    let mut jobs = Vec::new();
    for &a in &spec.alphas {
        for &b in &spec.betas {
            for m in &spec.methods {
                for p in &perturbations {
                    jobs.push((instantiate(m, a, b), *p));
                }
            }
        }
    }
    par_map(&jobs, |(m, p)| run_one(m, setup, p.as_ref()).map(|(r, _)| r))
}

/// Summary of one `(delta, method)` cell of the persistence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistRow {
    pub delta: f64,
    pub label: String,
    pub family: Family,
    pub runs: usize,
    pub diverged: usize,
    pub median_distance: f64,
    pub max_distance: f64,
}

/// Median of the finite values (NaN if there are none).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Terminal `|x1 - x*|` over seeds for each `(delta, method)`.
///
/// A `delta = 0` control row is added first when missing; it is a single
/// unperturbed run per method. Rows are ordered by delta position, then by
/// method order.
pub fn persistence_experiment(
    deltas: &[f64],
    seeds: &[u64],
    methods: &[MethodSpec],
    setup: &RunSetup,
    template: PerturbationSpec,
) -> Result<Vec<PersistRow>, BenchError> {
    let mut ds: Vec<f64> = Vec::with_capacity(deltas.len() + 1);
    if !deltas.contains(&0.0) {
        ds.push(0.0);
    }
    ds.extend_from_slice(deltas);

    let mut jobs = Vec::new();
    for (di, &delta) in ds.iter().enumerate() {
        for (mi, m) in methods.iter().enumerate() {
            if delta == 0.0 {
                jobs.push((di, mi, *m, None));
            } else {
                for &seed in seeds {
                    jobs.push((di, mi, *m, Some(PerturbationSpec { delta, seed, ..template })));
                }
            }
        }
    }
    let results = par_map(&jobs, |(_, _, m, p)| run_one(m, setup, p.as_ref()).map(|(r, _)| r))?;

    let mut rows = Vec::new();
    for (di, &delta) in ds.iter().enumerate() {
        for (mi, m) in methods.iter().enumerate() {
            let cell: Vec<&RunRecord> = jobs
                .iter()
                .zip(&results)
                .filter(|((d, k, _, _), _)| *d == di && *k == mi)
                .map(|(_, r)| r)
                .collect();
            let dist: Vec<f64> = cell.iter().map(|r| r.terminal_distance).collect();
            let diverged = cell.iter().filter(|r| r.diverged()).count();
            let max_distance = if diverged > 0 {
                f64::INFINITY
            } else {
                dist.iter().copied().fold(0.0, f64::max)
            };
            rows.push(PersistRow {
                delta,
                label: label(m),
                family: m.family(),
                runs: cell.len(),
                diverged,
                median_distance: median(&dist),
                max_distance,
            });
        }
    }
    Ok(rows)
}
