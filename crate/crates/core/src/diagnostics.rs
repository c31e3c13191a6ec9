//! Post-hoc checks on recorded trajectories: manifold invariance, storage
//! decay, Lyapunov monotonicity, decay rates and settling times.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::Family;
use crate::error::{Error, Result};
use crate::integrate::{Termination, Trajectory};

/// Floor on the denominator of relative storage deviations.
pub const EPS_FLOOR: f64 = 1e-300;

/// Allowed per-sample increase of a Lyapunov function.
pub const LYAPUNOV_TOL: f64 = 1e-9;

/// Relative slack on the storage bound `S(t) <= S(0) e^{-2 alpha t}` for
/// families where it is an inequality.
pub const STORAGE_BOUND_TOL: f64 = 1e-6;

/// Threshold on `|psi(0)|` for a start to count as on-manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovKind {
    /// `f - f* + |x2|^2 / 2`
    Basic,
    /// `f - f* + |x2|^2 / 2 + |x2 + alpha (x1 - x*)|^2 / 2`
    Exp,
}

fn require_second_order(traj: &Trajectory, what: &str) -> Result<()> {
    if traj.states[0].is_second_order() {
        Ok(())
    } else {
        Err(Error::precondition(format!(
            "{what} needs a second-order trajectory, got {}",
            traj.method.family()
        )))
    }
}

/// Deviation of the storage from `S(0) e^{-2 alpha t}`.
///
/// For the manifold-stabilizing family the decay is an identity and the
/// result is `max_t |S(t) - S(0) e^{-2 alpha t}| / max(S(0), EPS_FLOOR)`.
/// For every other second-order family only the upper bound is checked and
/// the result is the largest relative excess over
/// `S(0) e^{-2 alpha t} (1 + STORAGE_BOUND_TOL)`, zero when the bound holds.
/// An on-manifold start (`S(0) = 0`) passes vacuously with 0.
pub fn check_storage_decay(traj: &Trajectory, alpha: f64) -> Result<f64> {
    require_second_order(traj, "storage check")?;
    if traj.storage_vals[0].is_nan() {
        return Err(Error::precondition(format!(
            "family {} defines no manifold",
            traj.method.family()
        )));
    }
    let s0 = traj.storage_vals[0];
    if s0 == 0.0 {
        return Ok(0.0);
    }
    let denom = f64::max(s0, EPS_FLOOR);
    let equality = traj.method.family() == Family::Pni;
    let mut worst = 0.0f64;
    for (t, s) in traj.times.iter().zip(&traj.storage_vals) {
        let target = s0 * libm::exp(-2.0 * alpha * t);
        let dev = if equality {
            (s - target).abs()
        } else {
            f64::max(s - target * (1.0 + STORAGE_BOUND_TOL), 0.0)
        };
        worst = worst.max(dev / denom);
    }
    Ok(worst)
}

/// `max_t |psi(t)|` for a trajectory started on the manifold. Pass iff the
/// result is at most `tol`.
pub fn check_manifold_invariance(traj: &Trajectory, tol: f64) -> Result<(f64, bool)> {
    require_second_order(traj, "invariance check")?;
    let psi0 = traj.psi_norms[0];
    if psi0.is_nan() {
        return Err(Error::precondition(format!(
            "family {} defines no manifold",
            traj.method.family()
        )));
    }
    if psi0 > ON_MANIFOLD_TOL {
        return Err(Error::precondition(format!(
            "trajectory does not start on the manifold (|psi(0)| = {psi0:e})"
        )));
    }
    let worst = traj.psi_norms.iter().cloned().fold(0.0, f64::max);
    Ok((worst, worst <= tol))
}

/// Monotonicity of a Lyapunov function along the recorded samples:
/// `V(t_{k+1}) <= V(t_k) + LYAPUNOV_TOL`. Returns the verdict and the
/// largest increase seen (zero or negative when strictly decreasing).
pub fn check_lyapunov(traj: &Trajectory, which: LyapunovKind) -> Result<(bool, f64)> {
    require_second_order(traj, "Lyapunov check")?;
    if traj.fstar.is_none() {
        return Err(Error::Unsupported("Lyapunov check needs a known minimizer"));
    }
    let vals = match which {
        LyapunovKind::Basic => &traj.lyap_basic,
        LyapunovKind::Exp => &traj.lyap_exp,
    };
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::Unsupported("Lyapunov function undefined for this family"));
    }
    let worst = vals
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let worst = if worst == f64::NEG_INFINITY { 0.0 } else { worst };
    Ok((worst <= LYAPUNOV_TOL, worst))
}

/// Decay rate from a log-space least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `rho` in `f - f* ~ C e^{-rho t}`.
    pub rate: f64,
    /// Window actually used, after trimming samples where `f - f*` is not
    /// positive.
    pub t_lo: f64,
    pub t_hi: f64,
    pub samples: usize,
}

/// Smallest `f - f*` treated as resolvable.
const GAP_FLOOR: f64 = 1e-290;

/// Least-squares slope of `log(f - f*)` over `[t_lo, t_hi]`, reported as a
/// positive rate. When the gap underflows inside the window, the window is
/// cut at the first such sample.
pub fn fit_decay_rate(traj: &Trajectory, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::input(format!("empty fit window [{lo}, {hi}]")));
    }
    let fstar = traj
        .fstar
        .ok_or(Error::Unsupported("decay fit needs a known minimum"))?;
    let mut pts = Vec::new();
    for (t, f) in traj.times.iter().zip(&traj.f_vals) {
        if *t < lo || *t > hi {
            continue;
        }
        let gap = f - fstar;
        if !(gap > GAP_FLOOR) {
            break;
        }
        pts.push((*t, libm::log(gap)));
    }
    if pts.len() < 2 {
        return Err(Error::precondition(format!(
            "f - f* is not resolvable on [{lo}, {hi}] ({} usable samples)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.0 - mean_t)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    Ok(DecayFit {
        rate: -sxy / sxx,
        t_lo: pts[0].0,
        t_hi: pts[pts.len() - 1].0,
        samples: pts.len(),
    })
}

/// Middle 60% of `[0, t_end]`.
pub fn default_fit_window(t_end: f64) -> (f64, f64) {
    (0.2 * t_end, 0.8 * t_end)
}

/// First recorded time after which `f - f* <= eps` holds for every later
/// sample. Infinite when that never happens or the run diverged.
pub fn settling_time(traj: &Trajectory, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::input(format!("settling band must be positive, got {eps}")));
    }
    if traj.terminated_by == Termination::Divergence {
        return Ok(f64::INFINITY);
    }
    let fstar = traj
        .fstar
        .ok_or(Error::Unsupported("settling time needs a known minimum"))?;
    let mut settled_at = None;
    for (t, f) in traj.times.iter().zip(&traj.f_vals) {
        if f - fstar <= eps {
            settled_at.get_or_insert(*t);
        } else {
            settled_at = None;
        }
    }
    Ok(settled_at.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
}

/// Settings for [`diagnose`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub settle_eps: f64,
    /// Fit window; `None` uses the middle 60% of the run.
    pub fit_window: Option<(f64, f64)>,
    pub invariance_tol: f64,
    pub storage_tol: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            settle_eps: 1e-4,
            fit_window: None,
            invariance_tol: 1e-6,
            storage_tol: 1e-5,
        }
    }
}

/// Every check that applies to a trajectory, in one record. Quantities a
/// family does not define are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub family: Family,
    pub terminated_by: Termination,
    pub max_psi_violation: Option<f64>,
    pub max_storage_rel_dev: Option<f64>,
    pub lyapunov_monotone: Option<bool>,
    pub worst_uptick: Option<f64>,
    pub lyapunov_exp_monotone: Option<bool>,
    pub worst_uptick_exp: Option<f64>,
    /// Decay rate of `f - f*` (positive for decay).
    pub fitted_rate: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    pub settling_time: f64,
    pub terminal_gap: f64,
    pub verdicts: Vec<Verdict>,
}

impl DiagnosticsReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Runs the applicable checks on `traj`.
///
/// * Manifold invariance only when the run starts on the manifold.
/// * Storage decay for the manifold families (`alpha` from the method).
/// * `V_basic` for families with friction, `V_exp` where defined.
pub fn diagnose(traj: &Trajectory, config: &DiagnosticsConfig) -> DiagnosticsReport {
    let mut verdicts = Vec::new();
    let mut verdict = |name: &str, pass: bool| {
        verdicts.push(Verdict {
            name: name.into(),
            pass,
        })
    };
    let family = traj.method.family();
    let diverged = traj.terminated_by == Termination::Divergence;
    verdict("finite", !diverged);

    let mut max_psi = None;
    let mut storage_dev = None;
    if traj.states[0].is_second_order() && !traj.psi_norms[0].is_nan() {
        if traj.psi_norms[0] <= ON_MANIFOLD_TOL {
            if let Ok((worst, pass)) = check_manifold_invariance(traj, config.invariance_tol) {
                max_psi = Some(worst);
                // the transversal term pushes other families off the manifold
                if family == Family::Pni {
                    verdict("manifold_invariance", pass);
                }
            }
        }
        if let Some(alpha) = traj.method.alpha_beta().map(|(a, _)| a) {
            if let Ok(dev) = check_storage_decay(traj, alpha) {
                storage_dev = Some(dev);
                if family == Family::Pni {
                    verdict("storage_decay", dev <= config.storage_tol);
                }
            }
        }
    }

    let (mut mono, mut uptick, mut mono_exp, mut uptick_exp) = (None, None, None, None);
    if traj.states[0].is_second_order() && traj.fstar.is_some() {
        if let Ok((m, u)) = check_lyapunov(traj, LyapunovKind::Basic) {
            mono = Some(m);
            uptick = Some(u);
            if family == Family::Hbf || family == Family::HeavyBall {
                verdict("lyapunov_basic", m);
            }
        }
        if let Ok((m, u)) = check_lyapunov(traj, LyapunovKind::Exp) {
            mono_exp = Some(m);
            uptick_exp = Some(u);
            if matches!(family, Family::Proposed | Family::NagSc) {
                verdict("lyapunov_exp", m);
            }
        }
    }

    let window = config
        .fit_window
        .unwrap_or_else(|| default_fit_window(traj.final_time()));
    let fit = if diverged { None } else { fit_decay_rate(traj, window).ok() };
    let settling = settling_time(traj, config.settle_eps).unwrap_or(f64::INFINITY);
    verdict("settles", settling.is_finite());
    let terminal_gap = traj.fstar.map_or(f64::NAN, |fs| traj.f_vals[traj.len() - 1] - fs);

    DiagnosticsReport {
        family,
        terminated_by: traj.terminated_by,
        max_psi_violation: max_psi,
        max_storage_rel_dev: storage_dev,
        lyapunov_monotone: mono,
        worst_uptick: uptick,
        lyapunov_exp_monotone: mono_exp,
        worst_uptick_exp: uptick_exp,
        fitted_rate: fit.map(|f| f.rate),
        fit_window: fit.map(|f| (f.t_lo, f.t_hi)),
        settling_time: settling,
        terminal_gap,
        verdicts,
    }
}
