//! Fixed-step integration with optional per-step perturbation kicks.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, MethodSpec, PhaseState};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::objective::Objective;

/// States with a larger norm count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub h: f64,
    pub t_max: f64,
    /// Stop once `|grad f(x1)| <= grad_tol`. Zero disables the test unless
    /// the gradient is exactly zero.
    pub grad_tol: f64,
    /// Record every `record_every`-th step; the final state is always kept.
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            h: 1e-3,
            t_max: 10.0,
            grad_tol: 0.0,
            record_every: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(h: f64, t_max: f64) -> Self {
        Self {
            h,
            t_max,
            ..Self::default()
        }
    }

    pub fn euler(h: f64, t_max: f64) -> Self {
        Self {
            scheme: Scheme::Euler,
            h,
            t_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::input(format!("step h must be positive, got {}", self.h)));
        }
        if !(self.t_max > self.h && self.t_max.is_finite()) {
            return Err(Error::input(format!(
                "t_max must be finite and larger than h, got t_max={} h={}",
                self.t_max, self.h
            )));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::input(format!("grad_tol must be >= 0, got {}", self.grad_tol)));
        }
        if self.record_every == 0 {
            return Err(Error::input("record_every must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps to reach `t_max`.
    pub fn steps(&self) -> usize {
        libm::round(self.t_max / self.h) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform in the unit ball of the targeted coordinates.
    #[default]
    UniformBall,
    /// Independent standard normal per coordinate.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    X1,
    X2,
    #[default]
    Both,
}

/// Additive kick `delta * sample` applied after every accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub delta: f64,
    pub distribution: NoiseDistribution,
    pub seed: u64,
    pub target: NoiseTarget,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            delta: 0.0,
            distribution: NoiseDistribution::UniformBall,
            seed: 0,
            target: NoiseTarget::Both,
        }
    }
}

impl PerturbationSpec {
    pub fn new(delta: f64, seed: u64) -> Self {
        Self {
            delta,
            seed,
            ..Self::default()
        }
    }

    pub fn is_active(&self) -> bool {
        self.delta > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::input(format!("delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

struct Kicker {
    spec: PerturbationSpec,
    rng: ChaCha8Rng,
    buf: Vec<f64>,
}

impl Kicker {
    fn new(spec: PerturbationSpec) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
            buf: Vec::new(),
        }
    }

    fn apply(&mut self, state: &mut PhaseState) {
        let PhaseState { x1, x2 } = state;
        let mut slots: Vec<&mut f64> = Vec::new();
        if matches!(self.spec.target, NoiseTarget::X1 | NoiseTarget::Both) {
            slots.extend(x1.iter_mut());
        }
        if matches!(self.spec.target, NoiseTarget::X2 | NoiseTarget::Both) {
            slots.extend(x2.iter_mut());
        }
        let d = slots.len();
        if d == 0 {
            return;
        }
        self.buf.clear();
        self.buf
            .extend((0..d).map(|_| self.rng.sample::<f64, _>(StandardNormal)));
        if self.spec.distribution == NoiseDistribution::UniformBall {
            let n = linalg::norm(&self.buf);
            let u: f64 = self.rng.random();
            let radius = libm::pow(u, 1.0 / d as f64);
            let scale = if n > 0.0 { radius / n } else { 0.0 };
            for v in self.buf.iter_mut() {
                *v *= scale;
            }
        }
        for (slot, v) in slots.into_iter().zip(&self.buf) {
            *slot += self.spec.delta * v;
        }
    }
}

/// One explicit step. Inputs are left untouched; a non-finite result is
/// reported as [`Error::NonFinite`].
pub fn step<F>(scheme: Scheme, mut field: F, state: &PhaseState, h: f64) -> Result<PhaseState>
where
    F: FnMut(&PhaseState) -> Result<PhaseState>,
{
    let next = match scheme {
        Scheme::Euler => state.axpy(h, &field(state)?),
        Scheme::Rk4 => {
            let k1 = field(state)?;
            let k2 = field(&state.axpy(0.5 * h, &k1))?;
            let k3 = field(&state.axpy(0.5 * h, &k2))?;
            let k4 = field(&state.axpy(h, &k3))?;
            let combine = |base: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
                (0..base.len())
                    .map(|i| base[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                    .collect()
            };
            PhaseState {
                x1: combine(&state.x1, &k1.x1, &k2.x1, &k3.x1, &k4.x1),
                x2: combine(&state.x2, &k1.x2, &k2.x2, &k3.x2, &k4.x2),
            }
        }
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite("integration step"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    TMax,
    Divergence,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::GradTol => "grad_tol",
            Termination::TMax => "t_max",
            Termination::Divergence => "divergence",
        }
    }
}

/// Recorded run. All per-sample vectors have the same length; the first
/// sample is the initial condition at `t = 0`.
///
/// Scalars that a family does not define (the manifold residual of the
/// gradient flow, say) are stored as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub method: MethodSpec,
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub f_vals: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub psi_norms: Vec<f64>,
    pub storage_vals: Vec<f64>,
    pub lyap_basic: Vec<f64>,
    pub lyap_exp: Vec<f64>,
    /// `f(x*)` when the objective knows its minimizer.
    pub fstar: Option<f64>,
    pub xstar: Option<Vec<f64>>,
    pub terminated_by: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn last_state(&self) -> &PhaseState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// `f - f*` per sample (NaN without a known minimum).
    pub fn gaps(&self) -> Vec<f64> {
        let fstar = self.fstar.unwrap_or(f64::NAN);
        self.f_vals.iter().map(|f| f - fstar).collect()
    }

    /// `|x1 - x*|` at the last sample.
    pub fn terminal_distance(&self) -> f64 {
        match &self.xstar {
            Some(xs) => linalg::distance(&self.last_state().x1, xs),
            None => f64::NAN,
        }
    }

    fn push<O: Objective + ?Sized>(&mut self, obj: &O, t: f64, state: PhaseState) -> Result<()> {
        let f = obj.value(&state.x1)?;
        let g = obj.gradient(&state.x1)?;
        let fstar = self.fstar.unwrap_or(f64::NAN);
        let (psi, stor) = match (state.is_second_order(), self.method.manifold_slope()) {
            (true, Some(beta)) => {
                let psi = dynamics::manifold_residual(obj, &state, beta)?;
                let n = linalg::norm(&psi);
                (n, 0.5 * n * n)
            }
            _ => (f64::NAN, f64::NAN),
        };
        let v_basic = dynamics::lyapunov_basic(obj, &state, fstar)?;
        let v_exp = match (&self.xstar, self.method.attraction_rate(), state.is_second_order()) {
            (Some(xs), Some(alpha), true) => dynamics::lyapunov_exp(obj, &state, xs, fstar, alpha)?,
            _ => f64::NAN,
        };
        self.times.push(t);
        self.f_vals.push(f);
        self.grad_norms.push(linalg::norm(&g));
        self.psi_norms.push(psi);
        self.storage_vals.push(stor);
        self.lyap_basic.push(v_basic);
        self.lyap_exp.push(v_exp);
        self.states.push(state);
        Ok(())
    }
}

/// Integrates `method` on `obj` from `x0` until the gradient tolerance,
/// `t_max`, or divergence.
///
/// A second-order family started from a state without velocity starts at
/// rest. A first-order family ignores any velocity in `x0`. When
/// `perturbation` is active, a fresh kick is added after every step; the
/// run is fully determined by its inputs and the seed.
pub fn simulate<O: Objective + ?Sized>(
    method: &MethodSpec,
    obj: &O,
    x0: &PhaseState,
    config: &IntegratorConfig,
    perturbation: Option<&PerturbationSpec>,
) -> Result<Trajectory> {
    method.validate()?;
    config.validate()?;
    check_dim(obj.dim(), x0.x1.len())?;
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial condition"));
    }
    let start = if method.is_second_order() {
        if x0.x2.is_empty() {
            PhaseState::at_rest(x0.x1.clone())
        } else {
            check_dim(obj.dim(), x0.x2.len())?;
            x0.clone()
        }
    } else {
        PhaseState::first_order(x0.x1.clone())
    };
    let mut kicker = match perturbation {
        Some(p) => {
            p.validate()?;
            p.is_active().then(|| Kicker::new(*p))
        }
        None => None,
    };

    let mut traj = Trajectory {
        method: *method,
        times: Vec::new(),
        states: Vec::new(),
        f_vals: Vec::new(),
        grad_norms: Vec::new(),
        psi_norms: Vec::new(),
        storage_vals: Vec::new(),
        lyap_basic: Vec::new(),
        lyap_exp: Vec::new(),
        fstar: obj.min_value(),
        xstar: obj.minimizer().map(|x| x.to_vec()),
        terminated_by: Termination::TMax,
    };
    traj.push(obj, 0.0, start.clone())?;
    if traj.grad_norms[0] <= config.grad_tol {
        traj.terminated_by = Termination::GradTol;
        return Ok(traj);
    }

    let n_steps = config.steps();
    let field = |s: &PhaseState| dynamics::rhs(method, obj, s);
    let mut state = start;
    let mut t_state = 0.0;
    for k in 1..=n_steps {
        let next = match step(config.scheme, field, &state, config.h) {
            Ok(mut next) => {
                if let Some(kicker) = kicker.as_mut() {
                    kicker.apply(&mut next);
                }
                next
            }
            Err(Error::NonFinite(_)) => {
                traj.terminated_by = Termination::Divergence;
                break;
            }
            Err(e) => return Err(e),
        };
        if !next.is_finite() || next.norm() > DIVERGENCE_NORM {
            traj.terminated_by = Termination::Divergence;
            break;
        }
        let t = k as f64 * config.h;
        let gnorm = linalg::norm(&obj.gradient(&next.x1)?);
        let done = gnorm <= config.grad_tol;
        if done || k % config.record_every == 0 || k == n_steps {
            traj.push(obj, t, next.clone())?;
        }
        state = next;
        t_state = t;
        if done {
            traj.terminated_by = Termination::GradTol;
            break;
        }
    }
    if traj.terminated_by == Termination::Divergence && traj.final_time() < t_state {
        // the last finite state fell between records
        traj.push(obj, t_state, state)?;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Quadratic;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn unit() -> Quadratic {
        Quadratic::unit(1).unwrap()
    }

    fn gd_field(q: &Quadratic) -> impl FnMut(&PhaseState) -> Result<PhaseState> + '_ {
        move |s| dynamics::rhs(&MethodSpec::GdFlow, q, s)
    }

    #[test]
    fn euler_step_on_gradient_flow() {
        let q = unit();
        let s = PhaseState::first_order(vec![1.0]);
        let n = step(Scheme::Euler, gd_field(&q), &s, 0.1).unwrap();
        assert_relative_eq!(n.x1[0], 0.9, epsilon = 1e-15);
        assert_eq!(s.x1, vec![1.0]);
    }

    #[test]
    fn rk4_step_on_gradient_flow() {
        let q = unit();
        let s = PhaseState::first_order(vec![1.0]);
        let n = step(Scheme::Rk4, gd_field(&q), &s, 0.1).unwrap();
        assert!((n.x1[0] - libm::exp(-0.1)).abs() < 1e-7);
        assert!((n.x1[0] - 0.904837418).abs() < 1e-7);
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let q = unit();
        let m = MethodSpec::Proposed { alpha: 1.0, beta: 0.9 };
        let s = PhaseState::at_rest(vec![0.0]);
        for scheme in [Scheme::Euler, Scheme::Rk4] {
            let n = step(scheme, |x: &PhaseState| dynamics::rhs(&m, &q, x), &s, 0.5).unwrap();
            assert_eq!(n, s);
        }
    }

    #[test]
    fn non_finite_step_is_reported() {
        let s = PhaseState::first_order(vec![1.0]);
        let r = step(
            Scheme::Euler,
            |_: &PhaseState| Ok(PhaseState::first_order(vec![f64::INFINITY])),
            &s,
            0.1,
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn gradient_flow_value_matches_exact_flow() {
        let q = unit();
        let cfg = IntegratorConfig::rk4(1e-3, 2.0);
        let tr = simulate(&MethodSpec::GdFlow, &q, &PhaseState::first_order(vec![1.0]), &cfg, None).unwrap();
        let k = tr.times.iter().position(|t| (*t - 1.0).abs() < 1e-12).unwrap();
        assert!((tr.f_vals[k] - 0.5 * libm::exp(-2.0)).abs() < 1e-9);
        assert_eq!(tr.terminated_by, Termination::TMax);
        assert_eq!(tr.len(), 2001);
        assert_eq!(tr.times[0], 0.0);
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn standing_start_and_record_thinning() {
        let q = unit();
        let cfg = IntegratorConfig {
            record_every: 7,
            ..IntegratorConfig::rk4(0.01, 1.0)
        };
        let m = MethodSpec::Proposed { alpha: 1.0, beta: 0.9 };
        let tr = simulate(&m, &q, &PhaseState::first_order(vec![1.0]), &cfg, None).unwrap();
        assert_eq!(tr.states[0].x2, vec![0.0]);
        // 100 steps: records at 0, 7, ..., 98 and the final step 100
        assert_eq!(tr.len(), 1 + 14 + 1);
        assert_relative_eq!(tr.final_time(), 1.0, epsilon = 1e-12);
        let n = tr.len();
        for v in [&tr.f_vals, &tr.grad_norms, &tr.psi_norms, &tr.storage_vals, &tr.lyap_basic, &tr.lyap_exp] {
            assert_eq!(v.len(), n);
        }
    }

    #[test]
    fn grad_tol_stops_early() {
        let q = unit();
        let cfg = IntegratorConfig {
            grad_tol: 1e-3,
            ..IntegratorConfig::rk4(1e-2, 100.0)
        };
        let tr = simulate(&MethodSpec::GdFlow, &q, &PhaseState::first_order(vec![1.0]), &cfg, None).unwrap();
        assert_eq!(tr.terminated_by, Termination::GradTol);
        assert!(*tr.grad_norms.last().unwrap() <= 1e-3);
        // |x(t)| = e^-t crosses 1e-3 at t = ln 1000
        assert!((tr.final_time() - libm::log(1000.0)).abs() < 0.011);
    }

    #[test]
    fn unstable_euler_diverges() {
        let q = unit();
        let cfg = IntegratorConfig::euler(3.0, 300.0);
        let tr = simulate(&MethodSpec::GdFlow, &q, &PhaseState::first_order(vec![1.0]), &cfg, None).unwrap();
        assert_eq!(tr.terminated_by, Termination::Divergence);
        assert!(tr.states.iter().all(|s| s.is_finite() && s.norm() <= DIVERGENCE_NORM));
        // x_k = (-2)^k, the first state beyond 1e12 is k = 40
        assert_eq!(tr.len(), 40);
    }

    #[test]
    fn disabled_perturbation_ignores_seed() {
        let q = unit();
        let cfg = IntegratorConfig::rk4(1e-2, 5.0);
        let m = MethodSpec::Proposed { alpha: 1.0, beta: 0.9 };
        let x0 = PhaseState::at_rest(vec![1.0]);
        let a = simulate(&m, &q, &x0, &cfg, Some(&PerturbationSpec::new(0.0, 1))).unwrap();
        let b = simulate(&m, &q, &x0, &cfg, Some(&PerturbationSpec::new(0.0, 99))).unwrap();
        let c = simulate(&m, &q, &x0, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn perturbation_is_seeded() {
        let q = Quadratic::unit(2).unwrap();
        let cfg = IntegratorConfig::rk4(1e-2, 2.0);
        let m = MethodSpec::Pni { alpha: 1.0, beta: 0.9 };
        let x0 = PhaseState::at_rest(vec![1.0, -1.0]);
        for distribution in [NoiseDistribution::UniformBall, NoiseDistribution::Gaussian] {
            let p = |seed| PerturbationSpec {
                delta: 1e-2,
                distribution,
                seed,
                target: NoiseTarget::Both,
            };
            let a = simulate(&m, &q, &x0, &cfg, Some(&p(5))).unwrap();
            let b = simulate(&m, &q, &x0, &cfg, Some(&p(5))).unwrap();
            let c = simulate(&m, &q, &x0, &cfg, Some(&p(6))).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.last_state(), c.last_state());
        }
    }

    #[test]
    fn uniform_ball_kicks_stay_in_ball() {
        let spec = PerturbationSpec {
            delta: 0.5,
            target: NoiseTarget::X2,
            ..PerturbationSpec::new(0.5, 3)
        };
        let mut k = Kicker::new(spec);
        for _ in 0..1000 {
            let mut s = PhaseState::at_rest(vec![0.0, 0.0, 0.0]);
            k.apply(&mut s);
            assert_eq!(s.x1, vec![0.0; 3]);
            assert!(linalg::norm(&s.x2) <= 0.5 + 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = unit();
        let x0 = PhaseState::first_order(vec![1.0]);
        let m = MethodSpec::GdFlow;
        assert!(simulate(&m, &q, &x0, &IntegratorConfig::rk4(0.0, 1.0), None).is_err());
        assert!(simulate(&m, &q, &x0, &IntegratorConfig::rk4(2.0, 1.0), None).is_err());
        let cfg = IntegratorConfig { record_every: 0, ..IntegratorConfig::default() };
        assert!(simulate(&m, &q, &x0, &cfg, None).is_err());
        let cfg = IntegratorConfig::default();
        assert!(simulate(&m, &q, &PhaseState::first_order(vec![1.0, 2.0]), &cfg, None).is_err());
        let bad = PerturbationSpec::new(-1.0, 0);
        assert!(simulate(&m, &q, &x0, &cfg, Some(&bad)).is_err());
    }
}
