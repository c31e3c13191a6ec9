//! The built-in verification suite behind `manifold-descent check`.
//!
//! Each check simulates on the built-in quadratics and compares against an
//! exact reference. Tolerances are fixed here, not configurable.

use manifold_descent_core::diagnostics::{
    check_lyapunov, check_manifold_invariance, check_storage_decay, fit_decay_rate, LyapunovKind,
};
use manifold_descent_core::dynamics::{rhs, select_params};
use manifold_descent_core::integrate::simulate;
use manifold_descent_core::objective::WithoutHessian;
use manifold_descent_core::oracle::{closed_form_grid, system_matrix};
use manifold_descent_core::{
    IntegratorConfig, MethodSpec, Objective, PerturbationSpec, PhaseState, Quadratic, Scheme, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::{self, RunSetup, SweepSpec};
use crate::output;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "check {:>2} {:<22} {status}  {}", self.id, self.name, self.detail)
    }
}

pub const ORACLE_TOL: f64 = 1e-6;
pub const STORAGE_TOL: f64 = 1e-5;
pub const INVARIANCE_TOL: f64 = 1e-6;
pub const RATE_REL_TOL: f64 = 0.05;
pub const ORDER_TOL: f64 = 0.3;

fn unit() -> Quadratic {
    Quadratic::unit(1).expect("unit quadratic")
}

fn diag14() -> Quadratic {
    Quadratic::diagonal(&[1.0, 4.0]).expect("diag(1, 4)")
}

fn start(q: &Quadratic) -> PhaseState {
    PhaseState::at_rest(vec![1.0; q.dim()])
}

/// One representative parameterization per family.
pub fn representative_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::GdFlow,
        MethodSpec::HeavyBall,
        MethodSpec::Hbf { lambda: 2.0 },
        MethodSpec::Pni { alpha: 1.0, beta: 0.9 },
        MethodSpec::Proposed { alpha: 1.0, beta: 0.9 },
        MethodSpec::NagSc { mu: 1.0, s: 0.81 },
        MethodSpec::TripleMomentum { mu: 1.0, s: 0.81, gamma: 1.0 },
        MethodSpec::HbHighRes { mu: 1.0, s: 0.81 },
    ]
}

fn sim(m: MethodSpec, q: &Quadratic, x0: &PhaseState, cfg: IntegratorConfig) -> anyhow::Result<Trajectory> {
    Ok(simulate(&m, q, x0, &cfg, None)?)
}

/// Largest state error of `traj` against the exact solution on the same
/// uniform grid (`record_every = 1`).
pub fn max_oracle_error(traj: &Trajectory, q: &Quadratic, h: f64) -> anyhow::Result<f64> {
    let exact = closed_form_grid(&traj.method, q, &traj.states[0], h, traj.len() - 1)?;
    let mut worst: f64 = 0.0;
    for (a, b) in traj.states.iter().zip(&exact) {
        for (u, v) in a.x1.iter().zip(&b.x1).chain(a.x2.iter().zip(&b.x2)) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(worst)
}

fn oracle_equivalence() -> anyhow::Result<(bool, String)> {
    let cfg = IntegratorConfig::rk4(1e-3, 10.0);
    let mut worst: f64 = 0.0;
    for q in [unit(), diag14()] {
        for m in representative_methods() {
            let tr = sim(m, &q, &start(&q), cfg)?;
            worst = worst.max(max_oracle_error(&tr, &q, cfg.h)?);
        }
    }
    // characteristic roots of the unit-quadratic system at (1, 0.9)
    let m = system_matrix(&MethodSpec::Proposed { alpha: 1.0, beta: 0.9 }, &unit());
    let (tr, det) = (m.trace(), m.determinant());
    let disc = (tr * tr - 4.0 * det).sqrt();
    let mut roots = [(tr - disc) / 2.0, (tr + disc) / 2.0];
    roots.sort_by(f64::total_cmp);
    let roots_ok = (roots[0] + 1.9).abs() < 1e-12 && (roots[1] + 1.0).abs() < 1e-12;
    Ok((
        worst <= ORACLE_TOL && roots_ok,
        format!("max error {worst:.3e} (tol {ORACLE_TOL:e}); roots {:.12}, {:.12}", roots[0], roots[1]),
    ))
}

fn storage_decay() -> anyhow::Result<(bool, String)> {
    let tr = sim(
        MethodSpec::Pni { alpha: 1.0, beta: 0.9 },
        &unit(),
        &start(&unit()),
        IntegratorConfig::rk4(1e-3, 10.0),
    )?;
    let dev = check_storage_decay(&tr, 1.0)?;
    Ok((dev < STORAGE_TOL, format!("max relative deviation {dev:.3e} (tol {STORAGE_TOL:e})")))
}

/// `x2 = -beta grad f(x1)`.
fn on_manifold(q: &Quadratic, x1: Vec<f64>, beta: f64) -> anyhow::Result<PhaseState> {
    let x2 = q.gradient(&x1)?.iter().map(|g| -beta * g).collect();
    Ok(PhaseState::new(x1, x2)?)
}

fn manifold_invariance() -> anyhow::Result<(bool, String)> {
    let m = MethodSpec::Pni { alpha: 1.0, beta: 0.9 };
    let mut worst: f64 = 0.0;
    for q in [unit(), diag14()] {
        let x0 = on_manifold(&q, vec![1.0; q.dim()], 0.9)?;
        let tr = sim(m, &q, &x0, IntegratorConfig::rk4(1e-3, 10.0))?;
        worst = worst.max(check_manifold_invariance(&tr, INVARIANCE_TOL)?.0);
    }
    Ok((worst <= INVARIANCE_TOL, format!("max |psi| {worst:.3e} (tol {INVARIANCE_TOL:e})")))
}

fn lyapunov() -> anyhow::Result<(bool, String)> {
    let cfg = IntegratorConfig::rk4(1e-3, 10.0);
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for q in [unit(), diag14()] {
        let p = q.params();
        let sel = select_params(p.mu, 1.0 / p.l, p.l)?;
        // the u2-only system is heavy ball with friction alpha
        let u2 = sim(MethodSpec::Hbf { lambda: sel.alpha }, &q, &start(&q), cfg)?;
        let (m1, w1) = check_lyapunov(&u2, LyapunovKind::Basic)?;
        let prop = sim(
            MethodSpec::Proposed {
                alpha: sel.alpha,
                beta: sel.beta,
            },
            &q,
            &start(&q),
            cfg,
        )?;
        let (m2, w2) = check_lyapunov(&prop, LyapunovKind::Exp)?;
        pass &= m1 && m2;
        worst = worst.max(w1).max(w2);
    }
    Ok((pass, format!("worst uptick {worst:.3e}")))
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> PhaseState {
    let mut v = || (0..n).map(|_| rng.random_range(-10.0..10.0)).collect::<Vec<f64>>();
    let x1 = v();
    let x2 = v();
    PhaseState { x1, x2 }
}

fn nag_sc_identity() -> anyhow::Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let nag = MethodSpec::NagSc { mu: 1.0, s: 0.81 };
    let prop = MethodSpec::Proposed { alpha: 1.0, beta: 0.9 };
    let hb = MethodSpec::HbHighRes { mu: 1.0, s: 0.81 };
    let mut mismatches = 0;
    for q in [unit(), diag14()] {
        let flat = WithoutHessian(&q);
        for _ in 0..100 {
            let s = random_state(&mut rng, q.dim());
            if rhs(&nag, &q, &s)? != rhs(&prop, &q, &s)? {
                mismatches += 1;
            }
            if rhs(&hb, &q, &s)? != rhs(&prop, &flat, &s)? {
                mismatches += 1;
            }
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatching states of 400")))
}

/// Largest excursion below zero, `max(0, -min x1_0)`.
pub fn undershoot(traj: &Trajectory) -> f64 {
    traj.states.iter().map(|s| -s.x1[0]).fold(0.0, f64::max)
}

/// Horizon for the settling sweeps; long enough for the slowest grid point
/// (`beta = 0.3`) to enter the band.
pub const FIGURE_T_MAX: f64 = 40.0;

fn figure_trends() -> anyhow::Result<(bool, String)> {
    let mut setup = RunSetup::new(unit(), start(&unit()), IntegratorConfig::rk4(1e-3, FIGURE_T_MAX));
    setup.diagnostics.settle_eps = 1e-4;
    let alphas = [1.0, 10.0];
    let betas = [0.3, 0.6, 0.9];
    let mut pass = true;
    let mut notes = Vec::new();
    for template in [MethodSpec::Pni { alpha: 1.0, beta: 1.0 }, MethodSpec::Proposed { alpha: 1.0, beta: 1.0 }] {
        let spec = SweepSpec {
            alphas: alphas.to_vec(),
            betas: betas.to_vec(),
            methods: vec![template],
            seeds: vec![],
        };
        let recs = bench::sweep(&spec, &setup)?;
        for (ai, a) in alphas.iter().enumerate() {
            let t: Vec<f64> = (0..betas.len()).map(|bi| recs[ai * betas.len() + bi].settling_time).collect();
            let ok = t.iter().all(|x| x.is_finite()) && t.windows(2).all(|w| w[1] < w[0]);
            pass &= ok;
            notes.push(format!(
                "{} a={a}: {:.3}>{:.3}>{:.3}",
                template.family(),
                t[0],
                t[1],
                t[2]
            ));
        }
        for b in betas {
            let lo = sim(bench::instantiate(&template, 1.0, b), &unit(), &start(&unit()), setup.integrator)?;
            let hi = sim(bench::instantiate(&template, 10.0, b), &unit(), &start(&unit()), setup.integrator)?;
            pass &= undershoot(&hi) <= undershoot(&lo);
        }
    }
    Ok((pass, notes.join("; ")))
}

fn decay_rate() -> anyhow::Result<(bool, String)> {
    let tr = sim(
        MethodSpec::Proposed { alpha: 1.0, beta: 0.9 },
        &unit(),
        &start(&unit()),
        IntegratorConfig::rk4(1e-3, 10.0),
    )?;
    let fit = fit_decay_rate(&tr, (2.0, 8.0))?;
    let rel = (fit.rate - 2.0).abs() / 2.0;
    Ok((rel <= RATE_REL_TOL, format!("rate {:.4} (target 2, rel err {rel:.2e})", fit.rate)))
}

fn persistence() -> anyhow::Result<(bool, String)> {
    let setup = RunSetup::new(unit(), start(&unit()), IntegratorConfig::rk4(1e-3, 10.0));
    let methods = [MethodSpec::Pni { alpha: 1.0, beta: 0.9 }, MethodSpec::Proposed { alpha: 1.0, beta: 0.9 }];
    let seeds: Vec<u64> = (0..20).collect();
    let rows = bench::persistence_experiment(&[1e-3], &seeds, &methods, &setup, PerturbationSpec::default())?;
    let pni = &rows[2];
    let prop = &rows[3];
    let mut control_ok = true;
    for (row, m) in rows[..2].iter().zip(methods) {
        let clean = sim(m, &unit(), &start(&unit()), setup.integrator)?;
        control_ok &= row.median_distance.to_bits() == clean.terminal_distance().to_bits();
    }
    Ok((
        prop.median_distance <= pni.median_distance && control_ok,
        format!(
            "median |x1| proposed {:.3e} vs pni {:.3e}; control rows exact: {control_ok}",
            prop.median_distance, pni.median_distance
        ),
    ))
}

/// Least-squares slope of `log err` against `log h`.
pub fn fitted_order(hs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn empirical_order(scheme: Scheme, hs: &[f64]) -> anyhow::Result<f64> {
    let m = MethodSpec::Proposed { alpha: 1.0, beta: 0.9 };
    let q = unit();
    let errs = hs
        .iter()
        .map(|&h| {
            let cfg = IntegratorConfig {
                scheme,
                h,
                t_max: 5.0,
                ..IntegratorConfig::default()
            };
            max_oracle_error(&sim(m, &q, &start(&q), cfg)?, &q, h)
        })
        .collect::<anyhow::Result<Vec<f64>>>()?;
    Ok(fitted_order(hs, &errs))
}

pub const EULER_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
pub const RK4_STEPS: [f64; 3] = [1e-1, 5e-2, 2.5e-2];

fn integrator_order() -> anyhow::Result<(bool, String)> {
    let p_euler = empirical_order(Scheme::Euler, &EULER_STEPS)?;
    let p_rk4 = empirical_order(Scheme::Rk4, &RK4_STEPS)?;
    Ok((
        (p_euler - 1.0).abs() <= ORDER_TOL && (p_rk4 - 4.0).abs() <= ORDER_TOL,
        format!("euler {p_euler:.3}, rk4 {p_rk4:.3}"),
    ))
}

fn determinism() -> anyhow::Result<(bool, String)> {
    let mut setup = RunSetup::new(unit(), start(&unit()), IntegratorConfig::rk4(1e-2, 10.0));
    setup.perturbation = Some(PerturbationSpec::new(1e-3, 0));
    let spec = SweepSpec {
        alphas: vec![1.0, 10.0],
        betas: vec![0.3, 0.6, 0.9],
        methods: vec![MethodSpec::Pni { alpha: 1.0, beta: 1.0 }, MethodSpec::Proposed { alpha: 1.0, beta: 1.0 }],
        seeds: vec![1, 2, 3],
    };
    let a = output::summary_csv(&bench::sweep(&spec, &setup)?)?;
    let b = output::summary_csv(&bench::sweep(&spec, &setup)?)?;
    Ok((a == b, format!("{} bytes, identical: {}", a.len(), a == b)))
}

type CheckFn = fn() -> anyhow::Result<(bool, String)>;

pub const CHECKS: [(u32, &str, CheckFn); 10] = [
    (1, "oracle_equivalence", oracle_equivalence),
    (2, "storage_decay", storage_decay),
    (3, "manifold_invariance", manifold_invariance),
    (4, "lyapunov", lyapunov),
    (5, "nag_sc_identity", nag_sc_identity),
    (6, "figure_trends", figure_trends),
    (7, "decay_rate", decay_rate),
    (8, "persistence", persistence),
    (9, "integrator_order", integrator_order),
    (10, "determinism", determinism),
];

/// Runs every check. A check that errors counts as failed.
pub fn run_all() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(id, name, f)| {
            let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e:#}")));
            CheckOutcome {
                id: *id,
                name,
                pass,
                detail,
            }
        })
        .collect()
}
