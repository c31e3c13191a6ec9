//! Exact solutions on quadratic objectives.
//!
//! On `f(x) = x.A.x / 2 + b.x` every family is linear in the shifted state
//! `(x1 - x*, x2)`. The second-order families become
//!
//! ```text
//! d/dt [y ]   [     0                  I            ] [y ]
//!      [x2] = [ -c_g A    -c_d I - c_h A            ] [x2]
//! ```
//!
//! and the gradient flow is `y' = -A y`, so the state at time `t` is one
//! matrix exponential away. The exponential comes from
//! [`linalg::expm`](crate::linalg::expm) (relative accuracy about
//! [`EXPM_TOL`](crate::linalg::EXPM_TOL)).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{MethodSpec, PhaseState};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::objective::{Objective, Quadratic};

/// System matrix of `method` on `obj` in shifted coordinates.
pub fn system_matrix(method: &MethodSpec, obj: &Quadratic) -> DMatrix<f64> {
    let a = obj.matrix();
    let n = a.nrows();
    match method.linear_coefficients() {
        None => -a.clone(),
        Some(c) => {
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            for i in 0..n {
                m[(i, n + i)] = 1.0;
                for j in 0..n {
                    m[(n + i, j)] = -c.gradient * a[(i, j)];
                    m[(n + i, n + j)] = -c.hessian * a[(i, j)];
                }
                m[(n + i, n + i)] -= c.damping;
            }
            m
        }
    }
}

/// Shifted initial vector, with the standing-start convention for
/// second-order families.
fn initial_vector(method: &MethodSpec, obj: &Quadratic, x0: &PhaseState) -> Result<DVector<f64>> {
    let n = obj.dim();
    check_dim(n, x0.x1.len())?;
    let xstar = obj.minimizer().expect("quadratics know their minimizer");
    let y: Vec<f64> = x0.x1.iter().zip(xstar).map(|(x, s)| x - s).collect();
    if !method.is_second_order() {
        return Ok(DVector::from_vec(y));
    }
    let mut v = DVector::zeros(2 * n);
    v.rows_mut(0, n).copy_from_slice(&y);
    if !x0.x2.is_empty() {
        check_dim(n, x0.x2.len())?;
        v.rows_mut(n, n).copy_from_slice(&x0.x2);
    }
    Ok(v)
}

fn unshift(method: &MethodSpec, obj: &Quadratic, v: &DVector<f64>) -> PhaseState {
    let n = obj.dim();
    let xstar = obj.minimizer().expect("quadratics know their minimizer");
    let x1 = (0..n).map(|i| v[i] + xstar[i]).collect();
    if method.is_second_order() {
        PhaseState {
            x1,
            x2: v.rows(n, n).iter().cloned().collect(),
        }
    } else {
        PhaseState::first_order(x1)
    }
}

fn require_quadratic<O: Objective + ?Sized>(obj: &O) -> Result<&Quadratic> {
    obj.as_quadratic()
        .ok_or(Error::Unsupported("closed-form oracle needs a built-in quadratic objective"))
}

/// Exact state at time `t >= 0`.
pub fn closed_form_quadratic<O: Objective + ?Sized>(
    method: &MethodSpec,
    obj: &O,
    x0: &PhaseState,
    t: f64,
) -> Result<PhaseState> {
    let q = require_quadratic(obj)?;
    method.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::input(alloc::format!("time must be finite and >= 0, got {t}")));
    }
    let v0 = initial_vector(method, q, x0)?;
    let m = system_matrix(method, q) * t;
    let v = linalg::expm(&m) * v0;
    Ok(unshift(method, q, &v))
}

/// Exact states on a uniform grid `0, dt, 2 dt, ..., steps * dt`, by
/// repeated application of `exp(M dt)`.
pub fn closed_form_grid<O: Objective + ?Sized>(
    method: &MethodSpec,
    obj: &O,
    x0: &PhaseState,
    dt: f64,
    steps: usize,
) -> Result<Vec<PhaseState>> {
    let q = require_quadratic(obj)?;
    method.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::input(alloc::format!("grid spacing must be positive, got {dt}")));
    }
    let mut v = initial_vector(method, q, x0)?;
    let prop = linalg::expm(&(system_matrix(method, q) * dt));
    let mut out = Vec::with_capacity(steps + 1);
    out.push(unshift(method, q, &v));
    for _ in 0..steps {
        v = &prop * v;
        out.push(unshift(method, q, &v));
    }
    Ok(out)
}
