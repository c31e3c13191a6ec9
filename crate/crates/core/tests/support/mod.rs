//! Reference solutions that do not go through the matrix exponential.
//!
//! On a diagonal quadratic every coordinate of a second-order family obeys
//! `x'' + c1 x' + c0 x = 0` with constant coefficients, solved here from the
//! roots of `r^2 + c1 r + c0`.

#![allow(dead_code)]

/// Scalar solution of `x'' + c1 x' + c0 x = 0` from `(x0, v0)`, returning
/// `(x(t), x'(t))`.
pub fn modal(c1: f64, c0: f64, x0: f64, v0: f64, t: f64) -> (f64, f64) {
    let disc = c1 * c1 - 4.0 * c0;
    let scale = c1.abs().max(c0.abs()).max(1.0);
    if disc > 1e-10 * scale * scale {
        let sq = disc.sqrt();
        let r1 = (-c1 + sq) / 2.0;
        let r2 = (-c1 - sq) / 2.0;
        // x = a e^{r1 t} + b e^{r2 t}
        let b = (r1 * x0 - v0) / (r1 - r2);
        let a = x0 - b;
        let (e1, e2) = ((r1 * t).exp(), (r2 * t).exp());
        (a * e1 + b * e2, a * r1 * e1 + b * r2 * e2)
    } else if disc < -1e-10 * scale * scale {
        let re = -c1 / 2.0;
        let w = (-disc).sqrt() / 2.0;
        // x = e^{re t} (a cos wt + b sin wt)
        let a = x0;
        let b = (v0 - re * x0) / w;
        let (c, s, e) = ((w * t).cos(), (w * t).sin(), (re * t).exp());
        let x = e * (a * c + b * s);
        let v = re * x + e * (-a * w * s + b * w * c);
        (x, v)
    } else {
        let r = -c1 / 2.0;
        // x = (a + b t) e^{r t}
        let a = x0;
        let b = v0 - r * x0;
        let e = (r * t).exp();
        ((a + b * t) * e, (b + r * (a + b * t)) * e)
    }
}

/// Coefficients `(damping, hessian, gradient)` of each family written as
/// `x'' + damping x' + hessian A x' + gradient A x = 0`, transcribed from
/// the defining equations.
pub fn coefficients(family: &str, p: &[f64]) -> (f64, f64, f64) {
    match family {
        "heavy_ball" => (0.0, 0.0, 1.0),
        "hbf" => (p[0], 0.0, 1.0),
        // x2' = -beta H x2 - alpha (x2 + beta grad f)
        "pni" => (p[0], p[1], p[0] * p[1]),
        "proposed" => (2.0 * p[0], p[1], 1.0 + p[0] * p[1]),
        "nag_sc" => (2.0 * p[0].sqrt(), p[1].sqrt(), 1.0 + (p[0] * p[1]).sqrt()),
        "triple_momentum" => {
            let k = 1.0 + (p[0] * p[1]).sqrt();
            (2.0 * p[0].sqrt(), p[2] * k * p[1].sqrt(), k)
        }
        "hb_high_res" => (2.0 * p[0].sqrt(), 0.0, 1.0 + (p[0] * p[1]).sqrt()),
        other => panic!("no second-order coefficients for {other}"),
    }
}

/// Exact `(x1, x2)` on `diag(a)` with minimizer at the origin.
pub fn diagonal_solution(
    coeffs: (f64, f64, f64),
    a: &[f64],
    x1: &[f64],
    x2: &[f64],
    t: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (d, h, g) = coeffs;
    let mut p = Vec::new();
    let mut v = Vec::new();
    for i in 0..a.len() {
        let (xi, vi) = modal(d + h * a[i], g * a[i], x1[i], x2[i], t);
        p.push(xi);
        v.push(vi);
    }
    (p, v)
}

/// Roots of `r^2 + b r + c` when real, sorted ascending.
pub fn real_roots(b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    Some(((-b - sq) / 2.0, (-b + sq) / 2.0))
}
