//! Objective functions.
//!
//! Every dynamics family only touches the objective through its value, its
//! gradient and Hessian-vector products, so that is all [`Objective`] asks
//! for. The built-ins are quadratics, which keep every family a linear ODE
//! and therefore give an exact solution to test against.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Strong convexity modulus `mu` and gradient Lipschitz constant `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityParams {
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl ConvexityParams {
    pub fn new(mu: f64, l: f64) -> Result<Self> {
        if !(mu > 0.0 && l >= mu && l.is_finite()) {
            return Err(Error::input(format!(
                "convexity parameters need 0 < mu <= L, got mu={mu}, L={l}"
            )));
        }
        Ok(Self { mu, l })
    }
}

/// A smooth, strongly convex objective on `R^dim`.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `H(x) v`, the Hessian at `x` applied to `v`.
    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>>;

    /// The unique minimizer, when known in closed form.
    fn minimizer(&self) -> Option<&[f64]> {
        None
    }

    /// `f(x*)`, when the minimizer is known.
    fn min_value(&self) -> Option<f64> {
        None
    }

    fn convexity_params(&self) -> Option<ConvexityParams> {
        None
    }

    /// The objective as a built-in quadratic, if it is one.
    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraticKind {
    /// `f(x) = x.x / 2`
    UnitQuadratic,
    /// `f(x) = x.A.x / 2`
    SpdQuadratic,
    /// `f(x) = x.A.x / 2 + b.x`
    ShiftedQuadratic,
}

impl QuadraticKind {
    pub fn name(self) -> &'static str {
        match self {
            QuadraticKind::UnitQuadratic => "unit_quadratic",
            QuadraticKind::SpdQuadratic => "spd_quadratic",
            QuadraticKind::ShiftedQuadratic => "shifted_quadratic",
        }
    }
}

/// Built-in quadratic objective `x.A.x / 2 + b.x` with `A` symmetric
/// positive definite. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    kind: QuadraticKind,
    a: DMatrix<f64>,
    b: Vec<f64>,
    params: ConvexityParams,
    xstar: Vec<f64>,
    fstar: f64,
}

impl Quadratic {
    /// `x.x / 2` on `R^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        Ok(Self {
            kind: QuadraticKind::UnitQuadratic,
            a: DMatrix::identity(dim, dim),
            b: vec![0.0; dim],
            params: ConvexityParams { mu: 1.0, l: 1.0 },
            xstar: vec![0.0; dim],
            fstar: 0.0,
        })
    }

    /// `x.A.x / 2` with `A` given row-major.
    pub fn spd(dim: usize, matrix: &[f64]) -> Result<Self> {
        Self::build(QuadraticKind::SpdQuadratic, dim, matrix, &vec![0.0; dim])
    }

    /// `x.A.x / 2 + b.x` with `A` given row-major.
    pub fn shifted(dim: usize, matrix: &[f64], offset: &[f64]) -> Result<Self> {
        Self::build(QuadraticKind::ShiftedQuadratic, dim, matrix, offset)
    }

    /// `A = diag(entries)`.
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let n = entries.len();
        let mut m = vec![0.0; n * n];
        for (i, e) in entries.iter().enumerate() {
            m[i * n + i] = *e;
        }
        Self::spd(n, &m)
    }

    fn build(kind: QuadraticKind, dim: usize, matrix: &[f64], offset: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if matrix.len() != dim * dim {
            return Err(Error::input(format!(
                "matrix needs {} row-major entries for dim {dim}, got {}",
                dim * dim,
                matrix.len()
            )));
        }
        check_dim(dim, offset.len())?;
        if !linalg::all_finite(matrix) || !linalg::all_finite(offset) {
            return Err(Error::NonFinite("objective definition"));
        }
        let a = DMatrix::from_row_slice(dim, dim, matrix);
        for i in 0..dim {
            for j in 0..i {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::input(format!(
                        "matrix is not symmetric: A[{i}][{j}]={} but A[{j}][{i}]={}",
                        a[(i, j)],
                        a[(j, i)]
                    )));
                }
            }
        }
        let (mu, l) = linalg::symmetric_eigen_range(&a);
        if !(mu > 0.0) {
            return Err(Error::input(format!(
                "matrix is not positive definite (smallest eigenvalue {mu})"
            )));
        }
        let params = ConvexityParams::new(mu, l)?;
        let neg_b: Vec<f64> = offset.iter().map(|v| -v).collect();
        let xstar = linalg::spd_solve(&a, &neg_b)
            .ok_or_else(|| Error::input("matrix is not positive definite"))?;
        // f(x*) = b.x*/2 since A x* = -b
        let fstar = 0.5 * linalg::dot(offset, &xstar);
        Ok(Self {
            kind,
            a,
            b: offset.to_vec(),
            params,
            xstar,
            fstar,
        })
    }

    pub fn kind(&self) -> QuadraticKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &[f64] {
        &self.b
    }

    pub fn params(&self) -> ConvexityParams {
        self.params
    }

    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        match self.kind {
            QuadraticKind::UnitQuadratic => v.to_vec(),
            _ => {
                let out = &self.a * DVector::from_column_slice(v);
                out.iter().cloned().collect()
            }
        }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let ax = self.mat_vec(x);
        Ok(0.5 * linalg::dot(x, &ax) + linalg::dot(&self.b, x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut g = self.mat_vec(x);
        if self.kind == QuadraticKind::ShiftedQuadratic {
            for (gi, bi) in g.iter_mut().zip(&self.b) {
                *gi += bi;
            }
        }
        Ok(g)
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        Ok(self.mat_vec(v))
    }

    fn minimizer(&self) -> Option<&[f64]> {
        Some(&self.xstar)
    }

    fn min_value(&self) -> Option<f64> {
        Some(self.fstar)
    }

    fn convexity_params(&self) -> Option<ConvexityParams> {
        Some(self.params)
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).gradient(x)
    }
    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        (**self).hessian_vec(x, v)
    }
    fn minimizer(&self) -> Option<&[f64]> {
        (**self).minimizer()
    }
    fn min_value(&self) -> Option<f64> {
        (**self).min_value()
    }
    fn convexity_params(&self) -> Option<ConvexityParams> {
        (**self).convexity_params()
    }
    fn as_quadratic(&self) -> Option<&Quadratic> {
        (**self).as_quadratic()
    }
}

/// Wraps an objective and reports a zero Hessian. Turns every family with a
/// Hessian damping term into its Hessian-free counterpart.
#[derive(Debug, Clone)]
pub struct WithoutHessian<O>(pub O);

impl<O: Objective> Objective for WithoutHessian<O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.0.value(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.gradient(x)
    }
    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        Ok(vec![0.0; v.len()])
    }
    fn minimizer(&self) -> Option<&[f64]> {
        self.0.minimizer()
    }
    fn min_value(&self) -> Option<f64> {
        self.0.min_value()
    }
}

/// Maximum errors of central finite differences against the analytic
/// derivatives. Errors are relative to `max(|exact|, 1)`, so they turn
/// absolute where the exact derivative is near zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub max_rel_err_grad: f64,
    pub max_rel_err_hvp: f64,
}

/// Compares `gradient` with central differences of `value`, and
/// `hessian_vec` along each coordinate direction with central differences of
/// `gradient`.
pub fn check_derivatives<O: Objective + ?Sized>(obj: &O, x: &[f64], h: f64) -> Result<DerivativeReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::input(format!("finite-difference step must be positive, got {h}")));
    }
    check_dim(obj.dim(), x.len())?;
    if !linalg::all_finite(x) {
        return Err(Error::NonFinite("derivative check point"));
    }
    let n = obj.dim();
    let grad = obj.gradient(x)?;
    let rel = |approx: f64, exact: f64| (approx - exact).abs() / f64::max(exact.abs(), 1.0);

    let mut max_grad = 0.0f64;
    let mut max_hvp = 0.0f64;
    let mut probe = x.to_vec();
    let mut dir = vec![0.0; n];
    for j in 0..n {
        probe[j] = x[j] + h;
        let f_plus = obj.value(&probe)?;
        let g_plus = obj.gradient(&probe)?;
        probe[j] = x[j] - h;
        let f_minus = obj.value(&probe)?;
        let g_minus = obj.gradient(&probe)?;
        probe[j] = x[j];

        let fd = (f_plus - f_minus) / (2.0 * h);
        if !fd.is_finite() || !grad[j].is_finite() {
            return Err(Error::NonFinite("gradient check"));
        }
        max_grad = max_grad.max(rel(fd, grad[j]));

        dir[j] = 1.0;
        let hv = obj.hessian_vec(x, &dir)?;
        dir[j] = 0.0;
        for i in 0..n {
            let fd = (g_plus[i] - g_minus[i]) / (2.0 * h);
            if !fd.is_finite() || !hv[i].is_finite() {
                return Err(Error::NonFinite("Hessian-vector check"));
            }
            max_hvp = max_hvp.max(rel(fd, hv[i]));
        }
    }
    Ok(DerivativeReport {
        max_rel_err_grad: max_grad,
        max_rel_err_hvp: max_hvp,
    })
}
