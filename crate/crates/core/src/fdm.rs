//! Upwind finite differences on a Shishkin mesh for the 1D steady problems.
//!
//! The discrete operator at an interior node `x_i` with spacings
//! `h_i = x_i - x_{i-1}` and `h_{i+1} = x_{i+1} - x_i` is
//!
//! ```text
//! -eps1 · 2/(h_i + h_{i+1}) · [(u_{i+1} - u_i)/h_{i+1} - (u_i - u_{i-1})/h_i]
//!   + eps2·d_i · D u_i + r_i u_i = f_i
//! ```
//!
//! where `D` is the backward difference when `eps2·d_i > 0` and the forward
//! difference otherwise.

use crate::error::{Error, Result};
use crate::metrics::linf_err;
use crate::problems::{characteristic_roots, PerturbationPair, ProblemSpec};

/// Piecewise-uniform mesh with `N/4`, `N/2` and `N/4` cells on
/// `[0, tau_left]`, `[tau_left, 1 - tau_right]` and `[1 - tau_right, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShishkinMesh1D {
    pub n_cells: usize,
    pub tau_left: f64,
    pub tau_right: f64,
    pub nodes: Vec<f64>,
}

impl ShishkinMesh1D {
    pub fn from_transitions(n_cells: usize, tau_left: f64, tau_right: f64) -> Result<Self> {
        if n_cells < 8 || !n_cells.is_multiple_of(4) {
            return Err(Error::Config(format!("Shishkin mesh needs N >= 8 divisible by 4, got {n_cells}")));
        }
        for tau in [tau_left, tau_right] {
            if !(tau > 0.0 && tau <= 0.25) {
                return Err(Error::Config(format!("transition width {tau} outside (0, 1/4]")));
            }
        }
        let q = n_cells / 4;
        let mut nodes = Vec::with_capacity(n_cells + 1);
        for i in 0..q {
            nodes.push(tau_left * i as f64 / q as f64);
        }
        let inner = 1.0 - tau_right - tau_left;
        for i in 0..2 * q {
            nodes.push(tau_left + inner * i as f64 / (2 * q) as f64);
        }
        for i in 0..q {
            nodes.push(1.0 - tau_right + tau_right * i as f64 / q as f64);
        }
        nodes.push(1.0);
        Ok(Self { n_cells, tau_left, tau_right, nodes })
    }
}

/// Transition points `tau = min(1/4, 2 ln N / mu)` on each side, with `mu`
/// the characteristic roots of the problem.
pub fn shishkin_mesh(n_cells: usize, pair: PerturbationPair, spec: &ProblemSpec) -> Result<ShishkinMesh1D> {
    if n_cells < 8 || !n_cells.is_multiple_of(4) {
        return Err(Error::Config(format!("Shishkin mesh needs N >= 8 divisible by 4, got {n_cells}")));
    }
    let bvp = Bvp1D::from_spec(spec, pair)?;
    let (mu_l, mu_r) = characteristic_roots(pair, &bvp.d, &bvp.r, 101)?;
    let ln_n = (n_cells as f64).ln();
    ShishkinMesh1D::from_transitions(n_cells, (2.0 * ln_n / mu_l).min(0.25), (2.0 * ln_n / mu_r).min(0.25))
}

/// `-eps1 u'' + eps2 d(x) u' + r(x) u = f(x)` on `(0, 1)` with Dirichlet data.
pub struct Bvp1D<'a> {
    pub eps1: f64,
    pub eps2: f64,
    pub d: Box<dyn Fn(f64) -> f64 + 'a>,
    pub r: Box<dyn Fn(f64) -> f64 + 'a>,
    pub f: Box<dyn Fn(f64) -> f64 + 'a>,
    pub left: f64,
    pub right: f64,
}

impl<'a> Bvp1D<'a> {
    pub fn from_spec(spec: &'a ProblemSpec, pair: PerturbationPair) -> Result<Self> {
        if spec.input_dim != 1 {
            return Err(Error::Unsupported(format!("the finite-difference baseline is 1D only, {} is not", spec.id)));
        }
        // Probe once so the closures below cannot fail.
        spec.convection(0.0)?;
        spec.reaction(0.0)?;
        spec.source(&[0.5], pair)?;
        Ok(Self {
            eps1: pair.eps1,
            eps2: pair.eps2,
            d: Box::new(move |x| spec.convection(x).unwrap_or(f64::NAN)),
            r: Box::new(move |x| spec.reaction(x).unwrap_or(f64::NAN)),
            f: Box::new(move |x| spec.source(&[x], pair).unwrap_or(f64::NAN)),
            left: spec.boundary_values(&[0.0])?,
            right: spec.boundary_values(&[1.0])?,
        })
    }
}

/// A tridiagonal system; `sub[0]` and `sup[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub main: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    /// Thomas algorithm.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.main.len();
        if self.sub.len() != n || self.sup.len() != n || self.rhs.len() != n {
            return Err(Error::Config("tridiagonal system has mismatched lengths".into()));
        }
        let mut c = vec![0.0; n];
        let mut y = vec![0.0; n];
        for i in 0..n {
            let (lo, prev_c, prev_y) = if i == 0 { (0.0, 0.0, 0.0) } else { (self.sub[i], c[i - 1], y[i - 1]) };
            let pivot = self.main[i] - lo * prev_c;
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Numeric(format!("singular pivot at row {i}")));
            }
            c[i] = if i + 1 < n { self.sup[i] / pivot } else { 0.0 };
            y[i] = (self.rhs[i] - lo * prev_y) / pivot;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            y[i] -= c[i] * y[i + 1];
        }
        Ok(y)
    }
}

/// Assembles the upwind scheme on `nodes`.
pub fn assemble(bvp: &Bvp1D<'_>, nodes: &[f64]) -> Result<TridiagonalSystem> {
    let n = nodes.len();
    if n < 3 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("mesh must have at least 3 strictly increasing nodes".into()));
    }
    let mut sys = TridiagonalSystem { sub: vec![0.0; n], main: vec![0.0; n], sup: vec![0.0; n], rhs: vec![0.0; n] };
    sys.main[0] = 1.0;
    sys.rhs[0] = bvp.left;
    sys.main[n - 1] = 1.0;
    sys.rhs[n - 1] = bvp.right;
    for i in 1..n - 1 {
        let x = nodes[i];
        let (hl, hr) = (x - nodes[i - 1], nodes[i + 1] - x);
        let diff = 2.0 * bvp.eps1 / (hl + hr);
        let (mut lo, mut mid, mut hi) = (-diff / hl, diff / hl + diff / hr, -diff / hr);
        let conv = bvp.eps2 * (bvp.d)(x);
        if conv > 0.0 {
            lo -= conv / hl;
            mid += conv / hl;
        } else {
            mid -= conv / hr;
            hi += conv / hr;
        }
        mid += (bvp.r)(x);
        sys.sub[i] = lo;
        sys.main[i] = mid;
        sys.sup[i] = hi;
        sys.rhs[i] = (bvp.f)(x);
    }
    Ok(sys)
}

/// Nodal values of the upwind solution of a generic problem.
pub fn upwind_solve_bvp(bvp: &Bvp1D<'_>, nodes: &[f64]) -> Result<Vec<f64>> {
    let u = assemble(bvp, nodes)?.solve()?;
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("finite-difference solution at node {i}")));
    }
    Ok(u)
}

/// Nodal values of the upwind solution of a 1D steady benchmark problem.
pub fn upwind_solve(spec: &ProblemSpec, pair: PerturbationPair, mesh: &ShishkinMesh1D) -> Result<Vec<f64>> {
    upwind_solve_bvp(&Bvp1D::from_spec(spec, pair)?, &mesh.nodes)
}

/// Maximum nodal error of the upwind solution on an `N`-cell Shishkin mesh.
pub fn fdm_max_error(spec: &ProblemSpec, pair: PerturbationPair, n_cells: usize) -> Result<f64> {
    let mesh = shishkin_mesh(n_cells, pair, spec)?;
    let u = upwind_solve(spec, pair, &mesh)?;
    let exact = mesh.nodes.iter().map(|&x| spec.exact_solution(&[x], pair)).collect::<Result<Vec<_>>>()?;
    linf_err(&exact, &u)
}
