//! The six benchmark problems: operators, data and closed-form solutions.
//!
//! All residual operators are linear and use only the value, first
//! derivatives and pure second derivatives of the unknown, so each problem
//! reduces at a point to a set of [`OperatorCoeffs`] plus a source term.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::jets::Jet2;

/// Coordinates within this distance of a face count as lying on it.
const FACE_TOL: f64 = 1e-12;

/// The diffusion parameter `eps1` and convection parameter `eps2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationPair {
    pub eps1: f64,
    pub eps2: f64,
}

impl PerturbationPair {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        for (name, v) in [("eps1", eps1), ("eps2", eps2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(Self { eps1, eps2 })
    }
}

impl fmt::Display for PerturbationPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:e}, {:e})", self.eps1, self.eps2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemId {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Ex5,
    Ex6,
}

impl ProblemId {
    pub const ALL: [ProblemId; 6] =
        [ProblemId::Ex1, ProblemId::Ex2, ProblemId::Ex3, ProblemId::Ex4, ProblemId::Ex5, ProblemId::Ex6];

    pub fn spec(self) -> ProblemSpec {
        ProblemSpec::new(self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::Ex1 => "ex1",
            ProblemId::Ex2 => "ex2",
            ProblemId::Ex3 => "ex3",
            ProblemId::Ex4 => "ex4",
            ProblemId::Ex5 => "ex5",
            ProblemId::Ex6 => "ex6",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown problem id {s:?} (expected ex1..ex6)")))
    }
}

/// Asymptotic regime of the one-dimensional operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeLabel {
    ConvectionDiffusion,
    DiffusionConvectionReaction,
    ReactionDiffusion,
}

/// Coefficients of the linear residual operator at one point:
/// `L[u] = reaction·u + Σ grad[i]·∂_i u + Σ lap[i]·∂²_i u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorCoeffs {
    pub reaction: f64,
    pub grad: [f64; 3],
    pub lap: [f64; 3],
}

impl OperatorCoeffs {
    pub fn apply(&self, jet: &Jet2) -> f64 {
        let mut acc = self.reaction * jet.value;
        for i in 0..jet.dim() {
            acc += self.grad[i] * jet.grad[i] + self.lap[i] * jet.lap_terms[i];
        }
        acc
    }
}

/// One benchmark problem. Coordinates are ordered `x`, `(x, t)`, `(x, y)` or
/// `(x, y, t)`; every spatial domain is the unit interval or square and every
/// time horizon is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub id: ProblemId,
    pub input_dim: usize,
    pub spatial_dim: usize,
    pub time_horizon: Option<f64>,
}

impl ProblemSpec {
    pub fn new(id: ProblemId) -> Self {
        let (input_dim, spatial_dim, time_horizon) = match id {
            ProblemId::Ex1 | ProblemId::Ex2 => (1, 1, None),
            ProblemId::Ex3 => (2, 1, Some(1.0)),
            ProblemId::Ex4 | ProblemId::Ex5 => (2, 2, None),
            ProblemId::Ex6 => (3, 2, Some(1.0)),
        };
        Self { id, input_dim, spatial_dim, time_horizon }
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_horizon.is_some()
    }

    /// Index of the time coordinate, if any.
    pub fn time_axis(&self) -> Option<usize> {
        self.time_horizon.map(|_| self.spatial_dim)
    }

    pub fn has_exact_solution(&self) -> bool {
        true
    }

    /// Upper bound of each coordinate.
    pub fn upper_bounds(&self) -> Vec<f64> {
        let mut b = vec![1.0; self.spatial_dim];
        if let Some(t) = self.time_horizon {
            b.push(t);
        }
        b
    }

    /// Convection coefficient `d(x)` of a one-dimensional steady problem.
    pub fn convection(&self, _x: f64) -> Result<f64> {
        match self.id {
            ProblemId::Ex1 => Ok(1.0),
            ProblemId::Ex2 => Ok(-1.0),
            _ => Err(Error::Unsupported(format!("{} is not a 1D steady problem", self.id))),
        }
    }

    /// Reaction coefficient `r(x)` of a one-dimensional steady problem.
    pub fn reaction(&self, _x: f64) -> Result<f64> {
        match self.id {
            ProblemId::Ex1 | ProblemId::Ex2 => Ok(1.0),
            _ => Err(Error::Unsupported(format!("{} is not a 1D steady problem", self.id))),
        }
    }

    fn check_dim(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.input_dim {
            return Err(Error::InputShape { expected: self.input_dim, got: point.len() });
        }
        Ok(())
    }

    fn check_in_domain(&self, point: &[f64]) -> Result<()> {
        self.check_dim(point)?;
        for (&c, hi) in point.iter().zip(self.upper_bounds()) {
            if !(c >= -FACE_TOL && c <= hi + FACE_TOL) {
                return Err(Error::Domain(format!("point {point:?} lies outside the domain of {}", self.id)));
            }
        }
        Ok(())
    }

    /// Whether `point` lies on the spatial boundary or the initial slice.
    pub fn on_boundary(&self, point: &[f64]) -> bool {
        if point.len() != self.input_dim {
            return false;
        }
        let spatial = point[..self.spatial_dim].iter().any(|&c| c.abs() <= FACE_TOL || (c - 1.0).abs() <= FACE_TOL);
        let initial = self.time_axis().is_some_and(|t| point[t].abs() <= FACE_TOL);
        spatial || initial
    }

    pub fn operator_coeffs(&self, point: &[f64], pair: PerturbationPair) -> OperatorCoeffs {
        let PerturbationPair { eps1, eps2 } = pair;
        let mut c = OperatorCoeffs { reaction: 1.0, grad: [0.0; 3], lap: [0.0; 3] };
        match self.id {
            ProblemId::Ex1 => {
                c.grad[0] = eps2;
                c.lap[0] = -eps1;
            }
            ProblemId::Ex2 => {
                c.grad[0] = -eps2;
                c.lap[0] = -eps1;
            }
            ProblemId::Ex3 => {
                c.reaction = -(-point[1]).exp_m1();
                c.grad = [eps2, 1.0, 0.0];
                c.lap[0] = -eps1;
            }
            ProblemId::Ex4 | ProblemId::Ex5 => {
                c.grad[0] = eps2;
                c.lap = [-eps1, -eps1, 0.0];
            }
            ProblemId::Ex6 => {
                c.grad = [eps2, 0.0, 1.0];
                c.lap = [-eps1, -eps1, 0.0];
            }
        }
        c
    }

    /// Right-hand side of the equation. Ex1 and Ex2 use their stated sources;
    /// the others are manufactured by applying the operator to the closed-form
    /// solution.
    pub fn source(&self, point: &[f64], pair: PerturbationPair) -> Result<f64> {
        self.check_dim(point)?;
        Ok(match self.id {
            ProblemId::Ex1 => (PI * point[0]).cos(),
            ProblemId::Ex2 => (1.0 - point[0]).exp(),
            _ => self.operator_coeffs(point, pair).apply(&self.exact_jet_unchecked(point, pair)),
        })
    }

    pub fn exact_solution(&self, point: &[f64], pair: PerturbationPair) -> Result<f64> {
        self.check_in_domain(point)?;
        Ok(self.exact_jet_unchecked(point, pair).value)
    }

    /// Closed-form solution with its analytic first and pure second derivatives.
    pub fn exact_jet(&self, point: &[f64], pair: PerturbationPair) -> Result<Jet2> {
        self.check_in_domain(point)?;
        Ok(self.exact_jet_unchecked(point, pair))
    }

    fn exact_jet_unchecked(&self, p: &[f64], pair: PerturbationPair) -> Jet2 {
        match self.id {
            ProblemId::Ex1 => {
                let u = Ex1Solution::new(pair).profile(p[0]);
                Jet2 { value: u.v, grad: vec![u.d1], lap_terms: vec![u.d2] }
            }
            ProblemId::Ex2 => {
                let u = Ex2Solution::new(pair).profile(p[0]);
                Jet2 { value: u.v, grad: vec![u.d1], lap_terms: vec![u.d2] }
            }
            ProblemId::Ex3 => {
                let u = Ex1Solution::new(pair).profile(p[0]);
                let t = time_factor(p[1]);
                Jet2 { value: t.v * u.v, grad: vec![t.v * u.d1, t.d1 * u.v], lap_terms: vec![t.v * u.d2, t.d2 * u.v] }
            }
            ProblemId::Ex4 | ProblemId::Ex5 | ProblemId::Ex6 => {
                let f = LayerFactors::new(pair);
                let mut x = f.x_profile(p[0]);
                if self.id == ProblemId::Ex5 {
                    x = Profile::product(modulation(p[0]), x);
                }
                let y = f.y_profile(p[1]);
                let t = if self.id == ProblemId::Ex6 { time_factor(p[2]) } else { Profile::constant(1.0) };
                let s = 0.25 * t.v;
                let mut grad = vec![s * x.d1 * y.v, s * x.v * y.d1];
                let mut lap = vec![s * x.d2 * y.v, s * x.v * y.d2];
                if self.id == ProblemId::Ex6 {
                    grad.push(0.25 * t.d1 * x.v * y.v);
                    lap.push(0.25 * t.d2 * x.v * y.v);
                }
                Jet2 { value: s * x.v * y.v, grad, lap_terms: lap }
            }
        }
    }

    /// Dirichlet datum on the spatial boundary or the initial slice. Every
    /// registered problem prescribes homogeneous data.
    pub fn boundary_values(&self, point: &[f64]) -> Result<f64> {
        self.check_in_domain(point)?;
        if !self.on_boundary(point) {
            return Err(Error::Domain(format!("point {point:?} is not on the boundary of {}", self.id)));
        }
        Ok(0.0)
    }

    /// Initial datum `u(., 0)` of a time-dependent problem.
    pub fn initial_values(&self, point: &[f64]) -> Result<f64> {
        let t = self
            .time_axis()
            .ok_or_else(|| Error::Unsupported(format!("{} has no initial condition", self.id)))?;
        self.check_in_domain(point)?;
        if point[t].abs() > FACE_TOL {
            return Err(Error::Domain(format!("point {point:?} is not on the initial slice")));
        }
        Ok(0.0)
    }
}

/// `L[u](point) - source(point)` evaluated from the jet of `u` at `point`.
pub fn residual(spec: &ProblemSpec, jet: &Jet2, point: &[f64], pair: PerturbationPair) -> Result<f64> {
    if jet.dim() != spec.input_dim {
        return Err(Error::InputShape { expected: spec.input_dim, got: jet.dim() });
    }
    Ok(spec.operator_coeffs(point, pair).apply(jet) - spec.source(point, pair)?)
}

/// Positive roots `(left, right)` of `-eps1 ρ² + b ρ + r = 0` in magnitude,
/// i.e. `(-b + q)/(2 eps1)` and `(b + q)/(2 eps1)` with `q = sqrt(b² + 4 eps1 r)`,
/// evaluated without cancellation.
fn frozen_roots(eps1: f64, b: f64, r: f64) -> (f64, f64) {
    let q = (b * b + 4.0 * eps1 * r).sqrt();
    let left = if b > 0.0 { 2.0 * r / (b + q) } else { (q - b) / (2.0 * eps1) };
    let right = if b < 0.0 { 2.0 * r / (q - b) } else { (b + q) / (2.0 * eps1) };
    (left, right)
}

/// Layer exponents `(mu_L, mu_R)`: the minimum over a uniform grid on `[0, 1]`
/// of the frozen-coefficient characteristic roots.
pub fn characteristic_roots(
    pair: PerturbationPair,
    d_fn: impl Fn(f64) -> f64,
    r_fn: impl Fn(f64) -> f64,
    grid_n: usize,
) -> Result<(f64, f64)> {
    if grid_n < 2 {
        return Err(Error::Config(format!("grid_n must be at least 2, got {grid_n}")));
    }
    let mut mu = (f64::INFINITY, f64::INFINITY);
    for k in 0..grid_n {
        let x = k as f64 / (grid_n - 1) as f64;
        let r = r_fn(x);
        if r < 0.0 || !r.is_finite() {
            return Err(Error::Domain(format!("reaction coefficient {r} at x = {x} must be non-negative")));
        }
        let (l, rt) = frozen_roots(pair.eps1, pair.eps2 * d_fn(x), r);
        mu = (mu.0.min(l), mu.1.min(rt));
    }
    Ok(mu)
}

pub fn classify_regime(pair: PerturbationPair) -> RegimeLabel {
    if pair.eps2 >= 0.5 {
        RegimeLabel::ConvectionDiffusion
    } else if pair.eps1 < pair.eps2 * pair.eps2 {
        RegimeLabel::DiffusionConvectionReaction
    } else {
        RegimeLabel::ReactionDiffusion
    }
}

/// A scalar function with its first and second derivative at one point.
#[derive(Debug, Clone, Copy)]
struct Profile {
    v: f64,
    d1: f64,
    d2: f64,
}

impl Profile {
    fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    fn product(a: Profile, b: Profile) -> Profile {
        Profile { v: a.v * b.v, d1: a.d1 * b.v + a.v * b.d1, d2: a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2 }
    }

    /// `1 - exp(-k s)` as a function of `s`.
    fn rise(k: f64, s: f64) -> Profile {
        let e = (-k * s).exp();
        Profile { v: -(-k * s).exp_m1(), d1: k * e, d2: -k * k * e }
    }

    /// `1 - exp(-k (1 - s))` as a function of `s`.
    fn fall(k: f64, s: f64) -> Profile {
        let r = Self::rise(k, 1.0 - s);
        Profile { v: r.v, d1: -r.d1, d2: r.d2 }
    }
}

/// `1 - exp(-t)`.
fn time_factor(t: f64) -> Profile {
    let e = (-t).exp();
    Profile { v: -(-t).exp_m1(), d1: e, d2: -e }
}

/// `1 + sin(8x)/2`.
fn modulation(x: f64) -> Profile {
    let (s, c) = (8.0 * x).sin_cos();
    Profile { v: 1.0 + 0.5 * s, d1: 4.0 * c, d2: -32.0 * s }
}

struct Ex1Solution {
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
    mu_l: f64,
    mu_r: f64,
}

impl Ex1Solution {
    fn new(pair: PerturbationPair) -> Self {
        let PerturbationPair { eps1, eps2 } = pair;
        let (mu_l, mu_r) = frozen_roots(eps1, eps2, 1.0);
        let k = eps1 * PI * PI + 1.0;
        let den = eps2 * eps2 * PI * PI + k * k;
        let a1 = k / den;
        let b1 = eps2 * PI / den;
        let shared = -(-(mu_l + mu_r)).exp_m1();
        let a2 = -a1 * (1.0 + (-mu_r).exp()) / shared;
        let b2 = a1 * (1.0 + (-mu_l).exp()) / shared;
        Self { a1, a2, b1, b2, mu_l, mu_r }
    }

    fn profile(&self, x: f64) -> Profile {
        let (s, c) = (PI * x).sin_cos();
        let el = (-self.mu_l * x).exp();
        let er = (-self.mu_r * (1.0 - x)).exp();
        let (a1, a2, b1, b2) = (self.a1, self.a2, self.b1, self.b2);
        Profile {
            v: a1 * c + a2 * el + b1 * s + b2 * er,
            d1: -PI * a1 * s - self.mu_l * a2 * el + PI * b1 * c + self.mu_r * b2 * er,
            d2: -PI * PI * (a1 * c + b1 * s) + self.mu_l * self.mu_l * a2 * el + self.mu_r * self.mu_r * b2 * er,
        }
    }
}

struct Ex2Solution {
    scale: f64,
    c1: f64,
    c2: f64,
    m1: f64,
    m2: f64,
}

impl Ex2Solution {
    fn new(pair: PerturbationPair) -> Self {
        let PerturbationPair { eps1, eps2 } = pair;
        let q = (eps2 * eps2 + 4.0 * eps1).sqrt();
        // m1 < 0 < m2; both exponentials below are evaluated at non-positive arguments.
        let m1 = -2.0 / (eps2 + q);
        let m2 = (eps2 + q) / (2.0 * eps1);
        let den = -(-q / eps1).exp_m1();
        Self {
            scale: 1.0 / (eps1 - eps2 - 1.0),
            c1: (1f64.exp() - m1.exp()) / den,
            c2: -(1.0 - m2).exp_m1() / den,
            m1,
            m2,
        }
    }

    fn profile(&self, x: f64) -> Profile {
        let e_left = (-self.m2 * x).exp();
        let e_src = (1.0 - x).exp();
        let e_right = (self.m1 * (1.0 - x)).exp();
        let (c1, c2, m1, m2) = (self.c1, self.c2, self.m1, self.m2);
        Profile {
            v: self.scale * (c1 * e_left - e_src + c2 * e_right),
            d1: self.scale * (-m2 * c1 * e_left + e_src - m1 * c2 * e_right),
            d2: self.scale * (m2 * m2 * c1 * e_left - e_src + m1 * m1 * c2 * e_right),
        }
    }
}

/// Exponents of the two-dimensional layer factors.
struct LayerFactors {
    left: f64,
    right: f64,
    char_layer: f64,
}

impl LayerFactors {
    fn new(pair: PerturbationPair) -> Self {
        let PerturbationPair { eps1, eps2 } = pair;
        // eps2·l_{1,2} / (2 eps1) with l_{1,2} = sqrt(1 + 16 eps1/eps2²) ∓ 1.
        let q = (eps2 * eps2 + 16.0 * eps1).sqrt();
        Self { left: 8.0 / (eps2 + q), right: (eps2 + q) / (2.0 * eps1), char_layer: 1.0 / eps1.sqrt() }
    }

    fn x_profile(&self, x: f64) -> Profile {
        Profile::product(Profile::rise(self.left, x), Profile::fall(self.right, x))
    }

    fn y_profile(&self, y: f64) -> Profile {
        Profile::product(Profile::rise(self.char_layer, y), Profile::fall(self.char_layer, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(e1: f64, e2: f64) -> PerturbationPair {
        PerturbationPair::new(e1, e2).unwrap()
    }

    fn random_point(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..spec.input_dim).map(|_| rng.gen_range(1e-6..1.0 - 1e-6)).collect()
    }

    #[test]
    fn symmetric_roots() {
        let p = PerturbationPair { eps1: 0.25, eps2: 0.0 };
        assert_eq!(characteristic_roots(p, |_| 1.0, |_| 1.0, 11).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn example_one_roots() {
        let (l, r) = characteristic_roots(pair(1e-2, 1e-3), |_| 1.0, |_| 1.0, 1001).unwrap();
        // Direct evaluation of (∓eps2 + sqrt(eps2² + 4 eps1)) / (2 eps1).
        let q = (1e-6f64 + 4e-2).sqrt();
        assert!((l - (q - 1e-3) / 2e-2).abs() < 1e-10);
        assert!((r - (q + 1e-3) / 2e-2).abs() < 1e-10);
        assert!((l - 9.950125).abs() < 1e-6);
        assert!((r - 10.050125).abs() < 1e-6);
        assert_eq!(characteristic_roots(pair(1e-2, 1e-3), |_| 1.0, |_| 1.0, 2).unwrap(), (l, r));
    }

    #[test]
    fn roots_reject_bad_input() {
        assert!(matches!(characteristic_roots(pair(0.1, 0.1), |_| 1.0, |_| -1.0, 5), Err(Error::Domain(_))));
        assert!(matches!(characteristic_roots(pair(0.1, 0.1), |_| 1.0, |_| 1.0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn roots_are_ordered_for_positive_convection() {
        for &(e1, e2) in &[(1e-1, 1e-2), (1e-3, 1e-1), (1e-6, 1e-7), (0.3, 0.9)] {
            let (l, r) = characteristic_roots(pair(e1, e2), |x| 1.0 + x, |x| 2.0 - x, 101).unwrap();
            assert!(0.0 < l && l < r);
        }
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(pair(1e-4, 1.0)), RegimeLabel::ConvectionDiffusion);
        assert_eq!(classify_regime(pair(1e-6, 1e-2)), RegimeLabel::DiffusionConvectionReaction);
        assert_eq!(classify_regime(pair(1e-6, 1e-4)), RegimeLabel::ReactionDiffusion);
        // Tie goes to reaction-diffusion.
        assert_eq!(classify_regime(pair(0.0625, 0.25)), RegimeLabel::ReactionDiffusion);
        assert_eq!(classify_regime(pair(1e-4, 1e-2)), RegimeLabel::ReactionDiffusion);
    }

    #[test]
    fn zero_network_residuals_of_example_one() {
        let spec = ProblemId::Ex1.spec();
        let zero = Jet2::constant(0.0, 1);
        let p = pair(0.3, 0.1);
        assert!(residual(&spec, &zero, &[0.5], p).unwrap().abs() < 1e-16);
        assert_eq!(residual(&spec, &zero, &[0.0], p).unwrap(), -1.0);
    }

    #[test]
    fn exact_solutions_satisfy_their_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for id in ProblemId::ALL {
            let spec = id.spec();
            for p in [pair(1e-1, 1e-2), pair(1e-2, 1e-3), pair(1e-3, 1e-4)] {
                for _ in 0..100 {
                    let x = random_point(&spec, &mut rng);
                    let jet = spec.exact_jet(&x, p).unwrap();
                    let r = residual(&spec, &jet, &x, p).unwrap();
                    assert!(r.abs() <= 1e-6, "{id} {p} at {x:?}: residual {r}");
                }
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        // Moderate parameters keep the layers resolvable by a 1e-4 stencil.
        let h = 1e-4;
        let p = pair(0.3, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in ProblemId::ALL {
            let spec = id.spec();
            for _ in 0..20 {
                let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.gen_range(0.01..0.99)).collect();
                let jet = spec.exact_jet(&x, p).unwrap();
                let f0 = spec.exact_solution(&x, p).unwrap();
                for i in 0..spec.input_dim {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[i] += h;
                    xm[i] -= h;
                    let fp = spec.exact_solution(&xp, p).unwrap();
                    let fm = spec.exact_solution(&xm, p).unwrap();
                    assert!((jet.grad[i] - (fp - fm) / (2.0 * h)).abs() < 1e-6, "{id} grad {i}");
                    assert!((jet.lap_terms[i] - (fp - 2.0 * f0 + fm) / (h * h)).abs() < 1e-4, "{id} lap {i}");
                }
            }
        }
    }

    #[test]
    fn example_three_stated_source_is_not_used() {
        // The time-modulated closed form does not satisfy the equation with
        // source (1 - exp(-t)) cos(pi x); the source is manufactured instead.
        let spec = ProblemId::Ex3.spec();
        let p = pair(0.1, 0.01);
        let x = [0.3, 0.5];
        let stated = -(-0.5f64).exp_m1() * (PI * 0.3).cos();
        assert!((spec.source(&x, p).unwrap() - stated).abs() > 1e-3);
    }

    fn boundary_samples(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for _ in 0..100 {
            let mut x = random_point(spec, rng);
            let faces = 2 * spec.spatial_dim + usize::from(spec.is_time_dependent());
            let face = rng.gen_range(0..faces);
            if face < 2 * spec.spatial_dim {
                x[face / 2] = (face % 2) as f64;
            } else {
                x[spec.spatial_dim] = 0.0;
            }
            pts.push(x);
        }
        pts
    }

    #[test]
    fn exact_solutions_vanish_on_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for id in ProblemId::ALL {
            let spec = id.spec();
            for p in [pair(1e-1, 1e-2), pair(1e-2, 1e-3), pair(1e-3, 1e-4)] {
                for x in boundary_samples(&spec, &mut rng) {
                    let u = spec.exact_solution(&x, p).unwrap();
                    assert!(u.abs() <= 1e-14, "{id} {p} at {x:?}: {u}");
                    assert_eq!(spec.boundary_values(&x).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn named_boundary_points() {
        let p = pair(1e-3, 1e-4);
        assert!(ProblemId::Ex1.spec().exact_solution(&[0.0], p).unwrap().abs() < 1e-15);
        assert!(ProblemId::Ex1.spec().exact_solution(&[1.0], p).unwrap().abs() < 1e-15);
        assert_eq!(ProblemId::Ex4.spec().exact_solution(&[0.0, 0.37], p).unwrap(), 0.0);
        assert_eq!(ProblemId::Ex3.spec().exact_solution(&[0.61, 0.0], p).unwrap(), 0.0);
        assert_eq!(ProblemId::Ex1.spec().boundary_values(&[0.0]).unwrap(), 0.0);
        assert_eq!(ProblemId::Ex6.spec().initial_values(&[0.4, 0.6, 0.0]).unwrap(), 0.0);
        assert_eq!(ProblemId::Ex4.spec().boundary_values(&[0.2, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        let p = pair(0.1, 0.01);
        assert!(matches!(ProblemId::Ex1.spec().exact_solution(&[1.5], p), Err(Error::Domain(_))));
        assert!(matches!(ProblemId::Ex4.spec().boundary_values(&[0.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(ProblemId::Ex1.spec().initial_values(&[0.0]), Err(Error::Unsupported(_))));
        assert!(matches!(ProblemId::Ex3.spec().initial_values(&[0.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(
            residual(&ProblemId::Ex4.spec(), &Jet2::constant(0.0, 1), &[0.5], p),
            Err(Error::InputShape { .. })
        ));
    }

    #[test]
    fn exact_solutions_finite_for_tiny_parameters() {
        let p = pair(1e-6, 1e-7);
        for id in ProblemId::ALL {
            let spec = id.spec();
            let n = if spec.input_dim == 1 { 2001 } else { 41 };
            let axis: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
            let check = |x: &[f64]| {
                let j = spec.exact_jet(x, p).unwrap();
                assert!(j.value.is_finite() && j.grad.iter().chain(&j.lap_terms).all(|v| v.is_finite()), "{id} {x:?}");
            };
            match spec.input_dim {
                1 => axis.iter().for_each(|&x| check(&[x])),
                2 => axis.iter().for_each(|&x| axis.iter().for_each(|&y| check(&[x, y]))),
                _ => axis.iter().for_each(|&x| axis.iter().for_each(|&y| check(&[x, y, 1.0]))),
            }
        }
    }

    #[test]
    fn pair_validation_and_ids() {
        assert!(PerturbationPair::new(0.0, 0.1).is_err());
        assert!(PerturbationPair::new(0.1, 1.5).is_err());
        assert_eq!("EX4".parse::<ProblemId>().unwrap(), ProblemId::Ex4);
        assert!("ex7".parse::<ProblemId>().is_err());
        assert_eq!(ProblemId::Ex6.spec().input_dim, 3);
        assert_eq!(ProblemId::Ex3.spec().input_dim, 2);
    }
}
