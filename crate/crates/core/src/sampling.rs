//! Collocation sets: Latin hypercube interior points, stratified boundary
//! points and residual-driven refinement.
//!
//! All randomness comes from `ChaCha8Rng` seeded with a `u64`, and Latin
//! hypercube permutations use the Fisher-Yates shuffle of `rand`'s
//! `SliceRandom`, so point sets are reproducible across platforms.

use rand::distributions::Open01;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jets::eval_jets;
use crate::network::MlpParams;
use crate::problems::{residual, PerturbationPair, ProblemSpec};

/// Two points closer than this in every coordinate are treated as equal.
pub const DUPLICATE_TOL: f64 = 1e-12;

pub type Point = Vec<f64>;

/// A boundary or initial-slice collocation point with its prescribed datum.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub point: Point,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub interior: Vec<Point>,
    pub boundary: Vec<BoundaryPoint>,
}

impl TrainingSet {
    /// Latin hypercube interior points plus stratified boundary points.
    pub fn generate(spec: &ProblemSpec, n_interior: usize, n_boundary: usize, seed: u64) -> Result<Self> {
        let interior = lhs_interior(n_interior, spec.input_dim, seed)?;
        let boundary = sample_boundary(spec, n_boundary, seed.wrapping_add(1))?
            .into_iter()
            .map(|point| Ok(BoundaryPoint { value: spec.boundary_values(&point)?, point }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { interior, boundary })
    }
}

/// `n` points in the open unit hypercube with exactly one point in each of
/// the `n` equal-width strata of every axis.
pub fn lhs_interior(n: usize, dim: usize, seed: u64) -> Result<Vec<Point>> {
    if n == 0 || !(1..=3).contains(&dim) {
        return Err(Error::Config(format!("lhs needs n >= 1 and dim in 1..=3, got n={n}, dim={dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; dim]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let width = 1.0 / n as f64;
    for axis in 0..dim {
        perm.shuffle(&mut rng);
        for (p, &stratum) in points.iter_mut().zip(&perm) {
            let u: f64 = rng.sample(Open01);
            // Keep the jitter away from the stratum edges so rounding cannot
            // push a coordinate into the neighbouring stratum.
            let u = u.clamp(1e-9, 1.0 - 1e-9);
            p[axis] = (stratum as f64 + u) * width;
        }
    }
    Ok(points)
}

/// Boundary points spread evenly over every spatial face and, for
/// time-dependent problems, the initial slice `t = 0`.
///
/// A one-dimensional steady problem has a two-point boundary, which is
/// returned exactly once regardless of `n`.
pub fn sample_boundary(spec: &ProblemSpec, n: usize, seed: u64) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::Config("boundary sample size must be at least 1".into()));
    }
    if spec.input_dim == 1 {
        return Ok(vec![vec![0.0], vec![1.0]]);
    }
    // Faces: (axis, fixed value). Spatial faces first, then the initial slice.
    let mut faces: Vec<(usize, f64)> = (0..spec.spatial_dim).flat_map(|a| [(a, 0.0), (a, 1.0)]).collect();
    if let Some(t) = spec.time_axis() {
        faces.push((t, 0.0));
    }
    let base = n / faces.len();
    let extra = n % faces.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for (f, &(axis, fixed)) in faces.iter().enumerate() {
        let face_seed: u64 = rng.gen();
        let count = base + usize::from(f < extra);
        if count == 0 {
            continue;
        }
        for free in lhs_interior(count, spec.input_dim - 1, face_seed)? {
            let mut p = free;
            p.insert(axis, fixed);
            points.push(p);
        }
    }
    Ok(points)
}

/// Picks the `k` candidates with the largest `|residual|`, in descending
/// order with ties kept in pool order. Candidates that coincide with a point
/// of `existing` (or with an already selected one) are skipped in favour of
/// the next-ranked candidate.
pub fn rank_candidates(pool: &[Point], residuals: &[f64], k: usize, existing: &[Point]) -> Vec<Point> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    // Stable sort keeps pool order among equal magnitudes.
    order.sort_by(|&a, &b| residuals[b].abs().total_cmp(&residuals[a].abs()));
    let mut chosen: Vec<Point> = Vec::with_capacity(k);
    for idx in order {
        if chosen.len() == k {
            break;
        }
        let cand = &pool[idx];
        let clash = existing.iter().chain(chosen.iter()).any(|p| same_point(p, cand));
        if !clash {
            chosen.push(cand.clone());
        }
    }
    chosen
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DUPLICATE_TOL)
}

/// Draws a fresh Latin hypercube pool of `pool_n` interior points and returns
/// the `k` with the largest PDE residual magnitude under `params`.
pub fn adaptive_refine(
    params: &MlpParams,
    spec: &ProblemSpec,
    pair: PerturbationPair,
    pool_n: usize,
    k: usize,
    seed: u64,
    existing: &[Point],
) -> Result<Vec<Point>> {
    if k > pool_n {
        return Err(Error::Config(format!("cannot select {k} points from a pool of {pool_n}")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let pool = lhs_interior(pool_n, spec.input_dim, seed)?;
    let residuals = eval_jets(params, &pool)?
        .iter()
        .zip(&pool)
        .map(|(j, x)| residual(spec, j, x, pair))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_candidates(&pool, &residuals, k, existing))
}
