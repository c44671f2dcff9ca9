//! Error metrics and evaluation grids.

use crate::error::{Error, Result};
use crate::jets::forward_batch;
use crate::network::MlpParams;
use crate::problems::{PerturbationPair, ProblemSpec};
use crate::sampling::Point;

/// Errors of a prediction against the exact solution on an evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub e2: f64,
    pub e_inf: f64,
    pub grid_size: usize,
    /// Time slice of the grid for time-dependent problems.
    pub eval_time: Option<f64>,
}

fn check_lengths(v: &[f64], v_hat: &[f64]) -> Result<()> {
    if v.len() != v_hat.len() {
        return Err(Error::InputShape { expected: v.len(), got: v_hat.len() });
    }
    Ok(())
}

/// `sqrt(Σ (v - v_hat)² / Σ v²)`.
pub fn rel_l2(v: &[f64], v_hat: &[f64]) -> Result<f64> {
    check_lengths(v, v_hat)?;
    let den: f64 = v.iter().map(|a| a * a).sum();
    if den == 0.0 {
        return Err(Error::Numeric("relative L2 error of an all-zero reference".into()));
    }
    let num: f64 = v.iter().zip(v_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

/// `max |v - v_hat|`.
pub fn linf_err(v: &[f64], v_hat: &[f64]) -> Result<f64> {
    check_lengths(v, v_hat)?;
    Ok(v.iter().zip(v_hat).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Grid size used when none is given: 1001 nodes in 1D, 201 per axis in 2D.
pub fn default_grid_n(spec: &ProblemSpec) -> usize {
    if spec.spatial_dim == 1 {
        1001
    } else {
        201
    }
}

/// Uniform tensor grid with `grid_n` nodes per spatial axis, both endpoints
/// included, ordered with the first axis outermost. Time-dependent problems
/// are sampled at the final time only.
pub fn eval_grid(spec: &ProblemSpec, grid_n: usize) -> Result<Vec<Point>> {
    if grid_n < 2 {
        return Err(Error::Config(format!("evaluation grid needs at least 2 nodes per axis, got {grid_n}")));
    }
    let axis: Vec<f64> = (0..grid_n).map(|i| i as f64 / (grid_n - 1) as f64).collect();
    let mut points: Vec<Point> = vec![Vec::new()];
    for _ in 0..spec.spatial_dim {
        points = points
            .iter()
            .flat_map(|p| {
                axis.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    if let Some(t) = spec.time_horizon {
        points.iter_mut().for_each(|p| p.push(t));
    }
    Ok(points)
}

/// Exact solution on the evaluation grid.
pub fn exact_on_grid(spec: &ProblemSpec, pair: PerturbationPair, grid: &[Point]) -> Result<Vec<f64>> {
    if !spec.has_exact_solution() {
        return Err(Error::Unsupported(format!("{} has no exact solution", spec.id)));
    }
    grid.iter().map(|x| spec.exact_solution(x, pair)).collect()
}

/// Scores any predictor against the exact solution.
pub fn evaluate_with<F>(spec: &ProblemSpec, pair: PerturbationPair, grid_n: usize, predict: F) -> Result<ErrorReport>
where
    F: FnOnce(&[Point]) -> Result<Vec<f64>>,
{
    if !spec.has_exact_solution() {
        return Err(Error::Unsupported(format!("{} has no exact solution", spec.id)));
    }
    let grid = eval_grid(spec, grid_n)?;
    let exact = exact_on_grid(spec, pair, &grid)?;
    let predicted = predict(&grid)?;
    Ok(ErrorReport {
        e2: rel_l2(&exact, &predicted)?,
        e_inf: linf_err(&exact, &predicted)?,
        grid_size: grid.len(),
        eval_time: spec.time_horizon,
    })
}

/// Scores a network against the exact solution.
pub fn evaluate(params: &MlpParams, spec: &ProblemSpec, pair: PerturbationPair, grid_n: usize) -> Result<ErrorReport> {
    evaluate_with(spec, pair, grid_n, |grid| forward_batch(params, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkShape;
    use crate::problems::ProblemId;
    use proptest::prelude::*;

    #[test]
    fn rel_l2_examples() {
        assert_eq!(rel_l2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rel_l2(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rel_l2(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(rel_l2(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Numeric(_))));
        assert!(matches!(rel_l2(&[1.0], &[1.0, 0.0]), Err(Error::InputShape { .. })));
    }

    #[test]
    fn linf_examples() {
        assert_eq!(linf_err(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(linf_err(&[1.0, 5.0], &[1.0, 2.0]).unwrap(), 3.0);
        let a = 0.25;
        assert_eq!(linf_err(&[0.5, -1.0], &[0.5 - a, -1.0 + a]).unwrap(), a);
    }

    proptest! {
        #[test]
        fn rel_l2_is_scale_invariant(
            v in prop::collection::vec(0.1f64..10.0, 1..20),
            noise in prop::collection::vec(-1.0f64..1.0, 20),
            alpha in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0, 1e3]),
        ) {
            let v_hat: Vec<f64> = v.iter().zip(&noise).map(|(a, n)| a + n).collect();
            let base = rel_l2(&v, &v_hat).unwrap();
            let sv: Vec<f64> = v.iter().map(|a| alpha * a).collect();
            let sh: Vec<f64> = v_hat.iter().map(|a| alpha * a).collect();
            prop_assert!((rel_l2(&sv, &sh).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
        }
    }

    #[test]
    fn grids_include_endpoints() {
        let g = eval_grid(&ProblemId::Ex1.spec(), 2).unwrap();
        assert_eq!(g, vec![vec![0.0], vec![1.0]]);
        let g = eval_grid(&ProblemId::Ex4.spec(), 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, 0.0]);
        assert_eq!(g[1], vec![0.0, 0.5]);
        assert_eq!(g[8], vec![1.0, 1.0]);
        let g = eval_grid(&ProblemId::Ex3.spec(), 5).unwrap();
        assert!(g.iter().all(|p| p.len() == 2 && p[1] == 1.0));
        assert_eq!(g.last().unwrap()[0], 1.0);
        let g = eval_grid(&ProblemId::Ex6.spec(), 4).unwrap();
        assert_eq!(g.len(), 16);
        assert!(g.iter().all(|p| p[2] == 1.0));
        assert!(eval_grid(&ProblemId::Ex1.spec(), 1).is_err());
        assert_eq!(default_grid_n(&ProblemId::Ex3.spec()), 1001);
        assert_eq!(default_grid_n(&ProblemId::Ex6.spec()), 201);
    }

    #[test]
    fn oracle_as_predictor_scores_zero() {
        let pair = PerturbationPair::new(1e-2, 1e-3).unwrap();
        for id in ProblemId::ALL {
            let spec = id.spec();
            let r = evaluate_with(&spec, pair, 11, |g| exact_on_grid(&spec, pair, g)).unwrap();
            assert_eq!((r.e2, r.e_inf), (0.0, 0.0));
            assert_eq!(r.eval_time, spec.time_horizon);
        }
    }

    #[test]
    fn endpoint_grid_matches_boundary_data() {
        // Both the exact solution and the zero network vanish at x = 0 and x = 1.
        let spec = ProblemId::Ex1.spec();
        let pair = PerturbationPair::new(1e-2, 1e-3).unwrap();
        let grid = eval_grid(&spec, 2).unwrap();
        let exact = exact_on_grid(&spec, pair, &grid).unwrap();
        let zero = MlpParams::zeros(NetworkShape::new(1, 1, 3).unwrap());
        let pred = forward_batch(&zero, &grid).unwrap();
        assert!(linf_err(&exact, &pred).unwrap() < 1e-15);
    }

    #[test]
    fn evaluate_uses_network_predictions() {
        let spec = ProblemId::Ex2.spec();
        let pair = PerturbationPair::new(0.1, 0.1).unwrap();
        let p = MlpParams::zeros(NetworkShape::new(1, 1, 2).unwrap());
        let r = evaluate(&p, &spec, pair, 101).unwrap();
        assert!((r.e2 - 1.0).abs() < 1e-15);
        assert_eq!(r.grid_size, 101);
    }
}
