//! PINN loss assembly and the standard (non-continuation) trainer.

use crate::error::{Error, Result};
use crate::jets::{JetEngine, LossGrad, BATCH};
use crate::network::{MlpParams, NetworkShape};
use crate::optim;
use crate::problems::{PerturbationPair, ProblemSpec};
use crate::sampling::TrainingSet;

pub use crate::optim::{OptimConfig, TrainReport};

/// Weights of the operator and boundary terms of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub theta1: f64,
    pub theta2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { theta1: 1.0, theta2: 1.0 }
    }
}

impl LossWeights {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        if !(theta1 >= 0.0 && theta2 >= 0.0) || (theta1 == 0.0 && theta2 == 0.0) {
            return Err(Error::Config(format!("loss weights must be non-negative and not both zero, got {theta1}, {theta2}")));
        }
        Ok(Self { theta1, theta2 })
    }
}

/// Mean-squared operator and boundary losses, unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub operator: f64,
    pub boundary: f64,
}

/// The weighted PINN loss over a fixed training set and parameter pair.
///
/// Operator coefficients and sources do not depend on the network, so they
/// are tabulated once per collocation point.
pub struct PinnObjective<'a> {
    set: &'a TrainingSet,
    dim: usize,
    weights: LossWeights,
    /// Per interior point: reaction, grad[0..dim], lap[0..dim], source.
    coeffs: Vec<f64>,
}

impl<'a> PinnObjective<'a> {
    pub fn new(spec: &ProblemSpec, pair: PerturbationPair, set: &'a TrainingSet, weights: LossWeights) -> Result<Self> {
        if weights.theta1 > 0.0 && set.interior.is_empty() {
            return Err(Error::Config("operator loss has positive weight but no interior points".into()));
        }
        if weights.theta2 > 0.0 && set.boundary.is_empty() {
            return Err(Error::Config("boundary loss has positive weight but no boundary points".into()));
        }
        let dim = spec.input_dim;
        let stride = 2 + 2 * dim;
        let mut coeffs = Vec::with_capacity(set.interior.len() * stride);
        for x in &set.interior {
            if x.len() != dim {
                return Err(Error::InputShape { expected: dim, got: x.len() });
            }
            let c = spec.operator_coeffs(x, pair);
            coeffs.push(c.reaction);
            coeffs.extend_from_slice(&c.grad[..dim]);
            coeffs.extend_from_slice(&c.lap[..dim]);
            coeffs.push(spec.source(x, pair)?);
        }
        Ok(Self { set, dim, weights, coeffs })
    }

    fn run(&self, params: &MlpParams, mut grad: Option<&mut [f64]>) -> Result<LossParts> {
        let dim = self.dim;
        let stride = 2 + 2 * dim;
        let mut engine = JetEngine::new();
        let mut seeds = Vec::new();
        let mut residuals = [0.0; BATCH];

        let mut op_sum = 0.0;
        if self.weights.theta1 > 0.0 {
            let scale = 2.0 * self.weights.theta1 / self.set.interior.len() as f64;
            for (c, chunk) in self.set.interior.chunks(BATCH).enumerate() {
                engine.forward(params, chunk, true)?;
                let n = chunk.len();
                let base = c * BATCH;
                for (b, r) in residuals[..n].iter_mut().enumerate() {
                    let k = &self.coeffs[(base + b) * stride..(base + b + 1) * stride];
                    let mut acc = k[0] * engine.output(0)[b];
                    for i in 0..dim {
                        acc += k[1 + i] * engine.output(1 + i)[b] + k[1 + dim + i] * engine.output(1 + dim + i)[b];
                    }
                    *r = acc - k[stride - 1];
                    op_sum += *r * *r;
                }
                if let Some(g) = grad.as_deref_mut() {
                    seeds.clear();
                    seeds.resize(engine.streams() * n, 0.0);
                    for (b, &r) in residuals[..n].iter().enumerate() {
                        let k = &self.coeffs[(base + b) * stride..(base + b + 1) * stride];
                        let w = scale * r;
                        seeds[b] = w * k[0];
                        for i in 0..dim {
                            seeds[(1 + i) * n + b] = w * k[1 + i];
                            seeds[(1 + dim + i) * n + b] = w * k[1 + dim + i];
                        }
                    }
                    engine.backward(params, &seeds, g);
                }
            }
            if !op_sum.is_finite() {
                return Err(Error::NonFinite("operator loss".into()));
            }
        }

        let mut bd_sum = 0.0;
        if self.weights.theta2 > 0.0 {
            let scale = 2.0 * self.weights.theta2 / self.set.boundary.len() as f64;
            let mut pts: Vec<&[f64]> = Vec::with_capacity(BATCH);
            for chunk in self.set.boundary.chunks(BATCH) {
                pts.clear();
                pts.extend(chunk.iter().map(|bp| bp.point.as_slice()));
                engine.forward(params, &pts, false)?;
                seeds.clear();
                for (b, bp) in chunk.iter().enumerate() {
                    let diff = engine.output(0)[b] - bp.value;
                    bd_sum += diff * diff;
                    seeds.push(scale * diff);
                }
                if let Some(g) = grad.as_deref_mut() {
                    engine.backward(params, &seeds, g);
                }
            }
            if !bd_sum.is_finite() {
                return Err(Error::NonFinite("boundary loss".into()));
            }
        }

        let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
        Ok(LossParts { operator: mean(op_sum, self.set.interior.len()), boundary: mean(bd_sum, self.set.boundary.len()) })
    }

    pub fn parts(&self, params: &MlpParams) -> Result<LossParts> {
        self.run(params, None)
    }

    fn combine(&self, parts: LossParts) -> f64 {
        let mut loss = 0.0;
        if self.weights.theta1 > 0.0 {
            loss += self.weights.theta1 * parts.operator;
        }
        if self.weights.theta2 > 0.0 {
            loss += self.weights.theta2 * parts.boundary;
        }
        loss
    }

    pub fn loss(&self, params: &MlpParams) -> Result<f64> {
        Ok(self.combine(self.parts(params)?))
    }

    pub fn loss_and_gradient(&self, params: &MlpParams) -> Result<LossGrad> {
        let mut gradient = vec![0.0; params.num_params()];
        let parts = self.run(params, Some(&mut gradient))?;
        Ok(LossGrad { loss: self.combine(parts), gradient })
    }
}

/// `theta1·mean(residual²) + theta2·mean((u - datum)²)` over the training set.
pub fn total_loss(
    params: &MlpParams,
    set: &TrainingSet,
    spec: &ProblemSpec,
    pair: PerturbationPair,
    weights: LossWeights,
) -> Result<f64> {
    PinnObjective::new(spec, pair, set, weights)?.loss(params)
}

/// Runs L-BFGS on the PINN loss starting from `init`.
pub fn minimize_pinn(objective: &PinnObjective<'_>, init: &MlpParams, cfg: &OptimConfig) -> Result<(MlpParams, TrainReport)> {
    let sizes = init.layer_sizes().to_vec();
    let (flat, report) = optim::minimize(
        |x| {
            let p = MlpParams::from_flat(&sizes, x)?;
            let lg = objective.loss_and_gradient(&p)?;
            Ok((lg.loss, lg.gradient))
        },
        init.to_flat(),
        cfg,
    )?;
    Ok((MlpParams::from_flat(&sizes, &flat)?, report))
}

/// Generic L-BFGS over network parameters for any loss with gradient.
pub fn minimize<F>(mut objective: F, init: &MlpParams, cfg: &OptimConfig) -> Result<(MlpParams, TrainReport)>
where
    F: FnMut(&MlpParams) -> Result<LossGrad>,
{
    let sizes = init.layer_sizes().to_vec();
    let (flat, report) = optim::minimize(
        |x| {
            let lg = objective(&MlpParams::from_flat(&sizes, x)?)?;
            Ok((lg.loss, lg.gradient))
        },
        init.to_flat(),
        cfg,
    )?;
    Ok((MlpParams::from_flat(&sizes, &flat)?, report))
}

/// `‖u_new - u_old‖ / ‖u_new‖`, or `+∞` when `u_new` is zero.
pub fn relative_change(u_new: &[f64], u_old: &[f64]) -> f64 {
    assert_eq!(u_new.len(), u_old.len(), "relative_change needs equal lengths");
    let norm = u_new.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return f64::INFINITY;
    }
    let diff = u_new.iter().zip(u_old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    diff / norm
}

/// Standard PINN: fresh initialisation and one minimisation at the target pair.
pub fn train_standard_pinn(
    spec: &ProblemSpec,
    pair: PerturbationPair,
    set: &TrainingSet,
    weights: LossWeights,
    cfg: &OptimConfig,
    shape: NetworkShape,
    seed: u64,
) -> Result<(MlpParams, TrainReport)> {
    if shape.input_dim != spec.input_dim {
        return Err(Error::Config(format!("network input dim {} does not match {}", shape.input_dim, spec.id)));
    }
    let objective = PinnObjective::new(spec, pair, set, weights)?;
    minimize_pinn(&objective, &MlpParams::init(shape, seed), cfg)
}
