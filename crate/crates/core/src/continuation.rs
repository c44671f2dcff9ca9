//! Parameter continuation: train at large `(eps1, eps2)`, then walk both
//! parameters down to their targets, warm-starting each step from the last.

use std::io::Write;

use crate::error::{Error, Result};
use crate::jets::forward_batch;
use crate::metrics::{default_grid_n, eval_grid, evaluate};
use crate::network::{MlpParams, NetworkShape};
use crate::problems::{PerturbationPair, ProblemSpec};
use crate::sampling::{adaptive_refine, TrainingSet};
use crate::training::{minimize_pinn, relative_change, LossWeights, OptimConfig, PinnObjective};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// `steps` intermediate values between start and end.
    Linear { steps: usize },
    /// Multiply by `ratio` until the end value is reached.
    Geometric { ratio: f64 },
}

/// A decreasing sequence of values for one perturbation parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub start: f64,
    pub end: f64,
}

impl Schedule {
    pub fn linear(start: f64, end: f64, steps: usize) -> Result<Self> {
        let s = Self { kind: ScheduleKind::Linear { steps }, start, end };
        s.validate()?;
        Ok(s)
    }

    pub fn geometric(start: f64, end: f64, ratio: f64) -> Result<Self> {
        let s = Self { kind: ScheduleKind::Geometric { ratio }, start, end };
        s.validate()?;
        Ok(s)
    }

    /// A single value.
    pub fn constant(value: f64) -> Result<Self> {
        Self::linear(value, value, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.end > 0.0 && self.end <= self.start && self.start <= 1.0) {
            return Err(Error::Config(format!("schedule needs 0 < end <= start <= 1, got {} -> {}", self.start, self.end)));
        }
        if let ScheduleKind::Geometric { ratio } = self.kind {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::Config(format!("geometric ratio must lie in (0, 1), got {ratio}")));
            }
        }
        Ok(())
    }

    pub fn sequence(&self) -> Result<Vec<f64>> {
        match self.kind {
            ScheduleKind::Linear { .. } => linear_sequence(self),
            ScheduleKind::Geometric { .. } => geometric_sequence(self),
        }
    }
}

/// `start - j·delta` for `j = 0..=steps+1` with `delta = (start - end)/(steps + 1)`.
/// The last value is exactly `end`; a degenerate schedule yields `[start]`.
pub fn linear_sequence(s: &Schedule) -> Result<Vec<f64>> {
    s.validate()?;
    let ScheduleKind::Linear { steps } = s.kind else {
        return Err(Error::Config("linear_sequence needs a linear schedule".into()));
    };
    if s.start == s.end {
        return Ok(vec![s.start]);
    }
    let delta = (s.start - s.end) / (steps + 1) as f64;
    let mut out: Vec<f64> = (0..=steps).map(|j| s.start - j as f64 * delta).collect();
    out.push(s.end);
    Ok(out)
}

/// `start·ratio^k` by repeated multiplication until a value would reach
/// `end`, which is then appended exactly.
pub fn geometric_sequence(s: &Schedule) -> Result<Vec<f64>> {
    s.validate()?;
    let ScheduleKind::Geometric { ratio } = s.kind else {
        return Err(Error::Config("geometric_sequence needs a geometric schedule".into()));
    };
    let mut out = vec![s.start];
    if s.start == s.end {
        return Ok(out);
    }
    let mut v = s.start;
    loop {
        v *= ratio;
        if v <= s.end {
            out.push(s.end);
            return Ok(out);
        }
        out.push(v);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig {
    /// Schedule of `eps1`, walked with `eps2` held at its start.
    pub schedule1: Schedule,
    /// Schedule of `eps2`, walked with `eps1` held at its end.
    pub schedule2: Schedule,
    /// Relative change of the grid predictions below which a step is done.
    pub tol: f64,
    pub inner: OptimConfig,
    /// Maximum number of minimiser runs per step.
    pub max_inner_runs: usize,
    /// Total L-BFGS iterations allowed per step across all runs.
    pub step_budget: Option<usize>,
    pub refine_pool: usize,
    pub refine_k: usize,
    pub seed: u64,
    pub shape: NetworkShape,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub weights: LossWeights,
    /// Nodes per axis of the grid used for the convergence test and errors.
    pub grid_n: Option<usize>,
}

impl ContinuationConfig {
    /// Defaults for `spec` with both schedules starting at `(0.3, 0.1)` and
    /// linear steps towards `target`.
    pub fn for_problem(spec: &ProblemSpec, target: PerturbationPair, seed: u64) -> Result<Self> {
        let (layers, n_interior, n_boundary, iters) = match (spec.spatial_dim, spec.is_time_dependent()) {
            (1, false) => (8, 1000, 256, 1000),
            (1, true) => (2, 1000, 256, 1000),
            (_, false) => (8, 10000, 1000, 4000),
            (_, true) => (2, 10000, 1000, 4000),
        };
        Ok(Self {
            schedule1: Schedule::linear(0.3f64.max(target.eps1), target.eps1, 10)?,
            schedule2: Schedule::linear(0.1f64.max(target.eps2), target.eps2, 10)?,
            tol: 1e-6,
            inner: OptimConfig { max_iters: iters, ..OptimConfig::default() },
            max_inner_runs: 10,
            step_budget: Some(iters),
            refine_pool: 4096,
            refine_k: 128,
            seed,
            shape: NetworkShape::new(spec.input_dim, layers, 20)?,
            n_interior,
            n_boundary,
            weights: LossWeights::default(),
            grid_n: None,
        })
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        self.schedule1.validate()?;
        self.schedule2.validate()?;
        self.inner.validate()?;
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_inner_runs == 0 {
            return Err(Error::Config("max_inner_runs must be at least 1".into()));
        }
        if self.step_budget == Some(0) {
            return Err(Error::Config("step_budget must be positive".into()));
        }
        if self.refine_k > self.refine_pool {
            return Err(Error::Config(format!("refine_k {} exceeds refine_pool {}", self.refine_k, self.refine_pool)));
        }
        if self.shape.input_dim != spec.input_dim {
            return Err(Error::Config(format!("network input dim {} does not match {}", self.shape.input_dim, spec.id)));
        }
        Ok(())
    }

    /// The sequence of parameter pairs visited, corner state counted once.
    pub fn pairs(&self) -> Result<Vec<PerturbationPair>> {
        let s1 = self.schedule1.sequence()?;
        let s2 = self.schedule2.sequence()?;
        let mut pairs = Vec::with_capacity(s1.len() + s2.len() - 1);
        for &e1 in &s1 {
            pairs.push(PerturbationPair::new(e1, s2[0])?);
        }
        let e1_end = *s1.last().unwrap();
        for &e2 in &s2[1..] {
            pairs.push(PerturbationPair::new(e1_end, e2)?);
        }
        Ok(pairs)
    }

    /// Total L-BFGS iterations the configuration may spend.
    pub fn total_budget(&self) -> Result<usize> {
        let per_step = self.step_budget.unwrap_or(self.inner.max_iters * self.max_inner_runs);
        Ok(self.pairs()?.len() * per_step)
    }
}

/// Seeds for the independent random streams of one run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) const INIT_STREAM: u64 = 0;
pub(crate) const SET_STREAM: u64 = 1;
const REFINE_STREAM: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub inner_loss: f64,
    pub e2: Option<f64>,
    /// Interior points used while training this step.
    pub n_interior: usize,
    pub iterations: usize,
    pub inner_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContinuationHistory {
    pub steps: Vec<StepRecord>,
    /// Loss after every accepted L-BFGS step, across all steps and runs.
    pub loss_curve: Vec<f64>,
    pub total_iterations: usize,
}

impl ContinuationHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "eps1", "eps2", "inner_loss", "e2", "n_interior"])?;
        for r in &self.steps {
            w.write_record([
                r.step.to_string(),
                format!("{:e}", r.eps1),
                format!("{:e}", r.eps2),
                format!("{:e}", r.inner_loss),
                r.e2.map(|e| format!("{e:e}")).unwrap_or_default(),
                r.n_interior.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the two-phase continuation from a fresh initialisation.
pub fn run_pa_pinn(spec: &ProblemSpec, cfg: &ContinuationConfig) -> Result<(MlpParams, ContinuationHistory)> {
    cfg.validate(spec)?;
    let init = MlpParams::init(cfg.shape, derive_seed(cfg.seed, INIT_STREAM));
    run_pa_pinn_from(spec, cfg, init)
}

/// Runs the two-phase continuation starting from `init`.
pub fn run_pa_pinn_from(spec: &ProblemSpec, cfg: &ContinuationConfig, init: MlpParams) -> Result<(MlpParams, ContinuationHistory)> {
    cfg.validate(spec)?;
    let pairs = cfg.pairs()?;
    let grid_n = cfg.grid_n.unwrap_or_else(|| default_grid_n(spec));
    let grid = eval_grid(spec, grid_n)?;
    let mut set = TrainingSet::generate(spec, cfg.n_interior, cfg.n_boundary, derive_seed(cfg.seed, SET_STREAM))?;
    let mut params = init;
    let mut history = ContinuationHistory::default();

    for (j, &pair) in pairs.iter().enumerate() {
        let fail = |e: Error| Error::Numeric(format!("continuation step {j} at {pair}: {e}"));
        let objective = PinnObjective::new(spec, pair, &set, cfg.weights)?;
        let mut before = forward_batch(&params, &grid)?;
        let mut used = 0;
        let mut runs = 0;
        let mut inner_loss = objective.loss(&params).map_err(fail)?;
        while runs < cfg.max_inner_runs {
            let remaining = cfg.step_budget.map_or(cfg.inner.max_iters, |b| b - used);
            let inner = OptimConfig { max_iters: cfg.inner.max_iters.min(remaining), ..cfg.inner };
            let (next, report) = minimize_pinn(&objective, &params, &inner).map_err(fail)?;
            // A restart's first entry repeats the previous run's final loss.
            let skip = usize::from(runs > 0);
            history.loss_curve.extend_from_slice(&report.loss_history[skip..]);
            runs += 1;
            used += report.iterations_used;
            inner_loss = report.final_loss;
            params = next;
            let after = forward_batch(&params, &grid)?;
            let change = relative_change(&after, &before);
            before = after;
            if change < cfg.tol || report.iterations_used == 0 || cfg.step_budget.is_some_and(|b| used >= b) {
                break;
            }
        }
        history.total_iterations += used;
        let e2 = if spec.has_exact_solution() { Some(evaluate(&params, spec, pair, grid_n)?.e2) } else { None };
        history.steps.push(StepRecord {
            step: j,
            eps1: pair.eps1,
            eps2: pair.eps2,
            inner_loss,
            e2,
            n_interior: set.interior.len(),
            iterations: used,
            inner_runs: runs,
        });

        if j + 1 < pairs.len() && cfg.refine_k > 0 {
            let seed = derive_seed(cfg.seed, REFINE_STREAM + j as u64);
            let added = adaptive_refine(&params, spec, pair, cfg.refine_pool, cfg.refine_k, seed, &set.interior)?;
            set.interior.extend(added);
        }
    }
    Ok((params, history))
}
