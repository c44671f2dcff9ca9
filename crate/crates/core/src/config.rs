//! Experiment configuration as flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. `example`, `eps1`,
//! `eps2` and `seed` are required; every other key falls back to a default
//! that depends on the problem. Recognised keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `example` | `ex1` .. `ex6` |
//! | `method` | `pa_pinn`, `pinn` or `fdm` |
//! | `eps1`, `eps2` | target perturbation pair |
//! | `seed` | master seed |
//! | `start_eps1`, `start_eps2` | continuation start, default 0.3 and 0.1 |
//! | `schedule` | `linear` or `geometric` |
//! | `linear_steps` | intermediate values per phase of a linear schedule |
//! | `ratio1`, `ratio2` | geometric ratios, default 0.71 and 0.72 |
//! | `hidden_layers`, `hidden_width` | network shape |
//! | `n_interior`, `n_boundary` | collocation counts |
//! | `max_iters`, `history_size`, `grad_tol` | L-BFGS settings |
//! | `step_budget` | L-BFGS iterations per continuation step, or `none` |
//! | `max_inner_runs`, `tol` | restarts per step and their stopping tolerance |
//! | `refine_pool`, `refine_k` | adaptive refinement |
//! | `theta1`, `theta2` | loss weights |
//! | `grid_n` | evaluation nodes per axis |
//! | `fdm_cells` | Shishkin mesh cells |
//! | `out_dir` | artifact directory |

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::continuation::{ContinuationConfig, Schedule};
use crate::error::{Error, Result};
use crate::metrics::default_grid_n;
use crate::network::NetworkShape;
use crate::problems::{PerturbationPair, ProblemId};
use crate::training::{LossWeights, OptimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PaPinn,
    Pinn,
    Fdm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::PaPinn => "pa_pinn",
            Method::Pinn => "pinn",
            Method::Fdm => "fdm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "pa_pinn" | "papinn" => Ok(Method::PaPinn),
            "pinn" => Ok(Method::Pinn),
            "fdm" => Ok(Method::Fdm),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleChoice {
    Linear,
    Geometric,
}

impl FromStr for ScheduleChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(ScheduleChoice::Linear),
            "geometric" => Ok(ScheduleChoice::Geometric),
            other => Err(Error::Parse(format!("unknown schedule {other:?}"))),
        }
    }
}

impl fmt::Display for ScheduleChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleChoice::Linear => "linear",
            ScheduleChoice::Geometric => "geometric",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub example: ProblemId,
    pub method: Method,
    pub target: PerturbationPair,
    pub seed: u64,
    pub start_eps1: f64,
    pub start_eps2: f64,
    pub schedule: ScheduleChoice,
    pub linear_steps: usize,
    pub ratio1: f64,
    pub ratio2: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub optim: OptimConfig,
    pub step_budget: Option<usize>,
    pub max_inner_runs: usize,
    pub tol: f64,
    pub refine_pool: usize,
    pub refine_k: usize,
    pub weights: LossWeights,
    pub grid_n: usize,
    pub fdm_cells: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for one problem and target.
    pub fn new(example: ProblemId, method: Method, target: PerturbationPair, seed: u64) -> Result<Self> {
        let spec = example.spec();
        let base = ContinuationConfig::for_problem(&spec, target, seed)?;
        Ok(Self {
            example,
            method,
            target,
            seed,
            start_eps1: 0.3,
            start_eps2: 0.1,
            schedule: ScheduleChoice::Linear,
            linear_steps: 10,
            ratio1: 0.71,
            ratio2: 0.72,
            hidden_layers: base.shape.hidden_layers,
            hidden_width: base.shape.hidden_width,
            n_interior: base.n_interior,
            n_boundary: base.n_boundary,
            optim: base.inner,
            step_budget: base.step_budget,
            max_inner_runs: base.max_inner_runs,
            tol: base.tol,
            refine_pool: base.refine_pool,
            refine_k: base.refine_k,
            weights: base.weights,
            grid_n: default_grid_n(&spec),
            fdm_cells: 1024,
            out_dir: PathBuf::from("out"),
        })
    }

    pub fn shape(&self) -> Result<NetworkShape> {
        NetworkShape::new(self.example.spec().input_dim, self.hidden_layers, self.hidden_width)
    }

    fn schedule(&self, start: f64, end: f64, ratio: f64) -> Result<Schedule> {
        // A start below the target collapses to a single value.
        let start = start.max(end);
        match self.schedule {
            ScheduleChoice::Linear => Schedule::linear(start, end, self.linear_steps),
            ScheduleChoice::Geometric if start == end => Schedule::constant(start),
            ScheduleChoice::Geometric => Schedule::geometric(start, end, ratio),
        }
    }

    pub fn continuation(&self) -> Result<ContinuationConfig> {
        Ok(ContinuationConfig {
            schedule1: self.schedule(self.start_eps1, self.target.eps1, self.ratio1)?,
            schedule2: self.schedule(self.start_eps2, self.target.eps2, self.ratio2)?,
            tol: self.tol,
            inner: self.optim,
            max_inner_runs: self.max_inner_runs,
            step_budget: self.step_budget,
            refine_pool: self.refine_pool,
            refine_k: self.refine_k,
            seed: self.seed,
            shape: self.shape()?,
            n_interior: self.n_interior,
            n_boundary: self.n_boundary,
            weights: self.weights,
            grid_n: Some(self.grid_n),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        if self.method != Method::Fdm {
            self.continuation()?.validate(&self.example.spec())?;
        }
        if self.grid_n < 2 {
            return Err(Error::Config(format!("grid_n must be at least 2, got {}", self.grid_n)));
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {key:?}", n + 1)));
            }
        }
        let take = |map: &mut BTreeMap<String, String>, key: &str| map.remove(key);
        let required = |map: &mut BTreeMap<String, String>, key: &str| {
            take(map, key).ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
        };
        let example: ProblemId = required(&mut map, "example")?.parse()?;
        let eps1 = parse_num(&required(&mut map, "eps1")?, "eps1")?;
        let eps2 = parse_num(&required(&mut map, "eps2")?, "eps2")?;
        let seed = parse_num(&required(&mut map, "seed")?, "seed")?;
        let method = match take(&mut map, "method") {
            Some(m) => m.parse()?,
            None => Method::PaPinn,
        };
        let mut cfg = Self::new(example, method, PerturbationPair::new(eps1, eps2)?, seed)?;
        for (key, value) in map {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    /// Applies one optional key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "start_eps1" => self.start_eps1 = parse_num(value, key)?,
            "start_eps2" => self.start_eps2 = parse_num(value, key)?,
            "schedule" => self.schedule = value.parse()?,
            "linear_steps" => self.linear_steps = parse_num(value, key)?,
            "ratio1" => self.ratio1 = parse_num(value, key)?,
            "ratio2" => self.ratio2 = parse_num(value, key)?,
            "hidden_layers" => self.hidden_layers = parse_num(value, key)?,
            "hidden_width" => self.hidden_width = parse_num(value, key)?,
            "n_interior" => self.n_interior = parse_num(value, key)?,
            "n_boundary" => self.n_boundary = parse_num(value, key)?,
            "max_iters" => self.optim.max_iters = parse_num(value, key)?,
            "history_size" => self.optim.history_size = parse_num(value, key)?,
            "grad_tol" => self.optim.grad_tol = parse_num(value, key)?,
            "step_budget" => {
                self.step_budget = if value.eq_ignore_ascii_case("none") { None } else { Some(parse_num(value, key)?) }
            }
            "max_inner_runs" => self.max_inner_runs = parse_num(value, key)?,
            "tol" => self.tol = parse_num(value, key)?,
            "refine_pool" => self.refine_pool = parse_num(value, key)?,
            "refine_k" => self.refine_k = parse_num(value, key)?,
            "theta1" => self.weights = LossWeights::new(parse_num(value, key)?, self.weights.theta2)?,
            "theta2" => self.weights = LossWeights::new(self.weights.theta1, parse_num(value, key)?)?,
            "grid_n" => self.grid_n = parse_num(value, key)?,
            "fdm_cells" => self.fdm_cells = parse_num(value, key)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// The full effective configuration; parses back to an equal value.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("example", self.example.to_string());
        kv("method", self.method.to_string());
        kv("eps1", format!("{:e}", self.target.eps1));
        kv("eps2", format!("{:e}", self.target.eps2));
        kv("seed", self.seed.to_string());
        kv("start_eps1", format!("{:e}", self.start_eps1));
        kv("start_eps2", format!("{:e}", self.start_eps2));
        kv("schedule", self.schedule.to_string());
        kv("linear_steps", self.linear_steps.to_string());
        kv("ratio1", format!("{:e}", self.ratio1));
        kv("ratio2", format!("{:e}", self.ratio2));
        kv("hidden_layers", self.hidden_layers.to_string());
        kv("hidden_width", self.hidden_width.to_string());
        kv("n_interior", self.n_interior.to_string());
        kv("n_boundary", self.n_boundary.to_string());
        kv("max_iters", self.optim.max_iters.to_string());
        kv("history_size", self.optim.history_size.to_string());
        kv("grad_tol", format!("{:e}", self.optim.grad_tol));
        kv("step_budget", self.step_budget.map_or("none".to_string(), |b| b.to_string()));
        kv("max_inner_runs", self.max_inner_runs.to_string());
        kv("tol", format!("{:e}", self.tol));
        kv("refine_pool", self.refine_pool.to_string());
        kv("refine_k", self.refine_k.to_string());
        kv("theta1", format!("{:e}", self.weights.theta1));
        kv("theta2", format!("{:e}", self.weights.theta2));
        kv("grid_n", self.grid_n.to_string());
        kv("fdm_cells", self.fdm_cells.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        s
    }
}

fn parse_num<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse(format!("invalid value {value:?} for {key}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "example = ex1\neps1 = 1e-2\neps2 = 1e-3\nseed = 7\n";

    #[test]
    fn minimal_config_uses_problem_defaults() {
        let c = ExperimentConfig::from_kv_str(MINIMAL).unwrap();
        assert_eq!(c.example, ProblemId::Ex1);
        assert_eq!(c.method, Method::PaPinn);
        assert_eq!((c.hidden_layers, c.hidden_width, c.n_interior, c.n_boundary), (8, 20, 1000, 256));
        assert_eq!(c.optim.max_iters, 1000);
        assert_eq!(c.grid_n, 1001);
        let c = ExperimentConfig::from_kv_str(&MINIMAL.replace("ex1", "ex6")).unwrap();
        assert_eq!((c.hidden_layers, c.n_interior, c.n_boundary, c.optim.max_iters, c.grid_n), (2, 10000, 1000, 4000, 201));
    }

    #[test]
    fn overrides_and_comments() {
        let text = format!("# run\n{MINIMAL}\nmethod = pinn\nschedule = geometric\nmax_iters = 50\nstep_budget = none\ntheta2 = 10\n");
        let c = ExperimentConfig::from_kv_str(&text).unwrap();
        assert_eq!(c.method, Method::Pinn);
        assert_eq!(c.schedule, ScheduleChoice::Geometric);
        assert_eq!(c.optim.max_iters, 50);
        assert_eq!(c.step_budget, None);
        assert_eq!(c.weights, LossWeights::new(1.0, 10.0).unwrap());
        let cc = c.continuation().unwrap();
        assert_eq!(cc.schedule1.sequence().unwrap().len(), geometric_len(0.3, 1e-2, 0.71));
    }

    fn geometric_len(mut x: f64, end: f64, c: f64) -> usize {
        let mut n = 1;
        while x * c > end {
            x *= c;
            n += 1;
        }
        n + 1
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = ExperimentConfig::from_kv_str(MINIMAL).unwrap();
        c.tol = 3.5e-7;
        c.out_dir = PathBuf::from("/tmp/some dir");
        let back = ExperimentConfig::from_kv_str(&c.to_kv_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_are_reported() {
        assert!(matches!(ExperimentConfig::from_kv_str("example = ex1\neps1 = 0.1\neps2 = 0.1\n"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_kv_str(&format!("{MINIMAL}bogus = 1\n")), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_kv_str(&format!("{MINIMAL}seed = 8\n")), Err(Error::Parse(_))));
        assert!(matches!(ExperimentConfig::from_kv_str(&format!("{MINIMAL}max_iters = many\n")), Err(Error::Parse(_))));
        assert!(matches!(ExperimentConfig::from_kv_str(&format!("{MINIMAL}just words\n")), Err(Error::Parse(_))));
        assert!(ExperimentConfig::from_kv_str(&MINIMAL.replace("1e-2", "2")).is_err());
        assert!(ExperimentConfig::from_kv_str(&format!("{MINIMAL}refine_k = 5000\n")).is_err());
    }

    #[test]
    fn start_below_target_collapses() {
        let mut c = ExperimentConfig::new(ProblemId::Ex1, Method::PaPinn, PerturbationPair::new(0.5, 0.2).unwrap(), 1).unwrap();
        c.linear_steps = 3;
        let cc = c.continuation().unwrap();
        assert_eq!(cc.schedule1.sequence().unwrap(), vec![0.5]);
        assert_eq!(cc.schedule2.sequence().unwrap(), vec![0.2]);
    }
}
