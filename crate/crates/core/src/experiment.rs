//! End-to-end experiment runs and their CSV and checkpoint artifacts.
//!
//! A run directory holds:
//!
//! * `errors.csv`: `method,example,eps1,eps2,e2,e_inf,seed,iters`
//! * `history.csv`: continuation steps (PA-PINN only)
//! * `loss.csv`: `iter,loss` (network methods only)
//! * `solution.csv`: grid coordinates, exact and predicted values
//! * `checkpoint.txt`: final network (network methods only)
//! * `config.txt`: the effective configuration
//!
//! Floating-point columns are written in the shortest form that parses back
//! to the same value.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::{ExperimentConfig, Method};
use crate::continuation::{derive_seed, run_pa_pinn, ContinuationHistory, INIT_STREAM, SET_STREAM};
use crate::error::{Error, Result};
use crate::fdm::{shishkin_mesh, upwind_solve};
use crate::jets::forward_batch;
use crate::metrics::{eval_grid, exact_on_grid, linf_err, rel_l2};
use crate::network::MlpParams;
use crate::problems::{PerturbationPair, ProblemId};
use crate::sampling::{Point, TrainingSet};
use crate::training::train_standard_pinn;

/// One row of `errors.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub method: Method,
    pub example: ProblemId,
    pub eps1: f64,
    pub eps2: f64,
    pub e2: f64,
    pub e_inf: f64,
    pub seed: u64,
    pub iters: usize,
}

pub const ERROR_HEADER: [&str; 8] = ["method", "example", "eps1", "eps2", "e2", "e_inf", "seed", "iters"];

pub fn write_error_rows<W: Write>(out: W, rows: &[ErrorRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ERROR_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.example.to_string(),
            format!("{:e}", r.eps1),
            format!("{:e}", r.eps2),
            format!("{:e}", r.e2),
            format!("{:e}", r.e_inf),
            r.seed.to_string(),
            r.iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_error_rows(path: impl AsRef<Path>) -> Result<Vec<ErrorRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ERROR_HEADER {
        return Err(Error::Parse(format!("unexpected error-table header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("invalid number {s:?}")));
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ErrorRow {
                method: rec[0].parse()?,
                example: rec[1].parse()?,
                eps1: num(&rec[2])?,
                eps2: num(&rec[3])?,
                e2: num(&rec[4])?,
                e_inf: num(&rec[5])?,
                seed: rec[6].parse().map_err(|_| Error::Parse(format!("invalid seed {:?}", &rec[6])))?,
                iters: rec[7].parse().map_err(|_| Error::Parse(format!("invalid iteration count {:?}", &rec[7])))?,
            })
        })
        .collect()
}

/// Everything a run produces, before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub row: ErrorRow,
    pub params: Option<MlpParams>,
    pub history: Option<ContinuationHistory>,
    pub loss_curve: Vec<f64>,
    /// Evaluation points with exact and predicted values.
    pub points: Vec<Point>,
    pub exact: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Trains (or solves) as configured and scores the result.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let spec = cfg.example.spec();
    let pair = cfg.target;
    let (params, history, loss_curve, iters) = match cfg.method {
        Method::Fdm => return run_fdm(cfg),
        Method::PaPinn => {
            let (p, h) = run_pa_pinn(&spec, &cfg.continuation()?)?;
            let (curve, iters) = (h.loss_curve.clone(), h.total_iterations);
            (p, Some(h), curve, iters)
        }
        Method::Pinn => {
            let set = TrainingSet::generate(&spec, cfg.n_interior, cfg.n_boundary, derive_seed(cfg.seed, SET_STREAM))?;
            let init_seed = derive_seed(cfg.seed, INIT_STREAM);
            let (p, report) = train_standard_pinn(&spec, pair, &set, cfg.weights, &cfg.optim, cfg.shape()?, init_seed)?;
            (p, None, report.loss_history, report.iterations_used)
        }
    };
    let points = eval_grid(&spec, cfg.grid_n)?;
    let exact = exact_on_grid(&spec, pair, &points)?;
    let predicted = forward_batch(&params, &points)?;
    Ok(ExperimentOutcome {
        row: row(cfg, pair, &exact, &predicted, iters)?,
        params: Some(params),
        history,
        loss_curve,
        points,
        exact,
        predicted,
    })
}

fn row(cfg: &ExperimentConfig, pair: PerturbationPair, exact: &[f64], predicted: &[f64], iters: usize) -> Result<ErrorRow> {
    Ok(ErrorRow {
        method: cfg.method,
        example: cfg.example,
        eps1: pair.eps1,
        eps2: pair.eps2,
        e2: rel_l2(exact, predicted)?,
        e_inf: linf_err(exact, predicted)?,
        seed: cfg.seed,
        iters,
    })
}

fn run_fdm(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let spec = cfg.example.spec();
    if spec.input_dim != 1 {
        return Err(Error::Unsupported(format!("the finite-difference baseline is 1D only, {} is not", spec.id)));
    }
    let mesh = shishkin_mesh(cfg.fdm_cells, cfg.target, &spec)?;
    let predicted = upwind_solve(&spec, cfg.target, &mesh)?;
    let points: Vec<Point> = mesh.nodes.iter().map(|&x| vec![x]).collect();
    let exact = exact_on_grid(&spec, cfg.target, &points)?;
    Ok(ExperimentOutcome {
        row: row(cfg, cfg.target, &exact, &predicted, 0)?,
        params: None,
        history: None,
        loss_curve: Vec::new(),
        points,
        exact,
        predicted,
    })
}

/// Writes the artifacts of `outcome` into `dir`.
pub fn write_artifacts(cfg: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_kv_string())?;
    write_error_rows(fs::File::create(dir.join("errors.csv"))?, std::slice::from_ref(&outcome.row))?;
    if let Some(h) = &outcome.history {
        h.write_csv(fs::File::create(dir.join("history.csv"))?)?;
    }
    if outcome.params.is_some() {
        let mut w = csv::Writer::from_path(dir.join("loss.csv"))?;
        w.write_record(["iter", "loss"])?;
        for (i, l) in outcome.loss_curve.iter().enumerate() {
            w.write_record([i.to_string(), format!("{l:e}")])?;
        }
        w.flush()?;
    }
    write_solution(&dir.join("solution.csv"), cfg.example, &outcome.points, &outcome.exact, &outcome.predicted)?;
    if let Some(p) = &outcome.params {
        p.save(dir.join("checkpoint.txt"))?;
    }
    Ok(())
}

pub fn write_solution(path: &Path, example: ProblemId, points: &[Point], exact: &[f64], predicted: &[f64]) -> Result<()> {
    let spec = example.spec();
    let mut header: Vec<&str> = ["x", "y"][..spec.spatial_dim].to_vec();
    if spec.is_time_dependent() {
        header.push("t");
    }
    header.extend(["exact", "predicted"]);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for ((p, e), u) in points.iter().zip(exact).zip(predicted) {
        let mut rec: Vec<String> = p.iter().map(|c| format!("{c:e}")).collect();
        rec.push(format!("{e:e}"));
        rec.push(format!("{u:e}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the experiment and writes its artifacts to `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = run(cfg)?;
    write_artifacts(cfg, &outcome, &cfg.out_dir)?;
    Ok(outcome)
}

/// Six-significant-digit scientific notation, e.g. `2.44600e-05`.
pub fn sci6(v: f64) -> String {
    let s = format!("{v:.5e}");
    match s.split_once('e') {
        Some((m, e)) => {
            let exp: i32 = e.parse().unwrap_or(0);
            format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
        }
        None => s,
    }
}

/// Human-readable table of error rows.
pub fn format_table(rows: &[ErrorRow]) -> String {
    let mut out = format!("{:<8} {:<7} {:>12} {:>12} {:>12} {:>12} {:>6} {:>7}\n", "method", "example", "eps1", "eps2", "E2", "Einf", "seed", "iters");
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:<7} {:>12} {:>12} {:>12} {:>12} {:>6} {:>7}\n",
            r.method.as_str(),
            r.example.as_str(),
            sci6(r.eps1),
            sci6(r.eps2),
            sci6(r.e2),
            sci6(r.e_inf),
            r.seed,
            r.iters
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(example: ProblemId, method: Method, dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(example, method, PerturbationPair::new(0.1, 0.05).unwrap(), 3).unwrap();
        c.hidden_layers = 2;
        c.hidden_width = 5;
        c.n_interior = 40;
        c.n_boundary = 16;
        c.linear_steps = 0;
        c.optim.max_iters = 20;
        c.step_budget = Some(20);
        c.refine_pool = 64;
        c.refine_k = 4;
        c.grid_n = 21;
        c.fdm_cells = 64;
        c.out_dir = dir.to_path_buf();
        c
    }

    fn files(dir: &Path) -> Vec<String> {
        let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        v.sort();
        v
    }

    #[test]
    fn pa_pinn_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(ProblemId::Ex1, Method::PaPinn, dir.path());
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(files(dir.path()), ["checkpoint.txt", "config.txt", "errors.csv", "history.csv", "loss.csv", "solution.csv"]);
        let rows = read_error_rows(dir.path().join("errors.csv")).unwrap();
        assert_eq!(rows, vec![out.row.clone()]);
        let p = MlpParams::load(dir.path().join("checkpoint.txt")).unwrap();
        assert_eq!(Some(p), out.params);
        let sol = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
        assert_eq!(sol.lines().next().unwrap(), "x,exact,predicted");
        assert_eq!(sol.lines().count(), 22);
        assert_eq!(ExperimentConfig::load(dir.path().join("config.txt")).unwrap(), cfg);
    }

    #[test]
    fn pinn_has_no_history() {
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&small(ProblemId::Ex4, Method::Pinn, dir.path())).unwrap();
        assert!(!dir.path().join("history.csv").exists());
        let sol = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
        assert_eq!(sol.lines().next().unwrap(), "x,y,exact,predicted");
    }

    #[test]
    fn fdm_is_one_dimensional() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_experiment(&small(ProblemId::Ex4, Method::Fdm, dir.path())).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        let out = run_experiment(&small(ProblemId::Ex2, Method::Fdm, dir.path())).unwrap();
        assert_eq!(out.points.len(), 65);
        assert_eq!(files(dir.path()), ["config.txt", "errors.csv", "solution.csv"]);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut ca = small(ProblemId::Ex3, Method::PaPinn, a.path());
        run_experiment(&ca).unwrap();
        ca.out_dir = b.path().to_path_buf();
        run_experiment(&ca).unwrap();
        for f in ["errors.csv", "history.csv", "loss.csv", "solution.csv", "checkpoint.txt"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn error_rows_round_trip_exactly() {
        let rows = vec![
            ErrorRow { method: Method::Pinn, example: ProblemId::Ex5, eps1: 1e-3, eps2: 1e-4, e2: 0.1 + 0.2, e_inf: 1.0 / 3.0, seed: 2, iters: 9 },
            ErrorRow { method: Method::Fdm, example: ProblemId::Ex1, eps1: 0.3, eps2: 0.1, e2: 2.446e-5, e_inf: 5e-324, seed: 0, iters: 0 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("errors.csv");
        write_error_rows(fs::File::create(&path).unwrap(), &rows).unwrap();
        assert_eq!(read_error_rows(&path).unwrap(), rows);
    }

    #[test]
    fn table_formatting() {
        assert_eq!(sci6(2.446e-5), "2.44600e-05");
        assert_eq!(sci6(1.075), "1.07500e+00");
        assert_eq!(sci6(123456.7), "1.23457e+05");
        let t = format_table(&[ErrorRow { method: Method::PaPinn, example: ProblemId::Ex1, eps1: 1e-2, eps2: 1e-3, e2: 2.446e-5, e_inf: 1e-4, seed: 0, iters: 10 }]);
        assert!(t.lines().nth(1).unwrap().contains("2.44600e-05"));
    }
}
