use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use papinn::config::{ExperimentConfig, Method, ScheduleChoice};
use papinn::experiment::{self, format_table, read_error_rows, write_error_rows, write_solution, ErrorRow};
use papinn::fdm::fdm_max_error;
use papinn::jets::forward_batch;
use papinn::metrics::{eval_grid, exact_on_grid, linf_err, rel_l2};
use papinn::{Error, MlpParams, PerturbationPair, ProblemId, Result};

#[derive(Parser)]
#[command(name = "papinn", version, about = "Parameter-asymptotic PINNs for singularly perturbed problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model (or run the FDM baseline) and write its artifacts.
    Train(RunArgs),
    /// Score a saved checkpoint against the exact solution.
    Evaluate(EvalArgs),
    /// Run PA-PINN, a standard PINN with the same iteration count and, in 1D, the FDM baseline.
    Compare(RunArgs),
    /// Print error tables from one or more errors.csv files.
    Table {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// key = value configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<ProblemId>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    /// pa_pinn, pinn or fdm.
    #[arg(long)]
    method: Option<Method>,
    /// linear or geometric.
    #[arg(long)]
    schedule: Option<ScheduleChoice>,
    #[arg(long)]
    seed: Option<u64>,
    /// L-BFGS iterations per minimisation (and per continuation step).
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    example: ProblemId,
    #[arg(long)]
    eps1: f64,
    #[arg(long)]
    eps2: f64,
    /// Nodes per axis; defaults to 1001 in 1D and 201 in 2D.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Directory for solution.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let (Some(example), Some(e1), Some(e2)) = (a.example, a.eps1, a.eps2) else {
                return Err(Error::Config("--example, --eps1 and --eps2 are required without --config".into()));
            };
            ExperimentConfig::new(example, Method::PaPinn, PerturbationPair::new(e1, e2)?, 0)?
        }
    };
    if a.config.is_some() && (a.example.is_some() || a.eps1.is_some() || a.eps2.is_some()) {
        let example = a.example.unwrap_or(cfg.example);
        let target = PerturbationPair::new(a.eps1.unwrap_or(cfg.target.eps1), a.eps2.unwrap_or(cfg.target.eps2))?;
        cfg = ExperimentConfig { example, target, ..cfg };
    }
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(s) = a.schedule {
        cfg.schedule = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.iters {
        cfg.optim.max_iters = n;
        cfg.step_budget = cfg.step_budget.map(|_| n);
    }
    if let Some(o) = &a.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_rows(rows: &[ErrorRow]) {
    print!("{}", format_table(rows));
}

fn train(a: &RunArgs) -> Result<()> {
    let cfg = build_config(a)?;
    let out = experiment::run_experiment(&cfg)?;
    print_rows(&[out.row]);
    println!("artifacts written to {}", cfg.out_dir.display());
    Ok(())
}

fn compare(a: &RunArgs) -> Result<()> {
    let base = build_config(a)?;
    let mut rows = Vec::new();

    let pa_cfg = ExperimentConfig { method: Method::PaPinn, out_dir: base.out_dir.join("pa_pinn"), ..base.clone() };
    let pa = experiment::run_experiment(&pa_cfg)?;
    rows.push(pa.row.clone());

    let mut pinn_cfg = ExperimentConfig { method: Method::Pinn, out_dir: base.out_dir.join("pinn"), ..base.clone() };
    pinn_cfg.optim.max_iters = pa.row.iters.max(1);
    rows.push(experiment::run_experiment(&pinn_cfg)?.row);

    let spec = base.example.spec();
    if spec.input_dim == 1 {
        let fdm_cfg = ExperimentConfig { method: Method::Fdm, out_dir: base.out_dir.join("fdm"), ..base.clone() };
        rows.push(experiment::run_experiment(&fdm_cfg)?.row);

        let mut w = csv::Writer::from_path(base.out_dir.join("fdm.csv"))?;
        w.write_record(["method", "eps1", "eps2", "N", "e_inf"])?;
        let mut n = 64;
        while n <= base.fdm_cells.max(64) {
            let e = fdm_max_error(&spec, base.target, n)?;
            w.write_record(["fdm".to_string(), format!("{:e}", base.target.eps1), format!("{:e}", base.target.eps2), n.to_string(), format!("{e:e}")])?;
            n *= 2;
        }
        w.flush()?;
    }
    write_error_rows(std::fs::File::create(base.out_dir.join("errors.csv"))?, &rows)?;
    print_rows(&rows);
    Ok(())
}

fn evaluate(a: &EvalArgs) -> Result<()> {
    let params = MlpParams::load(&a.checkpoint)?;
    let spec = a.example.spec();
    let pair = PerturbationPair::new(a.eps1, a.eps2)?;
    let grid = eval_grid(&spec, a.grid_n.unwrap_or_else(|| papinn::metrics::default_grid_n(&spec)))?;
    let exact = exact_on_grid(&spec, pair, &grid)?;
    let predicted = forward_batch(&params, &grid)?;
    println!("E2   = {}", experiment::sci6(rel_l2(&exact, &predicted)?));
    println!("Einf = {}", experiment::sci6(linf_err(&exact, &predicted)?));
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        write_solution(&dir.join("solution.csv"), a.example, &grid, &exact, &predicted)?;
    }
    Ok(())
}

fn table(files: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_error_rows(f)?);
    }
    print_rows(&rows);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Table { files } => table(files),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
