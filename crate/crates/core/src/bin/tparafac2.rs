use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tparafac2::experiments::{
    evaluate_factors, fit_dataset, generate_datasets, reproduce, summarize_files, ExperimentPlan, FitRequest, Group,
    Method,
};
use tparafac2::Error;

#[derive(Parser)]
#[command(name = "tparafac2", version, about = "Fit and benchmark temporally smooth PARAFAC2 models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverFlags {
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long = "lambda-a")]
    lambda_a: Option<f64>,
    #[arg(long = "lambda-d")]
    lambda_d: Option<f64>,
    #[arg(long = "max-outer")]
    max_outer: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Clone)]
struct PlanFlags {
    /// JSON experiment plan; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    datasets: Option<usize>,
    #[arg(long)]
    inits: Option<usize>,
    /// Noise level; repeat for several.
    #[arg(long)]
    noise: Vec<f64>,
    /// Initial shared-word fraction (overlap group); repeat for several.
    #[arg(long)]
    overlap: Vec<f64>,
    /// Smoothness grid for temporal methods; repeat for several.
    #[arg(long = "lambda-b")]
    lambda_b: Vec<f64>,
    /// Methods to run (PARAFAC2, tPARAFAC2, tCMF, NNtCMF); repeat for several.
    #[arg(long)]
    method: Vec<Method>,
    /// 150×100×20 tensors, 20 datasets × 20 initializations.
    #[arg(long = "paper-scale")]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic datasets and a manifest.
    Generate {
        #[arg(long, default_value = "easy")]
        group: Group,
        #[command(flatten)]
        plan: PlanFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-start fits on one dataset directory.
    Fit {
        dataset: PathBuf,
        #[arg(long, default_value = "tPARAFAC2")]
        method: Vec<Method>,
        /// Smoothness weights; repeat for several.
        #[arg(long = "lambda-b", default_values_t = [1.0])]
        lambda_b: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        inits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverFlags,
        /// Run CSV to append to; a `.jsonl` mirror is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Directory receiving one factor directory per run.
        #[arg(long = "save-factors")]
        save_factors: Option<PathBuf>,
    },
    /// Score saved factors against a dataset.
    Evaluate {
        dataset: PathBuf,
        factors: PathBuf,
        #[arg(long)]
        rank: Option<usize>,
        /// Factors come from a coupled matrix factorization.
        #[arg(long)]
        cmf: bool,
    },
    /// Best-run FMS quantiles from run files.
    Summarize {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, fit and summarize one experiment group.
    Reproduce {
        group: Group,
        #[command(flatten)]
        plan: PlanFlags,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn load_plan(group: Group, flags: &PlanFlags) -> Result<ExperimentPlan, Error> {
    let mut plan = match &flags.config {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => {
            let p = ExperimentPlan::default_for(group, 0);
            if flags.paper_scale {
                p.with_paper_scale()
            } else {
                p
            }
        }
    };
    if flags.config.is_some() && flags.paper_scale {
        plan = plan.with_paper_scale();
    }
    if let Some(s) = flags.seed {
        plan.base_seed = s;
    }
    if let Some(n) = flags.datasets {
        plan.n_datasets = n;
    }
    if let Some(n) = flags.inits {
        plan.n_inits = n;
    }
    if !flags.noise.is_empty() {
        plan.noise_levels = flags.noise.clone();
    }
    if !flags.overlap.is_empty() {
        plan.overlap_fractions = flags.overlap.clone();
    }
    if !flags.lambda_b.is_empty() {
        plan.lambda_b_grid = flags.lambda_b.clone();
    }
    if !flags.method.is_empty() {
        plan.methods = flags.method.clone();
    }
    Ok(plan)
}

fn apply_solver(plan: &mut ExperimentPlan, flags: &SolverFlags) {
    if let Some(r) = flags.rank {
        plan.scale.rank = r;
    }
    if let Some(l) = flags.lambda_a {
        plan.solver.lambda_a = l;
    }
    if let Some(l) = flags.lambda_d {
        plan.solver.lambda_d = l;
    }
    if let Some(m) = flags.max_outer {
        plan.solver.max_outer = m;
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Generate { group, plan, out } => {
            let plan = load_plan(group, &plan)?;
            let m = generate_datasets(&plan, &out)?;
            println!("wrote {} datasets to {}", m.datasets.len(), out.display());
        }
        Command::Fit { dataset, method, lambda_b, inits, seed, solver, out, save_factors } => {
            let mut plan = ExperimentPlan::default_for(Group::Easy, seed);
            apply_solver(&mut plan, &solver);
            let variants = method
                .iter()
                .flat_map(|&m| if m.is_temporal() { lambda_b.iter().map(|&l| (m, l)).collect() } else { vec![(m, 0.0)] })
                .collect();
            let req = FitRequest {
                variants,
                n_inits: inits,
                base_seed: seed,
                rank: solver.rank,
                settings: plan.solver,
                threads: solver.threads,
            };
            let recs = fit_dataset(&dataset, &req, &out, save_factors.as_deref())?;
            for r in &recs {
                println!(
                    "{:<16} seed {:>4}  loss {:.6e}  iters {:>5}  {:<15} fms {}",
                    r.label(),
                    r.init_seed,
                    r.final_loss,
                    r.outer_iters,
                    r.exit_reason.as_str(),
                    r.fms.map_or("-".to_string(), |f| format!("{f:.4}"))
                );
            }
        }
        Command::Evaluate { dataset, factors, rank, cmf } => {
            let ev = evaluate_factors(&dataset, &factors, rank, cmf)?;
            println!("{}", serde_json::to_string_pretty(&ev)?);
        }
        Command::Summarize { runs, out } => {
            let s = summarize_files(&runs, &out)?;
            print_summary(&s, &out);
        }
        Command::Reproduce { group, plan, solver, out } => {
            let mut plan = load_plan(group, &plan)?;
            apply_solver(&mut plan, &solver);
            let rep = reproduce(&plan, &out, solver.threads)?;
            print_summary(&rep.summary, &out);
        }
    }
    Ok(())
}

fn print_summary(s: &tparafac2::experiments::Summary, out: &Path) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    for r in &s.rows {
        println!(
            "{:<16} eta {:<5} overlap {:<4} median {} [{} .. {}] discarded {}/{}",
            r.label,
            r.noise,
            r.overlap,
            fmt(r.fms_median),
            fmt(r.fms_q1),
            fmt(r.fms_q3),
            r.n_discarded,
            r.n_datasets
        );
    }
    println!("summary written to {}", out.display());
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Shape(_) => 2,
        Error::AllDiverged(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
