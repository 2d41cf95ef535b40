mod args;
mod corpus;
mod error;
mod separate;
mod tables;

use std::process::ExitCode;

use clap::Parser;
use log::info;
use rayon::prelude::*;

use args::{out_root, Cli, Command, EvalArgs, SeparateArgs, SweepArgs, SynthArgs};
use error::{CliError, CliResult};
use separate::{default_stem_dir, run_separate, Overrides};

fn synth(args: &SynthArgs) -> CliResult<()> {
    let out = args.out.clone().unwrap_or_else(|| out_root().join("corpus"));
    let manifests = corpus::synth_corpus(&out, args.seed, args.count)?;
    println!("wrote {} mixtures to {}", manifests.len(), out.display());
    Ok(())
}

fn separate(args: &SeparateArgs) -> CliResult<()> {
    let overrides = Overrides {
        method: args.method,
        sigma_u: args.sigma_u,
        sigma_r: args.sigma_r,
        model: args.model.clone(),
    };
    if args.input.is_file() {
        let out = args.out.clone().unwrap_or_else(|| default_stem_dir(&args.input, args.method));
        let report = run_separate(&args.input, &overrides, &out)?;
        print_report_line(&report);
        return Ok(());
    }
    if args.out.is_some() {
        return Err(CliError::Usage(
            "--out applies to a single manifest; corpus stems go next to each manifest".into(),
        ));
    }
    let manifests = corpus::find_manifests(&args.input)?;
    if manifests.is_empty() {
        return Err(CliError::Usage(format!("no manifests found under {}", args.input.display())));
    }
    let reports = manifests
        .par_iter()
        .map(|m| run_separate(m, &overrides, &default_stem_dir(m, args.method)))
        .collect::<CliResult<Vec<_>>>()?;
    for r in &reports {
        print_report_line(r);
    }
    Ok(())
}

fn print_report_line(report: &separate::RunReport) {
    let cost = report.cost_trace.last().copied().unwrap_or(f64::NAN);
    match &report.scores {
        Some(s) => {
            let m = s.mean();
            println!(
                "{} {}: SDR {:.2} dB, SIR {:.2} dB, SAR {:.2} dB, final cost {cost:.4e}",
                report.mixture, report.method, m.sdr_db, m.sir_db, m.sar_db
            );
        }
        None => println!("{} {}: final cost {cost:.4e}", report.mixture, report.method),
    }
}

fn eval(args: &EvalArgs) -> CliResult<()> {
    let manifests = corpus::find_manifests(&args.corpus)?;
    let out = args.out.clone().unwrap_or_else(|| out_root().join("eval.csv"));
    let skipped = tables::run_eval(&manifests, &args.method, &out)?;
    if skipped > 0 {
        info!("{skipped} (mixture, method) pairs skipped, see the status column");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(args: &SweepArgs) -> CliResult<()> {
    let manifests = corpus::find_manifests(&args.corpus)?;
    let out = args.out.clone().unwrap_or_else(|| out_root().join("sweep.csv"));
    let cells = tables::run_sweep(&manifests, &args.sigma_u, &args.sigma_r, &args.model, &out)?;
    println!("wrote {} grid cells to {}", cells.len(), out.display());
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.jobs)))?;
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Separate(a) => separate(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phasecnmf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
