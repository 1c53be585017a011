use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dmpnet_cli::{
    load_learn_config, load_scenario, run_learn, run_scenario, CliError, RunOptions, StepFilter,
};

/// Simulate, certify, and fit movement-primitive oscillator networks.
#[derive(Parser)]
#[command(name = "dmpnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario (or learning) configuration JSON.
    config: PathBuf,
    /// Output directory root; artifacts land in `<out-dir>/<name>/`.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override sample counts of certificate sweeps.
    #[arg(long)]
    samples: Option<usize>,
    /// Log step progress to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario pipeline: simulate, measure, certify as declared.
    Simulate(CommonArgs),
    /// Run only the certificate steps and print a PASS/FAIL table.
    Certify(CommonArgs),
    /// Fit forcing weights from a demonstration CSV.
    Learn(CommonArgs),
    /// Run a gait scenario (reference + transformations required).
    Gait(CommonArgs),
}

fn options(args: &CommonArgs) -> RunOptions {
    RunOptions {
        out_dir: args.out_dir.clone(),
        seed: args.seed,
        samples: args.samples,
        verbose: args.verbose,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let scenario = load_scenario(&args.config)?;
            let summary = run_scenario(scenario, &options(&args), StepFilter::All)?;
            for (label, pass) in &summary.table {
                println!("{label}: {}", if *pass { "PASS" } else { "FAIL" });
            }
            for path in &summary.wrote {
                if options(&args).verbose {
                    eprintln!("wrote {}", path.display());
                }
            }
            println!("ok: {} file(s) written", summary.wrote.len());
            Ok(())
        }
        Command::Certify(args) => {
            let scenario = load_scenario(&args.config)?;
            let summary = run_scenario(scenario, &options(&args), StepFilter::CertificatesOnly)?;
            let mut all_pass = true;
            for (label, pass) in &summary.table {
                println!("{label}: {}", if *pass { "PASS" } else { "FAIL" });
                all_pass &= pass;
            }
            if summary.table.is_empty() {
                eprintln!("warning: no certificate steps in the pipeline");
            }
            if all_pass {
                Ok(())
            } else {
                Err(CliError::Scenario("one or more certificates failed".into()))
            }
        }
        Command::Learn(args) => {
            let config = load_learn_config(&args.config)?;
            let summary = run_learn(config, &options(&args))?;
            println!(
                "fit rmse {}: weights written to {}",
                summary.report["residual_rmse"],
                summary.wrote[0].display()
            );
            Ok(())
        }
        Command::Gait(args) => {
            let scenario = load_scenario(&args.config)?;
            if scenario.systems.transformations.is_empty() || scenario.systems.reference.is_none()
            {
                return Err(CliError::Scenario(
                    "gait scenarios need a reference system and transformation systems".into(),
                ));
            }
            let summary = run_scenario(scenario, &options(&args), StepFilter::All)?;
            for (label, pass) in &summary.table {
                println!("{label}: {}", if *pass { "PASS" } else { "FAIL" });
            }
            println!("ok: {} file(s) written", summary.wrote.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
