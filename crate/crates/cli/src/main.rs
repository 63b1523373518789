use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noma_ee::commands::{cmd_fig4, cmd_fig5, cmd_optimize};
use noma_ee::output::num;
use noma_ee::validate::{cmd_validate, verdict};
use noma_ee::{CliError, Scenario};

#[derive(Parser)]
#[command(version, about = "Energy-efficient uplink NOMA power control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and NOMA_EE_OUT_DIR
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides simulation.seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the energy-efficient allocation and write allocation.csv and trace.csv
    Optimize(Common),
    /// Analytic vs simulated delay-violation probability over a delay grid
    Fig4(Common),
    /// Optimized energy efficiency vs delay bound, two-mode and single-mode
    Fig5(Common),
    /// Run the property suite and write validate.csv
    Validate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated properties; defaults to validate.properties
        #[arg(long, value_delimiter = ',')]
        properties: Option<Vec<String>>,
    },
}

fn load(c: &Common) -> Result<Scenario, CliError> {
    let mut scn = noma_ee::load(&c.config)?;
    if let Some(seed) = c.seed {
        scn.raw.simulation.seed = seed;
    }
    Ok(scn)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize(c) => {
            let scn = load(&c)?;
            cmd_optimize(&scn, &scn.output_dir(c.out.as_deref()))
        }
        Command::Fig4(c) => {
            let scn = load(&c)?;
            cmd_fig4(&scn, &scn.output_dir(c.out.as_deref()))
        }
        Command::Fig5(c) => {
            let scn = load(&c)?;
            cmd_fig5(&scn, &scn.output_dir(c.out.as_deref()))
        }
        Command::Validate { common, properties } => {
            let mut scn = load(&common)?;
            if let Some(p) = properties {
                let p: Vec<String> = p.into_iter().filter(|s| !s.trim().is_empty()).collect();
                scn.raw.validate.properties = p;
            }
            let selection = scn.raw.validate.properties.clone();
            let results = cmd_validate(&scn, &selection, &scn.output_dir(common.out.as_deref()))?;
            for r in &results {
                let status = if r.passed { "PASS" } else { "FAIL" };
                println!("{status} {:<28} measured {} threshold {}", r.name, num(r.measured), num(r.threshold));
            }
            verdict(&results)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
