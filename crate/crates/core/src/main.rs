use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use esc_lab::cli::{run_experiment, sweep_omega, validate_conditions, ExitStatus, ExperimentConfig};
use esc_lab::Error;

#[derive(Parser)]
#[command(name = "esc-lab", version, about = "Extremum seeking experiments with vanishing control oscillations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured system and write CSVs plus summary.json.
    Run { config: PathBuf },
    /// Repeat the proposed system over several base frequencies.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        omegas: Vec<f64>,
    },
    /// Check the standing conditions and print a PASS/FAIL report.
    Validate { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::load(path)
}

fn execute(cli: Cli) -> Result<ExitStatus, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let experiment = cfg.resolve()?;
            let out = cfg.output_dir();
            let summary = run_experiment(&experiment, &out)?;
            for s in &summary.systems {
                println!(
                    "{:<14} {:<10} rows {:>7}  {}",
                    s.system,
                    format!("{:?}", s.status).to_lowercase(),
                    s.csv_rows,
                    s.message.as_deref().unwrap_or("")
                );
            }
            println!("wrote {}", out.display());
            Ok(summary.exit_status)
        }
        Command::Sweep { config, omegas } => {
            let cfg = load(&config)?;
            let experiment = cfg.resolve()?;
            let table = sweep_omega(&experiment, &omegas)?;
            let out = cfg.output_dir();
            std::fs::create_dir_all(&out)?;
            table.write_csv(&out.join("sweep.csv"))?;
            println!("{:>12} {:>14} {:>12} {:>12} {:>12} {:>6}", "omega", "sup_dev", "max_g1", "max_g2", "max_g3", "exits");
            for r in &table.rows {
                println!(
                    "{:>12.4e} {:>14.6e} {:>12.4e} {:>12.4e} {:>12.4e} {:>6} {}",
                    r.omega, r.sup_deviation, r.max_g[0], r.max_g[1], r.max_g[2], r.delta_exits, r.note
                );
            }
            Ok(table.exit_status())
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let report = validate_conditions(&cfg);
            println!("{report}");
            Ok(if report.passed() { ExitStatus::Success } else { ExitStatus::ValidationFailure })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ExitStatus::ValidationFailure.code() as u8)
        }
    }
}
