use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impulse_lab::{parse_config, run, write_summary, Scenario};

/// Scenario runner for impulse control of the heat equation.
#[derive(Parser)]
#[command(name = "impulse-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios and write one set of CSVs per scenario plus summary.csv.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "IMPULSE_LAB_OUT", default_value = "impulse-lab-out")]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Only scenarios whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Print the scenarios of a config.
    List { config: PathBuf },
    /// Validate a config without running it.
    Check { config: PathBuf },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(path: &Path) -> Result<Vec<Scenario>, ExitCode> {
    parse_config(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { config } => match load(&config) {
            Ok(s) => {
                println!("{}: {} scenario(s) ok", config.display(), s.len());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::List { config } => match load(&config) {
            Ok(s) => {
                for sc in &s {
                    println!("{}\t{}\tn={}\tseed={}", sc.name, sc.task.as_str(), sc.grid.n, sc.seed);
                }
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run {
            config,
            out,
            workers,
            filter,
        } => {
            let mut scenarios = match load(&config) {
                Ok(s) => s,
                Err(code) => return code,
            };
            if let Some(f) = &filter {
                scenarios.retain(|s| s.name.contains(f.as_str()));
                if scenarios.is_empty() {
                    eprintln!("error: no scenario matches `{f}`");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
            let reports = match run(&scenarios, &out, workers) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            for r in &reports {
                let status = if r.ok() { "PASS" } else { "FAIL" };
                print!(
                    "{status} {} ({}) {}/{} checks, {:.2}s",
                    r.name,
                    r.task.as_str(),
                    r.passed,
                    r.total(),
                    r.wall.as_secs_f64()
                );
                match &r.error {
                    Some(e) => println!(": {e}"),
                    None => println!(),
                }
            }
            if let Err(e) = write_summary(&reports, &out) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_FAIL);
            }
            if reports.iter().all(|r| r.ok()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
    }
}
