use clap::{Parser, Subcommand};
use nsfem::study::run_study_with;
use nsfem_cli::{emit, write_atomically, CliError, RunPlan, Settings};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nsfem", version, about = "Convergence studies for power-law flow discretizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one convergence study and emit its table.
    Run {
        /// Plain-text `key = value` file; flags override its entries.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
}

fn run(config: Option<PathBuf>, flags: Settings) -> Result<(), CliError> {
    let file = match config {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Settings::from_config_text(&text)?
        }
        None => Settings::default(),
    };
    let plan = RunPlan::from_settings(flags.over(file))?;
    for w in &plan.warnings {
        eprintln!("warning: {w}");
    }
    let verbose = plan.verbose;
    let report = run_study_with(&plan.config, |l| {
        if verbose {
            eprintln!(
                "level {} ndof {} newton {} eF {:.3e} eq_lp {:.3e} eq_l2 {:.3e}",
                l.level, l.ndof, l.newton_iters, l.e_f, l.e_q_lp, l.e_q_l2
            );
        }
    })?;
    let table = emit(&report, plan.format);
    match &plan.out {
        Some(path) => write_atomically(path, &table),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(table.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, settings } = cli.command;
    match run(config, settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
