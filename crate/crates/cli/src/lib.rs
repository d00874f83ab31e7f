//! Scenario-driven front end: load a scenario, run one command, write CSV
//! reports.

pub mod commands;
pub mod report;

use std::path::{Path, PathBuf};

use hjmm::config::{parse_override, Scenario};

pub use commands::{run, Command, Outcome};

#[derive(Debug, Clone, clap::Parser)]
#[command(name = "hjmm", version, about = "HJM forward-curve laboratory")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file; built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `[mc] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory for reports.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// `section.key=value`, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
}

/// Loads the scenario named by the flags, `--seed` last.
pub fn load_scenario(cli: &Cli) -> Result<Scenario, String> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut overrides =
        cli.set.iter().map(|s| parse_override(s)).collect::<hjmm::Result<Vec<_>>>().map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        overrides.push(parse_override(&format!("mc.seed={seed}")).map_err(|e| e.to_string())?);
    }
    Scenario::load(&text, &overrides).map_err(|e| match &cli.config {
        Some(p) => format!("{}: {e}", p.display()),
        None => e.to_string(),
    })
}

fn write_reports(out: &Path, outcome: &Outcome) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    for (name, rep) in &outcome.reports {
        let path = out.join(name);
        std::fs::write(&path, rep.render_now()).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

/// Runs the command line and returns the exit code: 0 on success, 2 on a
/// refuted invariance certificate, 1 on any error.
pub fn main_with(cli: &Cli) -> i32 {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: thread pool already set up: {e}");
        }
    }
    let scenario = match load_scenario(cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let outcome = match run(cli.command, &scenario) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.command.name());
            return 1;
        }
    };
    if let Err(e) = write_reports(&cli.out, &outcome) {
        eprintln!("error: {e}");
        return 1;
    }
    for line in &outcome.summary {
        println!("{line}");
    }
    outcome.exit_code
}
