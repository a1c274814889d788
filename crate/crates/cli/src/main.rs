use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use randevo_cli::{commands, CliError, Outcome, Overrides, Report, Status, Suite};

#[derive(Parser)]
#[command(
    name = "randevo",
    version,
    about = "Random evolutions driven by semi-Markov processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file, or the manifest of an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Root seed, replacing `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, replacing `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set run.n_samples=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            set: self.set.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Propagator,
    Evolution,
    Averaging,
    Containment,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Propagator => Suite::Propagator,
            SuiteArg::Evolution => Suite::Evolution,
            SuiteArg::Averaging => Suite::Averaging,
            SuiteArg::Containment => Suite::Containment,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and the models it describes.
    Validate(Common),
    /// Sample switching paths and evolution displacements.
    Simulate(Common),
    /// Run residual and diagnostic suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suite to run; defaults to `checks.suites` of the configuration.
        #[arg(long, value_enum)]
        suite: Option<SuiteArg>,
    },
    /// Convergence sweep over the configured scales.
    Sweep(Common),
}

fn print(outcome: &Outcome) {
    match &outcome.report {
        Report::Validation(v) => {
            println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
        }
        Report::Simulate(s) => {
            for r in &s.rates {
                println!(
                    "epsilon={} switch rate {:.5} +- {:.5} (1/M_rho = {:.5})",
                    r.epsilon, r.rate, r.stderr, r.expected
                );
            }
        }
        Report::Verify(_) | Report::Sweep(_) => {}
    }
    if let Some(m) = &outcome.manifest {
        for c in &m.checks {
            let mark = if c.pass { "PASS" } else { "FAIL" };
            if c.detail.is_empty() {
                println!("{mark} {}", c.name);
            } else {
                println!("{mark} {} ({})", c.name, c.detail);
            }
        }
    }
    if let Some(dir) = &outcome.out_dir {
        println!("outputs in {}", dir.display());
    }
    match &outcome.status {
        Status::Passed => {}
        Status::ChecksFailed(names) => eprintln!("failed checks: {}", names.join(", ")),
        Status::BudgetTooSmall(cell) => eprintln!("Monte Carlo budget too small: {cell}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<Outcome, CliError> = match &cli.command {
        Command::Validate(c) => commands::validate(&c.config, &c.overrides()),
        Command::Simulate(c) => commands::simulate(&c.config, &c.overrides()),
        Command::Verify { common, suite } => {
            commands::verify(&common.config, &common.overrides(), suite.map(Suite::from))
        }
        Command::Sweep(c) => commands::sweep(&c.config, &c.overrides()),
    };
    match result {
        Ok(outcome) => {
            print(&outcome);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
