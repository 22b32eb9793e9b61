use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use delay_adaptive::experiment::{
    check_stored, convergence_study, parse_config, run_scenario, sweep, ExperimentError, ScenarioConfig,
    ScenarioOutcome, SweepAxis,
};
use delay_adaptive::sim::read_rows;
use delay_adaptive::verify::reports_to_text;

/// Overrides `[output] dir` of every config.
const OUT_DIR_ENV: &str = "DELAY_ADAPTIVE_OUT_DIR";

const EXIT_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SIM: u8 = 3;

#[derive(Parser)]
#[command(
    name = "delay-adaptive",
    version,
    about = "Simulate and verify the delay-adaptive closed loop"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, write trace and reports, run every enabled check.
    Run { config: PathBuf },
    /// Re-run a scenario once per value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Step-halving study of the energy identity and trace self-distance.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        halvings: u32,
    },
    /// Verify a stored trace against the scenario it came from.
    Check { trace: PathBuf, config: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match e {
            ExperimentError::Sim(_) => EXIT_SIM,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn config_failure(path: &Path, message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: format!("{}: {message}", path.display()),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_failure(path, e))?;
    parse_config(&text).map_err(|e| config_failure(path, e))
}

fn out_dir(cfg: &ScenarioConfig) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| cfg.output.dir.clone(), PathBuf::from)
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: format!("io: {e}"),
    }
}

fn finish(out: &ScenarioOutcome, cfg: &ScenarioConfig) -> Result<u8, Failure> {
    out.write(&out_dir(cfg), &cfg.output)?;
    print!("{}", reports_to_text(&out.reports));
    Ok(if out.passed() { 0 } else { EXIT_CHECK })
}

fn execute(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let out = run_scenario(&cfg)?;
            finish(&out, &cfg)
        }
        Command::Check { trace, config } => {
            let cfg = load(&config)?;
            let file = fs::File::open(&trace).map_err(|e| config_failure(&trace, e))?;
            let rows = read_rows(file).map_err(|e| config_failure(&trace, e))?;
            let out = check_stored(&cfg, rows)?;
            print!("{}", reports_to_text(&out.reports));
            Ok(if out.passed() { 0 } else { EXIT_CHECK })
        }
        Command::Sweep { config, axis, values } => {
            let cfg = load(&config)?;
            let table = sweep(&cfg, axis, &values);
            let csv = table.to_csv();
            let dir = out_dir(&cfg);
            fs::create_dir_all(&dir).map_err(io_failure)?;
            fs::write(dir.join(format!("sweep_{}.csv", axis.name())), &csv).map_err(io_failure)?;
            print!("{csv}");
            Ok(if table.rows.iter().any(|r| r.error.is_some()) {
                EXIT_SIM
            } else if table.rows.iter().all(|r| r.pass) {
                0
            } else {
                EXIT_CHECK
            })
        }
        Command::Converge { config, halvings } => {
            let cfg = load(&config)?;
            let table = convergence_study(&cfg, halvings)?;
            let csv = table.to_csv();
            let dir = out_dir(&cfg);
            fs::create_dir_all(&dir).map_err(io_failure)?;
            fs::write(dir.join("convergence.csv"), &csv).map_err(io_failure)?;
            print!("{csv}");
            println!("identity order: {}", table.order_label());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
