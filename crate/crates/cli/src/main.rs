use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rotlab::harness::{grid_csv, run_grid, spiral_csv, spiral_slowdown_sweep, summary_json, trace_csv, SweepConfig};
use rotlab::pipemodel::{emit_stage_table, StageTableConfig};
use rotlab::{run_experiment, Error, RunConfig};

#[derive(Parser)]
#[command(name = "rotlab", version, about = "Delayed-gradient optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; writes `<stem>.trace.csv` and `<stem>.summary.json`.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a grid or spiral sweep; writes `<stem>.grid.csv` or `<stem>.spiral.csv`.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the pipeline stage-count table as CSV.
    Stages {
        config: PathBuf,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle suite.
    Verify,
}

enum Failure {
    Config(String),
    Runtime(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn read_config(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

/// Writes through a temporary sibling and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Runtime(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn run(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::from_toml(&read_config(config)?)?;
    let record = run_experiment(&cfg)?;
    let name = stem(config);
    write_atomic(&out.join(format!("{name}.trace.csv")), &trace_csv(&record))?;
    write_atomic(&out.join(format!("{name}.summary.json")), &summary_json(&record.summary))?;
    let s = &record.summary;
    match s.iterations_to_threshold {
        Some(it) => println!("reached threshold after {it} iterations; final loss {:e}", s.final_loss),
        None => println!("ran {} steps; final loss {:e}; diverged: {}", s.wall_steps, s.final_loss, s.diverged),
    }
    Ok(())
}

fn sweep(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = SweepConfig::from_toml(&read_config(config)?)?;
    let name = stem(config);
    if let Some(grid) = &cfg.grid {
        let cells = run_grid(&cfg.base, grid)?;
        let cell_dir = out.join(format!("{name}.cells"));
        for c in &cells {
            let json = serde_json::to_string_pretty(c).map_err(|e| Failure::Runtime(e.to_string()))?;
            write_atomic(&cell_dir.join(format!("cell-{:04}.json", c.index)), &json)?;
        }
        write_atomic(&out.join(format!("{name}.grid.csv")), &grid_csv(&cells))?;
        println!("{} cells", cells.len());
    } else if let Some(spiral) = &cfg.spiral {
        let result = spiral_slowdown_sweep(&cfg.base, spiral)?;
        write_atomic(&out.join(format!("{name}.spiral.csv")), &spiral_csv(&result))?;
        println!(
            "{} probes ({} skipped); aligned mean {:?}; misaligned mean {:?}",
            result.probes.len(),
            result.skipped,
            result.aligned_mean,
            result.misaligned_mean
        );
    }
    Ok(())
}

fn stages(config: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = StageTableConfig::from_toml(&read_config(config)?)?;
    let table = emit_stage_table(&cfg.models, &cfg.devices);
    print!("{table}");
    if let Some(path) = out {
        write_atomic(path, &table)?;
    }
    Ok(())
}

fn verify() -> Result<(), Failure> {
    let checks = rotlab::verify::run_suite();
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    if failed > 0 {
        Err(Failure::Verification)
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Sweep { config, out } => sweep(config, out),
        Command::Stages { config, out } => stages(config, out.as_deref()),
        Command::Verify => verify(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
