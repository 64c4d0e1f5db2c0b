//! Command-line interface: run adaptive solves, sweeps over diffusion
//! coefficients and weight modes, and render record CSVs as tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dwr::config::RunConfig;
use dwr::error::Result;
use dwr::estimator::TemporalWeight;
use dwr::report::{parse_csv_file, record_row, render_table, run_experiment_with, sweep_legs, CSV_HEADER};

#[derive(Parser)]
#[command(
    name = "dwr",
    version,
    about = "Goal-oriented space-time adaptive FEM solver for convection-diffusion-reaction problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive solve a config file describes and write its record CSV.
    Solve {
        /// Path to a key=value config file.
        #[arg(long)]
        config: PathBuf,
        /// Also write per-slab and per-cell indicator CSVs each loop.
        #[arg(long)]
        dump_fields: bool,
        /// Output directory (overrides DWR_OUT_DIR and the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one or more record CSVs as a table (side by side when several).
    Table {
        /// Record CSV files to render.
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Output format.
        #[arg(long, value_enum, default_value_t = Format::Plain)]
        format: Format,
    },
    /// Run one solve per (epsilon, mode) combination derived from a base config.
    Sweep {
        /// Path to the base key=value config file.
        #[arg(long)]
        base: PathBuf,
        /// Comma-separated diffusion coefficients, e.g. 1e-3,1e-4,1e-6.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Comma-separated temporal weight modes.
        #[arg(long, value_delimiter = ',', required = true, ignore_case = true)]
        modes: Vec<Mode>,
        /// Output directory (overrides DWR_OUT_DIR and the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Plain,
    Markdown,
}

#[derive(Copy, Clone, ValueEnum)]
enum Mode {
    #[value(name = "hoRe")]
    HoRe,
    #[value(name = "hoFE")]
    HoFe,
}

impl From<Mode> for TemporalWeight {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::HoRe => TemporalWeight::Reconstruction,
            Mode::HoFe => TemporalWeight::EnrichedSpace,
        }
    }
}

/// Output directory precedence: --out flag, then DWR_OUT_DIR, then the
/// config file's out_dir, then the working directory.
fn resolve_out_dir(flag: Option<PathBuf>, config_dir: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    if let Ok(env) = std::env::var("DWR_OUT_DIR") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    config_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

/// Run one experiment, echoing each record row to stderr as it lands.
fn solve_one(config: &RunConfig, out_dir: &Path) -> Result<()> {
    eprintln!(
        "solving {} ({} loop{} max) ...",
        config.stem(),
        config.max_loops,
        if config.max_loops == 1 { "" } else { "s" }
    );
    eprintln!("  {CSV_HEADER}");
    let path = run_experiment_with(config, out_dir, |rec| {
        eprintln!("  {}", record_row(rec));
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_solve(config_path: &Path, dump_fields: bool, out: Option<PathBuf>) -> Result<()> {
    let mut config = RunConfig::from_file(config_path)?;
    if dump_fields {
        config.dump_indicators = true;
    }
    let out_dir = resolve_out_dir(out, config.out_dir.as_deref());
    solve_one(&config, &out_dir)
}

fn cmd_table(paths: &[PathBuf], format: Format) -> Result<()> {
    let tables = paths.iter().map(|p| parse_csv_file(p)).collect::<Result<Vec<_>>>()?;
    let rendered = render_table(&tables, matches!(format, Format::Markdown))?;
    print!("{rendered}");
    Ok(())
}

fn cmd_sweep(base_path: &Path, eps: &[f64], modes: &[Mode], out: Option<PathBuf>) -> Result<()> {
    let base = RunConfig::from_file(base_path)?;
    let out_dir = resolve_out_dir(out, base.out_dir.as_deref());
    let modes: Vec<TemporalWeight> = modes.iter().map(|&m| m.into()).collect();
    for leg in sweep_legs(&base, eps, &modes)? {
        solve_one(&leg, &out_dir)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { config, dump_fields, out } => cmd_solve(&config, dump_fields, out),
        Command::Table { csv, format } => cmd_table(&csv, format),
        Command::Sweep { base, eps, modes, out } => cmd_sweep(&base, &eps, &modes, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
