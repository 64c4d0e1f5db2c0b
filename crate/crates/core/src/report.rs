//! Output plumbing: the convergence-record CSV (written incrementally, one
//! flushed row per adaptive loop), per-loop indicator dumps, and the
//! human-readable table renderer that lays several record CSVs out side by
//! side. All files are UTF-8 with LF line endings; numbers carry six
//! significant digits so that rows can be compared against three-digit
//! published tables without rounding ambiguity.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use crate::adapt::{adaptive_loop, ConvergenceRecord};
use crate::config::RunConfig;
use crate::estimator::{Effectivity, IndicatorSet, TemporalWeight};
use crate::{Error, Result};

/// Header of every record CSV.
pub const CSV_HEADER: &str = "loop,N,NKmax,NDoFtot,Je,eta_h,eta_tau,Ieff";

/// Six-significant-digit scientific notation (one leading digit, five
/// decimals, un-padded exponent), e.g. `2.74000e-2`.
pub fn sci6(x: f64) -> String {
    format!("{x:.5e}")
}

fn effectivity_field(e: Effectivity) -> String {
    match e {
        Effectivity::Index(i) => sci6(i),
        Effectivity::Exact => "nan".to_string(),
    }
}

/// One CSV row for a record, without the trailing newline.
pub fn record_row(rec: &ConvergenceRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        rec.loop_index,
        rec.n_slabs,
        rec.max_cells,
        rec.total_dofs,
        sci6(rec.goal_error),
        sci6(rec.eta_h),
        sci6(rec.eta_tau),
        effectivity_field(rec.effectivity),
    )
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

/// Run the experiment a config describes and stream its records into
/// `<out_dir>/<stem>.csv` (header first, one flushed row per loop). With
/// `dump_indicators` set, each loop additionally writes
/// `<stem>_indicators_loop<ℓ>.csv` (per-slab indicator split) and
/// `<stem>_cells_loop<ℓ>.csv` (per-cell spatial contributions). Returns
/// the record CSV path; a zero-loop config writes only the header.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    run_experiment_with(config, out_dir, |_| {})
}

/// [`run_experiment`] with a per-loop progress callback, invoked after each
/// record has been written and flushed.
pub fn run_experiment_with(
    config: &RunConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&ConvergenceRecord),
) -> Result<PathBuf> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let stem = config.stem();
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let mut csv = create(&csv_path)?;
    writeln!(csv, "{CSV_HEADER}").map_err(|e| io_err(&csv_path, e))?;
    csv.flush().map_err(|e| io_err(&csv_path, e))?;

    if config.max_loops == 0 {
        return Ok(csv_path);
    }

    let problem = config.problem()?;
    let partition = config.initial_partition()?;
    let mesh = config.initial_mesh()?;

    let mut write_failure: Option<Error> = None;
    let outcome = adaptive_loop(
        &problem,
        &config.adapt_config(),
        partition,
        mesh,
        |rec, ind| {
            if write_failure.is_some() {
                return;
            }
            let step = (|| -> Result<()> {
                writeln!(csv, "{}", record_row(rec)).map_err(|e| io_err(&csv_path, e))?;
                csv.flush().map_err(|e| io_err(&csv_path, e))?;
                if config.dump_indicators {
                    dump_indicators(out_dir, &stem, rec.loop_index, ind)?;
                }
                Ok(())
            })();
            match step {
                Ok(()) => progress(rec),
                Err(e) => write_failure = Some(e),
            }
        },
    );
    if let Some(e) = write_failure {
        return Err(e);
    }
    if let Some(e) = outcome.failure {
        return Err(Error::InvalidInput(format!(
            "solve: run ended at loop {} of {}: {e}",
            outcome.records.len() + 1,
            config.max_loops
        )));
    }
    Ok(csv_path)
}

fn dump_indicators(out_dir: &Path, stem: &str, loop_index: usize, ind: &IndicatorSet) -> Result<()> {
    let slabs_path = out_dir.join(format!("{stem}_indicators_loop{loop_index}.csv"));
    let mut slabs = create(&slabs_path)?;
    writeln!(slabs, "slab,eta_tau_n,eta_h_n").map_err(|e| io_err(&slabs_path, e))?;
    for (n, (tau, h)) in ind.slab_tau.iter().zip(&ind.slab_h).enumerate() {
        writeln!(slabs, "{},{},{}", n + 1, sci6(*tau), sci6(*h))
            .map_err(|e| io_err(&slabs_path, e))?;
    }
    slabs.flush().map_err(|e| io_err(&slabs_path, e))?;

    let cells_path = out_dir.join(format!("{stem}_cells_loop{loop_index}.csv"));
    let mut cells = create(&cells_path)?;
    writeln!(cells, "slab,cell,eta_h_contrib").map_err(|e| io_err(&cells_path, e))?;
    for (n, row) in ind.cell_h.iter().enumerate() {
        for (k, value) in row.iter().enumerate() {
            writeln!(cells, "{},{},{}", n + 1, k, sci6(*value))
                .map_err(|e| io_err(&cells_path, e))?;
        }
    }
    cells.flush().map_err(|e| io_err(&cells_path, e))?;
    Ok(())
}

/// The per-(ε, mode) configs a sweep runs, in sweep order: each is the base
/// config with the diffusion coefficient, weight mode, and matching dual
/// degree replaced.
pub fn sweep_legs(
    base: &RunConfig,
    eps_list: &[f64],
    modes: &[TemporalWeight],
) -> Result<Vec<RunConfig>> {
    if eps_list.is_empty() || modes.is_empty() {
        return Err(Error::InvalidInput(
            "sweep: need at least one diffusion value and one mode".into(),
        ));
    }
    let mut legs = Vec::new();
    for &eps in eps_list {
        for &mode in modes {
            let mut leg = base.clone();
            leg.eps = eps;
            leg.mode = mode;
            leg.s = mode.dual_degree(leg.r);
            legs.push(leg);
        }
    }
    Ok(legs)
}

/// Run one experiment per (ε, mode) combination, all derived from the base
/// config, returning the record CSV paths in sweep order.
pub fn run_sweep(
    base: &RunConfig,
    eps_list: &[f64],
    modes: &[TemporalWeight],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    sweep_legs(base, eps_list, modes)?
        .iter()
        .map(|leg| run_experiment(leg, out_dir))
        .collect()
}

/// A parsed record CSV: the original cell strings, kept verbatim so that
/// rendered tables echo the file's numbers exactly.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub stem: String,
    pub rows: Vec<Vec<String>>,
}

const N_COLUMNS: usize = 8;

/// Parse a record CSV, validating the header and that every field parses
/// as a number. Cell strings are preserved for verbatim re-display.
pub fn parse_csv(text: &str, stem: &str) -> Result<CsvTable> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{stem}: empty file")))?;
    if header != CSV_HEADER {
        return Err(Error::InvalidInput(format!(
            "{stem}: bad header '{header}' (expected '{CSV_HEADER}')"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(str::to_string).collect();
        if cells.len() != N_COLUMNS {
            return Err(Error::InvalidInput(format!(
                "{stem}: row {} has {} fields, expected {N_COLUMNS}",
                i + 2,
                cells.len()
            )));
        }
        for (j, cell) in cells.iter().enumerate() {
            if cell.parse::<f64>().is_err() {
                return Err(Error::InvalidInput(format!(
                    "{stem}: row {} field {} is not numeric: '{cell}'",
                    i + 2,
                    j + 1
                )));
            }
        }
        rows.push(cells);
    }
    Ok(CsvTable { stem: stem.to_string(), rows })
}

pub fn parse_csv_file(path: &Path) -> Result<CsvTable> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_csv(&text, &stem)
}

const COLUMN_NAMES: [&str; N_COLUMNS] =
    ["loop", "N", "NKmax", "NDoFtot", "Je", "eta_h", "eta_tau", "Ieff"];

/// Render one or more record tables as aligned text. A single table lists
/// its eight columns; several tables share the leading `loop` column and
/// put their remaining columns side by side (suffixed `.1`, `.2`, … with a
/// legend line mapping suffixes to file stems). `markdown` switches from
/// space-aligned plain text to a pipe table.
pub fn render_table(tables: &[CsvTable], markdown: bool) -> Result<String> {
    if tables.is_empty() {
        return Err(Error::InvalidInput("no tables to render".into()));
    }
    let single = tables.len() == 1;

    // Column headers.
    let mut headers: Vec<String> = vec![COLUMN_NAMES[0].to_string()];
    for (k, _) in tables.iter().enumerate() {
        for name in &COLUMN_NAMES[1..] {
            headers.push(if single {
                (*name).to_string()
            } else {
                format!("{name}.{}", k + 1)
            });
        }
    }

    // Row skeleton: union of loop labels in first-appearance order
    // (numeric order for well-formed files).
    let mut loops: Vec<String> = Vec::new();
    for table in tables {
        for row in &table.rows {
            if !loops.contains(&row[0]) {
                loops.push(row[0].clone());
            }
        }
    }
    loops.sort_by(|a, b| {
        a.parse::<f64>()
            .unwrap_or(f64::MAX)
            .partial_cmp(&b.parse::<f64>().unwrap_or(f64::MAX))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut grid: Vec<Vec<String>> = Vec::with_capacity(loops.len());
    for label in &loops {
        let mut row = vec![label.clone()];
        for table in tables {
            match table.rows.iter().find(|r| &r[0] == label) {
                Some(r) => row.extend(r[1..].iter().cloned()),
                None => row.extend(std::iter::repeat_n(String::new(), N_COLUMNS - 1)),
            }
        }
        grid.push(row);
    }

    let mut out = String::new();
    if !single {
        for (k, table) in tables.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", k + 1, table.stem));
        }
    }
    if markdown {
        out.push_str(&format!("| {} |\n", headers.join(" | ")));
        out.push_str(&format!(
            "|{}\n",
            headers.iter().map(|h| format!(" {} |", "-".repeat(h.len().max(3)))).collect::<String>()
        ));
        for row in &grid {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
    } else {
        let mut widths: Vec<usize> = headers.iter().map(String::len).collect();
        for row in &grid {
            for (j, cell) in row.iter().enumerate() {
                widths[j] = widths[j].max(cell.len());
            }
        }
        let fmt_row = |cells: &[String]| -> String {
            let mut line = String::new();
            for (j, cell) in cells.iter().enumerate() {
                if j > 0 {
                    // Group separator between files for readability.
                    line.push_str(if (j - 1) % (N_COLUMNS - 1) == 0 { " | " } else { "  " });
                }
                line.push_str(&format!("{:>width$}", cell, width = widths[j]));
            }
            line.push('\n');
            line
        };
        out.push_str(&fmt_row(&headers));
        for row in &grid {
            out.push_str(&fmt_row(row));
        }
    }
    Ok(out)
}
