use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use cachecycle::bench::{run_bench, BenchConfig};
use cachecycle::measurement::{scaling_reports, write_measurements};
use cachecycle::report::{self, MachinePredictions};
use cachecycle::{
    builtin_kernels, compare, parse_machine, parse_measurements, predict, resolve_kernel, KernelDescriptor, LevelRef,
    MachineDescriptor,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cachecycle", version, about = "Cycle and bandwidth model for streaming loop kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Predict cycles per cache-line update at every level
    Predict {
        /// Machine file; repeat for several machines
        #[arg(short, long = "machine", required = true)]
        machines: Vec<PathBuf>,
        /// Comma-separated builtin names or `name:R<reads>W<writes>`
        #[arg(short, long, value_delimiter = ',')]
        kernels: Vec<String>,
        /// Comma-separated levels (L1, L2, ..., MEM); default all
        #[arg(short, long, value_delimiter = ',')]
        levels: Vec<String>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Add one row per link transfer
        #[arg(long)]
        breakdown: bool,
    },
    /// Run the streaming benchmark on this host and emit measurement CSV
    Bench {
        #[arg(short, long = "machine")]
        machine: PathBuf,
        #[arg(short, long, value_delimiter = ',')]
        kernels: Vec<String>,
        #[arg(short, long, value_delimiter = ',')]
        levels: Vec<String>,
        /// Comma-separated thread counts
        #[arg(short, long, value_delimiter = ',', default_value = "1")]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Minimum length of one timed sample in milliseconds
        #[arg(long, default_value_t = 20)]
        min_sample_ms: u64,
        /// Output file (default stdout)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compare measurements against predictions
    Compare {
        #[arg(short, long = "machine", required = true)]
        machines: Vec<PathBuf>,
        /// Measurement CSV
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Cycle table, L2 decomposition, comparison and thread scaling in one go
    Report {
        #[arg(short, long = "machine", required = true)]
        machines: Vec<PathBuf>,
        #[arg(short, long)]
        input: PathBuf,
    },
}

enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_machines(paths: &[PathBuf]) -> Result<Vec<MachineDescriptor>, CliError> {
    let mut machines: Vec<MachineDescriptor> = Vec::new();
    for path in paths {
        let m = parse_machine(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if machines.iter().any(|o| o.name == m.name) {
            return Err(invalid(format!("machine `{}` given twice", m.name)));
        }
        machines.push(m);
    }
    Ok(machines)
}

fn kernels(specs: &[String]) -> Result<Vec<KernelDescriptor>, CliError> {
    if specs.is_empty() {
        return Ok(builtin_kernels());
    }
    specs.iter().map(|s| resolve_kernel(s).map_err(invalid)).collect()
}

/// Levels of `m` selected by `specs`, inner to outer. Labels absent from this
/// machine are skipped; labels absent from every machine are rejected by
/// [`check_levels`].
fn levels_for(m: &MachineDescriptor, specs: &[String]) -> Vec<LevelRef> {
    if specs.is_empty() {
        return m.level_refs();
    }
    let mut levels: Vec<LevelRef> = specs.iter().filter_map(|s| m.resolve_level(s)).collect();
    levels.sort();
    levels.dedup();
    levels
}

fn check_levels(machines: &[MachineDescriptor], specs: &[String]) -> Result<(), CliError> {
    for s in specs {
        if !machines.iter().any(|m| m.resolve_level(s).is_some()) {
            return Err(invalid(format!("unknown level `{s}`")));
        }
    }
    Ok(())
}

fn predictions<'a>(
    machines: &'a [MachineDescriptor],
    kernels: &[KernelDescriptor],
    level_specs: &[String],
) -> Result<Vec<MachinePredictions<'a>>, CliError> {
    machines
        .iter()
        .map(|m| {
            let levels = levels_for(m, level_specs);
            let mut predictions = Vec::new();
            for k in kernels {
                k.cache_line_set(m.cache_line_bytes).map_err(invalid)?;
                for &l in &levels {
                    predictions.push(predict(m, k, l).map_err(invalid)?);
                }
            }
            Ok(MachinePredictions { machine: m, predictions })
        })
        .collect()
}

fn comparison(
    machines: &[MachineDescriptor],
    input: &Path,
) -> Result<(Vec<cachecycle::ComparisonRow>, Vec<cachecycle::MeasurementRecord>), CliError> {
    let records = parse_measurements(&read(input)?, machines).map_err(|e| invalid(format!("{}: {e}", input.display())))?;
    let mut preds = Vec::new();
    for r in records.iter().filter(|r| r.threads == 1) {
        let m = machines.iter().find(|m| m.name == r.machine).expect("parser checked machine names");
        let k = resolve_kernel(&r.kernel).map_err(invalid)?;
        preds.push(predict(m, &k, r.level).map_err(invalid)?);
    }
    let rows = compare(&preds, &records, machines).map_err(invalid)?;
    Ok((rows, records))
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Predict {
            machines,
            kernels: kernel_specs,
            levels,
            format,
            breakdown,
        } => {
            let machines = load_machines(&machines)?;
            check_levels(&machines, &levels)?;
            let sets = predictions(&machines, &kernels(&kernel_specs)?, &levels)?;
            Ok(match (format, breakdown) {
                (Format::Table, false) => report::cycle_table(&sets),
                (Format::Table, true) => format!("{}\n{}", report::cycle_table(&sets), report::breakdown_text(&sets)),
                (Format::Csv, false) => report::predictions_csv(&sets),
                (Format::Csv, true) => format!("{}\n{}", report::predictions_csv(&sets), report::breakdown_csv(&sets)),
            })
        }
        Command::Bench {
            machine,
            kernels: kernel_specs,
            levels,
            threads,
            reps,
            min_sample_ms,
            out,
        } => {
            let machines = load_machines(&[machine])?;
            let m = &machines[0];
            check_levels(&machines, &levels)?;
            let mut records = Vec::new();
            for k in kernels(&kernel_specs)? {
                for level in levels_for(m, &levels) {
                    for &t in &threads {
                        let mut cfg = BenchConfig::new(m.clone(), k.clone(), level);
                        cfg.threads = t;
                        cfg.repetitions = reps;
                        cfg.min_sample = Duration::from_millis(min_sample_ms);
                        let result = run_bench(&cfg).map_err(|e| invalid(format!("{k} {level} x{t}: {e}")))?;
                        eprintln!(
                            "{k} {level} threads={t}: {:.1} GB/s best of {reps}, barrier overhead {:?}{}",
                            result.best_effective_gbs,
                            result.barrier_overhead,
                            result.pin_note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
                        );
                        records.push(result.to_record(&cfg));
                    }
                }
            }
            let csv = write_measurements(&records);
            match out {
                Some(path) => {
                    fs::write(&path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    Ok(String::new())
                }
                None => Ok(csv),
            }
        }
        Command::Compare { machines, input, format } => {
            let machines = load_machines(&machines)?;
            let (rows, _) = comparison(&machines, &input)?;
            Ok(match format {
                Format::Table => report::comparison_table(&rows),
                Format::Csv => report::comparison_csv(&rows),
            })
        }
        Command::Report { machines, input } => {
            let machines = load_machines(&machines)?;
            let (rows, records) = comparison(&machines, &input)?;
            let scaling = scaling_reports(&records, &machines).map_err(invalid)?;
            let sets = predictions(&machines, &builtin_kernels(), &[])?;
            let mut out = String::from("Predicted cycles per cache-line update\n\n");
            out.push_str(&report::cycle_table(&sets));
            out.push_str("\nL2 decomposition\n\n");
            out.push_str(&report::decomposition_table(&sets, LevelRef::Cache(2)));
            if !rows.is_empty() {
                out.push_str("Measured vs predicted\n\n");
                out.push_str(&report::comparison_table(&rows));
            }
            if !scaling.is_empty() {
                out.push_str("Thread scaling\n\n");
                out.push_str(&report::scaling_table(&scaling));
            }
            Ok(out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
