//! Measured results, and how they compare against predictions.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::kernel::{builtin_kernels, resolve_kernel};
use crate::level::LevelRef;
use crate::machine::MachineDescriptor;
use crate::predictor::{bandwidths, CyclePrediction};

pub const MEASUREMENT_HEADER: [&str; 5] = ["machine", "kernel", "level", "threads", "cycles_per_cl_update"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasurementError {
    #[error("bad header: expected `machine,kernel,level,threads,cycles_per_cl_update[,source]`, got `{0}`")]
    BadHeader(String),
    #[error("line {line}: unknown machine `{name}`")]
    UnknownMachine { line: usize, name: String },
    #[error("line {line}: unknown kernel `{name}`")]
    UnknownKernel { line: usize, name: String },
    #[error("line {line}: unknown level `{name}` for this machine")]
    UnknownLevel { line: usize, name: String },
    #[error("line {line}: cycles per cache-line update must be positive")]
    NonPositiveCycles { line: usize },
    #[error("line {line}: duplicate row")]
    DuplicateRow { line: usize },
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("no prediction for {0}")]
    MissingPrediction(String),
    #[error("no single-thread baseline for {0}")]
    MissingBaseline(String),
    #[error("scaling rows mix machines, kernels or levels")]
    MixedGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Harness,
    Fixture,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Harness => "harness",
            Source::Fixture => "fixture",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "harness" => Ok(Source::Harness),
            "fixture" => Ok(Source::Fixture),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub machine: String,
    pub kernel: String,
    pub level: LevelRef,
    pub threads: u32,
    /// Cycles per cache-line set (one line per stream).
    pub cycles_per_cl_update: f64,
    pub source: Source,
}

/// Parses measurement CSV. The header is
/// `machine,kernel,level,threads,cycles_per_cl_update`, optionally followed by
/// a `source` column; rows without one are treated as fixture data.
pub fn parse_measurements(
    text: &str,
    machines: &[MachineDescriptor],
) -> Result<Vec<MeasurementRecord>, MeasurementError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = reader.records();

    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(MeasurementError::BadHeader(e.to_string())),
        None => return Err(MeasurementError::BadHeader(String::new())),
    };
    let cols: Vec<&str> = header.iter().collect();
    let has_source = match cols.as_slice() {
        c if c == MEASUREMENT_HEADER => false,
        [head @ .., "source"] if head == MEASUREMENT_HEADER => true,
        _ => return Err(MeasurementError::BadHeader(cols.join(","))),
    };
    let width = if has_source { 6 } else { 5 };

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| MeasurementError::BadRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != width {
            return Err(MeasurementError::BadRow {
                line,
                reason: format!("expected {width} fields, found {}", row.len()),
            });
        }
        let machine_name = &row[0];
        let machine = machines
            .iter()
            .find(|m| m.name == machine_name)
            .ok_or_else(|| MeasurementError::UnknownMachine {
                line,
                name: machine_name.to_string(),
            })?;
        let kernel = resolve_kernel(&row[1]).map_err(|_| MeasurementError::UnknownKernel {
            line,
            name: row[1].to_string(),
        })?;
        let level = machine
            .resolve_level(&row[2])
            .ok_or_else(|| MeasurementError::UnknownLevel {
                line,
                name: row[2].to_string(),
            })?;
        let threads: u32 = row[3]
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| MeasurementError::BadRow {
                line,
                reason: format!("threads must be a positive integer, got `{}`", &row[3]),
            })?;
        let cycles: f64 = row[4].parse().map_err(|_| MeasurementError::BadRow {
            line,
            reason: format!("`{}` is not a number", &row[4]),
        })?;
        if !cycles.is_finite() || cycles <= 0.0 {
            return Err(MeasurementError::NonPositiveCycles { line });
        }
        let source = if has_source {
            row[5]
                .parse()
                .map_err(|reason| MeasurementError::BadRow { line, reason })?
        } else {
            Source::Fixture
        };
        let record = MeasurementRecord {
            machine: machine.name.clone(),
            kernel: kernel.label(),
            level,
            threads,
            cycles_per_cl_update: cycles,
            source,
        };
        let key = (
            record.machine.clone(),
            record.kernel.clone(),
            record.level,
            record.threads,
            record.source,
        );
        if !seen.insert(key) {
            return Err(MeasurementError::DuplicateRow { line });
        }
        out.push(record);
    }
    Ok(out)
}

/// Writes records with a trailing `source` column.
pub fn write_measurements(records: &[MeasurementRecord]) -> String {
    let mut out = MEASUREMENT_HEADER.join(",");
    out.push_str(",source\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{:.4},{}\n",
            r.machine, r.kernel, r.level, r.threads, r.cycles_per_cl_update, r.source
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flag {
    /// Measured faster than the model allows.
    ExceedsModel,
    /// Read-only kernel whose modeled traffic includes victim exchange; the
    /// real bandwidth is model-derived and may not match what was observed.
    VictimExchange,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::ExceedsModel => "exceeds-model",
            Flag::VictimExchange => "victim-exchange",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub machine: String,
    pub kernel: String,
    pub level: LevelRef,
    pub predicted_cycles: f64,
    pub measured_cycles: f64,
    pub efficiency_pct: f64,
    pub real_gbs: f64,
    /// `None` when it equals the real bandwidth.
    pub effective_gbs: Option<f64>,
    pub flags: Vec<Flag>,
}

fn kernel_rank(label: &str) -> (usize, String) {
    let builtin = builtin_kernels().iter().position(|k| k.name == label);
    (builtin.unwrap_or(usize::MAX), label.to_string())
}

/// Pairs every single-thread record with its prediction.
///
/// Efficiency is predicted over measured cycles; bandwidths are derived from
/// the measured cycles and the prediction's byte counts at the machine's
/// nominal clock. Multi-thread records are left to [`scaling_report`].
/// Rows come back ordered by machine (as given), level, then kernel.
pub fn compare(
    predictions: &[CyclePrediction],
    records: &[MeasurementRecord],
    machines: &[MachineDescriptor],
) -> Result<Vec<ComparisonRow>, MeasurementError> {
    let mut rows = Vec::new();
    for r in records.iter().filter(|r| r.threads == 1) {
        let key = || format!("{}/{}/{}", r.machine, r.kernel, r.level);
        let p = predictions
            .iter()
            .find(|p| p.machine == r.machine && p.kernel == r.kernel && p.level == r.level)
            .ok_or_else(|| MeasurementError::MissingPrediction(key()))?;
        let machine = machines
            .iter()
            .find(|m| m.name == r.machine)
            .ok_or_else(|| MeasurementError::MissingPrediction(key()))?;
        let bw = bandwidths(p.real_bytes, p.effective_bytes, r.cycles_per_cl_update, machine.clock())
            .map_err(|_| MeasurementError::MissingPrediction(key()))?;
        let efficiency_pct = 100.0 * p.total_cycles / r.cycles_per_cl_update;

        let mut flags = Vec::new();
        if efficiency_pct > 100.0 {
            flags.push(Flag::ExceedsModel);
        }
        let read_only = resolve_kernel(&r.kernel).is_ok_and(|k| k.write_streams == 0);
        if read_only && p.real_bytes > p.effective_bytes {
            flags.push(Flag::VictimExchange);
        }
        rows.push(ComparisonRow {
            machine: r.machine.clone(),
            kernel: r.kernel.clone(),
            level: r.level,
            predicted_cycles: p.total_cycles,
            measured_cycles: r.cycles_per_cl_update,
            efficiency_pct,
            real_gbs: bw.real_gbs,
            effective_gbs: (p.real_bytes != p.effective_bytes).then_some(bw.effective_gbs),
            flags,
        });
    }
    let machine_rank = |name: &str| machines.iter().position(|m| m.name == name);
    rows.sort_by(|a, b| {
        (machine_rank(&a.machine), a.level, kernel_rank(&a.kernel))
            .cmp(&(machine_rank(&b.machine), b.level, kernel_rank(&b.kernel)))
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub threads: u32,
    pub effective_gbs: f64,
    /// Relative to the single-thread bandwidth.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub machine: String,
    pub kernel: String,
    pub level: LevelRef,
    pub rows: Vec<ScalingRow>,
}

/// Aggregate bandwidth per thread count for one (machine, kernel, level).
pub fn scaling_report(
    records: &[MeasurementRecord],
    machine: &MachineDescriptor,
) -> Result<ScalingReport, MeasurementError> {
    let first = records.first().ok_or(MeasurementError::MixedGroup)?;
    if records
        .iter()
        .any(|r| r.machine != first.machine || r.kernel != first.kernel || r.level != first.level)
        || first.machine != machine.name
    {
        return Err(MeasurementError::MixedGroup);
    }
    let kernel = resolve_kernel(&first.kernel).map_err(|_| MeasurementError::UnknownKernel {
        line: 0,
        name: first.kernel.clone(),
    })?;
    let bytes = kernel.effective_bytes(machine.cache_line_bytes) as f64;
    let gbs = |r: &MeasurementRecord| bytes * machine.clock() / r.cycles_per_cl_update;

    let baseline = records
        .iter()
        .find(|r| r.threads == 1)
        .map(gbs)
        .ok_or_else(|| {
            MeasurementError::MissingBaseline(format!("{}/{}/{}", first.machine, first.kernel, first.level))
        })?;
    let mut rows: Vec<ScalingRow> = records
        .iter()
        .map(|r| {
            let g = gbs(r);
            ScalingRow {
                threads: r.threads,
                effective_gbs: g,
                speedup: g / baseline,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.threads);
    Ok(ScalingReport {
        machine: first.machine.clone(),
        kernel: first.kernel.clone(),
        level: first.level,
        rows,
    })
}

/// Machine position, kernel rank, level.
type GroupKey = (Option<usize>, (usize, String), LevelRef);

/// Splits records into (machine, kernel, level) groups and reports every
/// group that has more than one thread count, in machine/kernel/level order.
pub fn scaling_reports(
    records: &[MeasurementRecord],
    machines: &[MachineDescriptor],
) -> Result<Vec<ScalingReport>, MeasurementError> {
    let mut groups: BTreeMap<GroupKey, Vec<MeasurementRecord>> = BTreeMap::new();
    for r in records {
        let m = machines.iter().position(|m| m.name == r.machine);
        groups
            .entry((m, kernel_rank(&r.kernel), r.level))
            .or_default()
            .push(r.clone());
    }
    let mut out = Vec::new();
    for ((m, _, _), group) in groups {
        let distinct: HashSet<u32> = group.iter().map(|r| r.threads).collect();
        if distinct.len() < 2 {
            continue;
        }
        let machine = m.map(|i| &machines[i]).ok_or(MeasurementError::MixedGroup)?;
        out.push(scaling_report(&group, machine)?);
    }
    Ok(out)
}
