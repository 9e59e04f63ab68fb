//! Text and CSV rendering. Cycle counts are rounded to integers and GB/s to
//! one decimal only here; everything upstream stays fractional.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::level::LevelRef;
use crate::machine::MachineDescriptor;
use crate::measurement::{ComparisonRow, ScalingReport};
use crate::predictor::{predicted_bandwidths, CyclePrediction};

/// Predictions for one machine, as produced by [`crate::predict_table`]
/// (flattened or not).
pub struct MachinePredictions<'a> {
    pub machine: &'a MachineDescriptor,
    pub predictions: Vec<CyclePrediction>,
}

/// Right-aligns every column except the first, which is left-aligned.
fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn level_heading(level: LevelRef) -> String {
    match level {
        LevelRef::Memory => "Memory".into(),
        l => l.to_string(),
    }
}

fn kernel_order(sets: &[MachinePredictions<'_>]) -> Vec<String> {
    let mut kernels: Vec<String> = Vec::new();
    for p in sets.iter().flat_map(|s| &s.predictions) {
        if !kernels.contains(&p.kernel) {
            kernels.push(p.kernel.clone());
        }
    }
    kernels
}

/// `machine,kernel,level,l1_cycles,transfer_cycles,total_cycles,real_gbs,effective_gbs`
pub fn predictions_csv(sets: &[MachinePredictions<'_>]) -> String {
    let mut out = String::from("machine,kernel,level,l1_cycles,transfer_cycles,total_cycles,real_gbs,effective_gbs\n");
    for set in sets {
        for p in &set.predictions {
            let bw = predicted_bandwidths(p, set.machine.clock()).expect("predictions have positive cycles");
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{:.3},{:.3},{:.2},{:.2}",
                p.machine,
                p.kernel,
                p.level,
                p.l1_cycles,
                p.transfer_cycles(),
                p.total_cycles,
                bw.real_gbs,
                bw.effective_gbs
            );
        }
    }
    out
}

/// Per-transfer rows: `machine,kernel,level,from,to,role,cache_lines,cycles`.
pub fn breakdown_csv(sets: &[MachinePredictions<'_>]) -> String {
    let mut out = String::from("machine,kernel,level,from,to,role,cache_lines,cycles\n");
    for p in sets.iter().flat_map(|s| &s.predictions) {
        for t in &p.transfers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3}",
                p.machine, p.kernel, p.level, t.from, t.to, t.role, t.cache_lines, t.cycles
            );
        }
    }
    out
}

/// Cycle table: kernels down, levels across with one sub-column per machine.
/// Cells are total cycles rounded to the nearest integer.
pub fn cycle_table(sets: &[MachinePredictions<'_>]) -> String {
    let levels: BTreeSet<LevelRef> = sets.iter().flat_map(|s| s.predictions.iter().map(|p| p.level)).collect();
    let mut columns: Vec<(LevelRef, usize)> = Vec::new();
    for &level in &levels {
        for (i, s) in sets.iter().enumerate() {
            if s.predictions.iter().any(|p| p.level == level) {
                columns.push((level, i));
            }
        }
    }
    let mut top = vec![String::new()];
    let mut second = vec![String::new()];
    let mut last_level = None;
    for &(level, i) in &columns {
        top.push(if last_level == Some(level) { String::new() } else { level_heading(level) });
        last_level = Some(level);
        second.push(sets[i].machine.name.clone());
    }
    let mut rows = vec![top, second];
    for kernel in kernel_order(sets) {
        let mut row = vec![kernel.clone()];
        for &(level, i) in &columns {
            let cell = sets[i]
                .predictions
                .iter()
                .find(|p| p.kernel == kernel && p.level == level)
                .map_or_else(|| "-".to_string(), |p| format!("{:.0}", p.total_cycles.round()));
            row.push(cell);
        }
        rows.push(row);
    }
    align(&rows)
}

/// Per-prediction transfer listing.
pub fn breakdown_text(sets: &[MachinePredictions<'_>]) -> String {
    let mut out = String::new();
    for set in sets {
        for p in &set.predictions {
            let _ = writeln!(out, "{} {} {}", p.machine, p.kernel, level_heading(p.level));
            let mut rows: Vec<Vec<String>> = p
                .transfers
                .iter()
                .map(|t| {
                    vec![
                        format!("  {} -> {}", set.machine.level_name(t.from), set.machine.level_name(t.to)),
                        t.role.to_string(),
                        format!("{} CL", t.cache_lines),
                        format!("{:.2} cy", t.cycles),
                    ]
                })
                .collect();
            rows.push(vec!["  L1 execution".into(), String::new(), String::new(), format!("{:.2} cy", p.l1_cycles)]);
            rows.push(vec!["  total".into(), String::new(), String::new(), format!("{:.2} cy", p.total_cycles)]);
            out.push_str(&align(&rows));
        }
    }
    out
}

/// Split of the time for data in `level` into L1 execution and transfers,
/// one block per machine, kernels across.
pub fn decomposition_table(sets: &[MachinePredictions<'_>], level: LevelRef) -> String {
    let mut out = String::new();
    for set in sets {
        let preds: Vec<&CyclePrediction> = set.predictions.iter().filter(|p| p.level == level).collect();
        if preds.is_empty() {
            continue;
        }
        let name = set.machine.level_name(level);
        let mut rows = vec![std::iter::once(set.machine.name.clone())
            .chain(preds.iter().map(|p| p.kernel.clone()))
            .collect::<Vec<_>>()];
        let fmt = |v: f64| format!("{v:.0}");
        rows.push(
            std::iter::once("L1 part".to_string())
                .chain(preds.iter().map(|p| fmt(p.l1_cycles)))
                .collect(),
        );
        rows.push(
            std::iter::once(format!("{name} part"))
                .chain(preds.iter().map(|p| fmt(p.transfer_cycles())))
                .collect(),
        );
        rows.push(
            std::iter::once(format!("L1+{name}"))
                .chain(preds.iter().map(|p| fmt(p.total_cycles)))
                .collect(),
        );
        out.push_str(&align(&rows));
        out.push('\n');
    }
    out
}

fn opt_gbs(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |g| format!("{g:.1}"))
}

fn flags_text(row: &ComparisonRow) -> String {
    row.flags.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

/// `machine,kernel,level,predicted,measured,efficiency_pct,real_gbs,effective_gbs,flags`
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("machine,kernel,level,predicted,measured,efficiency_pct,real_gbs,effective_gbs,flags\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{},{:.1},{:.1},{},{}",
            r.machine,
            r.kernel,
            r.level,
            r.predicted_cycles,
            r.measured_cycles,
            r.efficiency_pct,
            r.real_gbs,
            opt_gbs(r.effective_gbs),
            flags_text(r)
        );
    }
    out
}

/// One block per machine: levels and kernels across; efficiency, measured
/// cycles, real and effective GB/s down. Flagged cells are listed beneath.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut machines: Vec<&str> = Vec::new();
    for r in rows {
        if !machines.contains(&r.machine.as_str()) {
            machines.push(&r.machine);
        }
    }
    let mut out = String::new();
    for machine in machines {
        let block: Vec<&ComparisonRow> = rows.iter().filter(|r| r.machine == machine).collect();
        let mut level_row = vec![String::new()];
        let mut kernel_row = vec![String::new()];
        let mut last = None;
        for r in &block {
            level_row.push(if last == Some(r.level) { String::new() } else { level_heading(r.level) });
            last = Some(r.level);
            kernel_row.push(r.kernel.clone());
        }
        let line = |label: String, f: &dyn Fn(&ComparisonRow) -> String| {
            std::iter::once(label).chain(block.iter().map(|r| f(r))).collect::<Vec<_>>()
        };
        let table = vec![
            level_row,
            kernel_row,
            line(format!("{machine} [%]"), &|r| format!("{:.1}", r.efficiency_pct)),
            line("CL update".into(), &|r| format!("{:.2}", r.measured_cycles)),
            line("GB/s".into(), &|r| format!("{:.1}", r.real_gbs)),
            line("eff. GB/s".into(), &|r| opt_gbs(r.effective_gbs)),
        ];
        out.push_str(&align(&table));
        for r in block.iter().filter(|r| !r.flags.is_empty()) {
            let _ = writeln!(out, "  {} {}: {}", r.kernel, level_heading(r.level), flags_text(r));
        }
        out.push('\n');
    }
    out
}

/// Thread counts down, levels across, one block per (machine, kernel); cells
/// are aggregate effective GB/s with the speedup over one thread.
pub fn scaling_table(reports: &[ScalingReport]) -> String {
    let mut groups: Vec<(&str, &str)> = Vec::new();
    for r in reports {
        if !groups.contains(&(r.machine.as_str(), r.kernel.as_str())) {
            groups.push((&r.machine, &r.kernel));
        }
    }
    let mut out = String::new();
    for (machine, kernel) in groups {
        let block: Vec<&ScalingReport> = reports.iter().filter(|r| r.machine == machine && r.kernel == kernel).collect();
        let threads: BTreeSet<u32> = block.iter().flat_map(|r| r.rows.iter().map(|x| x.threads)).collect();
        let mut rows = vec![std::iter::once(format!("{machine} {kernel} [GB/s]"))
            .chain(block.iter().map(|r| level_heading(r.level)))
            .collect::<Vec<_>>()];
        for t in threads {
            let mut row = vec![format!("{t} threads")];
            for r in &block {
                row.push(
                    r.rows
                        .iter()
                        .find(|x| x.threads == t)
                        .map_or_else(|| "-".into(), |x| format!("{:.1} (x{:.2})", x.effective_gbs, x.speedup)),
                );
            }
            rows.push(row);
        }
        out.push_str(&align(&rows));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::kernel::builtin_kernels;
    use crate::predictor::predict_table;

    fn sets(machines: &[MachineDescriptor]) -> Vec<MachinePredictions<'_>> {
        machines
            .iter()
            .map(|m| MachinePredictions {
                machine: m,
                predictions: predict_table(m, &builtin_kernels()).into_iter().flatten().collect(),
            })
            .collect()
    }

    #[test]
    fn shanghai_cycle_table() {
        let m = vec![bundled::machine("shanghai").unwrap()];
        let text = cycle_table(&sets(&m));
        let expected = "\
       L1        L2        L3    Memory
 shanghai  shanghai  shanghai  shanghai
load      2         6         8        18
store     4         8        10        32
copy      6        14        18        50
triad     8        20        26        68
";
        let normalize = |s: &str| s.lines().map(|l| l.split_whitespace().collect::<Vec<_>>().join(" ")).collect::<Vec<_>>();
        assert_eq!(normalize(&text), normalize(expected));
    }

    #[test]
    fn three_machine_table_skips_missing_levels() {
        let ms = bundled::machines();
        let text = cycle_table(&sets(&ms));
        let header: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(header.iter().filter(|h| **h == "core2").count(), 3);
        assert_eq!(header.len(), 3 + 3 + 2 + 3);
    }

    #[test]
    fn csv_has_one_row_per_prediction() {
        let ms = bundled::machines();
        let s = sets(&ms);
        let csv = predictions_csv(&s);
        assert_eq!(csv.lines().count(), 1 + 4 * (3 + 4 + 4));
        assert!(csv.contains("nehalem,triad,L3,8.000,16.000,24.000,"));
    }

    #[test]
    fn decomposition_for_l2() {
        let m = vec![bundled::machine("core2").unwrap()];
        let text = decomposition_table(&sets(&m), LevelRef::Cache(2));
        let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
        assert_eq!(lines[1], ["L1", "part", "4", "4", "4", "8"]);
        assert_eq!(lines[2], ["L2", "part", "2", "4", "6", "8"]);
        assert_eq!(lines[3], ["L1+L2", "6", "8", "10", "16"]);
    }
}
