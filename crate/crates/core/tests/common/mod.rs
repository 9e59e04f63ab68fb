#![allow(dead_code)]

use std::fs;

use cachecycle::{parse_machine, DataPathPolicy, KernelDescriptor, MachineDescriptor};
use proptest::prelude::*;

pub const GOLDEN_CYCLES: &str = include_str!("../../golden/cycles.csv");
pub const GOLDEN_DECOMPOSITION: &str = include_str!("../../golden/decomposition.csv");
pub const GOLDEN_COMPARISON: &str = include_str!("../../golden/comparison.csv");
pub const GOLDEN_SCALING: &str = include_str!("../../golden/scaling.csv");

/// Data rows of a golden CSV, split on commas, header dropped.
pub fn rows(csv: &str) -> Vec<Vec<&str>> {
    csv.lines().skip(1).filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect()
}

/// Set when harness checks should be skipped (noisy CI hosts).
pub fn harness_skipped() -> bool {
    std::env::var_os("CACHECYCLE_SKIP_HARNESS").is_some()
}

fn parse_size(s: &str) -> Option<u64> {
    let s = s.trim();
    let (num, mult) = match s.as_bytes().last()? {
        b'K' => (&s[..s.len() - 1], 1),
        b'M' => (&s[..s.len() - 1], 1024),
        b'G' => (&s[..s.len() - 1], 1024 * 1024),
        _ => (s, 0),
    };
    let n: u64 = num.parse().ok()?;
    Some(if mult == 0 { n / 1024 } else { n * mult })
}

/// A descriptor for the host built from sysfs cache information. Port, link
/// and memory figures are placeholders; only capacities and the clock
/// matter to the harness.
pub fn host_machine() -> Option<MachineDescriptor> {
    let mut caches: Vec<(u32, u64)> = Vec::new();
    for entry in fs::read_dir("/sys/devices/system/cpu/cpu0/cache").ok()? {
        let dir = entry.ok()?.path();
        if !dir.file_name()?.to_str()?.starts_with("index") {
            continue;
        }
        let kind = fs::read_to_string(dir.join("type")).ok()?;
        if kind.trim() == "Instruction" {
            continue;
        }
        let level: u32 = fs::read_to_string(dir.join("level")).ok()?.trim().parse().ok()?;
        let kb = parse_size(&fs::read_to_string(dir.join("size")).ok()?)?;
        caches.push((level, kb));
    }
    caches.sort();
    if caches.is_empty() {
        return None;
    }
    let mhz = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("cpu MHz"))
                .and_then(|l| l.split(':').nth(1))
                .and_then(|v| v.trim().parse::<f64>().ok())
        })
        .unwrap_or(2000.0);
    let mut text = format!(
        "name = host\nclock_ghz = {:.3}\ncache_line_bytes = 64\n\
         port.load_bytes_per_cycle = 32\nport.store_bytes_per_cycle = 16\nport.concurrent_load_store = true\n",
        mhz / 1000.0
    );
    for (i, (level, kb)) in caches.iter().enumerate() {
        let k = i + 1;
        text.push_str(&format!("level.{k}.name = L{level}\nlevel.{k}.capacity_kb = {kb}\n"));
        if k > 1 {
            text.push_str(&format!("level.{k}.link_bytes_per_cycle = 32\n"));
        }
    }
    text.push_str("memory.bytes_per_clock = 16\nmemory.clock_ghz = 1.6\npolicy = inclusive\n");
    parse_machine(&text).ok()
}

/// Machines whose links do not get faster further from the core and whose
/// memory bus is no faster than the last cache link.
pub fn arb_machine() -> impl Strategy<Value = MachineDescriptor> {
    let widths = prop::collection::vec(prop::sample::select(vec![8u32, 16, 32, 64]), 0..4);
    (
        1u32..50,                         // clock, tenths of GHz
        widths,
        prop::collection::vec(1u64..8, 4), // capacity growth factors
        prop::sample::select(vec![8u32, 16, 24, 32]),
        1u32..40,                         // memory clock, tenths of GHz
        (1u32..=8, 1u32..=8, any::<bool>()),
        any::<bool>(),
    )
        .prop_filter_map("memory faster than last link", |(clock, mut widths, growth, mem_bytes, mem_clock, ports, exclusive)| {
            widths.sort_unstable_by(|a, b| b.cmp(a));
            let mut text = format!(
                "name = rnd\nclock_ghz = {}.{}\ncache_line_bytes = 64\n\
                 port.load_bytes_per_cycle = {}\nport.store_bytes_per_cycle = {}\nport.concurrent_load_store = {}\n",
                clock / 10,
                clock % 10,
                ports.0 * 8,
                ports.1 * 8,
                ports.2
            );
            let mut capacity = 16u64;
            text.push_str(&format!("level.1.name = L1\nlevel.1.capacity_kb = {capacity}\n"));
            for (i, w) in widths.iter().enumerate() {
                capacity *= growth[i] + 1;
                let k = i + 2;
                text.push_str(&format!(
                    "level.{k}.name = L{k}\nlevel.{k}.capacity_kb = {capacity}\nlevel.{k}.link_bytes_per_cycle = {w}\n"
                ));
            }
            text.push_str(&format!(
                "memory.bytes_per_clock = {mem_bytes}\nmemory.clock_ghz = {}.{}\npolicy = {}\n",
                mem_clock / 10,
                mem_clock % 10,
                if exclusive { "exclusive_direct_load" } else { "inclusive" }
            ));
            let m = parse_machine(&text).ok()?;
            let last = m.levels.len();
            let last_link = if last > 1 { m.cycles_per_line(cachecycle::LevelRef::Cache(last)) } else { Some(0.0) };
            (cachecycle::memory_cycles_per_cacheline(&m) > last_link?).then_some(m)
        })
}

pub fn arb_kernel() -> impl Strategy<Value = KernelDescriptor> {
    (0u32..5, 0u32..4)
        .prop_filter("needs a stream", |(r, w)| r + w > 0)
        .prop_map(|(r, w)| KernelDescriptor::new("k", r, w).unwrap())
}

pub fn is_exclusive(m: &MachineDescriptor) -> bool {
    m.policy == DataPathPolicy::ExclusiveDirectLoad
}
