//! Machine files and reference data shipped with the crate.

use crate::machine::{parse_machine, MachineDescriptor};

pub const MACHINE_NAMES: [&str; 3] = ["core2", "nehalem", "shanghai"];

pub const CORE2: &str = include_str!("../../../machines/core2.mc");
pub const NEHALEM: &str = include_str!("../../../machines/nehalem.mc");
pub const SHANGHAI: &str = include_str!("../../../machines/shanghai.mc");

/// Measured cycles per cache-line update for all three machines, single thread.
pub const SINGLE_THREAD_MEASUREMENTS: &str = include_str!("../../../fixtures/single_thread.csv");
/// Threaded stream triad results, stored as cycles per cache-line update.
pub const THREADED_MEASUREMENTS: &str = include_str!("../../../fixtures/threaded.csv");

pub fn machine_text(name: &str) -> Option<&'static str> {
    match name {
        "core2" => Some(CORE2),
        "nehalem" => Some(NEHALEM),
        "shanghai" => Some(SHANGHAI),
        _ => None,
    }
}

pub fn machine(name: &str) -> Option<MachineDescriptor> {
    machine_text(name).map(|t| parse_machine(t).expect("bundled machine file is valid"))
}

pub fn machines() -> Vec<MachineDescriptor> {
    MACHINE_NAMES.iter().filter_map(|n| machine(n)).collect()
}
