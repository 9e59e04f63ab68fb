//! Cache-line transfers caused by streaming data from a given level.

use std::fmt;

use thiserror::Error;

use crate::kernel::KernelDescriptor;
use crate::level::LevelRef;
use crate::machine::{DataPathPolicy, MachineDescriptor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("level {0} does not exist on this machine")]
    UnknownLevel(LevelRef),
    #[error("prediction has zero cycles")]
    ZeroCycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Read,
    Write,
}

impl fmt::Display for StreamRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StreamRole::Read => "read",
            StreamRole::Write => "write",
        })
    }
}

/// Cache lines moving across one hierarchy boundary for one cache-line set.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTransfer {
    pub from: LevelRef,
    pub to: LevelRef,
    pub cache_lines: u32,
    pub cycles: f64,
    pub role: StreamRole,
}

impl LinkTransfer {
    /// The outer end of the link; its width prices the transfer.
    pub fn boundary(&self) -> LevelRef {
        self.from.max(self.to)
    }

    pub fn touches(&self, level: LevelRef) -> bool {
        self.from == level || self.to == level
    }
}

fn transfer(
    m: &MachineDescriptor,
    from: LevelRef,
    to: LevelRef,
    cache_lines: u32,
    role: StreamRole,
) -> LinkTransfer {
    let per_line = m
        .cycles_per_line(from.max(to))
        .expect("validated machines have a width for every boundary beyond L1");
    LinkTransfer {
        from,
        to,
        cache_lines,
        cycles: f64::from(cache_lines) * per_line,
        role,
    }
}

/// Lists the transfers one cache-line set of `kernel` causes when its data
/// resides in `target`, deepest boundary first.
///
/// Inclusive hierarchies move a read line across every boundary between
/// `target` and L1, and a written line twice (write-allocate fill plus the
/// later eviction). Exclusive direct-load hierarchies fill L1 straight from
/// `target` and push one victim across each boundary down to `target`; with
/// data in memory only written lines are written back, clean read victims
/// are dropped at the last cache.
pub fn enumerate_transfers(
    m: &MachineDescriptor,
    kernel: &KernelDescriptor,
    target: LevelRef,
) -> Result<Vec<LinkTransfer>, ModelError> {
    if !m.contains(target) {
        return Err(ModelError::UnknownLevel(target));
    }
    let caches = m.cache_count();
    let depth = target.depth(caches);
    let at = |d: usize| {
        if d > caches {
            LevelRef::Memory
        } else {
            LevelRef::Cache(d)
        }
    };

    let mut out = Vec::new();
    let roles = [
        (StreamRole::Read, kernel.read_streams),
        (StreamRole::Write, kernel.write_streams),
    ];
    for (role, lines) in roles {
        if lines == 0 || depth == 1 {
            continue;
        }
        match m.policy {
            DataPathPolicy::InclusiveHierarchical => {
                for d in (2..=depth).rev() {
                    out.push(transfer(m, at(d), at(d - 1), lines, role));
                }
                if role == StreamRole::Write {
                    for d in 2..=depth {
                        out.push(transfer(m, at(d - 1), at(d), lines, role));
                    }
                }
            }
            DataPathPolicy::ExclusiveDirectLoad => {
                out.push(transfer(m, target, LevelRef::L1, lines, role));
                let cascade_end = depth.min(caches);
                for i in 1..cascade_end {
                    out.push(transfer(m, at(i), at(i + 1), lines, role));
                }
                if target.is_memory() && role == StreamRole::Write {
                    out.push(transfer(m, at(caches), LevelRef::Memory, lines, role));
                }
            }
        }
    }
    out.sort_by_key(|t| std::cmp::Reverse(t.boundary()));
    Ok(out)
}

pub fn transfer_cycles(transfers: &[LinkTransfer]) -> f64 {
    transfers.iter().map(|t| t.cycles).sum()
}

/// Bytes moved over links that end at `level`.
pub fn boundary_traffic(transfers: &[LinkTransfer], level: LevelRef, cache_line_bytes: u32) -> u64 {
    transfers
        .iter()
        .filter(|t| t.touches(level))
        .map(|t| u64::from(t.cache_lines) * u64::from(cache_line_bytes))
        .sum()
}
