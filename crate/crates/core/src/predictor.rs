//! Per-level cycle predictions: L1 execution plus every transfer, summed
//! with no overlap and no latency.

use crate::datapath::{boundary_traffic, enumerate_transfers, transfer_cycles, LinkTransfer, ModelError};
use crate::kernel::{l1_cycles, KernelDescriptor};
use crate::level::LevelRef;
use crate::machine::MachineDescriptor;

#[derive(Debug, Clone, PartialEq)]
pub struct CyclePrediction {
    pub machine: String,
    pub kernel: String,
    pub level: LevelRef,
    pub l1_cycles: f64,
    pub transfers: Vec<LinkTransfer>,
    pub total_cycles: f64,
    /// Bytes the kernel itself reads and writes per cache-line set.
    pub effective_bytes: u64,
    /// Bytes crossing the links at the level the data lives in.
    pub real_bytes: u64,
}

impl CyclePrediction {
    pub fn transfer_cycles(&self) -> f64 {
        transfer_cycles(&self.transfers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidths {
    pub real_gbs: f64,
    pub effective_gbs: f64,
}

pub fn predict(
    m: &MachineDescriptor,
    kernel: &KernelDescriptor,
    target: LevelRef,
) -> Result<CyclePrediction, ModelError> {
    let transfers = enumerate_transfers(m, kernel, target)?;
    let l1 = l1_cycles(kernel, &m.port_model, m.cache_line_bytes);
    let effective_bytes = kernel.effective_bytes(m.cache_line_bytes);
    let real_bytes = if target == LevelRef::L1 {
        effective_bytes
    } else {
        boundary_traffic(&transfers, target, m.cache_line_bytes)
    };
    Ok(CyclePrediction {
        machine: m.name.clone(),
        kernel: kernel.label(),
        level: target,
        l1_cycles: l1,
        total_cycles: l1 + transfer_cycles(&transfers),
        transfers,
        effective_bytes,
        real_bytes,
    })
}

/// One row per kernel, one column per level of `m` (L1 first, memory last).
pub fn predict_table(m: &MachineDescriptor, kernels: &[KernelDescriptor]) -> Vec<Vec<CyclePrediction>> {
    let levels = m.level_refs();
    kernels
        .iter()
        .map(|k| {
            levels
                .iter()
                .map(|&l| predict(m, k, l).expect("levels come from the machine"))
                .collect()
        })
        .collect()
}

pub fn predicted_bandwidths(p: &CyclePrediction, clock_ghz: f64) -> Result<Bandwidths, ModelError> {
    bandwidths(p.real_bytes, p.effective_bytes, p.total_cycles, clock_ghz)
}

/// GB/s for byte counts moved in `cycles` at `clock_ghz`.
pub(crate) fn bandwidths(
    real_bytes: u64,
    effective_bytes: u64,
    cycles: f64,
    clock_ghz: f64,
) -> Result<Bandwidths, ModelError> {
    if cycles.is_nan() || cycles <= 0.0 {
        return Err(ModelError::ZeroCycles);
    }
    Ok(Bandwidths {
        real_gbs: real_bytes as f64 * clock_ghz / cycles,
        effective_gbs: effective_bytes as f64 * clock_ghz / cycles,
    })
}
