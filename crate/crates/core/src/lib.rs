//! Analytical cycle and bandwidth model for bandwidth-limited streaming
//! loop kernels.
//!
//! A [`MachineDescriptor`] parameterizes one CPU: core clock, L1 load/store
//! ports, cache levels with their link widths, the memory bus and whether the
//! hierarchy is inclusive or exclusive. For a [`KernelDescriptor`] (counts of
//! read and write streams) and the level the data lives in, [`predict`] sums
//! L1 execution cycles and every cache-line transfer the access pattern
//! causes, per set of one cache line per stream. Measurements are compared
//! against predictions in [`measurement`], and [`bench`] produces them on the
//! host.

pub mod bench;
pub mod bundled;
pub mod datapath;
pub mod kernel;
pub mod level;
pub mod machine;
pub mod measurement;
pub mod predictor;
pub mod report;

pub use datapath::{boundary_traffic, enumerate_transfers, transfer_cycles, LinkTransfer, ModelError, StreamRole};
pub use kernel::{builtin_kernels, l1_cycles, resolve_kernel, CacheLineSet, KernelDescriptor, KernelError};
pub use level::LevelRef;
pub use machine::{
    memory_cycles_per_cacheline, parse_machine, CacheLevel, DataPathPolicy, Decimal, MachineDescriptor,
    MachineError, MemoryDescriptor, PortModel,
};
pub use measurement::{
    compare, parse_measurements, scaling_report, ComparisonRow, Flag, MeasurementError, MeasurementRecord,
    ScalingReport, Source,
};
pub use predictor::{predict, predict_table, predicted_bandwidths, Bandwidths, CyclePrediction};
