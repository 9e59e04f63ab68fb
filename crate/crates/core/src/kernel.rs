//! Streaming loop kernels and their L1-resident execution time.

use std::fmt;

use thiserror::Error;

use crate::machine::PortModel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("kernel `{0}` has no streams")]
    NoStreams(String),
    #[error("element size {element_bytes} does not divide the {cache_line_bytes}-byte cache line")]
    ElementSize {
        element_bytes: u32,
        cache_line_bytes: u32,
    },
    #[error("unknown kernel `{0}` (expected a builtin or `name:R<reads>W<writes>`)")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KernelDescriptor {
    pub name: String,
    pub read_streams: u32,
    pub write_streams: u32,
    pub element_bytes: u32,
}

impl KernelDescriptor {
    pub fn new(name: impl Into<String>, read_streams: u32, write_streams: u32) -> Result<Self, KernelError> {
        let name = name.into();
        if read_streams + write_streams == 0 {
            return Err(KernelError::NoStreams(name));
        }
        Ok(KernelDescriptor {
            name,
            read_streams,
            write_streams,
            element_bytes: 8,
        })
    }

    pub fn streams(&self) -> u32 {
        self.read_streams + self.write_streams
    }

    /// Per-cache-line-set quantities for a given line size.
    pub fn cache_line_set(&self, cache_line_bytes: u32) -> Result<CacheLineSet, KernelError> {
        if self.element_bytes == 0 || !cache_line_bytes.is_multiple_of(self.element_bytes) {
            return Err(KernelError::ElementSize {
                element_bytes: self.element_bytes,
                cache_line_bytes,
            });
        }
        Ok(CacheLineSet {
            iterations_per_set: cache_line_bytes / self.element_bytes,
            read_bytes: u64::from(self.read_streams) * u64::from(cache_line_bytes),
            write_bytes: u64::from(self.write_streams) * u64::from(cache_line_bytes),
        })
    }

    /// Bytes the application touches per cache-line set.
    pub fn effective_bytes(&self, cache_line_bytes: u32) -> u64 {
        u64::from(self.streams()) * u64::from(cache_line_bytes)
    }

    /// `true` for a builtin name, or when the descriptor came from the
    /// inline `name:R<r>W<w>` form.
    pub fn is_builtin(&self) -> bool {
        builtin_kernels().contains(self)
    }

    /// Canonical label, round-trippable through [`resolve_kernel`].
    pub fn label(&self) -> String {
        if self.is_builtin() {
            self.name.clone()
        } else {
            format!("{}:R{}W{}", self.name, self.read_streams, self.write_streams)
        }
    }
}

impl fmt::Display for KernelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// One cache line per stream: the normalization unit of every cycle count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheLineSet {
    pub iterations_per_set: u32,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

/// load, store, copy, triad, in that order.
pub fn builtin_kernels() -> Vec<KernelDescriptor> {
    [("load", 1, 0), ("store", 0, 1), ("copy", 1, 1), ("triad", 2, 1)]
        .into_iter()
        .map(|(n, r, w)| KernelDescriptor::new(n, r, w).expect("builtin kernels have streams"))
        .collect()
}

/// Looks up a builtin by name or parses an inline definition such as
/// `daxpy:R2W1`.
pub fn resolve_kernel(spec: &str) -> Result<KernelDescriptor, KernelError> {
    let spec = spec.trim();
    if let Some(k) = builtin_kernels().into_iter().find(|k| k.name == spec) {
        return Ok(k);
    }
    let unknown = || KernelError::Unknown(spec.to_string());
    let (name, counts) = spec.split_once(':').ok_or_else(unknown)?;
    if name.is_empty() || name.contains(',') {
        return Err(unknown());
    }
    let counts = counts
        .strip_prefix(['R', 'r'])
        .ok_or_else(unknown)?;
    let (reads, writes) = counts.split_once(['W', 'w']).ok_or_else(unknown)?;
    let reads: u32 = reads.parse().map_err(|_| unknown())?;
    let writes: u32 = writes.parse().map_err(|_| unknown())?;
    KernelDescriptor::new(name, reads, writes)
}

/// Cycles to execute one cache-line set with all data in L1.
///
/// Arithmetic is assumed hidden behind the load/store instructions, so only
/// port throughput counts.
pub fn l1_cycles(kernel: &KernelDescriptor, ports: &PortModel, cache_line_bytes: u32) -> f64 {
    let line = f64::from(cache_line_bytes);
    let load = f64::from(kernel.read_streams) * line / f64::from(ports.load_bytes_per_cycle);
    let store = f64::from(kernel.write_streams) * line / f64::from(ports.store_bytes_per_cycle);
    if ports.concurrent_load_store {
        load.max(store)
    } else {
        load + store
    }
}
