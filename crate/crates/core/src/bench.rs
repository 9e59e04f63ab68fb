//! Streaming-kernel microbenchmark.
//!
//! Each worker thread owns private `f64` arrays sized to sit in one level of
//! the hierarchy, runs the kernel over them between a start and a stop
//! barrier, and reports wall-clock time. Aggregate bandwidth is total bytes
//! over the slowest thread's time; the best repetition wins.

use std::hint::black_box;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::kernel::KernelDescriptor;
use crate::level::LevelRef;
use crate::machine::MachineDescriptor;
use crate::measurement::{MeasurementRecord, Source};

/// Scalar used by store (fill value) and triad-like kernels.
pub const ALPHA: f64 = 3.0;
pub const PIN_ENV: &str = "CACHECYCLE_PIN";

const ELEMENT_BYTES: u32 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("no working set fits {level}: half its capacity ({half} B) is below 4x the next-closer level ({lower} B)")]
    Infeasible { level: LevelRef, half: u64, lower: u64 },
    #[error("level {0} does not exist on this machine")]
    UnknownLevel(LevelRef),
    #[error("could not allocate {0} bytes")]
    AllocationFailure(u64),
    #[error("timer resolution {0:?} is too coarse for {1:?} samples")]
    TimerTooCoarse(Duration, Duration),
    #[error("checksum mismatch: expected {expected}, got {actual}")]
    ChecksumMismatch { expected: f64, actual: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Per-stream array size in bytes for data resident in `target`.
///
/// All streams together take half of the target's capacity and at least four
/// times the next-closer level's; memory gets four times the last cache.
/// Sizes are whole cache lines.
pub fn size_for_level(
    m: &MachineDescriptor,
    target: LevelRef,
    kernel: &KernelDescriptor,
) -> Result<u64, BenchError> {
    if !m.contains(target) {
        return Err(BenchError::UnknownLevel(target));
    }
    let total = match target {
        LevelRef::Memory => 4 * m.levels.last().map_or(0, |c| c.capacity_bytes),
        LevelRef::Cache(k) => {
            let half = m.levels[k - 1].capacity_bytes / 2;
            if k > 1 {
                let lower = 4 * m.levels[k - 2].capacity_bytes;
                if half < lower {
                    return Err(BenchError::Infeasible { level: target, half, lower });
                }
            }
            half
        }
    };
    let line = u64::from(m.cache_line_bytes);
    Ok(total / u64::from(kernel.streams()) / line * line)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub machine: MachineDescriptor,
    pub kernel: KernelDescriptor,
    pub target: LevelRef,
    pub threads: usize,
    pub repetitions: usize,
    /// Minimum duration of one timed sample; sets the inner iteration count.
    pub min_sample: Duration,
    /// Fixed inner iteration count, skipping calibration.
    pub inner_iterations: Option<u64>,
    /// Overrides [`size_for_level`].
    pub working_set_bytes: Option<u64>,
    pub pin: bool,
}

impl BenchConfig {
    /// Defaults: one thread, ten repetitions, 20 ms samples, pinning unless
    /// `CACHECYCLE_PIN=off`.
    pub fn new(machine: MachineDescriptor, kernel: KernelDescriptor, target: LevelRef) -> Self {
        let pin = !std::env::var(PIN_ENV).is_ok_and(|v| v.eq_ignore_ascii_case("off"));
        BenchConfig {
            machine,
            kernel,
            target,
            threads: 1,
            repetitions: 10,
            min_sample: Duration::from_millis(20),
            inner_iterations: None,
            working_set_bytes: None,
            pin,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub best_effective_gbs: f64,
    pub cycles_per_cl_update: f64,
    /// Aggregate effective GB/s of every repetition.
    pub samples_gbs: Vec<f64>,
    pub elements_per_stream: usize,
    pub inner_iterations: u64,
    pub pinned: bool,
    /// Why pinning did not happen, if it did not.
    pub pin_note: Option<String>,
    /// Longest time any thread waited at the stop barrier.
    pub barrier_overhead: Duration,
}

impl BenchResult {
    pub fn to_record(&self, cfg: &BenchConfig) -> MeasurementRecord {
        MeasurementRecord {
            machine: cfg.machine.name.clone(),
            kernel: cfg.kernel.label(),
            level: cfg.target,
            threads: cfg.threads as u32,
            cycles_per_cl_update: self.cycles_per_cl_update,
            source: Source::Harness,
        }
    }
}

struct Arrays {
    reads: Vec<Vec<f64>>,
    writes: Vec<Vec<f64>>,
}

fn alloc(n: usize, value: f64) -> Result<Vec<f64>, BenchError> {
    let mut v = Vec::new();
    v.try_reserve_exact(n)
        .map_err(|_| BenchError::AllocationFailure((n as u64).saturating_mul(8)))?;
    v.resize(n, value);
    Ok(v)
}

impl Arrays {
    fn new(kernel: &KernelDescriptor, n: usize) -> Result<Self, BenchError> {
        let reads = (0..kernel.read_streams)
            .map(|j| alloc(n, f64::from(j + 1)))
            .collect::<Result<_, _>>()?;
        let writes = (0..kernel.write_streams)
            .map(|_| alloc(n, 0.0))
            .collect::<Result<_, _>>()?;
        Ok(Arrays { reads, writes })
    }

    /// Value every write stream holds after one pass.
    fn written_value(&self) -> f64 {
        match self.reads.len() {
            0 => ALPHA,
            _ => 1.0 + ALPHA * (2..=self.reads.len()).map(|j| j as f64).sum::<f64>(),
        }
    }

    /// One pass over all streams. Returns the sum of all read elements for
    /// read-only kernels, zero otherwise.
    fn pass(&mut self) -> f64 {
        let Arrays { reads, writes } = self;
        match (reads.len(), writes.len()) {
            (_, 0) => reads.iter().map(|r| sum(r)).sum(),
            (0, _) => {
                for w in writes.iter_mut() {
                    for x in w.iter_mut() {
                        *x = ALPHA;
                    }
                }
                0.0
            }
            (1, 1) => {
                for (w, r) in writes[0].iter_mut().zip(&reads[0]) {
                    *w = *r;
                }
                0.0
            }
            (2, 1) => {
                for ((w, b), c) in writes[0].iter_mut().zip(&reads[0]).zip(&reads[1]) {
                    *w = b + ALPHA * c;
                }
                0.0
            }
            _ => {
                for w in writes.iter_mut() {
                    for (i, x) in w.iter_mut().enumerate() {
                        let rest: f64 = reads[1..].iter().map(|r| r[i]).sum();
                        *x = reads[0][i] + ALPHA * rest;
                    }
                }
                0.0
            }
        }
    }

    fn checksum(&self) -> f64 {
        self.writes.iter().map(|w| sum(w)).sum()
    }
}

/// Sum with independent partial accumulators so the loop is throughput-bound
/// instead of add-latency-bound.
fn sum(v: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = v.chunks_exact(8);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn run_passes(arrays: &mut Arrays, passes: u64) -> f64 {
    let mut total = 0.0;
    for _ in 0..passes {
        total += arrays.pass();
        black_box(&mut *arrays);
    }
    total
}

/// Smallest observable step of the monotonic clock.
fn timer_resolution() -> Duration {
    (0..16)
        .map(|_| {
            let t0 = Instant::now();
            loop {
                let d = t0.elapsed();
                if !d.is_zero() {
                    break d;
                }
            }
        })
        .min()
        .unwrap_or_default()
}

fn calibrate(kernel: &KernelDescriptor, n: usize, min_sample: Duration) -> Result<u64, BenchError> {
    let mut arrays = Arrays::new(kernel, n)?;
    run_passes(&mut arrays, 1);
    let mut passes = 1u64;
    loop {
        let t0 = Instant::now();
        run_passes(&mut arrays, passes);
        let took = t0.elapsed();
        if took >= min_sample || passes >= 1 << 40 {
            return Ok(passes);
        }
        let scale = if took.is_zero() {
            16.0
        } else {
            (min_sample.as_secs_f64() / took.as_secs_f64() * 1.2).clamp(1.5, 16.0)
        };
        passes = ((passes as f64) * scale).ceil() as u64;
    }
}

fn allowed_cpus() -> Option<Vec<usize>> {
    #[cfg(target_os = "linux")]
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return None;
        }
        Some(
            (0..libc::CPU_SETSIZE as usize)
                .filter(|&c| libc::CPU_ISSET(c, &set))
                .collect(),
        )
    }
    #[cfg(not(target_os = "linux"))]
    None
}

/// Pins the calling thread to `cpu`.
fn pin_current_thread(cpu: usize) -> Result<(), String> {
    #[cfg(target_os = "linux")]
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(format!("sched_setaffinity(cpu {cpu}) failed: {}", std::io::Error::last_os_error()));
        }
        Ok(())
    }
    #[cfg(not(target_os = "linux"))]
    {
        let _ = cpu;
        Err("thread pinning is not supported on this platform".into())
    }
}

struct WorkerOutcome {
    elapsed: Vec<Duration>,
    barrier_wait: Duration,
    pin_error: Option<String>,
    checksum: Result<(), BenchError>,
}

#[allow(clippy::too_many_arguments)]
fn worker(
    cpu: Option<usize>,
    kernel: &KernelDescriptor,
    n: usize,
    passes: u64,
    repetitions: usize,
    ready: &Barrier,
    failed: &AtomicBool,
    start: &Barrier,
    stop: &Barrier,
) -> Result<Option<WorkerOutcome>, BenchError> {
    let pin_error = cpu.and_then(|c| pin_current_thread(c).err());
    // allocate after pinning so first-touch places pages near the core
    let arrays = Arrays::new(kernel, n);
    if arrays.is_err() {
        failed.store(true, Ordering::SeqCst);
    }
    ready.wait();
    let mut arrays = arrays?;
    if failed.load(Ordering::SeqCst) {
        return Ok(None);
    }
    run_passes(&mut arrays, 1);

    let mut elapsed = Vec::with_capacity(repetitions);
    let mut barrier_wait = Duration::ZERO;
    let mut read_sum = 0.0;
    for _ in 0..repetitions {
        start.wait();
        let t0 = Instant::now();
        read_sum += run_passes(&mut arrays, passes);
        let done = Instant::now();
        elapsed.push(done - t0);
        stop.wait();
        barrier_wait = barrier_wait.max(done.elapsed());
    }

    let checksum = if kernel.write_streams == 0 {
        // reads of stream j hold j + 1
        let r = u64::from(kernel.read_streams);
        let expected = (n as u64 * r * (r + 1) / 2) as f64 * (passes * repetitions as u64) as f64;
        if read_sum == expected {
            Ok(())
        } else {
            Err(BenchError::ChecksumMismatch { expected, actual: read_sum })
        }
    } else {
        let expected = arrays.written_value() * (n * arrays.writes.len()) as f64;
        let actual = arrays.checksum();
        if actual == expected {
            Ok(())
        } else {
            Err(BenchError::ChecksumMismatch { expected, actual })
        }
    };
    Ok(Some(WorkerOutcome {
        elapsed,
        barrier_wait,
        pin_error,
        checksum,
    }))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    if cfg.threads == 0 {
        return Err(BenchError::InvalidConfig("threads must be at least 1".into()));
    }
    if cfg.repetitions < 3 {
        return Err(BenchError::InvalidConfig("at least 3 repetitions are required".into()));
    }
    if cfg.kernel.element_bytes != ELEMENT_BYTES {
        return Err(BenchError::InvalidConfig("the harness runs 8-byte elements only".into()));
    }
    let bytes_per_stream = match cfg.working_set_bytes {
        Some(b) => b,
        None => size_for_level(&cfg.machine, cfg.target, &cfg.kernel)?,
    };
    let n = (bytes_per_stream / u64::from(ELEMENT_BYTES)) as usize;
    if n == 0 {
        return Err(BenchError::InvalidConfig("working set is smaller than one element".into()));
    }

    let resolution = timer_resolution();
    if resolution * 100 > cfg.min_sample {
        return Err(BenchError::TimerTooCoarse(resolution, cfg.min_sample));
    }
    let passes = match cfg.inner_iterations {
        Some(p) if p > 0 => p,
        Some(_) => return Err(BenchError::InvalidConfig("inner iterations must be positive".into())),
        None => calibrate(&cfg.kernel, n, cfg.min_sample)?,
    };

    let mut pin_note = None;
    let cpus: Vec<Option<usize>> = if !cfg.pin {
        pin_note = Some(format!("pinning disabled by {PIN_ENV}=off"));
        vec![None; cfg.threads]
    } else {
        match allowed_cpus() {
            Some(cpus) if cpus.len() >= cfg.threads => cpus.into_iter().take(cfg.threads).map(Some).collect(),
            Some(cpus) => {
                pin_note = Some(format!("{} threads but only {} CPUs available; running unpinned", cfg.threads, cpus.len()));
                vec![None; cfg.threads]
            }
            None => {
                pin_note = Some("CPU affinity is not available; running unpinned".into());
                vec![None; cfg.threads]
            }
        }
    };

    let ready = Barrier::new(cfg.threads);
    let failed = AtomicBool::new(false);
    let start = Barrier::new(cfg.threads);
    let stop = Barrier::new(cfg.threads);
    let outcomes: Vec<Result<Option<WorkerOutcome>, BenchError>> = std::thread::scope(|s| {
        let handles: Vec<_> = cpus
            .iter()
            .map(|&cpu| {
                let (kernel, ready, failed, start, stop) = (&cfg.kernel, &ready, &failed, &start, &stop);
                s.spawn(move || worker(cpu, kernel, n, passes, cfg.repetitions, ready, failed, start, stop))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("benchmark worker panicked"))
            .collect()
    });
    // workers that saw another thread fail to allocate return `None`
    let outcomes: Vec<WorkerOutcome> = outcomes
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    for o in &outcomes {
        o.checksum.clone()?;
    }
    if let Some(err) = outcomes.iter().find_map(|o| o.pin_error.clone()) {
        pin_note = Some(format!("{err}; running unpinned"));
    }

    let bytes_per_rep = (cfg.threads as u64 * u64::from(cfg.kernel.streams()) * n as u64 * u64::from(ELEMENT_BYTES)) as f64
        * passes as f64;
    let samples_gbs: Vec<f64> = (0..cfg.repetitions)
        .map(|r| {
            let slowest = outcomes.iter().map(|o| o.elapsed[r]).max().unwrap_or_default();
            bytes_per_rep / slowest.as_secs_f64().max(f64::MIN_POSITIVE) / 1e9
        })
        .collect();
    let best = samples_gbs.iter().copied().fold(0.0, f64::max);
    let effective_bytes = cfg.kernel.effective_bytes(cfg.machine.cache_line_bytes) as f64;

    Ok(BenchResult {
        best_effective_gbs: best,
        cycles_per_cl_update: effective_bytes * cfg.machine.clock() / best,
        samples_gbs,
        elements_per_stream: n,
        inner_iterations: passes,
        pinned: pin_note.is_none(),
        pin_note,
        barrier_overhead: outcomes.iter().map(|o| o.barrier_wait).max().unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::kernel::resolve_kernel;

    fn kernel(name: &str) -> KernelDescriptor {
        resolve_kernel(name).unwrap()
    }

    #[test]
    fn sizes_follow_the_half_capacity_rule() {
        let shanghai = bundled::machine("shanghai").unwrap();
        let per_stream = size_for_level(&shanghai, LevelRef::Cache(2), &kernel("load")).unwrap();
        assert_eq!(per_stream, 256 * 1024);

        let nehalem = bundled::machine("nehalem").unwrap();
        let per_stream = size_for_level(&nehalem, LevelRef::Cache(3), &kernel("triad")).unwrap();
        let total = 4 * 1024 * 1024;
        assert_eq!(per_stream, total / 3 / 64 * 64);

        let l1 = size_for_level(&nehalem, LevelRef::L1, &kernel("copy")).unwrap();
        assert_eq!(l1, 8 * 1024);

        let mem = size_for_level(&nehalem, LevelRef::Memory, &kernel("load")).unwrap();
        assert_eq!(mem, 32 * 1024 * 1024);
    }

    #[test]
    fn infeasible_level_is_reported() {
        let mut m = bundled::machine("nehalem").unwrap();
        m.levels[1].capacity_bytes = 128 * 1024;
        assert!(matches!(
            size_for_level(&m, LevelRef::Cache(2), &kernel("load")),
            Err(BenchError::Infeasible { half: 65536, lower: 131072, .. })
        ));
    }

    #[test]
    fn store_fills_alpha() {
        let mut a = Arrays::new(&kernel("store"), 1000).unwrap();
        a.pass();
        assert_eq!(a.checksum(), 1000.0 * ALPHA);
    }

    #[test]
    fn written_values() {
        let mut triad = Arrays::new(&kernel("triad"), 17).unwrap();
        triad.pass();
        assert_eq!(triad.written_value(), 1.0 + ALPHA * 2.0);
        assert!(triad.writes[0].iter().all(|&x| x == 7.0));

        let mut custom = Arrays::new(&kernel("k:R3W2"), 9).unwrap();
        custom.pass();
        assert_eq!(custom.written_value(), 1.0 + ALPHA * 5.0);
        assert!(custom.writes.iter().flatten().all(|&x| x == 16.0));

        let mut load = Arrays::new(&kernel("load"), 21).unwrap();
        assert_eq!(load.pass(), 21.0);
    }

    fn quick(kernel_name: &str, threads: usize) -> BenchConfig {
        let m = bundled::machine("nehalem").unwrap();
        let mut cfg = BenchConfig::new(m, kernel(kernel_name), LevelRef::L1);
        cfg.threads = threads;
        cfg.repetitions = 3;
        cfg.inner_iterations = Some(50);
        cfg
    }

    #[test]
    fn runs_every_builtin() {
        for k in crate::kernel::builtin_kernels() {
            let cfg = quick(&k.name, 1);
            let r = run_bench(&cfg).unwrap();
            assert_eq!(r.samples_gbs.len(), 3);
            assert!(r.best_effective_gbs > 0.0);
            assert_eq!(r.best_effective_gbs, r.samples_gbs.iter().copied().fold(0.0, f64::max));
            assert!(r.cycles_per_cl_update > 0.0);
            let rec = r.to_record(&cfg);
            assert_eq!(rec.source, Source::Harness);
            assert_eq!(rec.kernel, k.name);
        }
    }

    #[test]
    fn two_threads() {
        let r = run_bench(&quick("triad", 2)).unwrap();
        assert!(r.best_effective_gbs > 0.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = quick("load", 1);
        cfg.repetitions = 2;
        assert!(matches!(run_bench(&cfg), Err(BenchError::InvalidConfig(_))));
        let mut cfg = quick("load", 0);
        cfg.threads = 0;
        assert!(matches!(run_bench(&cfg), Err(BenchError::InvalidConfig(_))));
        let mut cfg = quick("load", 1);
        cfg.min_sample = Duration::from_nanos(1);
        assert!(matches!(run_bench(&cfg), Err(BenchError::TimerTooCoarse(..))));
    }

    #[test]
    fn allocation_failure() {
        let mut cfg = quick("copy", 1);
        cfg.working_set_bytes = Some(u64::MAX / 4);
        assert!(matches!(run_bench(&cfg), Err(BenchError::AllocationFailure(_))));
    }
}
