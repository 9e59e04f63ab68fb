mod common;

use std::time::Duration;

use cachecycle::bench::{run_bench, BenchConfig};
use cachecycle::{measurement::scaling_report, resolve_kernel, LevelRef};
use common::*;

fn cpus() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[test]
fn two_threads_at_a_shared_level_do_not_lose_bandwidth() {
    if harness_skipped() || cpus() < 2 {
        eprintln!("skipped: needs two CPUs");
        return;
    }
    let Some(host) = host_machine() else { return };
    let shared = if host.cache_count() >= 3 { LevelRef::Cache(3) } else { LevelRef::Memory };
    let mut cfg = BenchConfig::new(host.clone(), resolve_kernel("triad").unwrap(), shared);
    let one = run_bench(&cfg).unwrap();
    cfg.threads = 2;
    let two = run_bench(&cfg).unwrap();
    assert!(
        two.best_effective_gbs >= 0.9 * one.best_effective_gbs,
        "{:.1} GB/s with two threads, {:.1} with one",
        two.best_effective_gbs,
        one.best_effective_gbs
    );
}

#[test]
fn bench_records_feed_the_scaling_report() {
    if harness_skipped() {
        return;
    }
    let Some(host) = host_machine() else { return };
    let mut records = Vec::new();
    for threads in [1, 2] {
        let mut cfg = BenchConfig::new(host.clone(), resolve_kernel("copy").unwrap(), LevelRef::L1);
        cfg.threads = threads;
        cfg.repetitions = 3;
        cfg.min_sample = Duration::from_millis(5);
        let r = run_bench(&cfg).unwrap();
        assert_eq!(r.samples_gbs.len(), 3);
        assert!(r.samples_gbs.iter().all(|&s| s <= r.best_effective_gbs));
        records.push(r.to_record(&cfg));
    }
    let report = scaling_report(&records, &host).unwrap();
    assert_eq!(report.rows.iter().map(|r| r.threads).collect::<Vec<_>>(), [1, 2]);
    assert_eq!(report.rows[0].speedup, 1.0);
    assert!(report.rows[1].effective_gbs > 0.0);
}
