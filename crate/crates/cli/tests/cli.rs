use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn machine(name: &str) -> String {
    root().join(format!("machines/{name}.mc")).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cachecycle")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn predict_shanghai_table() {
    let o = run(&["predict", "-m", &machine("shanghai")]);
    assert!(o.status.success());
    let out = stdout(&o);
    let store: Vec<&str> = out.lines().find(|l| l.starts_with("store")).unwrap().split_whitespace().collect();
    assert_eq!(store, ["store", "4", "8", "10", "32"]);
}

#[test]
fn predict_csv_and_breakdown() {
    let o = run(&[
        "predict", "-m", &machine("core2"), "-k", "copy", "-l", "L2", "--format", "csv", "--breakdown",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("machine,kernel,level,l1_cycles,transfer_cycles,total_cycles,real_gbs,effective_gbs\n"));
    assert!(out.contains("core2,copy,L2,4.000,6.000,10.000,"));
}

#[test]
fn custom_kernel_spec() {
    let o = run(&["predict", "-m", &machine("nehalem"), "-k", "daxpy:R2W1", "-l", "L1", "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("daxpy:R2W1,L1,"));
}

#[test]
fn compare_core2_fixture() {
    let input = root().join("fixtures/single_thread_core2.csv");
    let o = run(&["compare", "-m", &machine("core2"), "-i", input.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let load_l1 = out.lines().find(|l| l.starts_with("core2,load,L1,")).unwrap();
    let fields: Vec<&str> = load_l1.split(',').collect();
    let pct: f64 = fields[5].parse().unwrap();
    assert!((pct - 96.0).abs() <= 0.5);
}

#[test]
fn output_is_repeatable() {
    let args = ["predict", "-m", &machine("core2"), "-m", &machine("shanghai"), "--breakdown"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn missing_file_is_an_io_error() {
    let o = run(&["predict", "-m", "/nonexistent/machine.mc"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn bad_input_is_a_validation_error() {
    for args in [
        vec!["predict".to_string(), "-m".into(), machine("core2"), "-k".into(), "nosuch".into()],
        vec!["predict".into(), "-m".into(), machine("core2"), "-l".into(), "L7".into()],
        vec!["predict".into(), "--bogus".into()],
    ] {
        let o = Command::new(env!("CARGO_BIN_EXE_cachecycle")).args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(o.stdout.is_empty());
        assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
    }
}

#[test]
fn bad_machine_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.mc");
    std::fs::write(&path, "name = broken\n").unwrap();
    let o = run(&["predict", "-m", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_output_round_trips_into_compare() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let o = run(&[
        "bench", "-m", &machine("core2"), "-k", "load,triad", "-l", "L1", "--reps", "3", "--min-sample-ms", "5",
        "-o", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().ends_with(",harness"));

    let o = run(&["compare", "-m", &machine("core2"), "-i", csv.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = run(&["report", "-m", &machine("core2"), "-i", csv.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("Measured vs predicted"));
}
