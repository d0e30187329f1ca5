use std::io::{BufRead, BufReader};
use std::process::{Command, Output, Stdio};

use plives::scenarios::{self, RunReport};

fn pl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pl")).args(args).output().expect("pl runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_check_passes_for_example1() {
    let o = pl(&["run", "example1", "--check"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("Proportion"));
    assert!(text.contains("Relative World"));
    assert!(text.contains("History"));
    assert!(text.contains("16/25"));
}

#[test]
fn lives_give_integer_counts() {
    let o = pl(&["run", "example1", "--lives", "25"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("lives of 25: 16, 9"));
}

#[test]
fn unrepresentable_lives_exit_2() {
    let o = pl(&["run", "wigner_mermin", "--lives", "7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot represent"));
}

#[test]
fn unknown_scenario_exit_2() {
    assert_eq!(pl(&["run", "does_not_exist"]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_1() {
    let dir = std::env::temp_dir().join(format!("pl-cli-fail-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut spec = scenarios::example3();
    spec.name = "strict_example3".into();
    spec.known_deviations.clear();
    let path = dir.join("strict_example3.json");
    std::fs::write(&path, spec.to_json()).unwrap();
    let o = pl(&["run", path.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAILED born:t4"));
    assert_eq!(pl(&["run", path.to_str().unwrap()]).status.code(), Some(0));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn scenario_path_is_searched() {
    let dir = std::env::temp_dir().join(format!("pl-cli-path-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut spec = scenarios::example1();
    spec.name = "my_pair".into();
    std::fs::write(dir.join("my_pair.json"), spec.to_json()).unwrap();
    let o =
        Command::new(env!("CARGO_BIN_EXE_pl")).args(["run", "my_pair"]).env("PL_SCENARIO_PATH", &dir).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("scenario: my_pair"));
    std::fs::write(dir.join("broken.json"), "{").unwrap();
    let o =
        Command::new(env!("CARGO_BIN_EXE_pl")).args(["run", "broken"]).env("PL_SCENARIO_PATH", &dir).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn json_output_round_trips() {
    let o = pl(&["run", "example2", "--format", "json", "--check"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let report: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.schema, scenarios::REPORT_SCHEMA);
    assert!(report.check("golden:t4").unwrap().passed);
    assert_eq!(report.to_json().trim(), text.trim());
}

#[test]
fn order_flag_reorders_concurrent_events() {
    let a = pl(&["run", "example1", "--format", "json", "--order", "t1,t3,t2,t4"]);
    let b = pl(&["run", "example1", "--format", "json"]);
    let ra: RunReport = serde_json::from_slice(&a.stdout).unwrap();
    let rb: RunReport = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(ra.order, ["t1", "t3", "t2", "t4"]);
    assert_eq!(ra.table("t2"), rb.table("t2"));
    assert_eq!(pl(&["run", "example1", "--order", "t4,t1,t2,t3"]).status.code(), Some(2));
}

#[test]
fn list_contains_catalog() {
    let o = pl(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in scenarios::CATALOG {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn bell_is_byte_identical_per_seed() {
    let a = pl(&["bell", "--mode", "mermin", "--rounds", "5000", "--seed", "7"]);
    let b = pl(&["bell", "--mode", "mermin", "--rounds", "5000", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = pl(&["bell", "--mode", "mermin", "--rounds", "5000", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(pl(&["bell", "--mode", "ghz"]).status.code(), Some(2));
}

#[test]
fn profile_writes_csv() {
    let o = pl(&["profile", "square-well", "--bins", "64", "--modes", "1,2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,before,after"));
    assert_eq!(lines.count(), 64);

    let path = std::env::temp_dir().join(format!("pl-eraser-{}.csv", std::process::id()));
    let o = pl(&["profile", "eraser", "--output", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().next(), Some("x,w=+,w=-,w=0,w=1,unconditional"));
    assert_eq!(csv.lines().count(), 1025);
    std::fs::remove_file(&path).unwrap();
}

#[test]
fn serve_on_port_zero_prints_the_port() {
    let mut child =
        Command::new(env!("CARGO_BIN_EXE_pl")).args(["serve", "--port", "0"]).stdout(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    let port: u16 = line.trim().rsplit(':').next().unwrap().parse().unwrap();
    assert!(line.starts_with("listening on http://127.0.0.1:"));
    assert_ne!(port, 0);
}

#[test]
fn fractions() {
    assert_eq!(pl_cli::as_fraction(0.64, 1_000_000, 1e-12), Some((16, 25)));
    assert_eq!(pl_cli::as_fraction(784.0 / 2500.0, 1_000_000, 1e-12), Some((196, 625)));
    assert_eq!(pl_cli::as_fraction(1.0, 1_000_000, 1e-12), Some((1, 1)));
    assert_eq!(pl_cli::as_fraction(0.5 + 1e-9, 1_000_000, 1e-12), None);
    let (p, q) = pl_cli::as_fraction(std::f64::consts::FRAC_1_SQRT_2, 1_000_000, 1e-12).unwrap();
    assert!((p as f64 / q as f64 - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-12);
    assert_eq!(pl_cli::format_proportion(0.5), "0.500000000000 = 1/2");
    assert_eq!(pl_cli::format_proportion(0.0), "0.000000000000 = 0");
}

#[test]
fn in_process_entry_point() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    assert_eq!(pl_cli::main_with(["pl", "run", "example1"], &mut out, &mut err), 0);
    let mut out2 = Vec::new();
    pl_cli::main_with(["pl", "run", "example1"], &mut out2, &mut err);
    assert_eq!(out, out2);
    assert_eq!(pl_cli::main_with(["pl", "frobnicate"], &mut out, &mut err), 2);
}
