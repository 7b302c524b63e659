//! End-to-end tests of the binary: exit codes, CSV outputs, seed overrides,
//! and the security table.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xchain-sim"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "expected success for {args:?}: stdout={} stderr={}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn exit_code(args: &[&str]) -> (i32, String, String) {
    let output = bin().args(args).output().expect("binary runs");
    (
        output.status.code().expect("no signal"),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const RING_OK: &str = r#"
[topology]
kind = "ring"
nodes = [1, 2, 3]
"#;

const ONE_WAY_STAR: &str = r#"
[topology]
nodes = [1, 2, 3]
edges = [[1, 2], [1, 3]]
"#;

#[test]
fn validate_topology_accepts_a_ring() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "ring.toml", RING_OK);
    let output = run_ok(&["validate-topology", &config]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("strongly connected"), "{stdout}");
}

#[test]
fn validate_topology_lists_unreachable_pairs_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "star.toml", ONE_WAY_STAR);
    let (code, stdout, _) = exit_code(&["validate-topology", &config]);
    assert_eq!(code, 1);
    // 2 and 3 can never reach anything: four broken ordered pairs.
    for pair in ["2 -> 1", "2 -> 3", "3 -> 1", "3 -> 2"] {
        assert!(stdout.contains(&format!("unreachable: {pair}")), "{stdout}");
    }
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "broken.toml", "not toml [[[");
    let (code, _, stderr) = exit_code(&["validate-topology", &config]);
    assert_eq!(code, 2, "{stderr}");
    let (code, _, _) = exit_code(&["validate-topology", "/nonexistent/path.toml"]);
    assert_eq!(code, 2);
    // Config and preset at once is an input error.
    let config = write_config(dir.path(), "ok.toml", RING_OK);
    let (code, _, _) = exit_code(&["validate-topology", &config, "--preset", "s1_ring"]);
    assert_eq!(code, 2);
}

#[test]
fn run_writes_the_four_csv_files_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics");
    run_ok(&[
        "run",
        "--preset",
        "fig12_indirect",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    for file in ["flow.csv", "propagation.csv", "balances.csv", "blocks.csv", "summary.txt"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let flow = std::fs::read_to_string(out.join("flow.csv")).unwrap();
    assert!(flow.starts_with("tick,chain,bytes_out,bytes_in\n"));
    // 240 ticks x 4 chains plus the header.
    assert_eq!(flow.lines().count(), 1 + 240 * 4);
}

#[test]
fn run_refuses_invalid_topology_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "star.toml", ONE_WAY_STAR);
    let out = dir.path().join("never");
    let (code, _, stderr) = exit_code(&["run", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1, "{stderr}");
    assert!(!out.exists(), "no output for a refused run");
}

#[test]
fn seed_override_changes_output_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["run", "--preset", "s1_ring", "--duration-ticks", "60", "--quiet"];
    let out = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    let a1 = out("a1");
    let a2 = out("a2");
    let b = out("b");
    run_ok(&[&base[..], &["--out", &a1, "--seed", "1"][..]].concat());
    run_ok(&[&base[..], &["--out", &a2, "--seed", "1"][..]].concat());
    run_ok(&[&base[..], &["--out", &b, "--seed", "2"][..]].concat());

    let read = |dir: &str, file: &str| std::fs::read(Path::new(dir).join(file)).unwrap();
    for file in ["flow.csv", "propagation.csv", "balances.csv", "blocks.csv"] {
        assert_eq!(read(&a1, file), read(&a2, file), "same seed, same {file}");
    }
    assert_ne!(
        read(&a1, "propagation.csv"),
        read(&b, "propagation.csv"),
        "different seed, different trace"
    );
}

#[test]
fn zero_duration_produces_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    run_ok(&[
        "run",
        "--preset",
        "s1_ring",
        "--duration-ticks",
        "0",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    let flow = std::fs::read_to_string(out.join("flow.csv")).unwrap();
    assert_eq!(flow, "tick,chain,bytes_out,bytes_in\n");
    let blocks = std::fs::read_to_string(out.join("blocks.csv")).unwrap();
    assert_eq!(
        blocks,
        "tick,chain,height,interval_ticks,tx_count,crosschain_count\n"
    );
}

#[test]
fn analyze_security_prints_rows_that_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{RING_OK}\n[security]\nprobabilities = [{{ chain = 1, p = 0.1 }}, {{ chain = 2, p = 0.1 }}]\nsets = [[1, 2]]"
    );
    let config = write_config(dir.path(), "sec.toml", &text);
    let output = run_ok(&["analyze-security", &config]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let row = stdout.lines().nth(1).expect("one data row");
    let fields: Vec<f64> = row
        .split_whitespace()
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(fields.len(), 4);
    let (pb, pf, unchanged, total) = (fields[0], fields[1], fields[2], fields[3]);
    assert!((pb - 0.01).abs() < 1e-9, "{row}");
    assert!((pf - 0.18).abs() < 1e-9, "{row}");
    assert!((unchanged - 0.81).abs() < 1e-9, "{row}");
    assert!((total - 1.0).abs() < 1e-9, "{row}");
}

#[test]
fn analyze_security_rejects_probabilities_outside_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{RING_OK}\n[security]\nprobabilities = [{{ chain = 1, p = 1.5 }}]"
    );
    let config = write_config(dir.path(), "sec.toml", &text);
    let (code, _, stderr) = exit_code(&["analyze-security", &config]);
    assert_eq!(code, 1, "{stderr}");
    // Thirty chains at 0.5: pb must print as a nonzero value.
    let many: String = (1..=30)
        .map(|i| format!("{{ chain = {i}, p = 0.5 }}"))
        .collect::<Vec<_>>()
        .join(", ");
    let text = format!(
        "[topology]\nkind = \"ring\"\nnodes = [{}]\n[security]\nprobabilities = [{many}]",
        (1..=30).map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
    );
    let config = write_config(dir.path(), "many.toml", &text);
    let output = run_ok(&["analyze-security", &config]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let row = stdout.lines().nth(1).unwrap();
    let pb: f64 = row.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(pb > 0.0, "no underflow to zero: {row}");
    let expected = 0.5f64.powi(30);
    assert!(
        (pb - expected).abs() < expected * 1e-5,
        "printed {pb}, expected about {expected}"
    );
}

#[test]
fn report_summarizes_a_metrics_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics");
    run_ok(&[
        "run",
        "--preset",
        "fig14_direct",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    let output = run_ok(&["report", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("run: 240 ticks"), "{stdout}");
    assert!(stdout.contains("chain 3"), "{stdout}");
    // Reporting a directory with no metrics is a domain failure.
    let (code, _, _) = exit_code(&["report", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(code, 1);
}

#[test]
fn unknown_preset_fails_with_a_clear_message() {
    let (code, _, stderr) = exit_code(&["run", "--preset", "nope", "--out", "/tmp/x"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("unknown preset"), "{stderr}");
}
