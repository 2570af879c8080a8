use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn gsdde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsdde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn delay_bound_for_preset() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "cubic.conf", "preset = example41\n");
    let out = gsdde(&["delay-bound", arg(&cfg)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("0.08164965"), "{text}");
    assert!(text.contains("inf"), "{text}");
    assert!(text.contains("0.1333"), "{text}");

    let out = gsdde(&["delay-bound", arg(&cfg), "--format", "json"]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bound = json["bound"].as_f64().unwrap();
    assert!((bound - (1.0f64 / 150.0).sqrt()).abs() < 1e-12);
}

#[test]
fn delay_bound_names_missing_constant() {
    let dir = TempDir::new().unwrap();
    let text = "\
f = -x
h = 1
eta = 1
delta = 0
tau = 0.01
delta_dot_bound = 0
sigma_lower_sq = 0.5
sigma_upper_sq = 1
beta1 = 0.1
beta2 = 0.05
beta4 = 1
";
    let cfg = write_config(&dir, "partial.conf", text);
    let out = gsdde(&["delay-bound", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("varpi"), "{}", stderr(&out));
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.conf", "preset = example41\n\nf = -x^^3\n");
    let out = gsdde(&["simulate", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("bad.conf") && err.contains("line 3"), "{err}");

    let cfg = write_config(&dir, "unknown.conf", "preset = example41\nsigma = 1\n");
    let out = gsdde(&["check", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigma"), "{}", stderr(&out));

    let out = gsdde(&["simulate", arg(&dir.path().join("absent.conf"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_exit_codes_follow_verdicts() {
    let dir = TempDir::new().unwrap();
    let ok = write_config(&dir, "ok.conf", "preset = example41\n");
    let out = gsdde(&["check", arg(&ok), "--out", arg(dir.path())]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}{}",
        stdout(&out),
        stderr(&out)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("checks.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 4);
    assert_eq!(report["moment_exponent_condition"], true);

    let narrow = write_config(&dir, "narrow.conf", "preset = example41\nvarpi = 0.5\n");
    let out = gsdde(&["check", arg(&narrow), "--format", "json"]);
    assert_eq!(out.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lipschitz = json["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "delay_lipschitz")
        .unwrap();
    assert_eq!(lipschitz["report"]["satisfied"], false);
    let violation = lipschitz["report"]["max_violation"].as_f64().unwrap();
    assert!((violation - 0.5).abs() < 1e-6, "{violation}");

    let small_k = write_config(&dir, "small_k.conf", "preset = example41\nK = 0.1\n");
    let out = gsdde(&["check", arg(&small_k)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("1 of 4"), "{}", stderr(&out));
}

#[test]
fn simulate_deterministic_ode() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "\
f = -x
h = 0
eta = 1
delta = 0
tau = 0.001
delta_dot_bound = 0
sigma_lower_sq = 0.5
sigma_upper_sq = 1
m = 3
n = 2
steps = 1000
horizon = 1
out_dir = {}
gnuplot = true
dump_paths = true
",
        dir.path().display()
    );
    let cfg = write_config(&dir, "decay.conf", &text);
    let out = gsdde(&["simulate", arg(&cfg)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let csv = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (t, upper, lower) = (cols[0], cols[1], cols[2]);
        assert_eq!(upper, lower);
        assert!((upper - (-t).exp()).abs() <= 1e-3, "t = {t}: {upper}");
        rows += 1;
    }
    assert_eq!(rows, 1001);
    assert!(csv.starts_with("# decay: "));
    assert!(csv.contains("m = 3, n = 2"));
    assert!(dir.path().join("decay.gp").exists());
    let paths = fs::read_to_string(dir.path().join("decay_paths.csv")).unwrap();
    assert_eq!(paths.lines().next(), Some("t,k,j,x"));
    assert_eq!(paths.lines().count(), 1 + 3 * 2 * 1001);
}

#[test]
fn simulate_json_output_and_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "short.conf",
        "preset = example41\nhorizon = 1\nsteps = 100\n",
    );
    let out = gsdde(&[
        "simulate",
        arg(&cfg),
        "--format",
        "json",
        "--out",
        arg(dir.path()),
        "--m",
        "2",
        "--n",
        "3",
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("short.json")).unwrap()).unwrap();
    let series = &json["series"];
    assert_eq!(series["times"].as_array().unwrap().len(), 101);
    assert_eq!(series["functional"], "|x|^1");
    assert!(json["comments"][1]
        .as_str()
        .unwrap()
        .contains("m = 2, n = 3, seed = 5"));
    assert!(json["verdict"]["verdict"].is_string());
}

#[test]
fn reproduce_fig42_writes_lower_series_only() {
    let dir = TempDir::new().unwrap();
    let out = gsdde(&["reproduce", "fig42", "--out", arg(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("Unstable"), "{}", stdout(&out));
    let csv = fs::read_to_string(dir.path().join("fig42.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t,lower,excluded_count");
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_gsdde"))
        .args(["reproduce", "fig41"])
        .env("GSDDE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
