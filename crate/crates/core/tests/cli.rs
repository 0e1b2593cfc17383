use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nelsonlab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nelsonlab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.conf");
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_prints_every_experiment() {
    let o = bin().arg("--list").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<String> = String::from_utf8(o.stdout).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(
        names,
        [
            "weyl-identities",
            "psido-calculus",
            "renorm-convergence",
            "gross-transform",
            "ibc-identity",
            "domain-regularity",
            "appendix-inequalities",
            "vacuum-energy",
        ]
    );
}

#[test]
fn shipped_config_validates() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.conf");
    let o = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[model]") && text.contains("# config hash "));
    let o = bin().arg("--validate").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn unknown_key_exits_2_naming_the_key() {
    let dir = scratch("unknown");
    let path = write_config(&dir, "[model]\nwidth = 3\n");
    let o = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("width") && err.contains("line 2"), "{err}");
}

#[test]
fn malformed_value_exits_2() {
    let dir = scratch("malformed");
    let path = write_config(&dir, "[model]\npoints = many\n");
    let o = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("points"));
}

#[test]
fn cutoff_above_guard_exits_3() {
    let dir = scratch("guard");
    let path = write_config(&dir, "[model]\ncutoff = 9\n");
    let o = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("guard"), "{}", stderr(&o));
}

#[test]
fn unknown_experiment_is_rejected() {
    let o = bin().args(["run", "--experiment", "nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--list"));
}

#[test]
fn repeated_runs_write_identical_csv() {
    let dir = scratch("determinism");
    let run = |sub: &str| {
        let out = dir.join(sub);
        let o = bin()
            .args(["run", "--experiment", "weyl-identities", "--seed", "7", "--threads", "2", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let csv_a = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("results.csv")).unwrap());
    let header = String::from_utf8(csv_a).unwrap();
    assert!(header.starts_with("experiment,check,parameters,lhs,relation,rhs,status\n"));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["status"], "PASS");
    assert!(fs::read_to_string(a.join("plot.gp")).unwrap().contains("results.csv"));
}

#[test]
fn ibc_identity_passes_on_the_default_spec() {
    let out = scratch("ibc").join("out");
    let o = bin().args(["run", "--experiment", "ibc-identity", "--out"]).arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| l.contains("factorization residual / |H|")).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",PASS")));
}
