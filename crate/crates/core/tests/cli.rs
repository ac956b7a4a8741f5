use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn symqm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symqm"))
        .args(args)
        .env("SYMQM_WORKERS", "1")
        .output()
        .expect("spawn symqm")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            let o = symqm(&["validate", path.to_str().unwrap()]);
            assert!(o.status.success(), "{}: {}", path.display(), stdout(&o));
            assert!(stdout(&o).ends_with(": ok\n"));
            n += 1;
        }
    }
    assert!(n >= 7);
}

#[test]
fn bad_config_lists_problems_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "experiment = \"nope\"\nkernels = [\"xyz\"]\n").unwrap();
    let o = symqm(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("experiment"), "{out}");
    assert!(out.contains("seed"), "{out}");
}

#[test]
fn missing_file_exits_two() {
    let o = symqm(&["validate", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let o = symqm(&["run", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_worker_count_exits_two() {
    let o = Command::new(env!("CARGO_BIN_EXE_symqm"))
        .args(["list-kernels"])
        .env("SYMQM_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn list_kernels_shows_values_on_the_commutator() {
    let o = symqm(&["list-kernels"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for (name, value) in [("exp-a", "0"), ("ab", "1"), ("aab", "0"), ("abb", "0")] {
        let line = out
            .lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .unwrap_or_else(|| panic!("no line for {name}: {out}"));
        assert!(line.ends_with(&format!("= {value}")), "{line}");
    }
}

#[test]
fn list_presets_names_every_experiment() {
    let o = symqm(&["list-presets"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for e in [
        "calabi-discontinuity",
        "gg-proposition",
        "continuity-probe",
        "cocycle-audit",
        "moser-demo",
        "fragment-demo",
        "curve-demo",
    ] {
        assert!(out.contains(e), "{e} missing from\n{out}");
    }
}

#[test]
fn run_writes_results_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "experiment = \"calabi-discontinuity\"\nseed = 1\n[params]\ni_values = [2, 4]\nn_quad = 256\nn_c0 = 64\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = symqm(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS") || l.starts_with("note")));
    let csv = std::fs::read_to_string(out.join("calabi-discontinuity.csv")).unwrap();
    assert!(csv.starts_with("config_hash,"));
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("report.txt").exists());
    assert!(out.join("timings.csv").exists());
}
