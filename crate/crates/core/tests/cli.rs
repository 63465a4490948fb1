use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dpln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpln"))
        .current_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../.."))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn fruit_flags_override_config_and_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dpln(&["fruit-colors", "--config", "configs/fruit-colors.toml", "--steps", "4", "--lr", "0.5", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["steps"], 4);
    assert_eq!(report["lr"], 0.5);
    assert_eq!(report["seed"], 7);

    let csv = fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,loss");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn chain_forward_and_backward() {
    let o = dpln(&["chain", "--kb", "configs/sparrow.kb", "--forward", "--steps", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(r#"(ConceptNode "sparrow") (ConceptNode "animal")"#));

    let target = r#"(EvaluationLink (PredicateNode "green") (ConceptNode "apple-001"))"#;
    let o = dpln(&["chain", "--kb", "configs/apple.kb", "--target", target]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("stv 0.6 "), "{}", stdout(&o));
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("bad.kb");
    fs::write(&kb, "(InheritanceLink (ConceptNode \"a\")\n").unwrap();
    let o = dpln(&["chain", "--kb", kb.to_str().unwrap(), "--forward"]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "lr = \"fast\"\n").unwrap();
    let o = dpln(&["fruit-colors", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(dpln(&["chain", "--kb", "configs/sparrow.kb"]).status.code(), Some(1));
    assert_eq!(dpln(&["joint", "--config", "no/such/file.toml"]).status.code(), Some(1));
    assert_eq!(dpln(&["frobnicate"]).status.code(), Some(1));
}
