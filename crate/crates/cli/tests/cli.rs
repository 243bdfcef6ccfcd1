use std::path::Path;
use std::process::{Command, Output};

fn wronskp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wronskp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_u(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn verify_presets_pass() {
    for n in 1..=6 {
        let o = wronskp(&["verify", &format!("preset:{n}")]);
        assert_eq!(o.status.code(), Some(0), "preset {n}:\n{}", stdout(&o));
        assert!(stdout(&o).contains("result: PASS"));
    }
}

#[test]
fn duplicate_lambda_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_json(
        dir.path(),
        "dup.json",
        r#"{"model":"KPII","sigma":1,"m":1,"N":1,"spectra":[
            {"lambda":[0.5,0],"a":[1,0],"b":[[1,0]]},
            {"lambda":[0.5,0],"a":[1,0],"b":[[1,0]]}]}"#,
    );
    let o = wronskp(&["verify", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("duplicate"), "{}", stderr(&o));
}

#[test]
fn sign_rule_violation_warns_but_passes() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_json(
        dir.path(),
        "v.json",
        r#"{"model":"KPII","sigma":1,"resonant":{"L":3,"M":2,"kappa":[-0.9,-0.5,0.0,0.6,1.1],"bprime":[1,1,1,-1,1]}}"#,
    );
    let o = wronskp(&["verify", &f]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("warnings:") && text.contains("condition (iii)"), "{text}");
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_json(dir.path(), "bad.json", r#"{"model":"KPII","sigma":1"#);
    assert_eq!(wronskp(&["verify", &f]).status.code(), Some(2));
    assert_eq!(wronskp(&["verify", "preset:9"]).status.code(), Some(2));
    assert_eq!(wronskp(&["verify", "/nonexistent/scenario.json"]).status.code(), Some(2));
    let out = dir.path().join("g.csv");
    let o = wronskp(&["grid", "preset:1", "--x", "1:0:5", "--y", "0:1:5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn figure_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let o = wronskp(&["figure", "7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("fig7.csv").exists());
}

#[test]
fn endpoint_grid_has_four_rows_per_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let o = wronskp(&["grid", "preset:4", "--x", "-2:2:2", "--y", "-2:2:2", "--t", "-1,0,1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,t,u");
    assert_eq!(lines.len(), 1 + 12);
    let heads: Vec<String> = lines[1..5].iter().map(|l| l.splitn(4, ',').take(3).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(heads, ["-2,-2,-1", "2,-2,-1", "-2,2,-1", "2,2,-1"]);
}

#[test]
fn fig1_grid_maximum_matches_strongest_soliton() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let o = wronskp(&["grid", "preset:1", "--x", "-30:30:121", "--y", "-30:30:121", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let max = csv_u(&out).into_iter().fold(f64::MIN, f64::max);
    assert!((max - 1.28).abs() / 1.28 < 0.02, "max {max}");
}

#[test]
fn resonant_asymptotics_counts() {
    let o = wronskp(&["asymptotics", "preset:1"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0));
    assert!(text.contains("y->+inf: 3 solitons") && text.contains("y->-inf: 2 solitons"), "{text}");
    let o = wronskp(&["asymptotics", "preset:2"]);
    let text = stdout(&o);
    assert!(text.contains("y->+inf: 2 solitons") && text.contains("y->-inf: 3 solitons"), "{text}");
    assert!(!text.contains("DISAGREES"));
}

#[test]
fn measured_asymptotics_pass() {
    for preset in ["preset:1", "preset:4"] {
        let o = wronskp(&["asymptotics", preset, "--measure"]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert!(!stdout(&o).contains("FAIL"));
    }
}

#[test]
fn merged_parallel_solitons_cannot_be_measured() {
    let o = wronskp(&["asymptotics", "preset:5", "--measure"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("not isolated"));
}

#[test]
fn unsupported_asymptotics_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_json(
        dir.path(),
        "two.json",
        r#"{"model":"KPII","sigma":1,"m":2,"N":1,"spectra":[
            {"lambda":[0.3,0],"a":[1,0],"b":[[1,0],[0.5,0]]},
            {"lambda":[-0.4,0],"a":[1,0],"b":[[0.7,0],[1,0]]},
            {"lambda":[0.9,0],"a":[0.6,0],"b":[[1,0],[-0.3,0]]}]}"#,
    );
    assert_eq!(wronskp(&["verify", &f]).status.code(), Some(0));
    assert_eq!(wronskp(&["asymptotics", &f]).status.code(), Some(2));
}

#[test]
fn figure_outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = wronskp(&["figure", "3", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    for name in ["fig3.csv", "fig3_report.txt"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    assert_eq!(csv_u(&a.path().join("fig3.csv")).len(), 121 * 121);
}

#[test]
fn expand_writes_term_table() {
    let o = wronskp(&["expand", "preset:3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("coeff_re,coeff_im,"));
    assert!(text.lines().count() >= 3);
}
