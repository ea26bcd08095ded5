use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonlocal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_isotropic(dir: &Path, name: &str, eta: f64) -> PathBuf {
    let o = run(
        dir,
        &["isotropic", "--eta", &eta.to_string(), "--out", name],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join(name)
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const PRODUCT_BOX: &str = r#"{"x_card":2,"y_card":2,"a_card":2,"b_card":2,
  "p":[[[[0.12,0.18],[0.28,0.42]],[[0.15,0.15],[0.35,0.35]]],
       [[[0.36,0.54],[0.04,0.06]],[[0.45,0.45],[0.05,0.05]]]]}"#;

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    write_isotropic(dir.path(), "pr.json", 0.5);
    let ok = run(dir.path(), &["validate", "pr.json"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("pr.json,true,x2y2a2b2"));

    let signaling = r#"{"x_card":2,"y_card":2,"a_card":2,"b_card":2,
      "p":[[[[1,0],[0,0]],[[0.25,0.25],[0.25,0.25]]],[[[0.25,0.25],[0.25,0.25]],[[0.25,0.25],[0.25,0.25]]]]}"#;
    std::fs::write(dir.path().join("sig.json"), signaling).unwrap();
    let bad = run(dir.path(), &["validate", "sig.json"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("Signaling"), "{}", stderr(&bad));
    assert!(
        stderr(&bad).contains("e-1"),
        "magnitude reported: {}",
        stderr(&bad)
    );

    std::fs::write(dir.path().join("broken.json"), "{\"x_card\": 2,").unwrap();
    assert_eq!(
        run(dir.path(), &["validate", "broken.json"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(dir.path(), &["validate", "missing.json"]).status.code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(1));
}

#[test]
fn measures_of_isotropic_and_product_boxes() {
    let dir = TempDir::new().unwrap();
    write_isotropic(dir.path(), "pr.json", 0.8);
    let o = run(dir.path(), &["measures", "pr.json"]);
    assert_eq!(stdout(&o), "rho,argmax_x,argmax_y,chsh\n0.8,0,0,0.9\n");
    let j: serde_json::Value = serde_json::from_str(&stdout(&run(
        dir.path(),
        &["measures", "pr.json", "--format", "json"],
    )))
    .unwrap();
    assert_eq!(j["rho"], 0.8);
    assert_eq!(j["chsh"], 0.9);

    std::fs::write(dir.path().join("prod.json"), PRODUCT_BOX).unwrap();
    let o = run(dir.path(), &["measures", "prod.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert!(rows[0][0].parse::<f64>().unwrap().abs() < 1e-9);
}

#[test]
fn mc_ribbon_scans() {
    let dir = TempDir::new().unwrap();
    write_isotropic(dir.path(), "pr1.json", 1.0);
    let o = run(dir.path(), &["ribbon", "mc", "pr1.json", "--grid", "21"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("lambda1,lambda2,inside,margin\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 441);
    for r in &rows {
        let (l1, l2): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        if l1 + l2 < 1.0 - 1e-9 {
            assert_eq!(r[2], "true", "{r:?}");
        } else if l1 + l2 > 1.0 + 1e-9 {
            assert_eq!(r[2], "false", "{r:?}");
        }
    }

    std::fs::write(dir.path().join("prod.json"), PRODUCT_BOX).unwrap();
    let rows = csv_rows(&stdout(&run(
        dir.path(),
        &["ribbon", "mc", "prod.json", "--grid", "5"],
    )));
    assert!(rows.iter().all(|r| r[2] == "true"));
}

#[test]
fn hc_ribbon_certifies_the_corner() {
    let dir = TempDir::new().unwrap();
    write_isotropic(dir.path(), "pr.json", 0.9);
    let o = run(
        dir.path(),
        &["ribbon", "hc", "pr.json", "--grid", "3", "--restarts", "8"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("lambda1,lambda2,inside,margin,certified\n"));
    let rows = csv_rows(&text);
    let corner = rows.iter().find(|r| r[0] == "1" && r[1] == "1").unwrap();
    assert_eq!((corner[2].as_str(), corner[4].as_str()), ("false", "exact"));
    let origin = rows.iter().find(|r| r[0] == "0" && r[1] == "0").unwrap();
    assert_eq!(
        (origin[2].as_str(), origin[4].as_str()),
        ("true", "heuristic")
    );
}

fn chain_spec(box_file: &str) -> String {
    let mut step1 = serde_json::Map::new();
    let mut step2 = serde_json::Map::new();
    let mut out = serde_json::Map::new();
    for x in 0..2 {
        step1.insert(format!("{x}"), serde_json::json!([0, x]));
        for a in 0..2 {
            step2.insert(format!("{x}|0,{x},{a}"), serde_json::json!([1, a]));
            for c in 0..2 {
                out.insert(format!("{x}|0,{x},{a}|1,{a},{c}"), serde_json::json!(c));
            }
        }
    }
    let party =
        serde_json::json!({"steps": [{"map": step1}, {"map": step2}], "output": {"map": out}});
    serde_json::json!({
        "boxes": [{"path": box_file}, {"path": box_file}],
        "x_prime_card": 2,
        "y_prime_card": 2,
        "alice": party,
        "bob": party,
    })
    .to_string()
}

#[test]
fn wire_identity_and_chain() {
    let dir = TempDir::new().unwrap();
    write_isotropic(dir.path(), "pr.json", 0.7);
    write_isotropic(dir.path(), "pr1.json", 1.0);
    let identity = r#"{"boxes":[{"path":"pr.json"}],"x_prime_card":2,"y_prime_card":2,
      "alice":{"steps":[{"map":{"0":[0,0],"1":[0,1]}}],"output":{"map":{"0|0,0,0":0,"0|0,0,1":1,"1|0,1,0":0,"1|0,1,1":1}}},
      "bob":{"steps":[{"map":{"0":[0,0],"1":[0,1]}}],"output":{"map":{"0|0,0,0":0,"0|0,0,1":1,"1|0,1,0":0,"1|0,1,1":1}}}}"#;
    std::fs::write(dir.path().join("identity.json"), identity).unwrap();
    let o = run(
        dir.path(),
        &["wire", "identity.json", "--out", "derived.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let original = std::fs::read_to_string(dir.path().join("pr.json")).unwrap();
    assert_eq!(
        std::fs::read_to_string(dir.path().join("derived.json")).unwrap(),
        original
    );

    std::fs::write(dir.path().join("chain.json"), chain_spec("pr1.json")).unwrap();
    let o = run(
        dir.path(),
        &[
            "wire",
            "chain.json",
            "--out",
            "chain_box.json",
            "--report",
            "residuals.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        run(dir.path(), &["validate", "chain_box.json"])
            .status
            .code(),
        Some(0)
    );
    let report = std::fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    let rows = csv_rows(&report);
    assert_eq!(rows.len(), 4);
    for r in rows {
        for v in &r[2..] {
            assert!(v.parse::<f64>().unwrap().abs() <= 1e-9, "{r:?}");
        }
    }

    std::fs::write(
        dir.path().join("badspec.json"),
        r#"{"boxes":[{"path":"pr.json"}],"x_prime_card":2}"#,
    )
    .unwrap();
    assert_eq!(
        run(dir.path(), &["wire", "badspec.json"]).status.code(),
        Some(1)
    );
}

#[test]
fn campaigns_are_reproducible() {
    let dir = TempDir::new().unwrap();
    for (campaign, extra) in [
        ("rho", vec![]),
        ("mc", vec![]),
        ("hc-ineq", vec!["--channels", "10"]),
        ("lemmas", vec![]),
        ("chain", vec![]),
    ] {
        let mut args = vec!["fuzz", campaign, "--cases", "6", "--seed", "42"];
        args.extend(&extra);
        let first = run(dir.path(), &[&args[..], &["--out", "a"]].concat());
        assert_eq!(
            first.status.code(),
            Some(0),
            "{campaign}: {}",
            stderr(&first)
        );
        let second = run(dir.path(), &[&args[..], &["--out", "b"]].concat());
        assert_eq!(second.status.code(), Some(0));
        for ext in ["csv", "json"] {
            let a = std::fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
            let b = std::fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
            assert_eq!(a, b, "{campaign}.{ext}");
        }
        let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert!(csv.starts_with("case_id,seed,quantity,lhs,rhs,margin,pass\n"));
    }
    assert_eq!(
        run(dir.path(), &["fuzz", "rho", "--boxes", "5"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn isotropic_scan_and_frontier() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["scan-isotropic"]);
    let text = stdout(&o);
    assert!(
        text.starts_with("eta,rho,chsh,mc_inf_ratio\n0,0,0.5,0\n"),
        "{text}"
    );
    assert!(text.contains("\n0.707106781187,0.707106781187,0.853553390593,"));
    assert_eq!(csv_rows(&text).len(), 12);

    let o = run(
        dir.path(),
        &[
            "frontier",
            "--eta",
            "0.75",
            "--samples",
            "200",
            "--format",
            "json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["passed"], true);
    assert_eq!(
        run(dir.path(), &["frontier", "--eta", "0.6"]).status.code(),
        Some(1)
    );
}

#[test]
fn config_files() {
    let dir = TempDir::new().unwrap();
    write_isotropic(dir.path(), "pr.json", 0.8);
    std::fs::write(
        dir.path().join("good.json"),
        r#"{"format": "json", "seed": 3}"#,
    )
    .unwrap();
    let o = run(
        dir.path(),
        &["measures", "pr.json", "--config", "good.json"],
    );
    assert!(stdout(&o).trim_start().starts_with('{'));
    std::fs::write(dir.path().join("bad.json"), r#"{"formatt": "json"}"#).unwrap();
    let o = run(dir.path(), &["measures", "pr.json", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("formatt"));
}

#[test]
fn pivot_on_a_mixture() {
    let dir = TempDir::new().unwrap();
    write_isotropic(dir.path(), "pr1.json", 1.0);
    write_isotropic(dir.path(), "pr0.json", 0.0);
    let o = run(
        dir.path(),
        &["pivot", "--eta2", "0.75", "0.75=pr1.json", "0.25=pr0.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["verdict"], "component found");
    assert_eq!(j["component"], 0);
    let o = run(
        dir.path(),
        &["pivot", "--eta2", "0.9", "0.5=pr1.json", "0.5=pr0.json"],
    );
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["verdict"], "hypothesis not met");
}
