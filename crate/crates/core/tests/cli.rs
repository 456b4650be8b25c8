use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use acd_core::io::save_obj;
use acd_core::shapes;

fn acd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acd")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(dir: &Path, name: &str, mesh: &acd_core::TriMesh) -> PathBuf {
    let p = dir.join(name);
    save_obj(mesh, &p).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Value of `key=` in a summary line.
fn field(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {line:?}"))
        .parse()
        .unwrap()
}

#[test]
fn decompose_l_prism_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path(), "lprism.obj", &shapes::l_prism());
    let out = dir.path().join("out");
    let o = acd(&["decompose", s(&input), "-o", s(&out), "--seed", "42", "--threshold", "0.05", "--no-remesh"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(line.starts_with("parts=2 concavity="), "{line}");
    assert!(field(&line, "seconds") >= 0.0);
    for f in ["part_000.obj", "part_001.obj", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("part_002.obj").exists());

    let o = acd(&["eval", s(&input), s(&out)]);
    assert!(o.status.success());
    let line = stdout(&o);
    assert_eq!(field(&line, "parts"), 2.0);
    assert!(field(&line, "concavity") <= 0.01, "{line}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(json["parts"], 2);
}

#[test]
fn cube_is_one_part_in_multi_mode() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path(), "cube.obj", &shapes::unit_cube());
    let out = dir.path().join("out");
    let o = acd(&["decompose", s(&input), "-o", s(&out), "--no-remesh", "--output-mode", "multi"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("parts=1 "));
    let text = std::fs::read_to_string(out.join("hulls.obj")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("o ")).count(), 1);

    // a hull equal to the input's hull scores at most sampling noise
    let o = acd(&["eval", s(&input), s(&out.join("hulls.obj"))]);
    assert!(o.status.success());
    assert!(field(&stdout(&o), "concavity") <= 1e-3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path(), "cube.obj", &shapes::unit_cube());
    let out = dir.path().join("out");

    let o = acd(&["decompose", s(&dir.path().join("missing.obj")), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(acd(&["eval", s(&input), s(&empty)]).status.code(), Some(1));
    assert_eq!(acd(&["eval", s(&input), s(&dir.path().join("nowhere"))]).status.code(), Some(2));

    assert_eq!(acd(&["rotate-test", s(&input), "--rotations", "0"]).status.code(), Some(1));
    assert_eq!(acd(&["decompose", s(&input), "--bogus"]).status.code(), Some(1));
    assert_eq!(acd(&["decompose", s(&input), "--epsilon", "-1"]).status.code(), Some(1));
    assert_eq!(acd(&["decompose", s(&input), "--part-pick", "area"]).status.code(), Some(1));
    assert_eq!(acd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(acd(&["--help"]).status.code(), Some(0));

    let bad = dir.path().join("bad.obj");
    std::fs::write(&bad, "v 0 0 0\nf 1 2 3\n").unwrap();
    let o = acd(&["decompose", s(&bad), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.obj:2:"));
}

#[test]
fn rotate_test_lines() {
    let dir = tempfile::tempdir().unwrap();
    let l = fixture(dir.path(), "lprism.obj", &shapes::l_prism());
    let out = dir.path().join("rot");
    let o = acd(&["rotate-test", s(&l), "--rotations", "8", "--seed", "1", "--no-remesh", "-o", s(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|l| field(l, "parts") == 2.0), "{text}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("rotations.json")).unwrap()).unwrap();
    assert_eq!(json["runs"].as_array().unwrap().len(), 8);

    let cube = fixture(dir.path(), "cube.obj", &shapes::icosahedron());
    let o = acd(&["rotate-test", s(&cube), "--rotations", "3", "--no-remesh", "-o", s(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().all(|l| field(l, "parts") == 1.0));
}

#[test]
fn raw_parts_and_verbose_log() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path(), "u.obj", &shapes::u_prism());
    let out = dir.path().join("out");
    let o = acd(&["-v", "decompose", s(&input), "-o", s(&out), "--no-remesh", "--raw-parts"]);
    assert!(o.status.success());
    let n = field(&stdout(&o), "parts") as usize;
    for k in 0..n {
        assert!(out.join(format!("raw_part_{k:03}.obj")).exists());
    }
    let log = String::from_utf8_lossy(&o.stderr);
    assert!(log.contains("cut 0: part 0"), "{log}");

    // raw pieces are not hulls and eval skips them
    let o = acd(&["eval", s(&input), s(&out)]);
    assert_eq!(field(&stdout(&o), "parts") as usize, n);
}
