//! End-to-end exercise of the command-line interface: exit codes, emitted
//! files, and byte-stability of rerun data files.

use std::process::Command;

fn lamina() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lamina"))
}

#[test]
fn run_preset_e1_writes_stable_files() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let status = lamina()
            .args(["run", "--preset", "E1", "--serial", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["convergence.csv", "convergence.dat"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} not byte-identical across reruns");
    }
    let csv = std::fs::read_to_string(out1.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("eps,h,l1_error,l2_error,energy_fine,energy_eff,iterations"));
    assert!(out1.join("convergence.meta.toml").exists());
}

#[test]
fn demo_common_atom_runs() {
    let dir = tempfile::tempdir().unwrap();
    let status = lamina()
        .args(["demo-common-atom", "--preset", "E4", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("demo.csv")).unwrap();
    assert!(csv.starts_with("eps,l1_distance,cauchy_a,cauchy_b"));
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "[law]\nkind = \"heat\"\na = [[1.0]]\n[grid]\ndimension = 1\nresolution = 8\n[sweep]\neps = [1e-3, 1e-2]\n",
    )
    .unwrap();
    let status = lamina().arg("run").arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn unknown_preset_exits_one() {
    let status = lamina()
        .args(["run", "--preset", "E9"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn tensors_prints_machine_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("law.toml");
    std::fs::write(&path, "[law]\nkind = \"heat\"\na = [[2.0, 1.0], [1.0, 2.0]]\n").unwrap();
    let output = lamina().arg("tensors").arg(&path).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("aperp 1 1 1 1 2"));
    assert!(text.contains("apar 1 2 1 2 1.5"));
    assert!(text.contains("iface 1 1 2"));
}

#[test]
fn custom_config_with_solutions_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &path,
        format!(
            r#"
[profile]
length = "1"

[[profile.feature]]
center = "1/3"
kind = "soft"

[law]
kind = "heat"
a = [[1.0]]

[grid]
dimension = 1
resolution = 16

[sweep]
eps = [1e-2, 1e-3]

[output]
dir = "{}"
solutions = true
"#,
            out.display()
        ),
    )
    .unwrap();
    let status = lamina().arg("run").arg(&path).status().unwrap();
    assert!(status.success());
    assert!(out.join("solution_limit.csv").exists());
    assert!(out.join("solution_fine_eps0.csv").exists());
    let csv = std::fs::read_to_string(out.join("solution_limit.csv")).unwrap();
    assert!(csv.starts_with("x1,u1"));
}

#[test]
fn two_d_solutions_export_jump_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp2d.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &path,
        format!(
            r#"
[profile]
length = "1"

[[profile.feature]]
center = "1/2"
kind = "soft"

[law]
kind = "heat"
a = [[1.0, 0.0], [0.0, 1.0]]

[grid]
dimension = 2
resolution = 8

[sweep]
eps = [1e-2]

[output]
dir = "{}"
solutions = true
"#,
            out.display()
        ),
    )
    .unwrap();
    let status = lamina().arg("run").arg(&path).status().unwrap();
    assert!(status.success());
    let eff = std::fs::read_to_string(out.join("solution_effective.csv")).unwrap();
    assert!(eff.contains("# atom t=0.5"));
    assert!(eff.contains("jump_u1"));
}
