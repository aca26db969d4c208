use std::path::PathBuf;
use std::process::{Command, Output};

fn gwg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwg")).args(args).output().expect("run gwg")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("commands").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).display().to_string()
}

#[test]
fn convergence_csv_is_reproducible() {
    let (a, b) = (scratch("csv_a"), scratch("csv_b"));
    for dir in [&a, &b] {
        let out = gwg(&["convergence", "--case", "1", "--element", "1,0,1,0,0", "--levels", "2", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = std::fs::read(a.join("convergence_case1_10100.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("convergence_case1_10100.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("h,energy_err,energy_order,l2u_err,l2u_order,l2p_err,l2p_order\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn unfamiliar_tuple_is_accepted() {
    let dir = scratch("tuple");
    let out = gwg(&["convergence", "--element", "3,2,2,2,2", "--levels", "1", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mu = 0"));
}

#[test]
fn stabilizer_switches_on_for_rich_pressure() {
    let dir = scratch("mu");
    let out = gwg(&["convergence", "--element", "2,1,0,2,2", "--levels", "1", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("mu = 1"));
}

#[test]
fn malformed_element_is_rejected() {
    let out = gwg(&["convergence", "--element", "1,2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected 5 degrees"));
}

#[test]
fn flow_case_has_no_convergence_table() {
    let out = gwg(&["convergence", "--case", "cavity"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no exact solution"));
}

#[test]
fn cavity_solve_writes_vtk_and_matrix() {
    let dir = scratch("cavity");
    let out = gwg(&["solve", "--case", "cavity", "--n", "6", "--dump-matrix", "--out", dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(!stdout.contains("[FAIL]"), "{stdout}");
    let vtk = std::fs::read_to_string(dir.join("cavity_21011.vtk")).unwrap();
    assert!(vtk.contains("DATASET UNSTRUCTURED_GRID"));
    assert!(vtk.contains("CELLS 72"));
    let mtx =
        std::fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "mtx")).count();
    assert!(mtx >= 1);
}

#[test]
fn custom_mesh_series() {
    let dir = scratch("custom");
    let mesh = fixture("square_h10.msh");
    let out = gwg(&["convergence", "--case", "custom", "--mesh", &mesh, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_mesh_file_is_an_error() {
    let out = gwg(&["solve", "--case", "cylinder1", "--mesh", "/nonexistent/mesh.msh"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_flag_reports_orders() {
    let dir = scratch("check");
    let out = gwg(&[
        "convergence",
        "--case",
        "2",
        "--element",
        "2,1,1,1,1",
        "--levels",
        "3",
        "--check",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.matches("[PASS]").count(), 4, "{stdout}");
}

#[test]
fn verify_passes() {
    let out = gwg(&["verify", "--draws", "20"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(!stdout.contains("[FAIL]"));
}
