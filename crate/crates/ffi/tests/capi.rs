use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use rst_ffi::*;

fn last_error() -> String {
    let p = rst_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn diagram_handles() {
    let births = [0.0, 0.1, 0.5];
    let deaths = [1.0, 0.3, 0.6];
    let mut pd = ptr::null_mut();
    unsafe {
        assert_eq!(rst_diagram_new(0, births.as_ptr(), deaths.as_ptr(), 3, &mut pd), RstStatus::Ok);
        assert_eq!(rst_diagram_len(pd), 3);
        rst_diagram_free(pd);
        rst_diagram_free(ptr::null_mut());
        assert_eq!(rst_diagram_len(ptr::null()), 0);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut pd = ptr::null_mut();
    unsafe {
        // death below birth
        assert_eq!(rst_diagram_new(0, [1.0].as_ptr(), [0.5].as_ptr(), 1, &mut pd), RstStatus::Invalid);
        assert!(pd.is_null());
        assert_eq!(rst_diagram_new(0, ptr::null(), [0.5].as_ptr(), 1, &mut pd), RstStatus::NullPointer);
        assert!(last_error().contains("births"));

        let missing = CString::new("/nonexistent/diagram.csv").unwrap();
        assert_eq!(rst_diagram_read_csv(missing.as_ptr(), &mut pd), RstStatus::Parse);
        assert!(last_error().contains("/nonexistent/diagram.csv"));

        let mut model = ptr::null_mut();
        assert_eq!(rst_fit(ptr::null(), 2, 1.0, 0, 0, &mut model), RstStatus::NullPointer);
        assert!(rst_model_to_json(ptr::null()).is_null());
    }
}

#[test]
fn multiplicity_rules() {
    let p = [0.001, 0.02, 0.04, 0.2, 0.9];
    let mut bh = [9u8; 5];
    let mut bf = [9u8; 5];
    unsafe {
        assert_eq!(rst_bh_fdr(p.as_ptr(), 5, 0.05, bh.as_mut_ptr()), RstStatus::Ok);
        assert_eq!(rst_bonferroni(p.as_ptr(), 5, 0.05, bf.as_mut_ptr()), RstStatus::Ok);
        assert_eq!(rst_bh_fdr([1.5].as_ptr(), 1, 0.05, bh.as_mut_ptr()), RstStatus::Invalid);
    }
    assert_eq!(bh, [1, 1, 0, 0, 0]);
    assert_eq!(bf, [1, 0, 0, 0, 0]);
}

#[test]
fn two_circles_pipeline() {
    unsafe {
        let mut pd = ptr::null_mut();
        assert_eq!(rst_two_circles_diagram(500, 300, 4.0, 2.0, 0.3, 64, 0, 0, &mut pd), RstStatus::Ok);
        assert!(rst_diagram_len(pd) >= 5);

        let mut model = ptr::null_mut();
        assert_eq!(rst_fit(pd, 2, 1.0, 2, 0, &mut model), RstStatus::Ok, "{}", last_error());
        assert_eq!(rst_model_param_count(model), 4);
        let mut theta = [0.0; 4];
        assert_eq!(rst_model_theta(model, theta.as_mut_ptr(), 4), RstStatus::Ok);
        assert!(theta[0] > 0.0 && theta[1] > 0.0);
        assert_eq!(rst_model_theta(model, theta.as_mut_ptr(), 3), RstStatus::Invalid);

        let json = rst_model_to_json(model);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        rst_string_free(json);
        assert!(text.contains("theta_H"));

        let mut ens = ptr::null_mut();
        assert_eq!(rst_replicate(pd, model, 20, 5, 3, 4, 7, &mut ens), RstStatus::Ok, "{}", last_error());
        assert_eq!(rst_ensemble_len(ens), 12);
        let mut p = [0.0; 5];
        assert_eq!(rst_order_stat_test(pd, ens, 5, p.as_mut_ptr()), RstStatus::Ok);
        assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));

        rst_ensemble_free(ens);
        rst_model_free(model);
        rst_diagram_free(pd);
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_abi() {
    let header = std::fs::read_to_string(crate_dir().join("include/rst.h")).unwrap();
    for name in [
        "typedef struct RstDiagram RstDiagram;",
        "typedef struct RstModel RstModel;",
        "typedef struct RstEnsemble RstEnsemble;",
        "RST_STATUS_NUMERIC = 4",
        "rst_last_error(void)",
        "rst_fit(",
        "rst_replicate(",
        "rst_order_stat_test(",
        "rst_bh_fdr(",
        "rst_bonferroni(",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// Static library next to the test executable's `deps` directory.
fn staticlib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let lib = dir.join("librst_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = staticlib() else {
        panic!("librst_ffi.a not found next to the test binary");
    };
    let out = std::env::temp_dir().join(format!("rst_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(crate_dir().join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("cc");
    assert!(status.success());
    let run = Command::new(Path::new(&out)).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "11000 10000");
}
