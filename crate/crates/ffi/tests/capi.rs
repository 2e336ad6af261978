use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use hyperlab_ffi::*;

fn last_error() -> String {
    let p = hl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn eigenvector_is_fixed_up_to_phase() {
    unsafe {
        let mut op = ptr::null_mut();
        assert_eq!(hl_operator_backward_shift(2.0, 32, &mut op), HlStatus::Ok);
        assert_eq!(hl_operator_dim(op), 32);

        let mut v = ptr::null_mut();
        let mut residual = f64::NAN;
        assert_eq!(hl_eigenvector_2b(0.25, 2.0, 32, &mut v, &mut residual), HlStatus::Ok);
        assert!(residual < 1e-8);
        assert!((hl_vector_norm(v) - 1.0).abs() < 1e-12);

        // λ = i, so T^4 v = v up to truncation.
        let mut w = ptr::null_mut();
        assert_eq!(hl_operator_power_apply(op, v, 4, &mut w), HlStatus::Ok);
        let (mut a, mut b) = (vec![0.0; 32], vec![0.0; 32]);
        let (mut c, mut d) = (vec![0.0; 32], vec![0.0; 32]);
        assert_eq!(hl_vector_get(v, a.as_mut_ptr(), b.as_mut_ptr(), 32), HlStatus::Ok);
        assert_eq!(hl_vector_get(w, c.as_mut_ptr(), d.as_mut_ptr(), 32), HlStatus::Ok);
        let err: f64 = (0..32).map(|k| (a[k] - c[k]).powi(2) + (b[k] - d[k]).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-6, "{err}");

        hl_vector_free(w);
        hl_vector_free(v);
        hl_operator_free(op);
    }
}

#[test]
fn vectors_round_trip() {
    unsafe {
        let re = [1.0, 0.0, -2.0];
        let im = [0.5, 3.0, 0.0];
        let mut v = ptr::null_mut();
        assert_eq!(hl_vector_new(re.as_ptr(), im.as_ptr(), 3, &mut v), HlStatus::Ok);
        assert_eq!(hl_vector_dim(v), 3);
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        assert_eq!(hl_vector_get(v, a.as_mut_ptr(), b.as_mut_ptr(), 3), HlStatus::Ok);
        assert_eq!((a, b), (re, im));
        assert_eq!(hl_vector_get(v, a.as_mut_ptr(), b.as_mut_ptr(), 2), HlStatus::DimensionMismatch);
        hl_vector_free(v);
    }
}

#[test]
fn errors_carry_a_status_and_message() {
    unsafe {
        let mut op = ptr::null_mut();
        assert_eq!(hl_operator_backward_shift(2.0, 0, &mut op), HlStatus::InvalidArgument);
        assert!(op.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(hl_operator_backward_shift(2.0, 4, ptr::null_mut()), HlStatus::NullPointer);
        assert!(last_error().contains("out_op"));

        let re = [f64::NAN];
        let im = [0.0];
        let mut v = ptr::null_mut();
        assert_eq!(hl_vector_new(re.as_ptr(), im.as_ptr(), 1, &mut v), HlStatus::Numerical);

        // Null handles are accepted by the free functions and accessors.
        hl_operator_free(ptr::null_mut());
        hl_vector_free(ptr::null_mut());
        assert_eq!(hl_operator_dim(ptr::null()), 0);
        assert!(hl_vector_norm(ptr::null()).is_nan());
    }
}

#[test]
fn khinchine_single_term_is_exact() {
    unsafe {
        let (re, im) = ([3.0], [4.0]);
        let mut r = 0.0;
        assert_eq!(hl_khinchine_ratio(re.as_ptr(), im.as_ptr(), 1, 2000, 5, &mut r), HlStatus::Ok);
        assert!((r - 1.0).abs() < 1e-12);
    }
}

#[test]
fn simultaneous_solver_matches_brute_force() {
    unsafe {
        let angles = [2f64.sqrt().fract(), 3f64.sqrt().fract()];
        let targets = [0.3, 0.8];
        let mut p = 0;
        assert_eq!(
            hl_solve_simultaneous(angles.as_ptr(), targets.as_ptr(), 2, 0.1, 1_000_000, &mut p),
            HlStatus::Ok
        );
        assert!(p > 0);
        let close = |q: u64| {
            angles.iter().zip(&targets).all(|(&a, &t)| {
                let x = (q as f64 * a - t).rem_euclid(1.0);
                2.0 * (std::f64::consts::PI * x).sin().abs() < 0.1
            })
        };
        assert!(close(p));
        assert!((1..p).all(|q| !close(q)));

        // Nothing within one step.
        assert_eq!(hl_solve_simultaneous(angles.as_ptr(), targets.as_ptr(), 2, 0.01, 1, &mut p), HlStatus::Ok);
        assert_eq!(p, 0);
    }
}

#[test]
fn cantor_field_lookup_and_verify() {
    unsafe {
        let mut fam = ptr::null_mut();
        assert_eq!(hl_family_sqrt_prime_2b(2.0, 64, 256, &mut fam), HlStatus::Ok);
        assert_eq!(hl_family_len(fam), 256);
        let mut field = ptr::null_mut();
        assert_eq!(hl_cantor_build(fam, 0, 3, &mut field), HlStatus::Ok);

        let mut theta0 = 0.0;
        let mut theta1 = 0.0;
        let (mut v0, mut v1) = (ptr::null_mut(), ptr::null_mut());
        let root = CString::new("").unwrap();
        let leaf = CString::new("000").unwrap();
        assert_eq!(hl_cantor_lookup(field, root.as_ptr(), &mut theta0, &mut v0), HlStatus::Ok);
        assert_eq!(hl_cantor_lookup(field, leaf.as_ptr(), &mut theta1, &mut v1), HlStatus::Ok);
        // Left children copy their parent.
        assert_eq!(theta0, theta1);

        let bad = CString::new("0000").unwrap();
        let mut v2 = ptr::null_mut();
        assert_eq!(hl_cantor_lookup(field, bad.as_ptr(), &mut theta1, &mut v2), HlStatus::NotFound);
        assert!(v2.is_null());

        let (mut passed, mut margin, mut violations) = (-1, f64::NAN, usize::MAX);
        assert_eq!(hl_cantor_verify(field, &mut passed, &mut margin, &mut violations), HlStatus::Ok);
        assert!(passed == 0 || passed == 1);
        assert!(margin.is_finite());
        assert_eq!(violations, 0);

        hl_vector_free(v0);
        hl_vector_free(v1);
        hl_cantor_free(field);
        hl_family_free(fam);
    }
}

#[test]
fn run_config_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/minimal.toml")).unwrap();
    let cfg = CString::new(text.clone()).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut passed = -1;
    unsafe {
        assert_eq!(hl_run_config(cfg.as_ptr(), out.as_ptr(), &mut passed), HlStatus::Ok);
        assert_eq!(passed, 1);
        assert!(dir.path().join("summary.json").exists());

        let bad = CString::new(text.replace("dimension = 8", "dimension = 0")).unwrap();
        assert_eq!(hl_run_config(bad.as_ptr(), out.as_ptr(), &mut passed), HlStatus::Config);
        assert!(last_error().contains("dimension"));
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hyperlab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["hl_operator_backward_shift", "hl_cantor_lookup", "hl_run_config", "HL_STATUS_PANIC"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(status.success());
}
