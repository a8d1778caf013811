use std::ffi::{CStr, CString};
use std::ptr;

use eitlab_ffi::*;

fn last_error() -> String {
    let p = eitlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn two_phase_kernel_round_trip() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(eitlab_two_phase_new(3.0, &mut h), EitlabStatus::Ok);
        let (xi, eta) = ([0.1, 0.2, 0.3], [-0.2, 0.1, -0.4]);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(eitlab_two_phase_eval(h, xi.as_ptr(), eta.as_ptr(), &mut a), EitlabStatus::Ok);
        assert_eq!(eitlab_two_phase_eval(h, eta.as_ptr(), xi.as_ptr(), &mut b), EitlabStatus::Ok);
        assert!((a - b).abs() <= 1e-14 * a.abs());
        let mut g = [0.0; 3];
        assert_eq!(eitlab_two_phase_grad(h, xi.as_ptr(), eta.as_ptr(), EitlabSide::Auto, g.as_mut_ptr()), EitlabStatus::Ok);
        assert!(g.iter().all(|v| v.is_finite()));
        let on = [0.1, 0.2, 0.0];
        assert_eq!(eitlab_two_phase_grad(h, on.as_ptr(), eta.as_ptr(), EitlabSide::Auto, g.as_mut_ptr()), EitlabStatus::OnInterface);
        assert_eq!(eitlab_two_phase_grad(h, on.as_ptr(), eta.as_ptr(), EitlabSide::Upper, g.as_mut_ptr()), EitlabStatus::Ok);
        assert_eq!(eitlab_two_phase_eval(h, xi.as_ptr(), xi.as_ptr(), &mut a), EitlabStatus::Singularity);
        assert!(last_error().contains("coincide"));
        eitlab_two_phase_free(h);
        eitlab_two_phase_free(ptr::null_mut());
    }
}

#[test]
fn unit_contrast_matches_laplace() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(eitlab_two_phase_new(1.0, &mut h), EitlabStatus::Ok);
        let (x, y) = ([0.3, -0.1, 0.5], [0.0, 0.2, -0.7]);
        let (mut a, mut b) = (0.0, 0.0);
        eitlab_two_phase_eval(h, x.as_ptr(), y.as_ptr(), &mut a);
        eitlab_laplace_eval(x.as_ptr(), y.as_ptr(), &mut b);
        assert_eq!(a, b);
        eitlab_two_phase_free(h);
    }
}

#[test]
fn aniso_rejects_indefinite_matrix() {
    unsafe {
        let mut h = ptr::null_mut();
        let bad = [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(eitlab_aniso_new(bad.as_ptr(), 2.0, &mut h), EitlabStatus::NotSpd);
        assert!(h.is_null());
        let good = [2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5];
        assert_eq!(eitlab_aniso_new(good.as_ptr(), 2.0, &mut h), EitlabStatus::Ok);
        let (x, y) = ([0.3, -0.1, 0.5], [0.0, 0.2, -0.7]);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(eitlab_aniso_eval(h, x.as_ptr(), y.as_ptr(), &mut a), EitlabStatus::Ok);
        assert_eq!(eitlab_aniso_eval(h, y.as_ptr(), x.as_ptr(), &mut b), EitlabStatus::Ok);
        assert!((a - b).abs() <= 1e-12 * a.abs());
        eitlab_aniso_free(h);
    }
}

#[test]
fn omega_and_budget() {
    unsafe {
        let (mut w, mut t) = (0.0, 0.0);
        assert_eq!(eitlab_omega_inverse(0.5, 0.05, &mut t), EitlabStatus::Ok);
        assert_eq!(eitlab_omega_eval(0.5, t, &mut w), EitlabStatus::Ok);
        assert!((w - 0.05).abs() <= 1e-12);
        assert_eq!(eitlab_omega_eval(0.5, -1.0, &mut w), EitlabStatus::Domain);
        assert_eq!(eitlab_omega_iterate(0.5, 2, 0.01, &mut w), EitlabStatus::Ok);

        let inputs = EitlabBudgetInputs { epsilon: 1.0, e: 1.0, c: 2.0, k: 3, n: 3, iterates: 0 };
        let mut out = EitlabBudgetResult { final_bound: 0.0, lipschitz_constant: 0.0, branch: EitlabBranch::Recursion, delta_len: 0 };
        let mut delta = [0.0; 4];
        assert_eq!(eitlab_delta_recursion(&inputs, &mut out, delta.as_mut_ptr(), 4), EitlabStatus::Ok);
        assert_eq!(out.branch, EitlabBranch::Trivial);
        assert_eq!(out.lipschitz_constant, std::f64::consts::E.powi(2));
        assert_eq!(out.delta_len, 4);
        assert_eq!(delta[0], 0.0);
        assert_eq!(eitlab_delta_recursion(&inputs, &mut out, delta.as_mut_ptr(), 2), EitlabStatus::BufferTooSmall);
        assert_eq!(eitlab_delta_recursion(&inputs, &mut out, ptr::null_mut(), 0), EitlabStatus::Ok);
        let bad = EitlabBudgetInputs { c: 0.5, ..inputs };
        assert_eq!(eitlab_delta_recursion(&bad, &mut out, ptr::null_mut(), 0), EitlabStatus::Domain);
    }
}

#[test]
fn mesh_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("a.txt");
    let mesh = eitlab::geometry::gen_box_mesh(&eitlab::geometry::BoxAxes::uniform_cube(2), |_| Ok(1)).unwrap();
    mesh.write_text(std::fs::File::create(&src).unwrap()).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        let p = CString::new(src.to_str().unwrap()).unwrap();
        assert_eq!(eitlab_mesh_read(p.as_ptr(), &mut h), EitlabStatus::Ok);
        let (mut nv, mut ne) = (0, 0);
        assert_eq!(eitlab_mesh_counts(h, &mut nv, &mut ne), EitlabStatus::Ok);
        assert_eq!((nv, ne), (27, 48));
        let mut vol = 0.0;
        eitlab_mesh_volume(h, &mut vol);
        assert!((vol - 1.0).abs() < 1e-12);
        assert_eq!(eitlab_mesh_validate(h), EitlabStatus::Ok);
        let mut v = [0.0; 3];
        assert_eq!(eitlab_mesh_vertex(h, 26, v.as_mut_ptr()), EitlabStatus::Ok);
        assert_eq!(v, [1.0, 1.0, 1.0]);
        assert_eq!(eitlab_mesh_vertex(h, 27, v.as_mut_ptr()), EitlabStatus::InvalidArgument);
        let dst = CString::new(dir.path().join("b.txt").to_str().unwrap()).unwrap();
        assert_eq!(eitlab_mesh_write(h, dst.as_ptr()), EitlabStatus::Ok);
        assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(dir.path().join("b.txt")).unwrap());
        eitlab_mesh_free(h);
        let missing = CString::new(dir.path().join("none.txt").to_str().unwrap()).unwrap();
        assert_eq!(eitlab_mesh_read(missing.as_ptr(), &mut h), EitlabStatus::Io);
        assert_eq!(eitlab_mesh_read(ptr::null(), &mut h), EitlabStatus::NullPointer);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/eitlab.h")).unwrap();
    for f in [
        "eitlab_last_error",
        "eitlab_version",
        "eitlab_laplace_eval",
        "eitlab_two_phase_new",
        "eitlab_aniso_grad",
        "eitlab_omega_inverse",
        "eitlab_delta_recursion",
        "eitlab_mesh_read",
        "eitlab_mesh_free",
        "EITLAB_STATUS_NOT_SPD",
    ] {
        assert!(header.contains(f), "{f}");
    }
}
