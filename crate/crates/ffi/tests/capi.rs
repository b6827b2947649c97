use std::ffi::{c_void, CStr};
use std::ptr;

use three_spheres_ffi::*;

const BORDER: TsParams = TsParams {
    n: 2,
    p: 2.0,
    a0: 1.0,
    a1: 1.0,
    b1: 0.0,
};

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let mut len = 0usize;
    unsafe { ts_last_error_message(buf.as_mut_ptr(), buf.len(), &mut len) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn classical_weight_for_the_plane() {
    let mut w = 0.0;
    let st = unsafe { ts_classical_weight(&BORDER, 1.0, 2.0, 4.0, &mut w) };
    assert_eq!(st, TsStatus::Ok);
    assert!((w - 0.5).abs() < 1e-15);
}

#[test]
fn errors_map_to_status_codes() {
    let mut w = 0.0;
    let st = unsafe { ts_classical_weight(&BORDER, 2.0, 1.0, 4.0, &mut w) };
    assert_eq!(st, TsStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let gt = TsParams { p: 4.0, ..BORDER };
    let st = unsafe { ts_lambda_formula(TsBoundMode::BorderN, &gt, 1.0, 2.0, 4.0, 1.0, &mut w) };
    assert_eq!(st, TsStatus::RegimeMismatch);

    let st = unsafe { ts_classical_weight(ptr::null(), 1.0, 2.0, 4.0, &mut w) };
    assert_eq!(st, TsStatus::NullPointer);
    assert!(last_error().contains("params"));
}

#[test]
fn lambda_infinity_and_liouville() {
    let mut l = 0.0;
    assert_eq!(unsafe { ts_lambda_infinity(1.0, &mut l) }, TsStatus::Ok);
    assert!((l - (-1.0f64).exp()).abs() < 1e-15);
    let mut hit = false;
    assert_eq!(unsafe { ts_liouville_check(10.0, l, 0.0, 10.0, &mut hit) }, TsStatus::Ok);
    assert!(hit);
}

#[test]
fn short_error_buffer_is_truncated() {
    let mut w = 0.0;
    unsafe { ts_classical_weight(&BORDER, -1.0, 2.0, 4.0, &mut w) };
    let mut buf = [0x7f as std::ffi::c_char; 4];
    let mut len = 0usize;
    let st = unsafe { ts_last_error_message(buf.as_mut_ptr(), buf.len(), &mut len) };
    assert_eq!(st, TsStatus::BufferTooSmall);
    assert!(len > 3);
    assert_eq!(buf[3], 0);
}

#[test]
fn radial_profile_round_trip() {
    let mut h: *mut TsRadialProfile = ptr::null_mut();
    let st = unsafe { ts_radial_fundamental(&BORDER, 0.0, -1.0, 1.0, 4.0, 32, &mut h) };
    assert_eq!(st, TsStatus::Ok);
    let mut n = 0;
    unsafe { ts_radial_len(h, &mut n) };
    assert_eq!(n, 33);
    let (mut r, mut u) = (vec![0.0; n], vec![0.0; n]);
    let st = unsafe { ts_radial_copy(h, r.as_mut_ptr(), u.as_mut_ptr(), ptr::null_mut(), n) };
    assert_eq!(st, TsStatus::Ok);
    for (r, u) in r.iter().zip(&u) {
        assert!((u - r.ln()).abs() < 1e-14);
    }
    let st = unsafe { ts_radial_copy(h, r.as_mut_ptr(), ptr::null_mut(), ptr::null_mut(), n - 1) };
    assert_eq!(st, TsStatus::BufferTooSmall);

    let radii = [1.0, 2.0, 4.0];
    let mut b: *mut TsBallProfile = ptr::null_mut();
    let st = unsafe { ts_ball_profile_from_radial(h, radii.as_ptr(), 3, TsGeometry::BallMax, &mut b) };
    assert_eq!(st, TsStatus::Ok);
    let (mut margin, mut passed) = (0.0, false);
    let st = unsafe { ts_check_three_spheres(b, TsBoundMode::ClassicalN, 0.0, 1.0, 2.0, 4.0, false, &mut margin, &mut passed) };
    assert_eq!(st, TsStatus::Ok);
    assert!(passed);
    assert!(margin.abs() < 1e-12);
    let (mut star, mut all) = (0.0, true);
    assert_eq!(unsafe { ts_lambda_star(b, 1.0, 2.0, 4.0, &mut star, &mut all) }, TsStatus::Ok);
    assert!(!all);
    assert!((star - 0.5).abs() < 1e-12);
    unsafe {
        ts_ball_profile_free(b);
        ts_radial_free(h);
    }
}

#[test]
fn extremal_rejects_bad_sign() {
    let p = TsParams { b1: 1.0, ..BORDER };
    let mut h: *mut TsRadialProfile = ptr::null_mut();
    let st = unsafe { ts_radial_extremal(&p, 0, 0.0, 1.0, 1.0, 4.0, 16, &mut h) };
    assert_eq!(st, TsStatus::InvalidArgument);
    assert!(h.is_null());
    let st = unsafe { ts_radial_extremal(&p, -1, 0.0, 1.0, 1.0, 4.0, 16, &mut h) };
    assert_eq!(st, TsStatus::Ok);
    unsafe { ts_radial_free(h) };
}

#[test]
fn radial_bvp_hits_both_ends() {
    let mut h: *mut TsRadialProfile = ptr::null_mut();
    let st = unsafe {
        ts_radial_bvp(&BORDER, TsPreset::PLaplace, TsEnvelope::GlobalDecay, 1.0, 0.0, 4.0, 1.0, 128, 1e-12, &mut h)
    };
    assert_eq!(st, TsStatus::Ok);
    let mut n = 0;
    unsafe { ts_radial_len(h, &mut n) };
    let mut u = vec![0.0; n];
    unsafe { ts_radial_copy(h, ptr::null_mut(), u.as_mut_ptr(), ptr::null_mut(), n) };
    assert!(u[0].abs() < 1e-12);
    assert!((u[n - 1] - 1.0).abs() < 1e-10);
    unsafe { ts_radial_free(h) };
}

extern "C" fn saddle(x: f64, y: f64, user: *mut c_void) -> f64 {
    let calls = unsafe { &mut *(user as *mut usize) };
    *calls += 1;
    x * x - y * y
}

#[test]
fn fdm_solve_reproduces_harmonic_data() {
    let mut calls = 0usize;
    let mut iters = 0usize;
    let mut g: *mut TsGrid = ptr::null_mut();
    let st = unsafe {
        ts_fdm_solve(
            &BORDER,
            TsPreset::PLaplace,
            TsEnvelope::GlobalDecay,
            0.0,
            0.0,
            1.0,
            0.0625,
            1e-6,
            1e-12,
            200,
            TsScheme::Picard,
            Some(saddle),
            &mut calls as *mut usize as *mut c_void,
            &mut iters,
            &mut g,
        )
    };
    assert_eq!(st, TsStatus::Ok, "{}", last_error());
    assert!(calls > 0);
    let mut n = 0;
    unsafe { ts_grid_len(g, &mut n) };
    let mut worst = 0.0f64;
    for i in 0..n {
        let (mut x, mut y, mut u, mut k) = (0.0, 0.0, 0.0, TsNodeKind::Exterior);
        assert_eq!(unsafe { ts_grid_node(g, i, &mut x, &mut y, &mut u, &mut k) }, TsStatus::Ok);
        if k == TsNodeKind::Interior {
            worst = worst.max((u - (x * x - y * y)).abs());
        }
    }
    assert!(worst < 1e-9, "max error {worst}");
    let (mut x, mut y, mut u, mut k) = (0.0, 0.0, 0.0, TsNodeKind::Exterior);
    assert_eq!(unsafe { ts_grid_node(g, n, &mut x, &mut y, &mut u, &mut k) }, TsStatus::InvalidArgument);

    let radii = [0.25, 0.5, 0.75];
    let mut b: *mut TsBallProfile = ptr::null_mut();
    let st = unsafe { ts_ball_profile_from_grid(g, 0.0, 0.0, radii.as_ptr(), 3, TsGeometry::BallMax, &mut b) };
    assert_eq!(st, TsStatus::Ok, "{}", last_error());
    let (mut hi, mut lo) = (0.0, 0.0);
    assert_eq!(unsafe { ts_ball_profile_extrema(b, 0.5, &mut hi, &mut lo) }, TsStatus::Ok);
    assert!((hi - 0.25).abs() < 1e-9 && (lo + 0.25).abs() < 1e-9);
    unsafe {
        ts_ball_profile_free(b);
        ts_grid_free(g);
    }
}

#[test]
fn missing_callback_is_a_null_pointer() {
    let mut g: *mut TsGrid = ptr::null_mut();
    let st = unsafe {
        ts_fdm_solve(
            &BORDER,
            TsPreset::PLaplace,
            TsEnvelope::GlobalDecay,
            0.0,
            0.0,
            1.0,
            0.125,
            1e-6,
            1e-10,
            50,
            TsScheme::Picard,
            None,
            ptr::null_mut(),
            ptr::null_mut(),
            &mut g,
        )
    };
    assert_eq!(st, TsStatus::NullPointer);
}

#[test]
fn free_accepts_null() {
    unsafe {
        ts_radial_free(ptr::null_mut());
        ts_grid_free(ptr::null_mut());
        ts_ball_profile_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = include_str!("../include/three_spheres.h");
    for f in [
        "ts_last_error_message",
        "ts_classical_weight",
        "ts_lambda_formula",
        "ts_radial_fundamental",
        "ts_fdm_solve",
        "ts_check_three_spheres",
        "ts_lambda_star",
        "ts_ball_profile_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}
