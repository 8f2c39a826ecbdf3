use std::ffi::CString;
use std::ptr;

use mfg_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { mfg_last_error(buf.as_mut_ptr(), buf.len()) };
    let s: Vec<u8> = buf[..n.min(255)].iter().map(|c| *c as u8).collect();
    String::from_utf8(s).unwrap()
}

fn grid(dim: usize, nx: usize, nt: usize) -> *mut MfgGrid {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { mfg_grid_new(dim, nx, nt, 1.0, ptr::null(), ptr::null(), &mut g) }, MfgStatus::Ok);
    g
}

#[test]
fn grid_handles_report_sizes() {
    let g = grid(2, 7, 4);
    unsafe {
        assert_eq!(mfg_grid_npts(g), 81);
        assert_eq!(mfg_grid_nlev(g), 5);
        assert_eq!(mfg_grid_face_points(g), 36);
        let mut xy = vec![0.0; 3 * 81];
        assert_eq!(mfg_grid_coords(g, xy.as_mut_ptr(), xy.len()), MfgStatus::Ok);
        assert_eq!(&xy[3 * 80..], &[1.0, 1.0, 0.0]);
        assert_eq!(mfg_grid_coords(g, xy.as_mut_ptr(), 5), MfgStatus::InvalidInput);
        mfg_grid_free(g);
        assert_eq!(mfg_grid_npts(ptr::null()), 0);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut g = ptr::null_mut();
    let st = unsafe { mfg_grid_new(4, 7, 0, 1.0, ptr::null(), ptr::null(), &mut g) };
    assert_eq!(st, MfgStatus::InvalidInput);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
    let st = unsafe { mfg_grid_new(1, 7, 0, 1.0, ptr::null(), ptr::null(), ptr::null_mut()) };
    assert_eq!(st, MfgStatus::NullPointer);
    assert!(last_error().contains("out"));
    let cmd = CString::new("forward").unwrap();
    let cfg = CString::new("/nonexistent/run.toml").unwrap();
    let out = CString::new("/tmp").unwrap();
    assert_eq!(unsafe { mfg_run(cmd.as_ptr(), cfg.as_ptr(), out.as_ptr(), true) }, MfgStatus::InvalidInput);
}

#[test]
fn baseline_density_has_unit_mass() {
    let g = grid(1, 15, 0);
    unsafe {
        let n = mfg_grid_npts(g);
        let mut xyz = vec![0.0; 3 * n];
        mfg_grid_coords(g, xyz.as_mut_ptr(), xyz.len());
        let seed: Vec<f64> = (0..n).map(|p| (3.0 * xyz[3 * p]).sin()).collect();
        let mut b = ptr::null_mut();
        assert_eq!(mfg_baseline_new(g, seed.as_ptr(), n, &mut b), MfgStatus::Ok);
        let mut m = vec![0.0; n];
        assert_eq!(mfg_baseline_density(b, m.as_mut_ptr(), n), MfgStatus::Ok);
        let h = 1.0 / (n - 1) as f64;
        let mass: f64 = m.iter().enumerate().map(|(i, v)| if i == 0 || i == n - 1 { 0.5 * v } else { *v }).sum::<f64>() * h;
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(mfg_baseline_lambda(b).is_finite());
        mfg_baseline_free(b);
        mfg_grid_free(g);
    }
}

#[test]
fn stationary_probing_through_the_c_abi() {
    let g = grid(3, 7, 0);
    unsafe {
        let n = mfg_grid_npts(g);
        let mut xyz = vec![0.0; 3 * n];
        mfg_grid_coords(g, xyz.as_mut_ptr(), xyz.len());
        let f1: Vec<f64> = (0..n).map(|p| 1.0 + 0.4 * (2.0 * std::f64::consts::PI * xyz[3 * p]).cos()).collect();
        let mut b = ptr::null_mut();
        assert_eq!(mfg_baseline_new(g, ptr::null(), 0, &mut b), MfgStatus::Ok);

        let (k, radii) = ([1.0, 0.0, 0.0], [2.0, 4.0, 8.0]);
        let (mut omega, mut slope) = ([0.0; 3], 0.0);
        let st = mfg_remainder_decay(g, b, f1.as_ptr(), k.as_ptr(), radii.as_ptr(), 3, omega.as_mut_ptr(), &mut slope);
        assert_eq!(st, MfgStatus::Ok, "{}", last_error());
        assert!(omega[2] < omega[0] && slope < -0.5, "{omega:?} {slope}");

        let mut rec = vec![0.0; n];
        assert_eq!(mfg_probe_and_recover_f1(g, b, f1.as_ptr(), 1, 4.0, rec.as_mut_ptr()), MfgStatus::Ok);
        let err = rec.iter().zip(&f1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            / f1.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(err < 0.1, "{err}");
        mfg_baseline_free(b);
        mfg_grid_free(g);
    }
}
