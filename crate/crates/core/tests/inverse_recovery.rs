use mfg_core::cauchy::extract_c2;
use mfg_core::cgo::CgoOptions;
use mfg_core::forward::build_stationary_baseline;
use mfg_core::inverse::stationary::*;
use mfg_core::{Grid, GridSpec};
use num_complex::Complex64 as C;

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn f1_true(x: &[f64; 3]) -> f64 {
    1.0 + 0.4 * (TAU * x[0]).cos() + 0.3 * (TAU * x[1]).sin()
}

fn rel_l2(g: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
    let n: Vec<f64> = b.iter().map(|y| y * y).collect();
    (g.integrate(&d) / g.integrate(&n)).sqrt()
}

fn pairing_gap(dim: usize, nx: usize) -> f64 {
    let g = Grid::new(GridSpec::unit_box(dim, nx, 0)).unwrap();
    let v0 = g.sample(0.0, |x, _| 0.3 * (3.0 * x[0]).sin() * (2.0 * x[1]).cos() + 0.2 * x[0]);
    let w: Vec<C> = (0..g.npts)
        .map(|p| {
            let x = g.coords(p);
            C::new(0.3 * x[0], 0.7 * x[1]).exp() * (1.0 + x[0] * x[1])
        })
        .collect();
    let u: Vec<C> = (0..g.npts)
        .map(|p| {
            let x = g.coords(p);
            C::new((1.3 * x[0]).cos() + x[2], (0.9 * x[1]).sin() - 0.5 * x[0] * x[0])
        })
        .collect();
    let rw = extract_c2(&g, "w", &w, None).unwrap();
    let ru = extract_c2(&g, "u", &u, None).unwrap();
    let dn = g.restrict_to_boundary(&v0).unwrap().normal;
    let b = boundary_pairing(&g, &rw.values, &rw.normal, &ru.values, &ru.normal, &dn).unwrap();
    let i = interior_pairing(&g, &v0, &w, &u).unwrap();
    (b - i).norm() / i.norm().max(1.0)
}

#[test]
fn pairing_identity_is_second_order() {
    for dim in [2, 3] {
        let ns: &[usize] = if dim == 2 { &[7, 15, 31] } else { &[15, 31] };
        let gaps: Vec<f64> = ns.iter().map(|&n| pairing_gap(dim, n)).collect();
        for w in gaps.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.7, "dim {dim}: gaps {gaps:?}");
        }
    }
}

#[test]
fn identical_records_pair_to_zero() {
    let g = Grid::new(GridSpec::unit_box(3, 7, 0)).unwrap();
    let base = build_stationary_baseline(&g, None).unwrap();
    let f1 = g.sample(0.0, |x, _| f1_true(x));
    let spec = ProbeSpec::new(vec![TAU, 0.0, 0.0], 2.0);
    let (a, u) = probing_record(&g, &base, &f1, &spec, &CgoOptions::default()).unwrap();
    let b = a.clone();
    let diff_v: Vec<C> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let diff_n: Vec<C> = a.normal.iter().zip(&b.normal).map(|(x, y)| x - y).collect();
    let (uv, un) = (u.boundary_values(&g), u.normal.clone());
    let dn = vec![0.0; g.face_points()];
    let p = boundary_pairing(&g, &diff_v, &diff_n, &uv, &un, &dn).unwrap();
    assert_eq!(p.norm(), 0.0);
}

#[test]
fn stationary_state_from_cauchy_data() {
    // Zero Neumann data and constant Dirichlet data: constant state.
    let g = Grid::new(GridSpec::unit_box(2, 15, 0)).unwrap();
    let flat = g.restrict_to_boundary(&vec![0.4; g.npts]).unwrap();
    let s = recover_stationary_state(&g, &flat, 1e-8).unwrap();
    assert!(s.v0.iter().all(|v| (v - 0.4).abs() < 1e-10));
    assert!((g.integrate(&s.m0) - 1.0).abs() < 1e-12);

    // exp(-v0/2) a harmonic quadratic.
    let err = |nx: usize| {
        let g = Grid::new(GridSpec::unit_box(2, nx, 0)).unwrap();
        let v0 = g.sample(0.0, |x, _| -2.0 * (2.0 + x[0] * x[0] - x[1] * x[1] + 0.5 * x[0] * x[1]).ln());
        let tr = g.restrict_to_boundary(&v0).unwrap();
        let s = recover_stationary_state(&g, &tr, 1e-2).unwrap();
        s.v0.iter().zip(&v0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    // The quadratic is reproduced exactly by the five-point stencil.
    assert!(err(7) < 1e-10 && err(15) < 1e-10);

    // Inconsistent Neumann data is rejected.
    let mut bad = flat.clone();
    bad.normal[0] = 1.0;
    assert!(recover_stationary_state(&g, &bad, 1e-8).is_err());
}

#[test]
fn stationary_f1_recovery_improves_with_r() {
    let g = Grid::new(GridSpec::unit_box(3, 15, 0)).unwrap();
    let base = build_stationary_baseline(&g, None).unwrap();
    let f1 = g.sample(0.0, |x, _| f1_true(x));
    let opts = CgoOptions::default();
    let mut errs = Vec::new();
    for r in [2.0, 4.0, 8.0] {
        let plan = probe_plan(&g, 1, r, r * TAU);
        let recs: Vec<_> = plan.iter().map(|s| probing_record(&g, &base, &f1, s, &opts).unwrap().0).collect();
        let smp = recover_fourier_samples(&g, &base, &plan, &recs, &opts, true).unwrap();
        assert!(smp.conjugate_defect < 1e-6);
        let rec = invert_fourier(&g, &smp, &base, 1e-6).unwrap();
        errs.push(rel_l2(&g, &rec, &f1));
    }
    assert!(errs[2] <= 0.1, "{errs:?}");
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}
