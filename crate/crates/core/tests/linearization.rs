use mfg_core::forward::{CostModel, MfgCoefficients, SolverOptions};
use mfg_core::grid::{Grid, GridSpec, SpaceTimeField};
use mfg_core::linearize::*;
use std::f64::consts::PI;

struct Setup {
    grid: Grid,
    coeffs: MfgCoefficients,
    cost: CostModel,
    f: Vec<f64>,
    vb: SpaceTimeField,
    mb: SpaceTimeField,
}

fn setup(dim: usize, nx: usize, nt: usize, nonlinear: bool) -> Setup {
    let grid = Grid::new(GridSpec::unit_box(dim, nx, nt)).unwrap();
    let coeffs = MfgCoefficients {
        sigma: grid.sample_st(|x, _| 1.0 + 0.2 * x[0]),
        kappa: grid.sample_st(|x, t| 1.0 + 0.3 * x[0] * (1.0 - 0.5 * t)),
    };
    let mut cost = CostModel::zero(&grid, 1.0);
    cost.f = vec![grid.sample_st(|x, t| 1.0 + 0.5 * x[0] + 0.2 * t)];
    cost.g = vec![grid.sample(0.0, |x, _| 0.5 + 0.25 * (PI * x[0]).cos())];
    if nonlinear {
        cost.f.push(grid.sample_st(|x, _| 0.8 + x[0]));
        cost.g.push(grid.sample(0.0, |_, _| 0.6));
    }
    let ones = vec![1.0; grid.npts];
    Setup {
        f: ones.clone(),
        vb: SpaceTimeField::zeros(grid.npts, grid.nlev()),
        mb: SpaceTimeField::constant_in_time(&ones, grid.nlev()),
        grid,
        coeffs,
        cost,
    }
}

fn data(g: &Grid, a: f64, b: f64) -> (SpaceTimeField, SpaceTimeField) {
    (
        g.sample_st(|x, t| a * (PI * t).sin() * (1.0 + x[0])),
        g.sample_st(|x, t| b * (PI * t).sin() * (1.5 - x[0])),
    )
}

fn opts() -> SolverOptions {
    SolverOptions { tol: 1e-12, ..SolverOptions::default() }
}

#[test]
fn first_order_matches_dense_oracle() {
    for dim in [1, 2] {
        let s = setup(dim, if dim == 1 { 6 } else { 4 }, 6, true);
        let v0 = SpaceTimeField::zeros(s.grid.npts, s.grid.nlev());
        let m0 = s.mb.clone();
        let solver = LinearSolver::new(&s.grid, &s.coeffs, &v0, &m0, opts()).unwrap();
        let (g, h) = data(&s.grid, 0.7, 1.0);
        let lin = solve_first_order(&solver, &s.cost, &g, &h).unwrap();
        let (f1, g1) = effective_first(&s.cost, &m0);
        let (vd, md) = monolithic_solve(&solver, &f1, &g1, &g, &h, &Sources::default()).unwrap();
        assert!(lin.v.max_abs_diff(&vd) < 1e-8, "dim {dim}: {}", lin.v.max_abs_diff(&vd));
        assert!(lin.m.max_abs_diff(&md) < 1e-8);
        let r = solver.residual(&f1, &g1, &g, &h, &Sources::default(), &lin.v, &lin.m);
        assert!(r.iter().all(|x| x.abs() < 1e-8));
    }
}

#[test]
fn first_order_is_homogeneous() {
    let s = setup(1, 10, 10, true);
    let v0 = SpaceTimeField::zeros(s.grid.npts, s.grid.nlev());
    let solver = LinearSolver::new(&s.grid, &s.coeffs, &v0, &s.mb, opts()).unwrap();
    let (g, h) = data(&s.grid, 0.7, 1.0);
    let a = solve_first_order(&solver, &s.cost, &g, &h).unwrap();
    let b = solve_first_order(&solver, &s.cost, &g.scaled(2.0), &h.scaled(2.0)).unwrap();
    assert!(b.v.max_abs_diff(&a.v.scaled(2.0)) < 1e-10);
    assert!(b.m.max_abs_diff(&a.m.scaled(2.0)) < 1e-10);
}

#[test]
fn frechet_remainder_is_second_order() {
    for nonlinear in [false, true] {
        let s = setup(1, 12, 12, nonlinear);
        let prob = NonlinearProblem {
            grid: &s.grid,
            coeffs: &s.coeffs,
            cost: &s.cost,
            f: &s.f,
            vb: &s.vb,
            mb: &s.mb,
            opts: opts(),
        };
        let (g, h) = data(&s.grid, 0.7, 1.0);
        let rep = frechet_check(&prob, &g, &h, &[1e-1, 3e-2, 1e-2]).unwrap();
        assert!((1.8..=2.2).contains(&rep.slope), "{rep:?}");
    }
}

#[test]
fn second_order_symmetry_and_cross_difference() {
    let s = setup(1, 10, 10, true);
    let prob =
        NonlinearProblem { grid: &s.grid, coeffs: &s.coeffs, cost: &s.cost, f: &s.f, vb: &s.vb, mb: &s.mb, opts: opts() };
    let (v0, m0) = prob.solve_perturbed(&[], &[], None).unwrap();
    let solver = LinearSolver::new(&s.grid, &s.coeffs, &v0, &m0, opts()).unwrap();
    let (g1, h1) = data(&s.grid, 0.7, 1.0);
    let g2 = s.grid.sample_st(|x, t| (PI * t).sin().powi(2) * x[0]);
    let h2 = s.grid.sample_st(|x, t| 0.5 * (PI * t).sin() * (1.0 + x[0] * x[0]));
    let a = solve_first_order(&solver, &s.cost, &g1, &h1).unwrap();
    let b = solve_first_order(&solver, &s.cost, &g2, &h2).unwrap();
    let ab = solve_mixed(&solver, &s.cost, &[&a, &b]).unwrap();
    let ba = solve_mixed(&solver, &s.cost, &[&b, &a]).unwrap();
    assert!(ab.v.max_abs_diff(&ba.v) < 1e-10 && ab.m.max_abs_diff(&ba.m) < 1e-10);
    assert!(ab.v.max_abs() > 1e-3);

    let mut errs = Vec::new();
    for e in [4e-2, 2e-2, 1e-2] {
        let d = [(&g1, &h1), (&g2, &h2)];
        let (v11, m11) = prob.solve_perturbed(&d, &[e, e], Some((&v0, &m0))).unwrap();
        let (v10, m10) = prob.solve_perturbed(&d, &[e, 0.0], Some((&v0, &m0))).unwrap();
        let (v01, m01) = prob.solve_perturbed(&d, &[0.0, e], Some((&v0, &m0))).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..v0.data.len() {
            let dv = (v11.data[i] - v10.data[i] - v01.data[i] + v0.data[i]) / (e * e);
            let dm = (m11.data[i] - m10.data[i] - m01.data[i] + m0.data[i]) / (e * e);
            err = err.max((dv - ab.v.data[i]).abs()).max((dm - ab.m.data[i]).abs());
        }
        errs.push(err);
    }
    let slope = mfg_core::linalg::loglog_slope(&[4e-2, 2e-2, 1e-2], &errs);
    assert!(slope > 0.8, "{errs:?} slope {slope}");
}

#[test]
fn zero_first_order_inputs_give_zero_mixed() {
    let s = setup(1, 8, 8, true);
    let v0 = SpaceTimeField::zeros(s.grid.npts, s.grid.nlev());
    let solver = LinearSolver::new(&s.grid, &s.coeffs, &v0, &s.mb, opts()).unwrap();
    let z = SpaceTimeField::zeros(s.grid.npts, s.grid.nlev());
    let a = solve_first_order(&solver, &s.cost, &z, &z).unwrap();
    let ab = solve_mixed(&solver, &s.cost, &[&a, &a]).unwrap();
    assert_eq!(ab.v.max_abs(), 0.0);
    assert_eq!(ab.m.max_abs(), 0.0);
}
