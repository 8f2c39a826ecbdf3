use mfg_core::forward::{MfgCoefficients, SolverOptions};
use mfg_core::inverse::ucp::ucp_residual_check;
use mfg_core::linearize::LinearSolver;
use mfg_core::{Grid, GridSpec, SpaceTimeField};

fn with_solver<R>(g: &Grid, c: &MfgCoefficients, f: impl FnOnce(&LinearSolver) -> R) -> R {
    let v0 = g.sample_st(|x, t| 0.2 * x[0] * (1.0 - t));
    let m0 = SpaceTimeField::constant_in_time(&vec![1.0; g.npts], g.nlev());
    f(&LinearSolver::new(g, c, &v0, &m0, SolverOptions::default()).unwrap())
}

#[test]
fn homogeneous_system_has_only_the_zero_solution() {
    let tol = SolverOptions::default().tol;
    for (dim, nx, nt) in [(1, 7, 8), (2, 5, 6)] {
        let g = Grid::new(GridSpec::unit_box(dim, nx, nt)).unwrap();
        let c = MfgCoefficients::constant(&g, 1.0, 1.0);
        let f1 = g.sample_st(|x, _| 1.0 + 0.5 * x[0]);
        let g1 = g.sample(1.0, |x, _| 1.0 + 0.5 * x[0]);
        let r = with_solver(&g, &c, |s| ucp_residual_check(s, &f1, &g1, true, 1.0).unwrap());
        assert_eq!(r.null_dim, 0);
        assert!(r.interior_sup <= 10.0 * tol);
        assert!(r.bump_interior_sup >= 1e3 * 10.0 * tol, "{r:?}");
        assert!(r.bump_residual > 1e-3);
    }
}

#[test]
fn zero_coefficients_give_exact_zero() {
    let g = Grid::new(GridSpec::unit_box(1, 5, 4)).unwrap();
    let c = MfgCoefficients::constant(&g, 1.0, 0.0);
    let zero = SpaceTimeField::zeros(g.npts, g.nlev());
    let r = with_solver(&g, &c, |s| ucp_residual_check(s, &zero, &vec![0.0; g.npts], true, 1.0).unwrap());
    assert_eq!(r.interior_sup, 0.0);
}
