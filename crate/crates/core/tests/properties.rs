use mfg_core::expr::Expr;
use mfg_core::field_io::{decode, encode, parse_trace_csv, trace_csv};
use mfg_core::forward::{build_stationary_baseline, hjb_residual, fpk_residual, solve_mfg_timedep, CostModel, MfgCoefficients, SolverOptions};
use mfg_core::grid::{BoundaryTrace, Grid, GridSpec, SpaceTimeField};

use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (1usize..=3, 4usize..8, prop_oneof![Just(0usize), 2usize..5], 0.5f64..2.0).prop_map(|(d, nx, nt, ext)| {
        let mut s = GridSpec::unit_box(d, nx, nt);
        s.upper = vec![ext; d];
        Grid::new(s).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn field_files_roundtrip(g in grid_strategy(), seed in any::<u64>()) {
        let nl = g.nlev();
        let data: Vec<f64> = (0..g.npts * nl).map(|i| ((i as u64 ^ seed) as f64).sin() * 1e3).collect();
        let f = SpaceTimeField { npts: g.npts, nlev: nl, data };
        let (spec, back) = decode(&encode(&g.spec, &f)).unwrap();
        prop_assert_eq!(spec, g.spec.clone());
        prop_assert_eq!(back, f);
    }

    #[test]
    fn trace_csv_roundtrip(g in grid_strategy(), a in -5.0f64..5.0) {
        let u = g.sample_st(|x, t| a * x[0] * x[0] - x[1] + t * x[2]);
        let tr: BoundaryTrace = g.restrict_st_to_boundary(&u).unwrap();
        prop_assert_eq!(parse_trace_csv(&g, &trace_csv(&g, &tr).unwrap()).unwrap(), tr);
    }

    #[test]
    fn laplacian_is_exact_on_quadratics(g in grid_strategy(), c in proptest::array::uniform3(-3.0f64..3.0)) {
        let u = g.sample(0.0, |x, _| c[0] * x[0] * x[0] + c[1] * x[1] * x[1] + c[2] * x[2] * x[2] + x[0] * x[1]);
        let lap = g.laplacian(&u).unwrap();
        let want = 2.0 * (0..g.dim()).map(|a| c[a]).sum::<f64>();
        for (l, b) in lap.iter().zip(&g.is_boundary) {
            if !b {
                prop_assert!((l - want).abs() < 1e-8 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn constants_integrate_to_volume(g in grid_strategy(), c in -4.0f64..4.0) {
        let u = vec![c; g.npts];
        prop_assert!((g.integrate(&u) - c * g.volume()).abs() < 1e-12 * (1.0 + c.abs()) * g.volume().max(1.0));
    }

    #[test]
    fn gibbs_baseline_is_a_probability_density(g in grid_strategy(), a in -2.0f64..2.0) {
        let v0 = g.sample(0.0, |x, _| a * (x[0] - 0.3 * x[1]).sin());
        let s = build_stationary_baseline(&g, Some(&v0)).unwrap();
        prop_assert!((g.integrate(&s.m0) - 1.0).abs() < 1e-12);
        prop_assert!(s.m0.iter().all(|m| *m > 0.0));
        prop_assert!(s.gibbs_defect(&g) < 1e-12);
    }

    #[test]
    fn expressions_match_closed_forms(x in proptest::array::uniform3(-1.0f64..1.0), t in 0.0f64..1.0) {
        let e = Expr::parse("sin(pi*x1)*exp(-t) + x2^2 - 3*x3").unwrap();
        let want = (std::f64::consts::PI * x[0]).sin() * (-t).exp() + x[1] * x[1] - 3.0 * x[2];
        prop_assert!((e.eval(&x, t) - want).abs() < 1e-12);
    }
}

#[test]
fn equilibrium_state_is_reproduced() {
    let g = Grid::new(GridSpec::unit_box(2, 7, 8)).unwrap();
    let coeffs = MfgCoefficients::constant(&g, 1.0, 1.0);
    let mut cost = CostModel::zero(&g, 1.0);
    cost.f = vec![g.sample_st(|x, _| 1.0 + x[0])];
    cost.g = vec![vec![0.5; g.npts]];
    let vb = SpaceTimeField::zeros(g.npts, g.nlev());
    let mb = SpaceTimeField::constant_in_time(&vec![1.0; g.npts], g.nlev());
    let opts = SolverOptions { tol: 1e-12, ..SolverOptions::default() };
    let s = solve_mfg_timedep(&g, &coeffs, &cost, &vec![1.0; g.npts], &vb, &mb, None, &opts).unwrap();
    assert!(s.v.max_abs() < 1e-12 && s.m.max_abs_diff(&mb) < 1e-12);
}

#[test]
fn coupled_solve_has_small_residuals() {
    let g = Grid::new(GridSpec::unit_box(1, 15, 16)).unwrap();
    let coeffs = MfgCoefficients::constant(&g, 1.0, 1.0);
    let mut cost = CostModel::zero(&g, 1.0);
    cost.f = vec![g.sample_st(|_, _| 1.0)];
    cost.g = vec![vec![1.0; g.npts]];
    let vb = g.sample_st(|x, t| 0.2 * t * x[0]);
    let mb = g.sample_st(|x, t| 1.0 + 0.3 * t * (1.0 - x[0]));
    let opts = SolverOptions { tol: 1e-12, ..SolverOptions::default() };
    let s = solve_mfg_timedep(&g, &coeffs, &cost, &vec![1.0; g.npts], &vb, &mb, None, &opts).unwrap();
    assert!(s.v.max_abs() > 1e-3);
    assert!(hjb_residual(&g, &coeffs, &cost, &s.v, &s.m) < 1e-9);
    assert!(fpk_residual(&g, &coeffs, &s.v, &s.m) < 1e-9);
}
