use mfg_core::cauchy::extract_c3;
use mfg_core::forward::{CostModel, MfgCoefficients, SolverOptions};
use mfg_core::inverse::timedep::*;
use mfg_core::linearize::{solve_first_order, solve_mixed, LinearSolver};
use mfg_core::{Grid, GridSpec, SpaceTimeField};
use std::f64::consts::PI;

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d / n).sqrt()
}

struct Setup {
    g: Grid,
    solver_opts: SolverOptions,
    truth: CostModel,
    inputs: Vec<(f64, f64, f64)>,
}

fn setup() -> Setup {
    let g = Grid::new(GridSpec::unit_box(1, 31, 32)).unwrap();
    let mut truth = CostModel::zero(&g, 1.0);
    truth.f = vec![
        g.sample_st(|x, _| 1.0 + 0.5 * x[0]),
        g.sample_st(|x, t| (PI * x[0]).sin() * (-t).exp()),
    ];
    truth.g = vec![
        g.sample(1.0, |x, _| 1.0 + 0.5 * (PI * x[0]).cos()),
        g.sample(1.0, |x, _| 0.5 + 0.25 * x[0]),
    ];
    Setup {
        g,
        solver_opts: SolverOptions { tol: 1e-12, ..SolverOptions::default() },
        truth,
        inputs: vec![(1.0, 0.5, 0.0), (-0.5, 1.0, 0.3), (0.7, -0.4, -0.5), (0.3, 0.9, 0.8), (1.0, -1.0, -0.2)],
    }
}

fn experiments(s: &Setup, solver: &LinearSolver, truth: &CostModel) -> (Vec<LateralExperiment>, Vec<mfg_core::linearize::LinearizedSolution>) {
    let g = &s.g;
    let g1 = truth.g[0].clone();
    let mut exps = Vec::new();
    let mut sols = Vec::new();
    for (i, &(a0, a1, w)) in s.inputs.iter().enumerate() {
        let h = g.sample_st(|x, t| (t + w * (PI * t).sin()) * (a0 * (1.0 - x[0]) + a1 * x[0]));
        // Dirichlet data of v scaled by G1 so the terminal coupling holds at the faces.
        let mut gg = SpaceTimeField::zeros(g.npts, g.nlev());
        for l in 0..g.nlev() {
            let t = g.time(l);
            let row = gg.level_mut(l);
            for p in 0..g.npts {
                let x = g.coords(p)[0];
                row[p] = g1[p] * (a0 * (1.0 - x) + a1 * x) * t * t + 0.2 * (PI * t).sin();
            }
        }
        let sol = solve_first_order(solver, truth, &gg, &h).unwrap();
        let record = extract_c3(g, &format!("e{i}"), &sol.v, &sol.m).unwrap();
        sols.push(sol);
        exps.push(LateralExperiment { g: gg, h, record });
    }
    (exps, sols)
}

fn base(g: &Grid) -> (MfgCoefficients, SpaceTimeField, SpaceTimeField) {
    let nl = g.nlev();
    (
        MfgCoefficients::constant(g, 1.0, 1.0),
        SpaceTimeField::zeros(g.npts, nl),
        SpaceTimeField::constant_in_time(&vec![1.0; g.npts], nl),
    )
}

#[test]
fn terminal_and_second_order_recovery_1d() {
    let s = setup();
    let g = &s.g;
    let (c, v0, m0) = base(g);
    let solver = LinearSolver::new(g, &c, &v0, &m0, s.solver_opts.clone()).unwrap();
    let (exps, sols_true) = experiments(&s, &solver, &s.truth);
    let f1 = &s.truth.f[0];

    let t = recover_terminal_linear(&solver, f1, &exps, 4, 1e-8, 1e-6, true).unwrap();
    assert!(rel_l2(&t.g1, &s.truth.g[0]) <= 0.15);
    assert!(terminal_plugin_residual(&solver, f1, &s.truth.g[0], &exps[0]).unwrap() < 1e-9);

    let mut known = CostModel::zero(g, 1.0);
    known.f = vec![f1.clone()];
    known.g = vec![t.g1.clone()];
    let firsts: Vec<_> = exps.iter().map(|e| solve_first_order(&solver, &known, &e.g, &e.h).unwrap()).collect();
    let ne = exps.len();
    let recs: Vec<MixedRecord> = (0..ne)
        .flat_map(|i| (i..ne).map(move |j| vec![i, j]))
        .map(|p| {
            let fs: Vec<_> = p.iter().map(|&i| &sols_true[i]).collect();
            let sol = solve_mixed(&solver, &s.truth, &fs).unwrap();
            MixedRecord { inputs: p, record: extract_c3(g, "mixed", &sol.v, &sol.m).unwrap() }
        })
        .collect();
    let fit = recover_higher_order(&solver, &known, &firsts, &recs, CoarseMesh::default(), 1e-6, 1e-6, true).unwrap();
    // The scheme never reads F at the final level, nor the initial one for the density.
    let nl = g.nlev();
    let lv = |f: &SpaceTimeField| f.data[g.npts..g.npts * (nl - 1)].to_vec();
    let ef = rel_l2(&lv(&fit.f), &lv(&s.truth.f[1]));
    let eg = rel_l2(&fit.g, &s.truth.g[1]);
    assert!(ef <= 0.15, "F2 error {ef}");
    assert!(eg <= 0.15, "G2 error {eg}");
    assert!(fit.roundtrip_residual <= 2.0 * fit.fit.residual_norm + 1e-9);
    assert_eq!(fit.degenerate_fraction, 0.0);
}

#[test]
fn zero_second_order_data_gives_zero() {
    let s = setup();
    let g = &s.g;
    let (c, v0, m0) = base(g);
    let solver = LinearSolver::new(g, &c, &v0, &m0, s.solver_opts.clone()).unwrap();
    let mut truth = s.truth.clone();
    truth.f[1] = SpaceTimeField::zeros(g.npts, g.nlev());
    truth.g[1] = vec![0.0; g.npts];
    let (exps, sols) = experiments(&s, &solver, &truth);
    let mut known = truth.clone();
    known.f.truncate(1);
    known.g.truncate(1);
    let recs: Vec<MixedRecord> = [vec![0, 1], vec![2, 3], vec![1, 4]]
        .into_iter()
        .map(|p| {
            let fs: Vec<_> = p.iter().map(|&i| &sols[i]).collect();
            let sol = solve_mixed(&solver, &truth, &fs).unwrap();
            MixedRecord { inputs: p, record: extract_c3(g, "mixed", &sol.v, &sol.m).unwrap() }
        })
        .collect();
    let _ = exps;
    let fit = recover_higher_order(&solver, &known, &sols, &recs, CoarseMesh::default(), 1e-6, 1e-6, false).unwrap();
    let sup = fit.f.data.iter().chain(&fit.g).fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(sup < 1e-8, "sup {sup}");
}

#[test]
fn degenerate_products_are_rejected() {
    let s = setup();
    let g = &s.g;
    let (c, v0, m0) = base(g);
    let solver = LinearSolver::new(g, &c, &v0, &m0, s.solver_opts.clone()).unwrap();
    let zero = SpaceTimeField::zeros(g.npts, g.nlev());
    let first = solve_first_order(&solver, &s.truth, &zero, &zero).unwrap();
    let sol = solve_mixed(&solver, &s.truth, &[&first, &first]).unwrap();
    let rec = MixedRecord { inputs: vec![0, 0], record: extract_c3(g, "z", &sol.v, &sol.m).unwrap() };
    let mut known = s.truth.clone();
    known.f.truncate(1);
    known.g.truncate(1);
    assert!(recover_higher_order(&solver, &known, &[first], &[rec], CoarseMesh::default(), 1e-6, 1e-6, false).is_err());
}
