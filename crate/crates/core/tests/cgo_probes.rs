use mfg_core::cgo::{build_cgo, make_xi_pair, remainder_dense_oracle, solve_remainder, verify_decay, CgoOptions, XiPair};
use mfg_core::linearize::ScalarReducedEquation;
use mfg_core::{Grid, GridSpec};
use proptest::prelude::*;

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn generic_q(g: &Grid) -> ScalarReducedEquation {
    let q = g.sample(0.0, |x, _| 1.0 + 0.5 * (TAU * x[0]).sin() * (std::f64::consts::PI * x[1]).cos() + 0.3 * x[2]);
    ScalarReducedEquation { v0: vec![0.0; g.npts], q, sign: 1.0 }
}

#[test]
fn remainder_matches_dense_oracle() {
    let g = Grid::new(GridSpec::unit_box(3, 4, 0)).unwrap();
    let mut eq = generic_q(&g);
    eq.v0 = g.sample(0.0, |x, _| 0.3 * x[0] * x[1]);
    let p = make_xi_pair(&[TAU, 0.0, 0.0], 1.0).unwrap();
    let opts = CgoOptions::default();
    let r = solve_remainder(&g, &eq, &p.xi2, &opts).unwrap();
    let oracle = remainder_dense_oracle(&g, &eq, &p.xi2).unwrap();
    let err = r.omega.iter().zip(&oracle).fold(0.0f64, |a, (x, y)| a.max((x - y).norm()));
    assert!(err < 1e-10, "iterative vs dense {err:e}");
    assert!(r.l2_norm > 1e-4);
}

#[test]
fn remainder_decays_like_inverse_xi() {
    let g = Grid::new(GridSpec::unit_box(3, 15, 0)).unwrap();
    let eq = generic_q(&g);
    let rep = verify_decay(&g, &eq, &[TAU, 0.0, 0.0], &[1.0, 2.0, 4.0, 8.0], &CgoOptions::default(), true).unwrap();
    for r in &rep.rows {
        eprintln!("R={} |xi|={:.2} |w|={:.3e} it={}", r.r, r.xi_norm, r.omega_l2, r.iterations);
    }
    eprintln!("slope {}", rep.slope);
    assert!(!rep.degenerate);
    assert!((-1.3..=-0.7).contains(&rep.slope), "slope {}", rep.slope);
}

#[test]
fn residual_is_second_order_in_h() {
    let mut res = Vec::new();
    for nx in [7, 15] {
        let g = Grid::new(GridSpec::unit_box(3, nx, 0)).unwrap();
        let eq = generic_q(&g);
        let p = make_xi_pair(&[TAU, 0.0, 0.0], 1.0).unwrap();
        let c = build_cgo(&g, &eq, &p.xi1, &CgoOptions::default()).unwrap();
        res.push(c.relative_residual);
    }
    eprintln!("{res:?}");
    assert!(res[1] < res[0] / 2.5, "{res:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn random_pairs_are_isotropic(k in prop::array::uniform3(-3i32..=3), r in 0.25f64..20.0) {
        prop_assume!(k.iter().any(|v| *v != 0));
        let k: Vec<f64> = k.iter().map(|v| TAU * *v as f64).collect();
        let p = make_xi_pair(&k, r).unwrap();
        let k2: f64 = k.iter().map(|x| x * x).sum();
        let want = k2 * (0.25 + 4.0 * r * r);
        for xi in [&p.xi1, &p.xi2] {
            prop_assert!(XiPair::dot(xi, xi).norm() <= 1e-12 * want);
            prop_assert!((XiPair::norm(xi).powi(2) - want).abs() <= 1e-12 * want);
        }
    }
}
