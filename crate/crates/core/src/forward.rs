//! Forward solvers: the time-dependent quadratic system by damped Picard
//! sweeps over a backward HJB solve and a forward FPK solve, and the
//! stationary baseline.
//!
//! HJB step (backward Euler, implicit diffusion, lagged Hamiltonian):
//!   v^n/dt - sigma^n lap v^n = v^{n+1}/dt - kappa^n |grad v^{n+1}|^2 / 2 + F(x, t_n, m^n)
//! FPK step (backward Euler, conservative drift):
//!   m^{n+1}/dt - lap(sigma^{n+1} m^{n+1}) - div(kappa m^{n+1} grad v^{n+1}) = m^n/dt
//! Boundary nodes carry Dirichlet data at every level.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::grid::{Grid, SpaceTimeField};
use crate::linalg::{max_abs, max_abs_diff, Banded, BandedLu};

#[derive(Clone, Debug)]
pub struct MfgCoefficients {
    pub sigma: SpaceTimeField,
    pub kappa: SpaceTimeField,
}

impl MfgCoefficients {
    pub fn constant(grid: &Grid, sigma: f64, kappa: f64) -> Self {
        let n = grid.npts;
        let l = grid.nlev();
        MfgCoefficients {
            sigma: SpaceTimeField::constant_in_time(&vec![sigma; n], l),
            kappa: SpaceTimeField::constant_in_time(&vec![kappa; n], l),
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for (name, f) in [("sigma", &self.sigma), ("kappa", &self.kappa)] {
            check_len(grid.npts * grid.nlev(), f.data.len())?;
            if let Some(v) = f.data.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, found {v}")));
            }
        }
        Ok(())
    }

    fn sigma_static(&self) -> bool {
        (1..self.sigma.nlev).all(|l| self.sigma.level(l) == self.sigma.level(0))
    }
}

/// Truncated Taylor model `F(x,t,m) = sum_k F_k(x,t) (m - m0)^k / k!` and the
/// analogous `G(x, m)`; the constant term is absent by construction.
#[derive(Clone, Debug)]
pub struct CostModel {
    /// Expansion density per level (the last level is used for G).
    pub m0: SpaceTimeField,
    pub f: Vec<SpaceTimeField>,
    pub g: Vec<Vec<f64>>,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl CostModel {
    pub fn zero(grid: &Grid, m0: f64) -> Self {
        CostModel { m0: SpaceTimeField::constant_in_time(&vec![m0; grid.npts], grid.nlev()), f: vec![], g: vec![] }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        check_len(grid.npts * grid.nlev(), self.m0.data.len())?;
        for f in &self.f {
            check_len(grid.npts * grid.nlev(), f.data.len())?;
        }
        for g in &self.g {
            check_len(grid.npts, g.len())?;
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.f.len().max(self.g.len())
    }

    /// j-th m-derivative of the F series at node p, level l.
    pub fn f_deriv(&self, j: usize, l: usize, p: usize, m: f64) -> f64 {
        let z = m - self.m0.level(l)[p];
        let mut acc = 0.0;
        for (k1, fk) in self.f.iter().enumerate() {
            let k = k1 + 1;
            if k >= j {
                acc += fk.level(l)[p] * z.powi((k - j) as i32) / factorial(k - j);
            }
        }
        acc
    }

    pub fn g_deriv(&self, j: usize, p: usize, m: f64) -> f64 {
        let z = m - self.m0.level(self.m0.nlev - 1)[p];
        let mut acc = 0.0;
        for (k1, gk) in self.g.iter().enumerate() {
            let k = k1 + 1;
            if k >= j {
                acc += gk[p] * z.powi((k - j) as i32) / factorial(k - j);
            }
        }
        acc
    }

    pub fn f_level(&self, j: usize, l: usize, m: &[f64]) -> Vec<f64> {
        m.iter().enumerate().map(|(p, &mv)| self.f_deriv(j, l, p, mv)).collect()
    }

    pub fn g_field(&self, j: usize, m: &[f64]) -> Vec<f64> {
        m.iter().enumerate().map(|(p, &mv)| self.g_deriv(j, p, mv)).collect()
    }

    /// Space-time field of the j-th F derivative evaluated along `m`.
    pub fn f_along(&self, j: usize, m: &SpaceTimeField) -> SpaceTimeField {
        SpaceTimeField::from_levels((0..m.nlev).map(|l| self.f_level(j, l, m.level(l))).collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverOptions {
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub blowup: f64,
    /// Tolerated negative density before the alarm fires.
    pub positivity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { theta: 0.5, tol: 1e-8, max_iter: 200, blowup: 1e8, positivity_tol: 1e-10 }
    }
}

fn bandwidth(grid: &Grid) -> usize {
    grid.strides[0]
}

/// Interior rows `a[p] * u_p - c[p] * lap_h u`, identity on the boundary.
pub(crate) fn hjb_matrix(grid: &Grid, dt: f64, sigma: &[f64]) -> Result<BandedLu> {
    let bw = bandwidth(grid);
    let mut a = Banded::zeros(grid.npts, bw, bw);
    for p in 0..grid.npts {
        if grid.is_boundary[p] {
            a.add(p, p, 1.0);
            continue;
        }
        a.add(p, p, 1.0 / dt);
        for ax in 0..grid.dim() {
            let s = grid.strides[ax];
            let c = sigma[p] / (grid.h[ax] * grid.h[ax]);
            a.add(p, p, 2.0 * c);
            a.add(p, p + s, -c);
            a.add(p, p - s, -c);
        }
    }
    a.factor()
}

/// `m/dt - lap_h(sigma m) - div_h(kappa m grad v)` on interior rows.
pub(crate) fn fpk_matrix(grid: &Grid, dt: f64, sigma: &[f64], kappa: &[f64], v: &[f64]) -> Result<BandedLu> {
    let bw = bandwidth(grid);
    let mut a = Banded::zeros(grid.npts, bw, bw);
    for p in 0..grid.npts {
        if grid.is_boundary[p] {
            a.add(p, p, 1.0);
            continue;
        }
        a.add(p, p, 1.0 / dt);
        for ax in 0..grid.dim() {
            let s = grid.strides[ax];
            let ih2 = 1.0 / (grid.h[ax] * grid.h[ax]);
            a.add(p, p, 2.0 * sigma[p] * ih2);
            a.add(p, p + s, -sigma[p + s] * ih2);
            a.add(p, p - s, -sigma[p - s] * ih2);
            let kp = 0.5 * (kappa[p] + kappa[p + s]) * (v[p + s] - v[p]) * ih2;
            let km = 0.5 * (kappa[p] + kappa[p - s]) * (v[p] - v[p - s]) * ih2;
            a.add(p, p, -0.5 * (kp - km));
            a.add(p, p + s, -0.5 * kp);
            a.add(p, p - s, 0.5 * km);
        }
    }
    a.factor()
}

/// Cached HJB factorisations, one per level or a single shared one.
pub(crate) struct HjbOperator {
    lus: Vec<BandedLu>,
}

impl HjbOperator {
    pub fn new(grid: &Grid, coeffs: &MfgCoefficients) -> Result<Self> {
        let dt = grid.dt();
        let lus = if coeffs.sigma_static() {
            vec![hjb_matrix(grid, dt, coeffs.sigma.level(0))?]
        } else {
            (0..grid.nt()).map(|l| hjb_matrix(grid, dt, coeffs.sigma.level(l))).collect::<Result<_>>()?
        };
        Ok(HjbOperator { lus })
    }

    pub fn at(&self, l: usize) -> &BandedLu {
        if self.lus.len() == 1 {
            &self.lus[0]
        } else {
            &self.lus[l]
        }
    }
}

fn check_blowup(f: &[f64], bound: f64) -> Result<()> {
    let m = max_abs(f);
    if !m.is_finite() || m > bound {
        return Err(Error::BlowUp { value: m, bound });
    }
    Ok(())
}

/// Backward HJB solve given the density path `m` and Dirichlet data `vb`
/// (only boundary entries of `vb` are read). `source` is added to the
/// right-hand side of row level `l` (0..nt-1).
pub fn solve_hjb_backward(
    grid: &Grid,
    coeffs: &MfgCoefficients,
    cost: &CostModel,
    m: &SpaceTimeField,
    vb: &SpaceTimeField,
    source: Option<&SpaceTimeField>,
    opts: &SolverOptions,
) -> Result<SpaceTimeField> {
    let op = HjbOperator::new(grid, coeffs)?;
    hjb_with(grid, coeffs, cost, m, vb, source, opts, &op)
}

#[allow(clippy::too_many_arguments)]
fn hjb_with(
    grid: &Grid,
    coeffs: &MfgCoefficients,
    cost: &CostModel,
    m: &SpaceTimeField,
    vb: &SpaceTimeField,
    source: Option<&SpaceTimeField>,
    opts: &SolverOptions,
    op: &HjbOperator,
) -> Result<SpaceTimeField> {
    let nt = grid.nt();
    let n = grid.npts;
    check_len(n * grid.nlev(), m.data.len())?;
    check_len(n * grid.nlev(), vb.data.len())?;
    if let Some(s) = source {
        check_len(n * grid.nlev(), s.data.len())?;
    }
    let dt = grid.dt();
    let mut v = SpaceTimeField::zeros(n, grid.nlev());
    let mt = m.level(nt);
    let term = v.level_mut(nt);
    for p in 0..n {
        term[p] = if grid.is_boundary[p] { vb.level(nt)[p] } else { cost.g_deriv(0, p, mt[p]) };
    }
    for l in (0..nt).rev() {
        let next = v.level(l + 1).to_vec();
        let g2 = grid.grad_sq(&next);
        let kap = coeffs.kappa.level(l);
        let ml = m.level(l);
        let mut rhs = vec![0.0; n];
        for p in 0..n {
            rhs[p] = if grid.is_boundary[p] {
                vb.level(l)[p]
            } else {
                next[p] / dt - 0.5 * kap[p] * g2[p] + cost.f_deriv(0, l, p, ml[p]) + source.map_or(0.0, |s| s.level(l)[p])
            };
        }
        op.at(l).solve_in_place(&mut rhs);
        check_blowup(&rhs, opts.blowup)?;
        v.level_mut(l).copy_from_slice(&rhs);
    }
    Ok(v)
}

/// Forward FPK solve with initial density `f` and Dirichlet data `mb`;
/// `source` is added to the right-hand side of level `l` (1..nt).
pub fn solve_fpk_forward(
    grid: &Grid,
    coeffs: &MfgCoefficients,
    v: &SpaceTimeField,
    f: &[f64],
    mb: &SpaceTimeField,
    source: Option<&SpaceTimeField>,
    opts: &SolverOptions,
) -> Result<SpaceTimeField> {
    let n = grid.npts;
    check_len(n, f.len())?;
    if let Some(s) = source {
        check_len(n * grid.nlev(), s.data.len())?;
    }
    check_len(n * grid.nlev(), v.data.len())?;
    check_len(n * grid.nlev(), mb.data.len())?;
    let dt = grid.dt();
    let mut m = SpaceTimeField::zeros(n, grid.nlev());
    for p in 0..n {
        m.level_mut(0)[p] = if grid.is_boundary[p] { mb.level(0)[p] } else { f[p] };
    }
    let nonneg = source.is_none() && f.iter().all(|x| *x >= 0.0) && mb.data.iter().all(|x| *x >= 0.0);
    for l in 0..grid.nt() {
        let lu = fpk_matrix(grid, dt, coeffs.sigma.level(l + 1), coeffs.kappa.level(l + 1), v.level(l + 1))?;
        let prev = m.level(l);
        let mut rhs: Vec<f64> =
            (0..n)
                .map(|p| {
                    if grid.is_boundary[p] {
                        mb.level(l + 1)[p]
                    } else {
                        prev[p] / dt + source.map_or(0.0, |s| s.level(l + 1)[p])
                    }
                })
                .collect();
        lu.solve_in_place(&mut rhs);
        check_blowup(&rhs, opts.blowup)?;
        if nonneg {
            if let Some((p, &val)) = rhs.iter().enumerate().find(|(_, x)| **x < -opts.positivity_tol) {
                return Err(Error::NegativeDensity { value: val, node: p, level: l + 1 });
            }
        }
        m.level_mut(l + 1).copy_from_slice(&rhs);
    }
    Ok(m)
}

/// Max interior residual of the discrete HJB scheme.
pub fn hjb_residual(grid: &Grid, coeffs: &MfgCoefficients, cost: &CostModel, v: &SpaceTimeField, m: &SpaceTimeField) -> f64 {
    let dt = grid.dt();
    let mut r: f64 = 0.0;
    for l in 0..grid.nt() {
        let lap = grid.laplacian(v.level(l)).expect("shape");
        let g2 = grid.grad_sq(v.level(l + 1));
        for &p in &grid.interior_nodes {
            let res = (v.level(l)[p] - v.level(l + 1)[p]) / dt - coeffs.sigma.level(l)[p] * lap[p]
                + 0.5 * coeffs.kappa.level(l)[p] * g2[p]
                - cost.f_deriv(0, l, p, m.level(l)[p]);
            r = r.max(res.abs());
        }
    }
    r
}

/// Max interior residual of the discrete FPK scheme.
pub fn fpk_residual(grid: &Grid, coeffs: &MfgCoefficients, v: &SpaceTimeField, m: &SpaceTimeField) -> f64 {
    let dt = grid.dt();
    let mut r: f64 = 0.0;
    for l in 0..grid.nt() {
        let sm: Vec<f64> = (0..grid.npts).map(|p| coeffs.sigma.level(l + 1)[p] * m.level(l + 1)[p]).collect();
        let lap = grid.laplacian(&sm).expect("shape");
        let dr = grid.drift(coeffs.kappa.level(l + 1), m.level(l + 1), v.level(l + 1));
        for &p in &grid.interior_nodes {
            let res = (m.level(l + 1)[p] - m.level(l)[p]) / dt - lap[p] - dr[p];
            r = r.max(res.abs());
        }
    }
    r
}

#[derive(Clone, Debug)]
pub struct TimeDependentSolution {
    pub v: SpaceTimeField,
    pub m: SpaceTimeField,
    pub f: Vec<f64>,
    pub picard_iterations: usize,
    pub final_update_norm: f64,
    /// Sup-norm Picard updates; the first sweep has no predecessor and is omitted.
    pub update_history: Vec<f64>,
}

/// Damped Picard iteration `v = HJB(m)`, `m <- theta FPK(v) + (1 - theta) m`,
/// stopped when the sup norm of both updates falls below `opts.tol`.
/// `init` seeds the iteration; without it the density starts at `f`.
#[allow(clippy::too_many_arguments)]
pub fn solve_mfg_timedep(
    grid: &Grid,
    coeffs: &MfgCoefficients,
    cost: &CostModel,
    f: &[f64],
    vb: &SpaceTimeField,
    mb: &SpaceTimeField,
    init: Option<(&SpaceTimeField, &SpaceTimeField)>,
    opts: &SolverOptions,
) -> Result<TimeDependentSolution> {
    if grid.nt() < 2 {
        return Err(Error::InvalidGrid("time-dependent solve needs nt >= 2".into()));
    }
    coeffs.validate(grid)?;
    cost.validate(grid)?;
    let n = grid.npts;
    check_len(n, f.len())?;
    let op = HjbOperator::new(grid, coeffs)?;
    let (mut v_prev, mut m) = match init {
        Some((v0, m0)) => (Some(v0.clone()), m0.clone()),
        None => {
            let mut m = SpaceTimeField::zeros(n, grid.nlev());
            for l in 0..grid.nlev() {
                for p in 0..n {
                    m.level_mut(l)[p] = if grid.is_boundary[p] { mb.level(l)[p] } else { f[p] };
                }
            }
            (None, m)
        }
    };
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let v = hjb_with(grid, coeffs, cost, &m, vb, None, opts, &op)?;
        let mt = solve_fpk_forward(grid, coeffs, &v, f, mb, None, opts)?;
        let dv = v_prev.as_ref().map_or(f64::INFINITY, |vp| v.max_abs_diff(vp));
        let dm = max_abs_diff(&mt.data, &m.data);
        let upd = dv.max(dm);
        if upd.is_finite() {
            history.push(upd);
        }
        for (a, b) in m.data.iter_mut().zip(&mt.data) {
            *a = opts.theta * b + (1.0 - opts.theta) * *a;
        }
        if upd < opts.tol {
            return Ok(TimeDependentSolution {
                v,
                m: mt,
                f: f.to_vec(),
                picard_iterations: it,
                final_update_norm: upd,
                update_history: history,
            });
        }
        v_prev = Some(v);
    }
    Err(Error::MaxIterationsExceeded { iterations: opts.max_iter, last_update: *history.last().unwrap_or(&f64::NAN) })
}

#[derive(Clone, Debug)]
pub struct StationarySolution {
    pub v0: Vec<f64>,
    pub m0: Vec<f64>,
    pub lambda: f64,
}

impl StationarySolution {
    /// `-ln m0`; equals `v0` up to an additive constant under the Gibbs relation.
    pub fn phi0(&self) -> Vec<f64> {
        self.m0.iter().map(|m| -m.ln()).collect()
    }

    pub fn gibbs_defect(&self, grid: &Grid) -> f64 {
        let e: Vec<f64> = self.v0.iter().map(|v| (-v).exp()).collect();
        let z = grid.integrate(&e);
        self.m0.iter().zip(&e).fold(0.0, |a, (m, ev)| a.max((m - ev / z).abs()))
    }
}

/// Constant baseline without a seed; otherwise the Gibbs density of the seed,
/// with `lambda` the `m0`-weighted mean of `lap v0 - |grad v0|^2 / 2`.
pub fn build_stationary_baseline(grid: &Grid, seed: Option<&[f64]>) -> Result<StationarySolution> {
    match seed {
        None => Ok(StationarySolution {
            v0: vec![0.0; grid.npts],
            m0: vec![1.0 / grid.volume(); grid.npts],
            lambda: 0.0,
        }),
        Some(v0) => {
            check_len(grid.npts, v0.len())?;
            let e: Vec<f64> = v0.iter().map(|v| (-v).exp()).collect();
            let z = grid.integrate(&e);
            let m0: Vec<f64> = e.iter().map(|x| x / z).collect();
            let lap = grid.laplacian(v0)?;
            let g2 = grid.grad_sq(v0);
            let r: Vec<f64> = (0..grid.npts).map(|p| (lap[p] - 0.5 * g2[p]) * m0[p]).collect();
            let lambda = grid.integrate(&r);
            Ok(StationarySolution { v0: v0.to_vec(), m0, lambda })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryResidual {
    pub hjb: f64,
    pub fpk: f64,
}

/// Interior sup norms of `-lap v0 + |grad v0|^2/2 + lambda - F(x, m0) - source`
/// and `-lap m0 - div(m0 grad v0)`. `cost` is evaluated at level 0.
pub fn verify_stationary_residual(
    grid: &Grid,
    sol: &StationarySolution,
    cost: &CostModel,
    source: Option<&[f64]>,
) -> Result<StationaryResidual> {
    let lap = grid.laplacian(&sol.v0)?;
    let g2 = grid.grad_sq(&sol.v0);
    let fm = cost.f_level(0, 0, &sol.m0);
    let r1: Vec<f64> = (0..grid.npts)
        .map(|p| -lap[p] + 0.5 * g2[p] + sol.lambda - fm[p] - source.map_or(0.0, |s| s[p]))
        .collect();
    let lapm = grid.laplacian(&sol.m0)?;
    let dr = grid.drift(&vec![1.0; grid.npts], &sol.m0, &sol.v0);
    let r2: Vec<f64> = (0..grid.npts).map(|p| -lapm[p] - dr[p]).collect();
    Ok(StationaryResidual { hjb: grid.interior_max(&r1), fpk: grid.interior_max(&r2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid1(nx: usize, nt: usize) -> Grid {
        Grid::new(GridSpec::unit_box(1, nx, nt)).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_value() {
        let g = grid1(8, 10);
        let c = MfgCoefficients::constant(&g, 1.0, 1.0);
        let cost = CostModel::zero(&g, 1.0);
        let m = SpaceTimeField::constant_in_time(&vec![1.0; g.npts], g.nlev());
        let zero = SpaceTimeField::zeros(g.npts, g.nlev());
        let v = solve_hjb_backward(&g, &c, &cost, &m, &zero, None, &SolverOptions::default()).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn terminal_condition_is_assigned() {
        let g = grid1(8, 6);
        let c = MfgCoefficients::constant(&g, 1.0, 1.0);
        let mut cost = CostModel::zero(&g, 1.0);
        cost.g = vec![g.sample(0.0, |x, _| 1.0 + x[0])];
        let m = SpaceTimeField::constant_in_time(&vec![1.5; g.npts], g.nlev());
        let zero = SpaceTimeField::zeros(g.npts, g.nlev());
        let v = solve_hjb_backward(&g, &c, &cost, &m, &zero, None, &SolverOptions::default()).unwrap();
        for &p in &g.interior_nodes {
            assert_eq!(v.level(6)[p], 0.5 * (1.0 + g.coord(p, 0)));
        }
    }

    #[test]
    fn uniform_density_is_steady() {
        let g = Grid::new(GridSpec::unit_box(2, 6, 5)).unwrap();
        let c = MfgCoefficients::constant(&g, 1.0, 1.0);
        let ones = SpaceTimeField::constant_in_time(&vec![2.0; g.npts], g.nlev());
        let zero = SpaceTimeField::zeros(g.npts, g.nlev());
        let m = solve_fpk_forward(&g, &c, &zero, &vec![2.0; g.npts], &ones, None, &SolverOptions::default()).unwrap();
        let d = m.max_abs_diff(&ones);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn matrices_match_residual_functions() {
        let g = Grid::new(GridSpec::unit_box(2, 5, 4)).unwrap();
        let c = MfgCoefficients {
            sigma: g.sample_st(|x, t| 1.0 + 0.3 * x[0] + 0.1 * t),
            kappa: g.sample_st(|x, _| 1.0 + 0.5 * x[1]),
        };
        let mut cost = CostModel::zero(&g, 1.0);
        cost.f = vec![g.sample_st(|x, t| 1.0 + x[0] * t)];
        let m = g.sample_st(|x, t| 1.0 + 0.2 * (x[0] + t).sin());
        let vb = g.sample_st(|x, t| 0.1 * x[0] * x[1] + t);
        let o = SolverOptions::default();
        let v = solve_hjb_backward(&g, &c, &cost, &m, &vb, None, &o).unwrap();
        assert!(hjb_residual(&g, &c, &cost, &v, &m) < 1e-10);
        let m2 = solve_fpk_forward(&g, &c, &v, m.level(0), &m, None, &o).unwrap();
        assert!(fpk_residual(&g, &c, &v, &m2) < 1e-10);
    }

    #[test]
    fn fixed_point_in_one_iteration() {
        let g = grid1(10, 10);
        let c = MfgCoefficients::constant(&g, 1.0, 1.0);
        let mut cost = CostModel::zero(&g, 1.0);
        cost.f = vec![SpaceTimeField::constant_in_time(&vec![1.0; g.npts], g.nlev())];
        let v0 = SpaceTimeField::zeros(g.npts, g.nlev());
        let m0 = SpaceTimeField::constant_in_time(&vec![1.0; g.npts], g.nlev());
        let sol =
            solve_mfg_timedep(&g, &c, &cost, &vec![1.0; g.npts], &v0, &m0, Some((&v0, &m0)), &SolverOptions::default())
                .unwrap();
        assert_eq!(sol.picard_iterations, 1);
    }

    #[test]
    fn baselines() {
        let g = Grid::new(GridSpec::unit_box(2, 10, 0)).unwrap();
        let b = build_stationary_baseline(&g, None).unwrap();
        assert!(b.v0.iter().all(|v| *v == 0.0) && b.m0.iter().all(|m| (*m - 1.0).abs() < 1e-15));
        let cost = CostModel::zero(&g, 1.0);
        let r = verify_stationary_residual(&g, &b, &cost, None).unwrap();
        assert!(r.hjb <= 1e-12 && r.fpk <= 1e-12);
        let seed = g.sample(0.0, |x, _| (std::f64::consts::PI * x[0]).cos());
        let s = build_stationary_baseline(&g, Some(&seed)).unwrap();
        assert!((g.integrate(&s.m0) - 1.0).abs() < 1e-12);
        assert!(s.gibbs_defect(&g) <= 1e-10);
    }
}
