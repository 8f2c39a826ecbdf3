//! Linearised forward-backward systems around a computed base solution, their
//! higher-order mixed derivatives, and the Fréchet remainder check.
//!
//! The linear schemes are the exact derivatives of the discrete nonlinear
//! scheme in `forward`, so the remainder of the discrete solution map is
//! second order in the perturbation amplitude.
//!
//! Higher orders follow one recursion. For a set `S` of perturbation labels
//! the mixed derivative `(v^S, m^S)` solves the first-order system with zero
//! boundary data and sources built from strict subsets of `S`:
//!   HJB:      -1/2 kappa sum_{(A,B)} grad v^A . grad v^B + sum_pi F^(|pi|) prod_{P in pi} m^P
//!   FPK:      sum_{(A,B)} div(kappa m^A grad v^B)
//!   terminal: sum_pi G^(|pi|) prod_{P in pi} m^P(T)
//! where `(A,B)` runs over ordered splits of `S` into two nonempty parts and
//! `pi` over set partitions of `S` with at least two blocks.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::forward::{
    fpk_matrix, solve_mfg_timedep, CostModel, HjbOperator, MfgCoefficients, SolverOptions, StationarySolution,
};
use crate::grid::{Grid, SpaceTimeField};
use crate::linalg::{loglog_slope, Banded, BandedLu};

#[derive(Clone, Debug, Default)]
pub struct Sources {
    /// Added to the HJB right-hand side of row level `n` (0..nt-1).
    pub hjb: Option<SpaceTimeField>,
    /// Added to the FPK right-hand side of level `n` (1..nt).
    pub fpk: Option<SpaceTimeField>,
    pub terminal: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct LinearizedSolution {
    pub order: Vec<usize>,
    pub v: SpaceTimeField,
    pub m: SpaceTimeField,
    pub picard_iterations: usize,
    pub final_update_norm: f64,
}

/// Linear solver around a base path `(V, M)` with cached factorisations.
pub struct LinearSolver<'a> {
    pub grid: &'a Grid,
    pub coeffs: &'a MfgCoefficients,
    pub base_v: &'a SpaceTimeField,
    pub base_m: &'a SpaceTimeField,
    pub opts: SolverOptions,
    hjb: HjbOperator,
    fpk: Vec<BandedLu>,
    grad_v: Vec<Vec<Vec<f64>>>,
}

impl<'a> LinearSolver<'a> {
    pub fn new(
        grid: &'a Grid,
        coeffs: &'a MfgCoefficients,
        base_v: &'a SpaceTimeField,
        base_m: &'a SpaceTimeField,
        opts: SolverOptions,
    ) -> Result<Self> {
        check_len(grid.npts * grid.nlev(), base_v.data.len())?;
        check_len(grid.npts * grid.nlev(), base_m.data.len())?;
        let dt = grid.dt();
        let hjb = HjbOperator::new(grid, coeffs)?;
        let fpk = (1..grid.nlev())
            .map(|l| fpk_matrix(grid, dt, coeffs.sigma.level(l), coeffs.kappa.level(l), base_v.level(l)))
            .collect::<Result<Vec<_>>>()?;
        let grad_v = (0..grid.nlev()).map(|l| grid.gradient(base_v.level(l)).unwrap()).collect();
        Ok(LinearSolver { grid, coeffs, base_v, base_m, opts, hjb, fpk, grad_v })
    }

    fn hjb_sweep(
        &self,
        f1: &SpaceTimeField,
        g1: &[f64],
        vb: &SpaceTimeField,
        m: &SpaceTimeField,
        src: &Sources,
    ) -> SpaceTimeField {
        let g = self.grid;
        let n = g.npts;
        let nt = g.nt();
        let dt = g.dt();
        let mut v = SpaceTimeField::zeros(n, g.nlev());
        {
            let mt = m.level(nt);
            let term = v.level_mut(nt);
            for p in 0..n {
                term[p] = if g.is_boundary[p] {
                    vb.level(nt)[p]
                } else {
                    g1[p] * mt[p] + src.terminal.as_ref().map_or(0.0, |t| t[p])
                };
            }
        }
        for l in (0..nt).rev() {
            let next = v.level(l + 1).to_vec();
            let mut cross = vec![0.0; n];
            for a in 0..g.dim() {
                let d = g.d1(&next, a);
                for p in 0..n {
                    cross[p] += self.grad_v[l + 1][a][p] * d[p];
                }
            }
            let kap = self.coeffs.kappa.level(l);
            let mut rhs = vec![0.0; n];
            for p in 0..n {
                rhs[p] = if g.is_boundary[p] {
                    vb.level(l)[p]
                } else {
                    next[p] / dt - kap[p] * cross[p]
                        + f1.level(l)[p] * m.level(l)[p]
                        + src.hjb.as_ref().map_or(0.0, |s| s.level(l)[p])
                };
            }
            self.hjb.at(l).solve_in_place(&mut rhs);
            v.level_mut(l).copy_from_slice(&rhs);
        }
        v
    }

    fn fpk_sweep(&self, v: &SpaceTimeField, mb: &SpaceTimeField, src: &Sources) -> SpaceTimeField {
        let g = self.grid;
        let n = g.npts;
        let dt = g.dt();
        let mut m = SpaceTimeField::zeros(n, g.nlev());
        for &p in &g.boundary_nodes {
            m.level_mut(0)[p] = mb.level(0)[p];
        }
        for l in 0..g.nt() {
            let dr = g.drift(self.coeffs.kappa.level(l + 1), self.base_m.level(l + 1), v.level(l + 1));
            let prev = m.level(l);
            let mut rhs: Vec<f64> = (0..n)
                .map(|p| {
                    if g.is_boundary[p] {
                        mb.level(l + 1)[p]
                    } else {
                        prev[p] / dt + dr[p] + src.fpk.as_ref().map_or(0.0, |s| s.level(l + 1)[p])
                    }
                })
                .collect();
            self.fpk[l].solve_in_place(&mut rhs);
            m.level_mut(l + 1).copy_from_slice(&rhs);
        }
        m
    }

    /// Damped Picard iteration on the linear coupling. Initial density is
    /// zero in the interior.
    pub fn solve(
        &self,
        f1: &SpaceTimeField,
        g1: &[f64],
        vb: &SpaceTimeField,
        mb: &SpaceTimeField,
        src: &Sources,
    ) -> Result<LinearizedSolution> {
        let g = self.grid;
        let n = g.npts;
        check_len(n * g.nlev(), f1.data.len())?;
        check_len(n, g1.len())?;
        check_len(n * g.nlev(), vb.data.len())?;
        check_len(n * g.nlev(), mb.data.len())?;
        let mut m = SpaceTimeField::zeros(n, g.nlev());
        for l in 0..g.nlev() {
            for &p in &g.boundary_nodes {
                m.level_mut(l)[p] = mb.level(l)[p];
            }
        }
        let mut v_prev: Option<SpaceTimeField> = None;
        let mut first = f64::NAN;
        let theta = self.opts.theta;
        for it in 1..=self.opts.max_iter {
            let v = self.hjb_sweep(f1, g1, vb, &m, src);
            let mt = self.fpk_sweep(&v, mb, src);
            let scale = 1.0 + v.max_abs().max(mt.max_abs());
            let dv = v_prev.as_ref().map_or(f64::INFINITY, |vp| v.max_abs_diff(vp));
            let upd = dv.max(mt.max_abs_diff(&m));
            if it == 2 {
                first = upd;
            }
            if !upd.is_finite() && it > 1 || (it > 2 && upd > 1e6 * first) {
                return Err(Error::StabilityViolation(format!("Picard update grew to {upd:.3e}")));
            }
            if upd < self.opts.tol * scale || (it > 1 && mt.max_abs() == 0.0 && v.max_abs() == 0.0) {
                return Ok(LinearizedSolution { order: vec![], v, m: mt, picard_iterations: it, final_update_norm: upd });
            }
            for (a, b) in m.data.iter_mut().zip(&mt.data) {
                *a = theta * b + (1.0 - theta) * *a;
            }
            v_prev = Some(v);
        }
        Err(Error::StabilityViolation(format!("no convergence in {} Picard iterations", self.opts.max_iter)))
    }

    /// Residual of every row of the linear system, written directly from the
    /// equations (used for reporting and for the dense oracle).
    #[allow(clippy::too_many_arguments)]
    pub fn residual(
        &self,
        f1: &SpaceTimeField,
        g1: &[f64],
        vb: &SpaceTimeField,
        mb: &SpaceTimeField,
        src: &Sources,
        v: &SpaceTimeField,
        m: &SpaceTimeField,
    ) -> Vec<f64> {
        let g = self.grid;
        let nt = g.nt();
        let dt = g.dt();
        let mut r = Vec::with_capacity(2 * g.npts * g.nlev());
        for l in 0..nt {
            let lap = g.laplacian(v.level(l)).unwrap();
            let gv = g.gradient(v.level(l + 1)).unwrap();
            let gb = g.gradient(self.base_v.level(l + 1)).unwrap();
            for p in 0..g.npts {
                if g.is_boundary[p] {
                    r.push(v.level(l)[p] - vb.level(l)[p]);
                    continue;
                }
                let dot: f64 = (0..g.dim()).map(|a| gb[a][p] * gv[a][p]).sum();
                r.push(
                    (v.level(l)[p] - v.level(l + 1)[p]) / dt - self.coeffs.sigma.level(l)[p] * lap[p]
                        + self.coeffs.kappa.level(l)[p] * dot
                        - f1.level(l)[p] * m.level(l)[p]
                        - src.hjb.as_ref().map_or(0.0, |s| s.level(l)[p]),
                );
            }
        }
        for p in 0..g.npts {
            r.push(if g.is_boundary[p] {
                v.level(nt)[p] - vb.level(nt)[p]
            } else {
                v.level(nt)[p] - g1[p] * m.level(nt)[p] - src.terminal.as_ref().map_or(0.0, |t| t[p])
            });
        }
        for p in 0..g.npts {
            r.push(if g.is_boundary[p] { m.level(0)[p] - mb.level(0)[p] } else { m.level(0)[p] });
        }
        for l in 1..=nt {
            let sm: Vec<f64> = (0..g.npts).map(|p| self.coeffs.sigma.level(l)[p] * m.level(l)[p]).collect();
            let lap = g.laplacian(&sm).unwrap();
            let k = self.coeffs.kappa.level(l);
            let d1 = g.drift(k, m.level(l), self.base_v.level(l));
            let d2 = g.drift(k, self.base_m.level(l), v.level(l));
            for p in 0..g.npts {
                if g.is_boundary[p] {
                    r.push(m.level(l)[p] - mb.level(l)[p]);
                    continue;
                }
                r.push(
                    (m.level(l)[p] - m.level(l - 1)[p]) / dt
                        - lap[p]
                        - d1[p]
                        - d2[p]
                        - src.fpk.as_ref().map_or(0.0, |s| s.level(l)[p]),
                );
            }
        }
        r
    }
}

/// Dense space-time oracle: assembles the affine residual column by column
/// and solves the full linear system with LU. Only for coarse grids.
pub fn monolithic_solve(
    solver: &LinearSolver,
    f1: &SpaceTimeField,
    g1: &[f64],
    vb: &SpaceTimeField,
    mb: &SpaceTimeField,
    src: &Sources,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let g = solver.grid;
    let nn = g.npts * g.nlev();
    if 2 * nn > 12_000 {
        return Err(Error::InvalidGrid(format!("{} unknowns is too many for the dense oracle", 2 * nn)));
    }
    let split = |x: &[f64]| {
        (
            SpaceTimeField { npts: g.npts, nlev: g.nlev(), data: x[..nn].to_vec() },
            SpaceTimeField { npts: g.npts, nlev: g.nlev(), data: x[nn..].to_vec() },
        )
    };
    let zero = vec![0.0; 2 * nn];
    let (v0, m0) = split(&zero);
    let r0 = solver.residual(f1, g1, vb, mb, src, &v0, &m0);
    let mut a = nalgebra::DMatrix::<f64>::zeros(r0.len(), 2 * nn);
    let mut e = zero.clone();
    for j in 0..2 * nn {
        e[j] = 1.0;
        let (v, m) = split(&e);
        let r = solver.residual(f1, g1, vb, mb, src, &v, &m);
        for i in 0..r.len() {
            a[(i, j)] = r[i] - r0[i];
        }
        e[j] = 0.0;
    }
    let b: Vec<f64> = r0.iter().map(|x| -x).collect();
    let x = crate::linalg::dense_solve(a, &b)?;
    Ok(split(&x))
}

/// Rejects data violating the corner conditions `h(0) = 0` and
/// `g(T) = G1 h(T)` on the boundary.
pub fn check_compatibility(grid: &Grid, g: &SpaceTimeField, h: &SpaceTimeField, g1: &[f64], tol: f64) -> Result<()> {
    let nt = grid.nt();
    for &p in &grid.boundary_nodes {
        if h.level(0)[p].abs() > tol {
            return Err(Error::Incompatible(format!("h(0) = {:.3e} at boundary node {p}", h.level(0)[p])));
        }
        let d = g.level(nt)[p] - g1[p] * h.level(nt)[p];
        if d.abs() > tol {
            return Err(Error::Incompatible(format!("g(T) - G1 h(T) = {d:.3e} at boundary node {p}")));
        }
    }
    Ok(())
}

/// Effective first derivatives of the cost along the base path.
pub fn effective_first(cost: &CostModel, base_m: &SpaceTimeField) -> (SpaceTimeField, Vec<f64>) {
    let f1 = cost.f_along(1, base_m);
    let g1 = cost.g_field(1, base_m.level(base_m.nlev - 1));
    (f1, g1)
}

pub fn solve_first_order(
    solver: &LinearSolver,
    cost: &CostModel,
    g: &SpaceTimeField,
    h: &SpaceTimeField,
) -> Result<LinearizedSolution> {
    let (f1, g1) = effective_first(cost, solver.base_m);
    let mut s = solver.solve(&f1, &g1, g, h, &Sources::default())?;
    s.order = vec![1];
    Ok(s)
}

fn set_partitions(mask: u32) -> Vec<Vec<u32>> {
    if mask == 0 {
        return vec![vec![]];
    }
    let low = mask & mask.wrapping_neg();
    let rest = mask & !low;
    let mut out = Vec::new();
    // Iterate over subsets of `rest` joining the block of `low`.
    let mut sub = rest;
    loop {
        let block = low | sub;
        for mut p in set_partitions(rest & !sub) {
            p.push(block);
            out.push(p);
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    out
}

fn ordered_splits(mask: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut a = (mask - 1) & mask;
    while a != 0 {
        out.push((a, mask & !a));
        a = (a - 1) & mask;
    }
    out
}

/// Mixed derivative with respect to all perturbations whose first-order
/// solutions are given (e.g. two inputs give `(v^{12}, m^{12})`). All
/// intermediate subsets are solved along the way.
pub fn solve_mixed(solver: &LinearSolver, cost: &CostModel, firsts: &[&LinearizedSolution]) -> Result<LinearizedSolution> {
    let k = firsts.len();
    if k == 0 || k > 8 {
        return Err(Error::Config(format!("mixed order {k} not in 1..=8")));
    }
    let g = solver.grid;
    let n = g.npts;
    let nl = g.nlev();
    let nt = g.nt();
    let (f1, g1) = effective_first(cost, solver.base_m);
    let fder: Vec<SpaceTimeField> = (0..=k).map(|j| cost.f_along(j, solver.base_m)).collect();
    let gder: Vec<Vec<f64>> = (0..=k).map(|j| cost.g_field(j, solver.base_m.level(nt))).collect();
    let full = (1u32 << k) - 1;
    let mut sols: Vec<Option<LinearizedSolution>> = vec![None; 1 << k];
    for (i, s) in firsts.iter().enumerate() {
        sols[1 << i] = Some((*s).clone());
    }
    let zero = SpaceTimeField::zeros(n, nl);
    let mut masks: Vec<u32> = (1..=full).filter(|m| m.count_ones() >= 2).collect();
    masks.sort_by_key(|m| m.count_ones());
    for mask in masks {
        let get = |m: u32| sols[m as usize].as_ref().unwrap();
        let mut hjb = SpaceTimeField::zeros(n, nl);
        let mut fpk = SpaceTimeField::zeros(n, nl);
        let mut term = vec![0.0; n];
        for (a, b) in ordered_splits(mask) {
            let (sa, sb) = (get(a), get(b));
            for l in 0..nt {
                let ga = g.gradient(sa.v.level(l + 1))?;
                let gb = g.gradient(sb.v.level(l + 1))?;
                let kap = solver.coeffs.kappa.level(l);
                let row = hjb.level_mut(l);
                for p in 0..n {
                    let dot: f64 = (0..g.dim()).map(|d| ga[d][p] * gb[d][p]).sum();
                    row[p] -= 0.5 * kap[p] * dot;
                }
            }
            for l in 1..=nt {
                let dr = g.drift(solver.coeffs.kappa.level(l), sa.m.level(l), sb.v.level(l));
                for (x, d) in fpk.level_mut(l).iter_mut().zip(dr) {
                    *x += d;
                }
            }
        }
        for part in set_partitions(mask) {
            let j = part.len();
            if j < 2 {
                continue;
            }
            for l in 0..nt {
                let fj = fder[j].level(l).to_vec();
                let row = hjb.level_mut(l);
                for p in 0..n {
                    let prod: f64 = part.iter().map(|&b| get(b).m.level(l)[p]).product();
                    row[p] += fj[p] * prod;
                }
            }
            for p in 0..n {
                let prod: f64 = part.iter().map(|&b| get(b).m.level(nt)[p]).product();
                term[p] += gder[j][p] * prod;
            }
        }
        let src = Sources { hjb: Some(hjb), fpk: Some(fpk), terminal: Some(term) };
        let mut s = solver.solve(&f1, &g1, &zero, &zero, &src)?;
        s.order = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).collect();
        sols[mask as usize] = Some(s);
    }
    Ok(sols[full as usize].take().unwrap())
}

/// Nonlinear problem description for the Fréchet check.
pub struct NonlinearProblem<'a> {
    pub grid: &'a Grid,
    pub coeffs: &'a MfgCoefficients,
    pub cost: &'a CostModel,
    pub f: &'a [f64],
    pub vb: &'a SpaceTimeField,
    pub mb: &'a SpaceTimeField,
    pub opts: SolverOptions,
}

impl NonlinearProblem<'_> {
    /// Solution for boundary data `(vb + sum eps_l g_l, mb + sum eps_l h_l)`.
    pub fn solve_perturbed(
        &self,
        data: &[(&SpaceTimeField, &SpaceTimeField)],
        eps: &[f64],
        init: Option<(&SpaceTimeField, &SpaceTimeField)>,
    ) -> Result<(SpaceTimeField, SpaceTimeField)> {
        let mut vb = self.vb.clone();
        let mut mb = self.mb.clone();
        for ((g, h), e) in data.iter().zip(eps) {
            vb.axpy(*e, g);
            mb.axpy(*e, h);
        }
        let s = solve_mfg_timedep(self.grid, self.coeffs, self.cost, self.f, &vb, &mb, init, &self.opts)?;
        Ok((s.v, s.m))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FrechetReport {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub linear_iterations: usize,
}

/// `e(eps) = |S(eps (g,h)) - S(0) - eps A(g,h)|_sup` and its log-log slope.
pub fn frechet_check(
    prob: &NonlinearProblem,
    g: &SpaceTimeField,
    h: &SpaceTimeField,
    epsilons: &[f64],
) -> Result<FrechetReport> {
    let (v0, m0) = prob.solve_perturbed(&[], &[], None)?;
    let solver = LinearSolver::new(prob.grid, prob.coeffs, &v0, &m0, prob.opts.clone())?;
    let lin = solve_first_order(&solver, prob.cost, g, h)?;
    let mut errors = Vec::new();
    for &e in epsilons {
        let (ve, me) = prob.solve_perturbed(&[(g, h)], &[e], Some((&v0, &m0)))?;
        let mut err: f64 = 0.0;
        for i in 0..ve.data.len() {
            err = err.max((ve.data[i] - v0.data[i] - e * lin.v.data[i]).abs());
            err = err.max((me.data[i] - m0.data[i] - e * lin.m.data[i]).abs());
        }
        errors.push(err);
    }
    let slope = if errors.iter().all(|e| *e > 0.0) { loglog_slope(epsilons, &errors) } else { f64::NAN };
    Ok(FrechetReport { epsilons: epsilons.to_vec(), errors, slope, linear_iterations: lin.picard_iterations })
}

/// Scalar equation `lap m + sign grad(v0) . grad m + q m = 0`.
#[derive(Clone, Debug)]
pub struct ScalarReducedEquation {
    /// Potential generating the drift (`grad v0`).
    pub v0: Vec<f64>,
    pub q: Vec<f64>,
    pub sign: f64,
}

impl ScalarReducedEquation {
    /// Conjugated potential `H = q - |grad v0|^2/4 - (sign/2) lap v0` seen by
    /// the remainder after substituting `m = exp(xi.x - sign v0 / 2)(1 + w)`.
    pub fn conjugated_potential(&self, grid: &Grid) -> Vec<f64> {
        let g2 = grid.grad_sq(&self.v0);
        let lap = grid.laplacian(&self.v0).unwrap();
        (0..grid.npts).map(|p| self.q[p] - 0.25 * g2[p] - 0.5 * self.sign * lap[p]).collect()
    }

    pub fn apply(&self, grid: &Grid, m: &[f64]) -> Vec<f64> {
        let lap = grid.laplacian(m).unwrap();
        let gm = grid.gradient(m).unwrap();
        let gv = grid.gradient(&self.v0).unwrap();
        (0..grid.npts)
            .map(|p| {
                let dot: f64 = (0..grid.dim()).map(|a| gv[a][p] * gm[a][p]).sum();
                lap[p] + self.sign * dot + self.q[p] * m[p]
            })
            .collect()
    }

    /// Dirichlet problem with boundary values taken from `h`.
    pub fn solve_dirichlet(&self, grid: &Grid, h: &[f64]) -> Result<Vec<f64>> {
        check_len(grid.npts, h.len())?;
        let bw = grid.strides[0];
        let mut a = Banded::zeros(grid.npts, bw, bw);
        let gv = grid.gradient(&self.v0)?;
        let mut rhs = vec![0.0; grid.npts];
        for p in 0..grid.npts {
            if grid.is_boundary[p] {
                a.add(p, p, 1.0);
                rhs[p] = h[p];
                continue;
            }
            a.add(p, p, self.q[p]);
            for ax in 0..grid.dim() {
                let s = grid.strides[ax];
                let ih2 = 1.0 / (grid.h[ax] * grid.h[ax]);
                let c = self.sign * gv[ax][p] / (2.0 * grid.h[ax]);
                a.add(p, p, -2.0 * ih2);
                a.add(p, p + s, ih2 + c);
                a.add(p, p - s, ih2 - c);
            }
        }
        Ok(a.factor()?.solve(&rhs))
    }
}

/// Drift `grad v0` and potential `q = lap v0 - F1 m0` of the reduced equation.
pub fn reduce_to_scalar(grid: &Grid, base: &StationarySolution, f1: &[f64]) -> Result<ScalarReducedEquation> {
    check_len(grid.npts, f1.len())?;
    let lap = grid.laplacian(&base.v0)?;
    let q = (0..grid.npts).map(|p| lap[p] - f1[p] * base.m0[p]).collect();
    Ok(ScalarReducedEquation { v0: base.v0.clone(), q, sign: 1.0 })
}

/// Coupled stationary first-order system
///   -lap v + grad v0 . grad v = F1 m,
///   -lap m - div(m0 grad v) - div(m grad v0) = 0,
/// with Dirichlet data `g` for v and `h` for m. Unknowns are interleaved.
pub fn solve_first_order_stationary(
    grid: &Grid,
    base: &StationarySolution,
    f1: &[f64],
    g: &[f64],
    h: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    for x in [f1, g, h] {
        check_len(grid.npts, x.len())?;
    }
    let n = grid.npts;
    let bw = 2 * grid.strides[0] + 1;
    let mut a = Banded::zeros(2 * n, bw, bw);
    let mut rhs = vec![0.0; 2 * n];
    let gv = grid.gradient(&base.v0)?;
    let v0 = &base.v0;
    let m0 = &base.m0;
    for p in 0..n {
        let (iv, im) = (2 * p, 2 * p + 1);
        if grid.is_boundary[p] {
            a.add(iv, iv, 1.0);
            a.add(im, im, 1.0);
            rhs[iv] = g[p];
            rhs[im] = h[p];
            continue;
        }
        a.add(iv, im, -f1[p]);
        for ax in 0..grid.dim() {
            let s = grid.strides[ax];
            let ih2 = 1.0 / (grid.h[ax] * grid.h[ax]);
            let c = gv[ax][p] / (2.0 * grid.h[ax]);
            a.add(iv, iv, 2.0 * ih2);
            a.add(iv, 2 * (p + s), -ih2 + c);
            a.add(iv, 2 * (p - s), -ih2 - c);
            a.add(im, im, 2.0 * ih2);
            a.add(im, 2 * (p + s) + 1, -ih2);
            a.add(im, 2 * (p - s) + 1, -ih2);
            // -div(m0 grad v): face averages of m0.
            let fp = 0.5 * (m0[p] + m0[p + s]) * ih2;
            let fm = 0.5 * (m0[p] + m0[p - s]) * ih2;
            a.add(im, 2 * (p + s), -fp);
            a.add(im, iv, fp + fm);
            a.add(im, 2 * (p - s), -fm);
            // -div(m grad v0): face averages of m.
            let dp = 0.5 * (v0[p + s] - v0[p]) * ih2;
            let dm = 0.5 * (v0[p] - v0[p - s]) * ih2;
            a.add(im, im, -(dp - dm));
            a.add(im, 2 * (p + s) + 1, -dp);
            a.add(im, 2 * (p - s) + 1, dm);
        }
    }
    let x = a.factor()?.solve(&rhs);
    Ok(((0..n).map(|p| x[2 * p]).collect(), (0..n).map(|p| x[2 * p + 1]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn partitions_are_bell_numbers() {
        assert_eq!(set_partitions(0b1).len(), 1);
        assert_eq!(set_partitions(0b11).len(), 2);
        assert_eq!(set_partitions(0b111).len(), 5);
        assert_eq!(set_partitions(0b1111).len(), 15);
        assert_eq!(ordered_splits(0b111).len(), 6);
    }

    #[test]
    fn zero_data_zero_solution() {
        let g = Grid::new(GridSpec::unit_box(1, 6, 6)).unwrap();
        let c = MfgCoefficients::constant(&g, 1.0, 1.0);
        let v = SpaceTimeField::zeros(g.npts, g.nlev());
        let m = SpaceTimeField::constant_in_time(&vec![1.0; g.npts], g.nlev());
        let mut cost = CostModel::zero(&g, 1.0);
        cost.f = vec![m.clone()];
        let s = LinearSolver::new(&g, &c, &v, &m, SolverOptions::default()).unwrap();
        let z = SpaceTimeField::zeros(g.npts, g.nlev());
        let sol = solve_first_order(&s, &cost, &z, &z).unwrap();
        assert_eq!(sol.v.max_abs(), 0.0);
        assert_eq!(sol.m.max_abs(), 0.0);
    }

    #[test]
    fn compatibility_rejects_bad_corners() {
        let g = Grid::new(GridSpec::unit_box(1, 5, 4)).unwrap();
        let h = g.sample_st(|_, t| t);
        let gg = g.sample_st(|_, t| 2.0 * t);
        assert!(check_compatibility(&g, &gg, &h, &vec![2.0; g.npts], 1e-12).is_ok());
        assert!(check_compatibility(&g, &gg, &h, &vec![1.0; g.npts], 1e-12).is_err());
        let h1 = g.sample_st(|_, t| 1.0 + t);
        assert!(check_compatibility(&g, &gg, &h1, &vec![2.0; g.npts], 1e-12).is_err());
    }

    #[test]
    fn reduced_potential_on_constant_base() {
        let g = Grid::new(GridSpec::unit_box(2, 6, 0)).unwrap();
        let b = crate::forward::build_stationary_baseline(&g, None).unwrap();
        let f1 = g.sample(0.0, |x, _| 1.0 + x[0]);
        let r = reduce_to_scalar(&g, &b, &f1).unwrap();
        for p in 0..g.npts {
            assert!((r.q[p] + f1[p]).abs() < 1e-14);
        }
        let r0 = reduce_to_scalar(&g, &b, &vec![0.0; g.npts]).unwrap();
        assert!(r0.q.iter().all(|q| q.abs() < 1e-14));
    }
}
