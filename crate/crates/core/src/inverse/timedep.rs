//! Time-dependent recovery from lateral Cauchy data of linearised
//! experiments: the first-order terminal coefficient, then the order-k
//! running and terminal coefficients, each by Tikhonov least squares over a
//! coarse piecewise-linear basis.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cauchy::{extract_c3, C3Record};
use crate::error::{Error, Result};
use crate::forward::CostModel;
use crate::grid::{Grid, SpaceTimeField};
use crate::linalg::{tikhonov, TikhonovFit};
use crate::linearize::{effective_first, solve_mixed, LinearSolver, LinearizedSolution, Sources};

/// Fine-index positions of the coarse nodes on an axis of `n` nodes.
fn coarse_positions(n: usize, factor: usize) -> Vec<usize> {
    let nc = ((n - 1) / factor.max(1)).max(1) + 1;
    (0..nc).map(|i| ((i * (n - 1)) as f64 / (nc - 1) as f64).round() as usize).collect()
}

fn hat(pos: &[usize], j: usize, i: usize) -> f64 {
    let c = pos[j] as f64;
    let x = i as f64;
    if j > 0 && x < c {
        let l = pos[j - 1] as f64;
        ((x - l) / (c - l)).max(0.0)
    } else if j + 1 < pos.len() && x > c {
        let r = pos[j + 1] as f64;
        ((r - x) / (r - c)).max(0.0)
    } else if x == c {
        1.0
    } else {
        0.0
    }
}

/// Tensor-product P1 hats on a mesh `factor` times coarser per axis.
pub fn space_hats(grid: &Grid, factor: usize) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let pos: Vec<Vec<usize>> = (0..d).map(|a| coarse_positions(grid.n[a], factor)).collect();
    let count: usize = pos.iter().map(|p| p.len()).product();
    (0..count)
        .map(|mut c| {
            let js: Vec<usize> = (0..d)
                .rev()
                .map(|a| {
                    let j = c % pos[a].len();
                    c /= pos[a].len();
                    j
                })
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            (0..grid.npts)
                .map(|p| {
                    let idx = grid.index(p);
                    (0..d).map(|a| hat(&pos[a], js[a], idx[a])).product()
                })
                .collect()
        })
        .collect()
}

/// P1 hats in time on a coarse mesh; the node at `t = 0` is dropped and the
/// first hat is held constant on `[0, t_1]` (the product of first-order
/// densities vanishes at `t = 0`, so a hat there is not identifiable).
pub fn time_hats(nt: usize, factor: usize) -> Vec<Vec<f64>> {
    let pos = coarse_positions(nt + 1, factor);
    (1..pos.len())
        .map(|j| {
            (0..=nt)
                .map(|l| if j == 1 && l <= pos[1] { 1.0 } else { hat(&pos, j, l) })
                .collect()
        })
        .collect()
}

/// Measured first-order experiment: inputs and lateral Cauchy record.
#[derive(Clone, Debug)]
pub struct LateralExperiment {
    pub g: SpaceTimeField,
    pub h: SpaceTimeField,
    pub record: C3Record,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub residual_norm: f64,
    pub rhs_norm: f64,
    pub alpha: f64,
    pub effective_rank: usize,
    pub unknowns: usize,
    pub rows: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

impl FitSummary {
    fn of(fit: &TikhonovFit, rows: usize) -> Self {
        FitSummary {
            residual_norm: fit.residual_norm,
            rhs_norm: fit.rhs_norm,
            alpha: fit.alpha,
            effective_rank: fit.effective_rank,
            unknowns: fit.x.len(),
            rows,
            sigma_max: fit.singular_values.first().copied().unwrap_or(0.0),
            sigma_min: fit.singular_values.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TerminalFit {
    pub g1: Vec<f64>,
    /// Fitted terminal data `v(T)` per experiment.
    pub terminal: Vec<Vec<f64>>,
    pub fits: Vec<FitSummary>,
}

fn observe(grid: &Grid, s: &LinearizedSolution) -> Result<Vec<f64>> {
    Ok(extract_c3(grid, "", &s.v, &s.m)?.observation())
}

fn assemble(cols: Vec<Vec<f64>>) -> DMatrix<f64> {
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Fits the terminal datum `phi = v(T)` of each experiment on the coarse
/// basis, then `G1 = sum_e phi_e m_e(T) / sum_e m_e(T)^2` pointwise.
pub fn recover_terminal_linear(
    solver: &LinearSolver,
    f1: &SpaceTimeField,
    experiments: &[LateralExperiment],
    factor: usize,
    rel_reg: f64,
    floor: f64,
    parallel: bool,
) -> Result<TerminalFit> {
    if experiments.is_empty() {
        return Err(Error::MissingData("no lateral experiments".into()));
    }
    let g = solver.grid;
    let n = g.npts;
    let nl = g.nlev();
    let zero_g1 = vec![0.0; n];
    let zero = SpaceTimeField::zeros(n, nl);
    let basis = space_hats(g, factor);
    // Columns do not depend on the experiment.
    let cols: Vec<Result<Vec<f64>>> = crate::par_map(basis.clone(), parallel, |b| {
        let src = Sources { terminal: Some(b), ..Sources::default() };
        observe(g, &solver.solve(f1, &zero_g1, &zero, &zero, &src)?)
    });
    let a = assemble(cols.into_iter().collect::<Result<Vec<_>>>()?);
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let mut terminal = Vec::new();
    let mut fits = Vec::new();
    for e in experiments {
        let s0 = solver.solve(f1, &zero_g1, &e.g, &e.h, &Sources::default())?;
        let o0 = observe(g, &s0)?;
        let obs = e.record.observation();
        if obs.len() != o0.len() {
            return Err(Error::ShapeMismatch { expected: o0.len(), got: obs.len() });
        }
        let b: Vec<f64> = obs.iter().zip(&o0).map(|(x, y)| x - y).collect();
        let fit = tikhonov(&a, &b, rel_reg)?;
        let mut phi = vec![0.0; n];
        for (c, bf) in fit.x.iter().zip(&basis) {
            for p in 0..n {
                phi[p] += c * bf[p];
            }
        }
        let src = Sources { terminal: Some(phi), ..Sources::default() };
        let s = solver.solve(f1, &zero_g1, &e.g, &e.h, &src)?;
        let (vt, mt) = (s.v.level(g.nt()), s.m.level(g.nt()));
        for p in 0..n {
            num[p] += vt[p] * mt[p];
            den[p] += mt[p] * mt[p];
        }
        terminal.push(vt.to_vec());
        fits.push(FitSummary::of(&fit, b.len()));
    }
    let dmax = den.iter().cloned().fold(0.0, f64::max);
    let mut g1 = vec![0.0; n];
    for p in 0..n {
        if den[p] <= floor * floor * dmax || dmax == 0.0 {
            return Err(Error::Positivity(format!("m(T) below the positivity floor at node {p}")));
        }
        g1[p] = num[p] / den[p];
    }
    Ok(TerminalFit { g1, terminal, fits })
}

/// Trace misfit of the coupled first-order solve with a given `G1`
/// (`max |.|` over the observation vector).
pub fn terminal_plugin_residual(
    solver: &LinearSolver,
    f1: &SpaceTimeField,
    g1: &[f64],
    e: &LateralExperiment,
) -> Result<f64> {
    let s = solver.solve(f1, g1, &e.g, &e.h, &Sources::default())?;
    let o = observe(solver.grid, &s)?;
    Ok(o.iter().zip(e.record.observation()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// Coarsening factors of the recovery mesh relative to the simulation grid.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct CoarseMesh {
    pub space: usize,
    pub time: usize,
}

impl Default for CoarseMesh {
    fn default() -> Self {
        CoarseMesh { space: 8, time: 4 }
    }
}

/// Measured order-k record: indices of the first-order experiments it mixes.
#[derive(Clone, Debug)]
pub struct MixedRecord {
    pub inputs: Vec<usize>,
    pub record: C3Record,
}

#[derive(Clone, Debug)]
pub struct HigherOrderFit {
    pub order: usize,
    pub f: SpaceTimeField,
    pub g: Vec<f64>,
    pub fit: FitSummary,
    /// Euclidean misfit of re-simulated traces against the measured ones.
    pub roundtrip_residual: f64,
    /// Fraction of interior space-time nodes (t > 0) where every product of
    /// first-order densities is below the floor.
    pub degenerate_fraction: f64,
}

fn product_fields(firsts: &[LinearizedSolution], inputs: &[usize]) -> SpaceTimeField {
    let mut p = firsts[inputs[0]].m.clone();
    for &i in &inputs[1..] {
        for (a, b) in p.data.iter_mut().zip(&firsts[i].m.data) {
            *a *= b;
        }
    }
    p
}

/// Recovers `F_k` (space-time) and `G_k` from order-k mixed records, given
/// the lower-order coefficients in `known` and the first-order solutions.
#[allow(clippy::too_many_arguments)]
pub fn recover_higher_order(
    solver: &LinearSolver,
    known: &CostModel,
    firsts: &[LinearizedSolution],
    records: &[MixedRecord],
    mesh: CoarseMesh,
    rel_reg: f64,
    floor: f64,
    parallel: bool,
) -> Result<HigherOrderFit> {
    let g = solver.grid;
    let n = g.npts;
    let nl = g.nlev();
    let nt = g.nt();
    let order = records.first().map(|r| r.inputs.len()).ok_or_else(|| Error::MissingData("no mixed records".into()))?;
    if order < 2 || records.iter().any(|r| r.inputs.len() != order) {
        return Err(Error::Config("mixed records must share one order >= 2".into()));
    }
    if records.iter().flat_map(|r| &r.inputs).any(|&i| i >= firsts.len()) {
        return Err(Error::MissingData("mixed record refers to a missing first-order experiment".into()));
    }
    // Known part: the order-k coefficient set to zero.
    let mut cost = known.clone();
    let zf = SpaceTimeField::zeros(n, nl);
    while cost.f.len() < order {
        cost.f.push(zf.clone());
    }
    while cost.g.len() < order {
        cost.g.push(vec![0.0; n]);
    }
    cost.f[order - 1] = zf.clone();
    cost.g[order - 1] = vec![0.0; n];
    let (f1, g1) = effective_first(&cost, solver.base_m);

    let products: Vec<SpaceTimeField> = records.iter().map(|r| product_fields(firsts, &r.inputs)).collect();
    let pmax = products.iter().map(|p| p.max_abs()).fold(0.0, f64::max);
    let mut small = 0usize;
    let mut total = 0usize;
    for l in 1..nl {
        for &p in &g.interior_nodes {
            total += 1;
            if products.iter().all(|pr| pr.level(l)[p].abs() < floor * pmax) {
                small += 1;
            }
        }
    }
    let degenerate_fraction = small as f64 / total.max(1) as f64;
    if pmax == 0.0 || degenerate_fraction > 0.5 {
        return Err(Error::Positivity(format!(
            "products of first-order densities below the floor on {:.0}% of the domain; use other inputs",
            100.0 * degenerate_fraction
        )));
    }

    let sh = space_hats(g, mesh.space);
    let th = time_hats(nt, mesh.time);
    let mut fbasis: Vec<SpaceTimeField> = Vec::new();
    for tb in &th {
        for s in &sh {
            let mut f = SpaceTimeField::zeros(n, nl);
            for l in 0..nl {
                let row = f.level_mut(l);
                for p in 0..n {
                    row[p] = tb[l] * s[p];
                }
            }
            fbasis.push(f);
        }
    }
    let nf = fbasis.len();
    let ng = sh.len();

    let mut rows = Vec::new();
    let mut cols_per_record = Vec::new();
    for (rec, prod) in records.iter().zip(&products) {
        let firsts_here: Vec<&LinearizedSolution> = rec.inputs.iter().map(|&i| &firsts[i]).collect();
        let base = solve_mixed(solver, &cost, &firsts_here)?;
        let o0 = observe(g, &base)?;
        let obs = rec.record.observation();
        if obs.len() != o0.len() {
            return Err(Error::ShapeMismatch { expected: o0.len(), got: obs.len() });
        }
        rows.extend(obs.iter().zip(&o0).map(|(x, y)| x - y));
        let jobs: Vec<usize> = (0..nf + ng).collect();
        let cols: Vec<Result<Vec<f64>>> = crate::par_map(jobs, parallel, |j| {
            let src = if j < nf {
                let mut s = fbasis[j].clone();
                for (a, b) in s.data.iter_mut().zip(&prod.data) {
                    *a *= b;
                }
                Sources { hjb: Some(s), ..Sources::default() }
            } else {
                let pt = prod.level(nt);
                Sources { terminal: Some((0..n).map(|p| sh[j - nf][p] * pt[p]).collect()), ..Sources::default() }
            };
            observe(g, &solver.solve(&f1, &g1, &zf, &zf, &src)?)
        });
        cols_per_record.push(cols.into_iter().collect::<Result<Vec<_>>>()?);
    }
    let total_rows = rows.len();
    let a = DMatrix::from_fn(total_rows, nf + ng, |i, j| {
        let len = total_rows / records.len();
        cols_per_record[i / len][j][i % len]
    });
    let fit = tikhonov(&a, &rows, rel_reg)?;
    let mut f = SpaceTimeField::zeros(n, nl);
    for (c, b) in fit.x[..nf].iter().zip(&fbasis) {
        f.axpy(*c, b);
    }
    let mut gk = vec![0.0; n];
    for (c, b) in fit.x[nf..].iter().zip(&sh) {
        for p in 0..n {
            gk[p] += c * b[p];
        }
    }

    // Round trip with the recovered coefficient in place.
    let mut full = cost.clone();
    full.f[order - 1] = f.clone();
    full.g[order - 1] = gk.clone();
    let mut rt = 0.0;
    for rec in records {
        let firsts_here: Vec<&LinearizedSolution> = rec.inputs.iter().map(|&i| &firsts[i]).collect();
        let s = solve_mixed(solver, &full, &firsts_here)?;
        let o = observe(g, &s)?;
        rt += o.iter().zip(rec.record.observation()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(HigherOrderFit {
        order,
        f,
        g: gk,
        fit: FitSummary::of(&fit, total_rows),
        roundtrip_residual: rt.sqrt(),
        degenerate_fraction,
    })
}
