//! Discrete unique-continuation check for the first-order difference system.
//!
//! Unknowns are all space-time values of `(v, m)`. Rows are the interior
//! equations of the linearised scheme, zero initial density, zero lateral
//! Dirichlet values, zero lateral normal derivatives and (optionally) the
//! homogeneous terminal coupling `v(T) = G1 m(T)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{Grid, SpaceTimeField};
use crate::linearize::{LinearSolver, Sources};

#[derive(Clone, Debug, Serialize)]
pub struct UcpReport {
    pub unknowns: usize,
    pub rows: usize,
    /// Singular values below `1e-10 sigma_max`.
    pub null_dim: usize,
    pub sigma_min_rel: f64,
    /// Interior sup norm of the least-squares solution with zero data,
    /// or of the worst null vector (scaled to unit sup) when the system is
    /// rank deficient.
    pub interior_sup: f64,
    /// Interior sup norm with a smooth bump injected into the HJB rows.
    pub bump_interior_sup: f64,
    /// Least-squares residual norm of the bump problem.
    pub bump_residual: f64,
}

fn normal_rows(grid: &Grid, f: &[f64]) -> Vec<f64> {
    grid.faces.iter().flat_map(|face| grid.normal_derivative(f, face)).collect()
}

pub fn ucp_residual_check(
    solver: &LinearSolver,
    f1: &SpaceTimeField,
    g1: &[f64],
    terminal_coupling: bool,
    bump_amplitude: f64,
) -> Result<UcpReport> {
    let g = solver.grid;
    let n = g.npts;
    let nl = g.nlev();
    let nt = g.nt();
    let nn = n * nl;
    let zero = SpaceTimeField::zeros(n, nl);
    let split = |x: &[f64]| {
        (
            SpaceTimeField { npts: n, nlev: nl, data: x[..nn].to_vec() },
            SpaceTimeField { npts: n, nlev: nl, data: x[nn..].to_vec() },
        )
    };
    // Row selection: residual rows minus interior terminal rows if uncoupled.
    let keep: Vec<bool> = {
        let total = 2 * nn;
        (0..total)
            .map(|i| {
                let terminal = i >= nt * n && i < (nt + 1) * n;
                !(terminal && !terminal_coupling && !g.is_boundary[i - nt * n])
            })
            .collect()
    };
    let rows_of = |v: &SpaceTimeField, m: &SpaceTimeField, src: &Sources| -> Vec<f64> {
        let r = solver.residual(f1, g1, &zero, &zero, src, v, m);
        let mut out: Vec<f64> = r.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| x).collect();
        for l in 0..nl {
            out.extend(normal_rows(g, v.level(l)));
            out.extend(normal_rows(g, m.level(l)));
        }
        out
    };
    let none = Sources::default();
    let (zv, zm) = split(&vec![0.0; 2 * nn]);
    let r0 = rows_of(&zv, &zm, &none);
    let mut a = DMatrix::<f64>::zeros(r0.len(), 2 * nn);
    let mut e = vec![0.0; 2 * nn];
    for j in 0..2 * nn {
        e[j] = 1.0;
        let (v, m) = split(&e);
        let r = rows_of(&v, &m, &none);
        for i in 0..r.len() {
            a[(i, j)] = r[i] - r0[i];
        }
        e[j] = 0.0;
    }
    let svd = a.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let null_dim = s.iter().filter(|&&x| x <= 1e-10 * smax).count();
    let interior_sup_of = |x: &[f64]| -> f64 {
        let mut m = 0.0f64;
        for l in 0..nl {
            for &p in &g.interior_nodes {
                m = m.max(x[l * n + p].abs()).max(x[nn + l * n + p].abs());
            }
        }
        m
    };
    let pinv = svd.clone().pseudo_inverse(1e-10 * smax).map_err(|e| crate::Error::Singular(e.to_string()))?;
    let b0: Vec<f64> = r0.iter().map(|x| -x).collect();
    let x0 = &pinv * nalgebra::DVector::from_vec(b0);
    let mut interior_sup = interior_sup_of(x0.as_slice());
    if null_dim > 0 {
        let vt = svd.v_t.as_ref().unwrap();
        for (i, &sv) in s.iter().enumerate() {
            if sv <= 1e-10 * smax {
                let row: Vec<f64> = vt.row(i).iter().cloned().collect();
                let sup = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                interior_sup = interior_sup.max(interior_sup_of(&row) / sup);
            }
        }
    }
    // Negative control: a bump that violates the homogeneous HJB rows.
    let mut bump = SpaceTimeField::zeros(n, nl);
    for l in 0..nl {
        let t = g.time(l) / g.spec.horizon;
        let row = bump.level_mut(l);
        for &p in &g.interior_nodes {
            let x = g.coords(p);
            let mut b = (std::f64::consts::PI * t).sin().powi(2);
            for a in 0..g.dim() {
                let s = (x[a] - g.spec.lower[a]) / (g.spec.upper[a] - g.spec.lower[a]);
                b *= (std::f64::consts::PI * s).sin().powi(2);
            }
            row[p] = bump_amplitude * b;
        }
    }
    let rb = rows_of(&zv, &zm, &Sources { hjb: Some(bump), ..Sources::default() });
    let bb: Vec<f64> = rb.iter().map(|x| -x).collect();
    let bb = nalgebra::DVector::from_vec(bb);
    let xb = &pinv * &bb;
    let bump_residual = (&a * &xb - &bb).norm();
    Ok(UcpReport {
        unknowns: 2 * nn,
        rows: r0.len(),
        null_dim,
        sigma_min_rel: smin / smax,
        interior_sup,
        bump_interior_sup: interior_sup_of(xb.as_slice()),
        bump_residual,
    })
}
