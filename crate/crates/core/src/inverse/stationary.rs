//! Stationary reconstruction: the base state from Cauchy data of `v0`, and
//! the first-order cost coefficient from probing records via CGO pairings
//! and Fourier synthesis.

use num_complex::Complex64;
use serde::Serialize;

use crate::cauchy::C2Record;
use crate::cgo::{build_cgo, make_xi_pair, make_zero_pair, CgoOptions, CgoSolution};
use crate::error::{check_len, Error, Result};
use crate::forward::{build_stationary_baseline, StationarySolution};
use crate::grid::{BoundaryTrace, Grid};
use crate::linalg::Banded;
use crate::linearize::ScalarReducedEquation;

type C = Complex64;

/// Base state from the Dirichlet and Neumann traces of `v0`.
///
/// `w = exp(-v0/2)` is harmonic for a base with vanishing ergodic constant;
/// the Dirichlet problem is solved for `w` and the Neumann trace is used as
/// a consistency check with relative tolerance `tol`.
pub fn recover_stationary_state(grid: &Grid, v0: &BoundaryTrace, tol: f64) -> Result<StationarySolution> {
    let k = grid.face_points();
    if v0.values.len() != k || v0.normal.len() != k {
        return Err(Error::MissingData(format!("stationary trace needs {k} values and normals")));
    }
    let n = grid.npts;
    let mut bval = vec![f64::NAN; n];
    let mut off = 0;
    for face in &grid.faces {
        for (i, &p) in face.nodes.iter().enumerate() {
            bval[p] = (-0.5 * v0.values[off + i]).exp();
        }
        off += face.nodes.len();
    }
    let bw = grid.strides[0];
    let mut a = Banded::zeros(n, bw, bw);
    let mut rhs = vec![0.0; n];
    for p in 0..n {
        if grid.is_boundary[p] {
            a.add(p, p, 1.0);
            rhs[p] = bval[p];
            continue;
        }
        for ax in 0..grid.dim() {
            let s = grid.strides[ax];
            let ih2 = 1.0 / (grid.h[ax] * grid.h[ax]);
            a.add(p, p, -2.0 * ih2);
            a.add(p, p + s, ih2);
            a.add(p, p - s, ih2);
        }
    }
    let w = a.factor()?.solve(&rhs);
    if let Some(p) = (0..n).find(|&p| !(w[p] > 0.0)) {
        return Err(Error::InconsistentCauchy(format!("harmonic extension not positive at node {p}")));
    }
    let v: Vec<f64> = w.iter().map(|x| -2.0 * x.ln()).collect();
    let tr = grid.restrict_to_boundary(&v)?;
    let scale = 1.0 + v0.normal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let misfit = tr.normal.iter().zip(&v0.normal).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    if misfit > tol {
        return Err(Error::InconsistentCauchy(format!("Neumann misfit {misfit:.3e} exceeds {tol:.3e}")));
    }
    build_stationary_baseline(grid, Some(&v))
}

/// `int_boundary (u dn w - w dn u + w u dn v0)` from face-point traces.
pub fn boundary_pairing(
    grid: &Grid,
    w_values: &[C],
    w_normal: &[C],
    u_values: &[C],
    u_normal: &[C],
    dn_v0: &[f64],
) -> Result<C> {
    let k = grid.face_points();
    for len in [w_values.len(), w_normal.len(), u_values.len(), u_normal.len(), dn_v0.len()] {
        check_len(k, len)?;
    }
    let dens: Vec<C> = (0..k)
        .map(|i| u_values[i] * w_normal[i] - w_values[i] * u_normal[i] + w_values[i] * u_values[i] * dn_v0[i])
        .collect();
    let w = face_weights_high_order(grid);
    Ok(dens.iter().zip(&w).map(|(z, w)| z * w).sum())
}

/// End-corrected trapezoid weights (3/8, 7/6, 23/24, 1, ..., 23/24, 7/6, 3/8)
/// per axis, fourth order for smooth integrands; plain trapezoid below six
/// nodes.
fn line_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n >= 6 {
        for (i, c) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].iter().enumerate() {
            w[i] = c * h;
            w[n - 1 - i] = c * h;
        }
    } else {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Face-point quadrature weights in `grid.faces` order.
pub fn face_weights_high_order(grid: &Grid) -> Vec<f64> {
    let lines: Vec<Vec<f64>> = (0..grid.dim()).map(|a| line_weights(grid.n[a], grid.h[a])).collect();
    let mut out = Vec::with_capacity(grid.face_points());
    for face in &grid.faces {
        for &p in &face.nodes {
            let idx = grid.index(p);
            let w: f64 = (0..grid.dim()).filter(|&a| a != face.axis).map(|a| lines[a][idx[a]]).product();
            out.push(w);
        }
    }
    out
}

fn apply_complex(grid: &Grid, eq: &ScalarReducedEquation, f: &[C]) -> Vec<C> {
    let re: Vec<f64> = f.iter().map(|z| z.re).collect();
    let im: Vec<f64> = f.iter().map(|z| z.im).collect();
    let (a, b) = (eq.apply(grid, &re), eq.apply(grid, &im));
    a.into_iter().zip(b).map(|(x, y)| C::new(x, y)).collect()
}

/// Volume side of the pairing identity, `int (u A w - w A* u)` with
/// `A = lap + grad v0 . grad + lap v0` and `A* = lap - grad v0 . grad`,
/// evaluated by finite differences on the interior and the trapezoid rule.
pub fn interior_pairing(grid: &Grid, v0: &[f64], w: &[C], u: &[C]) -> Result<C> {
    check_len(grid.npts, v0.len())?;
    check_len(grid.npts, w.len())?;
    check_len(grid.npts, u.len())?;
    let lap = grid.laplacian(v0)?;
    let fwd = ScalarReducedEquation { v0: v0.to_vec(), q: lap, sign: 1.0 };
    let adj = ScalarReducedEquation { v0: v0.to_vec(), q: vec![0.0; grid.npts], sign: -1.0 };
    let aw = apply_complex(grid, &fwd, w);
    let au = apply_complex(grid, &adj, u);
    // Boundary rows of the stencils are one-sided; extrapolate linearly from
    // the interior instead so the quadrature sees a smooth integrand.
    let dens: Vec<C> = (0..grid.npts).map(|p| u[p] * aw[p] - w[p] * au[p]).collect();
    let dens = extrapolate_to_boundary(grid, &dens);
    let re: Vec<f64> = dens.iter().map(|z| z.re).collect();
    let im: Vec<f64> = dens.iter().map(|z| z.im).collect();
    Ok(C::new(grid.integrate(&re), grid.integrate(&im)))
}

fn extrapolate_to_boundary(grid: &Grid, f: &[C]) -> Vec<C> {
    let mut out = f.to_vec();
    // Axis by axis: boundary layer values from the two nearest inner nodes.
    for ax in 0..grid.dim() {
        let s = grid.strides[ax];
        let n = grid.n[ax];
        for p in 0..grid.npts {
            let i = grid.index(p)[ax];
            if i == 0 {
                out[p] = 2.0 * out[p + s] - out[p + 2 * s];
            } else if i == n - 1 {
                out[p] = 2.0 * out[p - s] - out[p - 2 * s];
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FourierSamples {
    pub ks: Vec<Vec<f64>>,
    pub values: Vec<C>,
    pub r: Vec<f64>,
    /// Relative conjugated residual of the adjoint probe per sample.
    pub probe_residuals: Vec<f64>,
    /// Largest `|P(-k) - conj P(k)|` over the sampled set.
    pub conjugate_defect: f64,
}

/// Probe plan entry: frequency and magnitude parameter. `k = 0` uses the
/// dedicated pair with `|xi| = R`; `conjugate` selects the conjugate pair.
#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct ProbeSpec {
    pub k: Vec<f64>,
    pub r: f64,
    #[serde(default)]
    pub conjugate: bool,
}

impl ProbeSpec {
    pub fn new(k: Vec<f64>, r: f64) -> Self {
        ProbeSpec { k, r, conjugate: false }
    }

    pub fn pair(&self) -> Result<crate::cgo::XiPair> {
        let mut p = if self.k.iter().all(|x| *x == 0.0) {
            make_zero_pair(self.k.len(), self.r)?
        } else {
            make_xi_pair(&self.k, self.r)?
        };
        if self.conjugate {
            for z in p.xi1.iter_mut().chain(p.xi2.iter_mut()) {
                *z = z.conj();
            }
        }
        Ok(p)
    }

    pub fn label(&self) -> String {
        let ks: Vec<String> = self.k.iter().map(|x| format!("{x:+.6e}")).collect();
        format!("k[{}]R{:.6e}{}", ks.join(","), self.r, if self.conjugate { "c" } else { "" })
    }
}

/// Plan over `frequency_box(grid, jmax)`. Nonzero frequencies use `r`; the
/// zero frequency uses both zero pairs with `|xi| = zero_magnitude`, so its
/// averaged sample is real for a real target.
pub fn probe_plan(grid: &Grid, jmax: i64, r: f64, zero_magnitude: f64) -> Vec<ProbeSpec> {
    let mut plan = Vec::new();
    for k in frequency_box(grid, jmax) {
        if k.iter().all(|x| *x == 0.0) {
            plan.push(ProbeSpec { k: k.clone(), r: zero_magnitude, conjugate: false });
            plan.push(ProbeSpec { k, r: zero_magnitude, conjugate: true });
        } else {
            plan.push(ProbeSpec::new(k, r));
        }
    }
    plan
}

/// Forward equation of the first-order density for a stationary base and
/// first-order cost `f1`: `lap m + grad v0 . grad m + (lap v0 - f1 m0) m = 0`.
pub fn forward_reduced(grid: &Grid, base: &StationarySolution, f1: &[f64]) -> Result<ScalarReducedEquation> {
    crate::linearize::reduce_to_scalar(grid, base, f1)
}

/// Adjoint of the reference operator (zero cost): `lap u - grad v0 . grad u = 0`.
pub fn reference_adjoint(grid: &Grid, base: &StationarySolution) -> ScalarReducedEquation {
    ScalarReducedEquation { v0: base.v0.clone(), q: vec![0.0; grid.npts], sign: -1.0 }
}

/// Probing record for a plan entry: Cauchy data of the CGO solution with the
/// second vector of the pair for the model with first-order cost `f1`.
pub fn probing_record(
    grid: &Grid,
    base: &StationarySolution,
    f1: &[f64],
    spec: &ProbeSpec,
    opts: &CgoOptions,
) -> Result<(C2Record, CgoSolution)> {
    let eq = forward_reduced(grid, base, f1)?;
    let pair = spec.pair()?;
    let sol = build_cgo(grid, &eq, &pair.xi2, opts)?;
    let rec = crate::cauchy::extract_c2(grid, &spec.label(), &sol.m, Some(&sol.normal))?;
    Ok((rec, sol))
}

/// Pairs each measured record with the reference adjoint probe for its plan
/// entry. The value approximates `int Q e^{ik.x}` with `Q = F1 m0`.
pub fn recover_fourier_samples(
    grid: &Grid,
    base: &StationarySolution,
    plan: &[ProbeSpec],
    records: &[C2Record],
    opts: &CgoOptions,
    parallel: bool,
) -> Result<FourierSamples> {
    if plan.len() != records.len() {
        return Err(Error::ShapeMismatch { expected: plan.len(), got: records.len() });
    }
    if grid.dim() != 3 {
        return Err(Error::Probe("Fourier sampling needs a 3D grid".into()));
    }
    let adj = reference_adjoint(grid, base);
    let dn_v0 = grid.restrict_to_boundary(&base.v0)?.normal;
    let jobs: Vec<(ProbeSpec, C2Record)> = plan.iter().cloned().zip(records.iter().cloned()).collect();
    let out: Vec<Result<(C, f64)>> = crate::par_map(jobs, parallel, |(spec, rec)| {
        if rec.label != spec.label() {
            return Err(Error::Integrity(format!("record {} does not match plan entry {}", rec.label, spec.label())));
        }
        let pair = spec.pair()?;
        let u = build_cgo(grid, &adj, &pair.xi1, opts)?;
        let val = boundary_pairing(grid, &rec.values, &rec.normal, &u.boundary_values(grid), &u.normal, &dn_v0)?;
        Ok((val, u.relative_residual))
    });
    let out = out.into_iter().collect::<Result<Vec<_>>>()?;
    // Entries sharing a frequency are averaged.
    let mut ks: Vec<Vec<f64>> = Vec::new();
    let mut acc: Vec<(C, f64, f64, usize)> = Vec::new();
    for (spec, (val, res)) in plan.iter().zip(&out) {
        match ks.iter().position(|k| *k == spec.k) {
            Some(i) => {
                acc[i].0 += val;
                acc[i].2 = acc[i].2.max(*res);
                acc[i].3 += 1;
            }
            None => {
                ks.push(spec.k.clone());
                acc.push((*val, spec.r, *res, 1));
            }
        }
    }
    let values: Vec<C> = acc.iter().map(|a| a.0 / a.3 as f64).collect();
    let mut defect = 0.0f64;
    for (i, k) in ks.iter().enumerate() {
        if let Some(j) = ks.iter().position(|q| q.iter().zip(k).all(|(a, b)| (a + b).abs() < 1e-12)) {
            defect = defect.max((values[j] - values[i].conj()).norm());
        }
    }
    Ok(FourierSamples {
        ks,
        values,
        r: acc.iter().map(|a| a.1).collect(),
        probe_residuals: acc.iter().map(|a| a.2).collect(),
        conjugate_defect: defect,
    })
}

/// Lattice `2 pi j / L` with `|j|_inf <= jmax`.
pub fn frequency_box(grid: &Grid, jmax: i64) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let side: Vec<f64> = (0..d).map(|a| grid.spec.upper[a] - grid.spec.lower[a]).collect();
    let w = (2 * jmax + 1) as usize;
    (0..w.pow(d as u32))
        .map(|mut c| {
            (0..d)
                .map(|a| {
                    let j = (c % w) as i64 - jmax;
                    c /= w;
                    2.0 * std::f64::consts::PI * j as f64 / side[a]
                })
                .collect()
        })
        .collect()
}

/// Truncated synthesis `Q = sum_k P(k) e^{-ik.x} / |Omega|`, then `F1 = Q / m0`.
pub fn invert_fourier(grid: &Grid, samples: &FourierSamples, base: &StationarySolution, floor: f64) -> Result<Vec<f64>> {
    let vol = grid.volume();
    let mmax = base.m0.iter().cloned().fold(0.0, f64::max);
    let q: Vec<f64> = (0..grid.npts)
        .map(|p| {
            let x = grid.coords(p);
            let mut acc = C::new(0.0, 0.0);
            for (k, v) in samples.ks.iter().zip(&samples.values) {
                let ph: f64 = k.iter().enumerate().map(|(a, ka)| ka * x[a]).sum();
                acc += v * C::from_polar(1.0, -ph);
            }
            acc.re / vol
        })
        .collect();
    (0..grid.npts)
        .map(|p| {
            if base.m0[p] < floor * mmax {
                Err(Error::Positivity(format!("m0 = {:.3e} below floor at node {p}", base.m0[p])))
            } else {
                Ok(q[p] / base.m0[p])
            }
        })
        .collect()
}
