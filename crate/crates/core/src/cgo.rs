//! Complex geometric optics solutions of the reduced stationary equation
//! `lap m + s grad v0 . grad m + q m = 0`.
//!
//! A solution has the form `m = exp(xi.x - s v0 / 2) (1 + omega)` with
//! `xi.xi = 0`; the remainder solves `lap omega + 2 xi.grad omega = -H (1 + omega)`
//! where `H` is the conjugated potential. The remainder is computed by a
//! fixed point on a torus of doubled side, with `H` cut off smoothly outside
//! the box and the Fourier lattice shifted by half a step to keep the symbol
//! away from zero.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linearize::ScalarReducedEquation;
use crate::spectral::Torus;

type C = Complex64;

const I: C = C { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, Serialize)]
pub struct XiPair {
    pub k: Vec<f64>,
    pub r: f64,
    pub xi1: Vec<C>,
    pub xi2: Vec<C>,
    /// Built from `-k` with the real directions swapped.
    pub flipped: bool,
}

impl XiPair {
    pub fn norm(xi: &[C]) -> f64 {
        xi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn dot(a: &[C], b: &[C]) -> C {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

fn orthonormal_complement(k: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = k.len();
    let kn = k.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = vec![k.iter().map(|x| x / kn).collect()];
    for e in 0..d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        for b in &basis {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
        if basis.len() == 3 {
            break;
        }
    }
    (basis[1].clone(), basis[2].clone())
}

/// Pair with `xi1 + xi2 = i k`, `xi_j . xi_j = 0` and
/// `|xi_j|^2 = |k|^2 (1/4 + 4 R^2)`. Requires `|k| > 0`, dimension at least
/// 3 and `R >= 1/4`. The pair for `-k` is the complex conjugate of the pair
/// for `k`.
pub fn make_xi_pair(k: &[f64], r: f64) -> Result<XiPair> {
    if k.len() < 3 {
        return Err(Error::Probe(format!("probe pairs need dimension >= 3, got {}", k.len())));
    }
    let kn = k.iter().map(|x| x * x).sum::<f64>().sqrt();
    if kn == 0.0 || !kn.is_finite() {
        return Err(Error::Probe("k = 0 has its own pair; use make_zero_pair".into()));
    }
    if !(r >= 0.25) || !r.is_finite() {
        return Err(Error::Probe(format!("R must be >= 1/4, got {r}")));
    }
    let lead = k.iter().find(|x| **x != 0.0).copied().unwrap_or(1.0);
    let flipped = lead < 0.0;
    let kc: Vec<f64> = if flipped { k.iter().map(|x| -x).collect() } else { k.to_vec() };
    let (mut a, mut b) = orthonormal_complement(&kc);
    if flipped {
        std::mem::swap(&mut a, &mut b);
    }
    let alpha = (r * r + 1.0 / 16.0).sqrt() * kn;
    let beta = (r * r - 1.0 / 16.0).sqrt() * kn;
    let d = k.len();
    let mut xi1 = vec![C::new(0.0, 0.0); d];
    let mut xi2 = vec![C::new(0.0, 0.0); d];
    for i in 0..d {
        let re = alpha * (a[i] + b[i]);
        let im = beta * (a[i] - b[i]);
        xi1[i] = C::new(re, 0.5 * k[i] + im);
        xi2[i] = C::new(-re, 0.5 * k[i] - im);
    }
    Ok(XiPair { k: k.to_vec(), r, xi1, xi2, flipped })
}

/// Pair for `k = 0`: `xi1 = s (e1 + i e2)`, `xi2 = -xi1`.
pub fn make_zero_pair(dim: usize, magnitude: f64) -> Result<XiPair> {
    if dim < 2 {
        return Err(Error::Probe("zero pair needs dimension >= 2".into()));
    }
    if !(magnitude > 0.0) {
        return Err(Error::Probe(format!("zero pair magnitude must be positive, got {magnitude}")));
    }
    let s = magnitude / 2f64.sqrt();
    let mut xi1 = vec![C::new(0.0, 0.0); dim];
    xi1[0] = C::new(s, 0.0);
    xi1[1] = C::new(0.0, s);
    let xi2 = xi1.iter().map(|z| -z).collect();
    Ok(XiPair { k: vec![0.0; dim], r: magnitude, xi1, xi2, flipped: false })
}

#[derive(Clone, Debug, Serialize)]
pub struct CgoOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest admissible real exponent on the grid.
    pub overflow_cap: f64,
}

impl Default for CgoOptions {
    fn default() -> Self {
        CgoOptions { tol: 1e-12, max_iter: 500, overflow_cap: 600.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Remainder {
    /// Remainder at grid nodes.
    pub omega: Vec<C>,
    /// Spectral gradient at grid nodes, one vector per axis.
    pub grad: Vec<Vec<C>>,
    pub iterations: usize,
    pub ratios: Vec<f64>,
    pub final_update: f64,
    /// `L2(Omega)` norm.
    pub l2_norm: f64,
    pub shift: Vec<f64>,
    pub min_symbol: f64,
}

struct Setup {
    torus: Torus,
    hchi: Vec<f64>,
    symbol: Vec<C>,
    theta: Vec<f64>,
    shifted: Vec<bool>,
    mu: Vec<Vec<f64>>,
    phase: Vec<C>,
    min_symbol: f64,
}

/// Fourier frequencies per axis. Shifted axes use the symmetric set
/// `(j + 1/2) 2 pi / L`, `j = -n/2 .. n/2 - 1`, so that `-mu` is in the set.
fn frequencies(t: &Torus, shifted: &[bool]) -> Vec<Vec<f64>> {
    (0..t.dim())
        .map(|a| {
            let n = t.n[a] as i64;
            let dk = 2.0 * std::f64::consts::PI / t.period[a];
            (0..n)
                .map(|j| {
                    if shifted[a] {
                        let js = if j < n / 2 { j } else { j - n };
                        (js as f64 + 0.5) * dk
                    } else {
                        t.wavenumber(j as usize, a)
                    }
                })
                .collect()
        })
        .collect()
}

/// Symbol of `lap + 2 xi . grad` on the shifted lattice. On unshifted axes
/// the Nyquist mode has zero first derivative on the grid, which keeps the
/// symbol of `conj(xi)` the conjugate mirror of the symbol of `xi`.
fn symbol_for(t: &Torus, xi: &[C], mu: &[Vec<f64>], shifted: &[bool]) -> (Vec<C>, f64) {
    let d = t.dim();
    let mut min = f64::INFINITY;
    let sym = (0..t.len)
        .map(|q| {
            let idx = t.index(q);
            let mut mu2 = 0.0;
            let mut dot = C::new(0.0, 0.0);
            for a in 0..d {
                let m = mu[a][idx[a]];
                mu2 += m * m;
                if shifted[a] || 2 * idx[a] != t.n[a] {
                    dot += xi[a] * m;
                }
            }
            let p = -mu2 + 2.0 * I * dot;
            min = min.min(p.norm());
            p
        })
        .collect();
    (sym, min)
}

/// Symbol, its minimum modulus, half-shift mask and frequencies of one lattice.
type Lattice = (Vec<C>, f64, Vec<bool>, Vec<Vec<f64>>);

fn setup(grid: &Grid, eq: &ScalarReducedEquation, xi: &[C]) -> Result<Setup> {
    let d = grid.dim();
    if xi.len() != d {
        return Err(Error::ShapeMismatch { expected: d, got: xi.len() });
    }
    let torus = Torus::new(grid);
    let h = eq.conjugated_potential(grid);
    let chi = torus.cutoff(&grid.n);
    let hchi: Vec<f64> = torus.extend_reflect(grid, &h).iter().zip(&chi).map(|(a, b)| a * b).collect();
    let mut best: Option<Lattice> = None;
    for mask in 0..(1usize << d) {
        let shifted: Vec<bool> = (0..d).map(|a| mask >> a & 1 == 1).collect();
        let mu = frequencies(&torus, &shifted);
        let (sym, min) = symbol_for(&torus, xi, &mu, &shifted);
        // Near-ties go to the lower mask so conjugate probes pick the same lattice.
        if best.as_ref().is_none_or(|b| min > b.1 * (1.0 + 1e-9)) {
            best = Some((sym, min, shifted, mu));
        }
    }
    let (symbol, min_symbol, shifted, mu) = best.unwrap();
    let theta: Vec<f64> =
        (0..d).map(|a| if shifted[a] { std::f64::consts::PI / torus.period[a] } else { 0.0 }).collect();
    let xin = XiPair::norm(xi);
    let dk = 2.0 * std::f64::consts::PI / torus.period.iter().cloned().fold(0.0, f64::max);
    if min_symbol <= 1e-8 * xin.max(1.0) * dk {
        return Err(Error::Probe(format!("symbol nearly singular: min |p| = {min_symbol:.3e}")));
    }
    let phase = (0..torus.len)
        .map(|q| {
            let ph: f64 = (0..d).map(|a| theta[a] * torus.coord(q, a)).sum();
            C::from_polar(1.0, ph)
        })
        .collect();
    Ok(Setup { torus, hchi, symbol, theta, shifted, mu, phase, min_symbol })
}

fn torus_norm(t: &Torus, w: &[C]) -> f64 {
    let cell: f64 = t.h.iter().product();
    (w.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell).sqrt()
}

fn finish(grid: &Grid, s: &Setup, w: &[C], iterations: usize, ratios: Vec<f64>, final_update: f64) -> Remainder {
    let t = &s.torus;
    let d = grid.dim();
    let mut what = w.to_vec();
    t.fft(&mut what);
    let mut grad_t = Vec::with_capacity(d);
    for a in 0..d {
        // Gradient of omega = e^{i theta x} w is e^{i theta x} IFFT(i mu w_hat).
        let mut g: Vec<C> = (0..t.len)
            .map(|q| {
                let j = (q / t.strides[a]) % t.n[a];
                if !s.shifted[a] && 2 * j == t.n[a] {
                    C::new(0.0, 0.0)
                } else {
                    what[q] * I * s.mu[a][j]
                }
            })
            .collect();
        t.ifft(&mut g);
        for q in 0..t.len {
            g[q] *= s.phase[q];
        }
        grad_t.push(g);
    }
    let omega: Vec<C> = t.grid_map.iter().map(|&q| s.phase[q] * w[q]).collect();
    let grad = grad_t.iter().map(|g| t.grid_map.iter().map(|&q| g[q]).collect()).collect();
    let l2 = grid.integrate(&omega.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()).sqrt();
    Remainder {
        omega,
        grad,
        iterations,
        ratios,
        final_update,
        l2_norm: l2,
        shift: s.theta.clone(),
        min_symbol: s.min_symbol,
    }
}

/// Fixed point `w <- P^{-1}[-H chi (e^{-i theta x} + w)]` for `omega = e^{i theta x} w`.
pub fn solve_remainder(grid: &Grid, eq: &ScalarReducedEquation, xi: &[C], opts: &CgoOptions) -> Result<Remainder> {
    let s = setup(grid, eq, xi)?;
    let t = &s.torus;
    let n = t.len;
    let mut w = vec![C::new(0.0, 0.0); n];
    let mut ratios = Vec::new();
    let mut prev_upd = f64::NAN;
    let mut buf = vec![C::new(0.0, 0.0); n];
    for it in 1..=opts.max_iter {
        for q in 0..n {
            buf[q] = -s.hchi[q] * (s.phase[q].conj() + w[q]);
        }
        t.fft(&mut buf);
        for q in 0..n {
            buf[q] /= s.symbol[q];
        }
        t.ifft(&mut buf);
        let diff: Vec<C> = buf.iter().zip(&w).map(|(a, b)| a - b).collect();
        let upd = torus_norm(t, &diff);
        std::mem::swap(&mut w, &mut buf);
        let wn = torus_norm(t, &w);
        if it > 1 {
            let ratio = upd / prev_upd;
            ratios.push(ratio);
            if ratio >= 1.0 && upd > 100.0 * opts.tol * wn.max(1.0) {
                return Err(Error::NonContraction { ratio });
            }
        }
        if !upd.is_finite() {
            return Err(Error::NonContraction { ratio: f64::INFINITY });
        }
        if upd <= opts.tol * wn.max(f64::MIN_POSITIVE) || upd == 0.0 {
            return Ok(finish(grid, &s, &w, it, ratios, upd));
        }
        prev_upd = upd;
    }
    Err(Error::MaxIterationsExceeded { iterations: opts.max_iter, last_update: prev_upd })
}

/// Direct solve of the same torus problem by dense complex LU; for small
/// grids only.
pub fn remainder_dense_oracle(grid: &Grid, eq: &ScalarReducedEquation, xi: &[C]) -> Result<Vec<C>> {
    let s = setup(grid, eq, xi)?;
    let t = &s.torus;
    let n = t.len;
    if n > 4096 {
        return Err(Error::Config(format!("dense oracle limited to 4096 torus nodes, got {n}")));
    }
    let apply_inv = |f: &mut Vec<C>| {
        t.fft(f);
        for q in 0..n {
            f[q] /= s.symbol[q];
        }
        t.ifft(f);
    };
    let mut a = DMatrix::<C>::identity(n, n);
    for j in 0..n {
        if s.hchi[j] == 0.0 {
            continue;
        }
        let mut col = vec![C::new(0.0, 0.0); n];
        col[j] = C::new(s.hchi[j], 0.0);
        apply_inv(&mut col);
        for i in 0..n {
            a[(i, j)] += col[i];
        }
    }
    let mut rhs: Vec<C> = (0..n).map(|q| -s.hchi[q] * s.phase[q].conj()).collect();
    apply_inv(&mut rhs);
    let w = a
        .lu()
        .solve(&DVector::from_vec(rhs))
        .ok_or_else(|| Error::Singular("dense remainder operator".into()))?;
    Ok(t.grid_map.iter().map(|&q| s.phase[q] * w[q]).collect())
}

#[derive(Clone, Debug)]
pub struct CgoSolution {
    pub xi: Vec<C>,
    /// `exp(xi.x - s v0/2) (1 + omega)` at grid nodes.
    pub m: Vec<C>,
    /// Outward normal derivative at face points, in `grid.faces` order.
    pub normal: Vec<C>,
    pub remainder: Remainder,
    /// Interior sup of the finite-difference conjugated residual relative to `max |1 + omega|`.
    pub relative_residual: f64,
    /// Largest real exponent on the grid.
    pub max_exponent: f64,
}

impl CgoSolution {
    /// Values at face points, in `grid.faces` order.
    pub fn boundary_values(&self, grid: &Grid) -> Vec<C> {
        grid.faces.iter().flat_map(|f| f.nodes.iter().map(|&p| self.m[p])).collect()
    }
}

fn split(v: &[C]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect())
}

pub fn build_cgo(grid: &Grid, eq: &ScalarReducedEquation, xi: &[C], opts: &CgoOptions) -> Result<CgoSolution> {
    let d = grid.dim();
    if xi.len() != d {
        return Err(Error::ShapeMismatch { expected: d, got: xi.len() });
    }
    let exponent = |p: usize| -> C {
        let x = grid.coords(p);
        let lin: C = (0..d).map(|a| xi[a] * x[a]).sum();
        lin - 0.5 * eq.sign * eq.v0[p]
    };
    let max_exponent = (0..grid.npts).map(|p| exponent(p).re).fold(f64::NEG_INFINITY, f64::max);
    if max_exponent > opts.overflow_cap {
        return Err(Error::Overflow { value: max_exponent, cap: opts.overflow_cap });
    }
    let rem = solve_remainder(grid, eq, xi, opts)?;
    let wfull: Vec<C> = rem.omega.iter().map(|z| 1.0 + z).collect();
    let m: Vec<C> = (0..grid.npts).map(|p| exponent(p).exp() * wfull[p]).collect();

    let mut normal = Vec::with_capacity(grid.face_points());
    for face in &grid.faces {
        let dv0 = grid.normal_derivative(&eq.v0, face);
        let sgn = if face.upper { 1.0 } else { -1.0 };
        for (i, &p) in face.nodes.iter().enumerate() {
            let dphi = sgn * xi[face.axis] - 0.5 * eq.sign * dv0[i];
            let dw = sgn * rem.grad[face.axis][p];
            normal.push(exponent(p).exp() * (dphi * wfull[p] + dw));
        }
    }

    // Conjugated residual lap W + 2 xi.grad W + (xi.xi + H) W by finite differences.
    let h = eq.conjugated_potential(grid);
    let (wr, wi) = split(&wfull);
    let lr = grid.laplacian(&wr)?;
    let li = grid.laplacian(&wi)?;
    let gr = grid.gradient(&wr)?;
    let gi = grid.gradient(&wi)?;
    let xx = XiPair::dot(xi, xi);
    let mut res = 0.0f64;
    for &p in &grid.interior_nodes {
        let mut r = C::new(lr[p], li[p]) + (xx + h[p]) * wfull[p];
        for a in 0..d {
            r += 2.0 * xi[a] * C::new(gr[a][p], gi[a][p]);
        }
        res = res.max(r.norm());
    }
    let wmax = wfull.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    Ok(CgoSolution {
        xi: xi.to_vec(),
        m,
        normal,
        remainder: rem,
        relative_residual: res / wmax.max(f64::MIN_POSITIVE),
        max_exponent,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub r: f64,
    pub xi_norm: f64,
    pub omega_l2: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    /// Log-log slope of `|omega|` against `|xi|`; NaN when degenerate.
    pub slope: f64,
    /// All remainders vanish (zero potential).
    pub degenerate: bool,
}

pub fn verify_decay(
    grid: &Grid,
    eq: &ScalarReducedEquation,
    k: &[f64],
    radii: &[f64],
    opts: &CgoOptions,
    parallel: bool,
) -> Result<DecayReport> {
    let rows: Vec<Result<DecayRow>> = crate::par_map(radii.to_vec(), parallel, |r| {
        let pair = make_xi_pair(k, r)?;
        let rem = solve_remainder(grid, eq, &pair.xi1, opts)?;
        Ok(DecayRow { r, xi_norm: XiPair::norm(&pair.xi1), omega_l2: rem.l2_norm, iterations: rem.iterations })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let degenerate = rows.iter().all(|r| r.omega_l2 <= 1e-14);
    let slope = if degenerate || rows.len() < 2 {
        f64::NAN
    } else {
        let x: Vec<f64> = rows.iter().map(|r| r.xi_norm).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.omega_l2.max(f64::MIN_POSITIVE)).collect();
        crate::linalg::loglog_slope(&x, &y)
    };
    Ok(DecayReport { rows, slope, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn two_pi() -> f64 {
        2.0 * std::f64::consts::PI
    }

    #[test]
    fn pair_identities() {
        let k = [two_pi(), -two_pi(), 0.0];
        let p = make_xi_pair(&k, 2.0).unwrap();
        let kn2: f64 = k.iter().map(|x| x * x).sum();
        for xi in [&p.xi1, &p.xi2] {
            assert!(XiPair::dot(xi, xi).norm() < 1e-12 * kn2);
            let n2 = XiPair::norm(xi).powi(2);
            assert!((n2 - kn2 * (0.25 + 16.0)).abs() < 1e-12 * n2);
        }
        for i in 0..3 {
            let s = p.xi1[i] + p.xi2[i];
            assert!(s.re.abs() == 0.0);
            assert!((s.im - k[i]).abs() < 1e-14 * kn2.sqrt());
        }
    }

    #[test]
    fn opposite_k_gives_conjugate_pair() {
        let k = [two_pi(), 0.0, two_pi()];
        let mk: Vec<f64> = k.iter().map(|x| -x).collect();
        let p = make_xi_pair(&k, 1.0).unwrap();
        let q = make_xi_pair(&mk, 1.0).unwrap();
        assert!(q.flipped);
        for i in 0..3 {
            assert!((q.xi1[i] - p.xi1[i].conj()).norm() < 1e-12);
            assert!((q.xi2[i] - p.xi2[i].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn invalid_pairs_are_rejected() {
        assert!(make_xi_pair(&[0.0, 0.0, 0.0], 1.0).is_err());
        assert!(make_xi_pair(&[1.0, 0.0], 1.0).is_err());
        assert!(make_xi_pair(&[1.0, 0.0, 0.0], 0.2).is_err());
        assert!(make_zero_pair(3, 0.0).is_err());
        let z = make_zero_pair(3, 5.0).unwrap();
        assert!(XiPair::dot(&z.xi1, &z.xi1).norm() < 1e-14);
    }

    #[test]
    fn zero_potential_gives_zero_remainder() {
        let g = Grid::new(GridSpec::unit_box(3, 5, 0)).unwrap();
        let eq = ScalarReducedEquation { v0: vec![0.0; g.npts], q: vec![0.0; g.npts], sign: 1.0 };
        let p = make_xi_pair(&[two_pi(), 0.0, 0.0], 2.0).unwrap();
        let c = build_cgo(&g, &eq, &p.xi1, &CgoOptions::default()).unwrap();
        assert_eq!(c.remainder.l2_norm, 0.0);
        assert!(c.relative_residual <= 1e-10, "{}", c.relative_residual);
    }

    #[test]
    fn overflow_is_reported() {
        let g = Grid::new(GridSpec::unit_box(3, 4, 0)).unwrap();
        let eq = ScalarReducedEquation { v0: vec![0.0; g.npts], q: vec![0.0; g.npts], sign: 1.0 };
        let p = make_xi_pair(&[two_pi(), 0.0, 0.0], 500.0).unwrap();
        assert!(matches!(build_cgo(&g, &eq, &p.xi1, &CgoOptions::default()), Err(Error::Overflow { .. })));
    }
}
