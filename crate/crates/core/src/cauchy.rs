//! Measurement maps: passive boundary data of a time-dependent solution,
//! Cauchy data of stationary probing solutions, and lateral Cauchy data of
//! linearised experiments. Plus the boundary energy functional.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::forward::MfgCoefficients;
use crate::grid::{BoundaryTrace, Grid, SpaceTimeField};

/// Slices at `t = 0, T` and lateral traces of a time-dependent solution.
#[derive(Clone, Debug)]
pub struct MeasurementC1 {
    pub v_initial: Vec<f64>,
    pub m_initial: Vec<f64>,
    pub v_final: Vec<f64>,
    pub m_final: Vec<f64>,
    pub v: BoundaryTrace,
    pub m: BoundaryTrace,
    /// Outward normal derivative of `sigma m` at face points, level-major.
    pub dn_sigma_m: Vec<f64>,
    /// `kappa dv/dnu`, the normal component of the Hamiltonian's p-gradient.
    pub flux: Vec<f64>,
}

pub fn extract_c1(
    grid: &Grid,
    coeffs: &MfgCoefficients,
    v: &SpaceTimeField,
    m: &SpaceTimeField,
) -> Result<MeasurementC1> {
    let nl = grid.nlev();
    for f in [v, m, &coeffs.sigma, &coeffs.kappa] {
        check_len(grid.npts * nl, f.data.len())?;
    }
    let vt = grid.restrict_st_to_boundary(v)?;
    let mt = grid.restrict_st_to_boundary(m)?;
    let mut sm = m.clone();
    for (x, s) in sm.data.iter_mut().zip(&coeffs.sigma.data) {
        *x *= s;
    }
    let smt = grid.restrict_st_to_boundary(&sm)?;
    let kt = grid.restrict_st_to_boundary(&coeffs.kappa)?;
    let flux = kt.values.iter().zip(&vt.normal).map(|(k, d)| k * d).collect();
    let nt = grid.nt();
    Ok(MeasurementC1 {
        v_initial: v.level(0).to_vec(),
        m_initial: m.level(0).to_vec(),
        v_final: v.level(nt).to_vec(),
        m_final: m.level(nt).to_vec(),
        v: vt,
        m: mt,
        dn_sigma_m: smt.normal,
        flux,
    })
}

/// `-int v(T) m(T) + int v(0) m(0) + int_lateral (v dn(sigma m) - sigma m dn v + v m flux)`.
///
/// For a solution of the quadratic system this equals
/// `int_Q (F + kappa |grad v|^2 / 2) m`; see [`energy_volume_oracle`].
pub fn energy_integral_from_boundary(grid: &Grid, c1: &MeasurementC1, coeffs: &MfgCoefficients) -> Result<f64> {
    let nl = grid.nlev();
    let k = grid.face_points();
    for f in [&c1.v.values, &c1.v.normal, &c1.m.values, &c1.dn_sigma_m, &c1.flux] {
        if f.len() != k * nl {
            return Err(Error::MissingData(format!("trace has {} entries, expected {}", f.len(), k * nl)));
        }
    }
    let sig = grid.restrict_st_to_boundary(&coeffs.sigma)?;
    let lateral: Vec<f64> = (0..k * nl)
        .map(|i| {
            let (v, m) = (c1.v.values[i], c1.m.values[i]);
            v * c1.dn_sigma_m[i] - sig.values[i] * m * c1.v.normal[i] + v * m * c1.flux[i]
        })
        .collect();
    let prod = |a: &[f64], b: &[f64]| -> f64 { grid.integrate(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>()) };
    Ok(-prod(&c1.v_final, &c1.m_final) + prod(&c1.v_initial, &c1.m_initial) + grid.integrate_lateral(&lateral, nl))
}

/// Volume quadrature of `(F + kappa |grad v|^2 / 2) m` over space-time.
pub fn energy_volume_oracle(
    grid: &Grid,
    coeffs: &MfgCoefficients,
    f_along: &SpaceTimeField,
    v: &SpaceTimeField,
    m: &SpaceTimeField,
) -> Result<f64> {
    let mut g = SpaceTimeField::zeros(grid.npts, grid.nlev());
    for l in 0..grid.nlev() {
        let g2 = grid.grad_sq(v.level(l));
        let (f, k, ml) = (f_along.level(l), coeffs.kappa.level(l), m.level(l));
        let out = g.level_mut(l);
        for p in 0..grid.npts {
            out[p] = (f[p] + 0.5 * k[p] * g2[p]) * ml[p];
        }
    }
    Ok(grid.integrate_st(&g))
}

/// `alpha` from the energy integral of an experiment with `m = c` and
/// `F = alpha m^k`: the functional equals `alpha c^(k+1) T |Omega|`.
pub fn recover_power_coefficient(energy: f64, k: u32, c: f64, horizon: f64, volume: f64) -> Result<f64> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::Positivity(format!("density level c = {c} cannot be divided out")));
    }
    if horizon <= 0.0 || volume <= 0.0 {
        return Err(Error::Config("horizon and volume must be positive".into()));
    }
    Ok(energy / (c.powi(k as i32 + 1) * horizon * volume))
}

/// Cauchy data of one stationary probing solution (values and outward normal
/// derivatives at face points).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct C2Record {
    pub label: String,
    pub values: Vec<Complex64>,
    pub normal: Vec<Complex64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeasurementC2 {
    pub records: Vec<C2Record>,
}

pub fn extract_c2(grid: &Grid, label: &str, m: &[Complex64], normal: Option<&[Complex64]>) -> Result<C2Record> {
    check_len(grid.npts, m.len())?;
    let values: Vec<Complex64> = grid.faces.iter().flat_map(|f| f.nodes.iter().map(|&p| m[p])).collect();
    let normal = match normal {
        Some(n) => {
            check_len(values.len(), n.len())?;
            n.to_vec()
        }
        None => {
            let re: Vec<f64> = m.iter().map(|z| z.re).collect();
            let im: Vec<f64> = m.iter().map(|z| z.im).collect();
            let tr = grid.restrict_to_boundary(&re)?;
            let ti = grid.restrict_to_boundary(&im)?;
            tr.normal.iter().zip(&ti.normal).map(|(a, b)| Complex64::new(*a, *b)).collect()
        }
    };
    Ok(C2Record { label: label.to_string(), values, normal })
}

/// Lateral Cauchy data of one (linearised) experiment.
#[derive(Clone, Debug)]
pub struct C3Record {
    pub label: String,
    pub v: BoundaryTrace,
    pub m: BoundaryTrace,
}

impl C3Record {
    /// Normal derivatives of `v` then `m`; the values are the prescribed inputs.
    pub fn observation(&self) -> Vec<f64> {
        self.v.normal.iter().chain(&self.m.normal).copied().collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct MeasurementC3 {
    pub records: Vec<C3Record>,
}

pub fn extract_c3(grid: &Grid, label: &str, v: &SpaceTimeField, m: &SpaceTimeField) -> Result<C3Record> {
    Ok(C3Record { label: label.to_string(), v: grid.restrict_st_to_boundary(v)?, m: grid.restrict_st_to_boundary(m)? })
}
