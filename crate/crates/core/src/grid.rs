//! Uniform tensor grids on axis-aligned boxes, finite-difference operators,
//! trapezoidal quadrature and boundary traces.
//!
//! Nodes are stored row-major (last axis fastest). `nx` counts interior
//! points per axis, so each axis carries `nx + 2` nodes including the two
//! boundary nodes. Time levels are `t_n = n * T / nt`, `n = 0..=nt`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nx: Vec<usize>,
    /// Number of time steps; 0 for a purely spatial grid.
    #[serde(default)]
    pub nt: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_horizon() -> f64 {
    1.0
}

impl GridSpec {
    pub fn unit_box(dim: usize, nx: usize, nt: usize) -> Self {
        GridSpec {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
            nx: vec![nx; dim],
            nt,
            horizon: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.nx.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.nx.len();
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidGrid(format!("dimension {d} not in 1..=3")));
        }
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::InvalidGrid("extent/count length mismatch".into()));
        }
        for a in 0..d {
            if !(self.upper[a] > self.lower[a]) || !self.lower[a].is_finite() || !self.upper[a].is_finite() {
                return Err(Error::InvalidGrid(format!("degenerate extent on axis {a}")));
            }
            if self.nx[a] < 4 {
                return Err(Error::InvalidGrid(format!("nx[{a}] = {} < 4", self.nx[a])));
            }
        }
        if self.nt == 1 {
            return Err(Error::InvalidGrid("nt must be 0 (stationary) or >= 2".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidGrid("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// One face of the box. `nodes` lists every node on the face, edges and
/// corners included, so face quadrature is a plain tensor trapezoid.
#[derive(Clone, Debug)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Face {
    pub fn normal(&self, dim: usize) -> Vec<f64> {
        let mut n = vec![0.0; dim];
        n[self.axis] = if self.upper { 1.0 } else { -1.0 };
        n
    }

    pub fn name(&self) -> String {
        format!("x{}{}", self.axis + 1, if self.upper { "+" } else { "-" })
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub spec: GridSpec,
    /// Nodes per axis including boundary.
    pub n: Vec<usize>,
    pub h: Vec<f64>,
    pub strides: Vec<usize>,
    pub npts: usize,
    pub weights: Vec<f64>,
    pub faces: Vec<Face>,
    /// Unique boundary nodes in increasing node order.
    pub boundary_nodes: Vec<usize>,
    /// Outward normal of the first face containing each unique boundary node.
    pub boundary_normals: Vec<Vec<f64>>,
    pub is_boundary: Vec<bool>,
    pub interior_nodes: Vec<usize>,
}

/// Quadrature / integration region tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Interior,
    Boundary,
    SpaceTime,
}

impl std::str::FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Region::Interior),
            "boundary" => Ok(Region::Boundary),
            "space-time" | "spacetime" => Ok(Region::SpaceTime),
            other => Err(Error::Config(format!("unknown region `{other}`"))),
        }
    }
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim();
        let n: Vec<usize> = spec.nx.iter().map(|v| v + 2).collect();
        let h: Vec<f64> = (0..d)
            .map(|a| (spec.upper[a] - spec.lower[a]) / (spec.nx[a] + 1) as f64)
            .collect();
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * n[a + 1];
        }
        let npts: usize = n.iter().product();
        let axis_w: Vec<Vec<f64>> = (0..d).map(|a| trapezoid_weights(n[a], h[a])).collect();

        let mut weights = vec![1.0; npts];
        let mut is_boundary = vec![false; npts];
        let mut idx = vec![0usize; d];
        for p in 0..npts {
            decompose(p, &strides, &mut idx);
            for a in 0..d {
                weights[p] *= axis_w[a][idx[a]];
                if idx[a] == 0 || idx[a] == n[a] - 1 {
                    is_boundary[p] = true;
                }
            }
        }

        let mut faces = Vec::with_capacity(2 * d);
        for axis in 0..d {
            for upper in [false, true] {
                let fixed = if upper { n[axis] - 1 } else { 0 };
                let mut nodes = Vec::new();
                let mut fw = Vec::new();
                for p in 0..npts {
                    decompose(p, &strides, &mut idx);
                    if idx[axis] != fixed {
                        continue;
                    }
                    let mut w = 1.0;
                    for b in 0..d {
                        if b != axis {
                            w *= axis_w[b][idx[b]];
                        }
                    }
                    nodes.push(p);
                    fw.push(w);
                }
                faces.push(Face { axis, upper, nodes, weights: fw });
            }
        }

        let mut first_face = vec![usize::MAX; npts];
        for (fi, f) in faces.iter().enumerate() {
            for &p in &f.nodes {
                if first_face[p] == usize::MAX {
                    first_face[p] = fi;
                }
            }
        }
        let boundary_nodes: Vec<usize> = (0..npts).filter(|&p| is_boundary[p]).collect();
        let boundary_normals = boundary_nodes.iter().map(|&p| faces[first_face[p]].normal(d)).collect();
        let interior_nodes = (0..npts).filter(|&p| !is_boundary[p]).collect();

        Ok(Grid {
            spec,
            n,
            h,
            strides,
            npts,
            weights,
            faces,
            boundary_nodes,
            boundary_normals,
            is_boundary,
            interior_nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn nt(&self) -> usize {
        self.spec.nt
    }

    pub fn nlev(&self) -> usize {
        self.spec.nt + 1
    }

    pub fn dt(&self) -> f64 {
        if self.spec.nt == 0 {
            0.0
        } else {
            self.spec.horizon / self.spec.nt as f64
        }
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spec.upper[a] - self.spec.lower[a]).product()
    }

    pub fn index(&self, p: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        decompose(p, &self.strides, &mut idx);
        idx
    }

    pub fn coord(&self, p: usize, axis: usize) -> f64 {
        let i = (p / self.strides[axis]) % self.n[axis];
        self.spec.lower[axis] + i as f64 * self.h[axis]
    }

    pub fn coords(&self, p: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim()) {
            *xa = self.coord(p, a);
        }
        x
    }

    /// Samples `f(x, t)` at every node; unused coordinates are zero.
    pub fn sample(&self, t: f64, f: impl Fn(&[f64; 3], f64) -> f64) -> Vec<f64> {
        (0..self.npts).map(|p| f(&self.coords(p), t)).collect()
    }

    pub fn sample_st(&self, f: impl Fn(&[f64; 3], f64) -> f64) -> SpaceTimeField {
        let mut out = SpaceTimeField::zeros(self.npts, self.nlev());
        for l in 0..self.nlev() {
            let t = self.time(l);
            let lv = out.level_mut(l);
            for (p, v) in lv.iter_mut().enumerate() {
                *v = f(&self.coords(p), t);
            }
        }
        out
    }

    fn axis_pos(&self, p: usize, axis: usize) -> usize {
        (p / self.strides[axis]) % self.n[axis]
    }

    /// First derivative along `axis` at every node.
    pub fn d1(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let s = self.strides[axis];
        let n = self.n[axis];
        let ih = 1.0 / (2.0 * self.h[axis]);
        (0..self.npts)
            .map(|p| {
                let i = self.axis_pos(p, axis);
                if i == 0 {
                    (-3.0 * f[p] + 4.0 * f[p + s] - f[p + 2 * s]) * ih
                } else if i == n - 1 {
                    (3.0 * f[p] - 4.0 * f[p - s] + f[p - 2 * s]) * ih
                } else {
                    (f[p + s] - f[p - s]) * ih
                }
            })
            .collect()
    }

    /// Second derivative along `axis` at every node.
    pub fn d2(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let s = self.strides[axis];
        let n = self.n[axis];
        let ih2 = 1.0 / (self.h[axis] * self.h[axis]);
        (0..self.npts)
            .map(|p| {
                let i = self.axis_pos(p, axis);
                if i == 0 {
                    (2.0 * f[p] - 5.0 * f[p + s] + 4.0 * f[p + 2 * s] - f[p + 3 * s]) * ih2
                } else if i == n - 1 {
                    (2.0 * f[p] - 5.0 * f[p - s] + 4.0 * f[p - 2 * s] - f[p - 3 * s]) * ih2
                } else {
                    (f[p + s] - 2.0 * f[p] + f[p - s]) * ih2
                }
            })
            .collect()
    }

    pub fn gradient(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len(self.npts, f.len())?;
        Ok((0..self.dim()).map(|a| self.d1(f, a)).collect())
    }

    pub fn laplacian(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.npts, f.len())?;
        let mut out = vec![0.0; self.npts];
        for a in 0..self.dim() {
            for (o, v) in out.iter_mut().zip(self.d2(f, a)) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn divergence(&self, w: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_len(self.dim(), w.len())?;
        let mut out = vec![0.0; self.npts];
        for (a, wa) in w.iter().enumerate() {
            check_len(self.npts, wa.len())?;
            for (o, v) in out.iter_mut().zip(self.d1(wa, a)) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// |grad f|^2 at every node.
    pub fn grad_sq(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.npts];
        for a in 0..self.dim() {
            for (o, g) in out.iter_mut().zip(self.d1(f, a)) {
                *o += g * g;
            }
        }
        out
    }

    /// Conservative `div(c * grad u)` at interior nodes (zero on the boundary),
    /// with face values `c_{i+1/2} = (c_i + c_{i+1}) / 2`.
    pub fn div_c_grad(&self, c: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.npts];
        for &p in &self.interior_nodes {
            let mut acc = 0.0;
            for a in 0..self.dim() {
                let s = self.strides[a];
                let ih2 = 1.0 / (self.h[a] * self.h[a]);
                let cp = 0.5 * (c[p] + c[p + s]);
                let cm = 0.5 * (c[p] + c[p - s]);
                acc += (cp * (u[p + s] - u[p]) - cm * (u[p] - u[p - s])) * ih2;
            }
            out[p] = acc;
        }
        out
    }

    /// Conservative drift term `div(kappa * m * grad v)` at interior nodes, with
    /// face averages of both `kappa` and `m`.
    pub fn drift(&self, kappa: &[f64], m: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.npts];
        for &p in &self.interior_nodes {
            let mut acc = 0.0;
            for a in 0..self.dim() {
                let s = self.strides[a];
                let ih2 = 1.0 / (self.h[a] * self.h[a]);
                let fp = 0.25 * (kappa[p] + kappa[p + s]) * (m[p] + m[p + s]);
                let fm = 0.25 * (kappa[p] + kappa[p - s]) * (m[p] + m[p - s]);
                acc += (fp * (v[p + s] - v[p]) - fm * (v[p] - v[p - s])) * ih2;
            }
            out[p] = acc;
        }
        out
    }

    /// Outward normal derivative at each node of `face` (one-sided, second order).
    pub fn normal_derivative(&self, f: &[f64], face: &Face) -> Vec<f64> {
        let s = self.strides[face.axis] as isize;
        let step = if face.upper { -s } else { s };
        let ih = 1.0 / (2.0 * self.h[face.axis]);
        face.nodes
            .iter()
            .map(|&p| {
                let p1 = (p as isize + step) as usize;
                let p2 = (p as isize + 2 * step) as usize;
                (3.0 * f[p] - 4.0 * f[p1] + f[p2]) * ih
            })
            .collect()
    }

    /// Total number of face points (with multiplicity across faces).
    pub fn face_points(&self) -> usize {
        self.faces.iter().map(|f| f.nodes.len()).sum()
    }

    pub fn restrict_to_boundary(&self, f: &[f64]) -> Result<BoundaryTrace> {
        check_len(self.npts, f.len())?;
        let mut tr = BoundaryTrace { nlev: 1, npts: self.face_points(), values: Vec::new(), normal: Vec::new() };
        self.push_trace(f, &mut tr);
        Ok(tr)
    }

    pub fn restrict_st_to_boundary(&self, f: &SpaceTimeField) -> Result<BoundaryTrace> {
        check_len(self.npts, f.npts)?;
        let mut tr = BoundaryTrace { nlev: f.nlev, npts: self.face_points(), values: Vec::new(), normal: Vec::new() };
        for l in 0..f.nlev {
            self.push_trace(f.level(l), &mut tr);
        }
        Ok(tr)
    }

    fn push_trace(&self, f: &[f64], tr: &mut BoundaryTrace) {
        for face in &self.faces {
            tr.values.extend(face.nodes.iter().map(|&p| f[p]));
            tr.normal.extend(self.normal_derivative(f, face));
        }
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Surface integral of face-point data laid out as in [`BoundaryTrace`].
    pub fn integrate_faces(&self, data: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut off = 0;
        for face in &self.faces {
            let k = face.nodes.len();
            if self.dim() == 1 {
                acc += data[off];
            } else {
                acc += face.weights.iter().zip(&data[off..off + k]).map(|(w, v)| w * v).sum::<f64>();
            }
            off += k;
        }
        acc
    }

    pub fn integrate_boundary(&self, f: &[f64]) -> f64 {
        let data: Vec<f64> = self.faces.iter().flat_map(|face| face.nodes.iter().map(|&p| f[p])).collect();
        self.integrate_faces(&data)
    }

    /// Trapezoid in time of per-level values.
    pub fn integrate_time(&self, per_level: &[f64]) -> f64 {
        let dt = self.dt();
        let n = per_level.len();
        per_level
            .iter()
            .enumerate()
            .map(|(l, v)| if l == 0 || l == n - 1 { 0.5 * dt * v } else { dt * v })
            .sum()
    }

    pub fn integrate_st(&self, f: &SpaceTimeField) -> f64 {
        let per: Vec<f64> = (0..f.nlev).map(|l| self.integrate(f.level(l))).collect();
        self.integrate_time(&per)
    }

    /// Lateral integral over boundary x (0,T) of face-point data.
    pub fn integrate_lateral(&self, data: &[f64], nlev: usize) -> f64 {
        let k = self.face_points();
        let per: Vec<f64> = (0..nlev).map(|l| self.integrate_faces(&data[l * k..(l + 1) * k])).collect();
        self.integrate_time(&per)
    }

    /// Integral of a field over the requested region; `Boundary` integrates the
    /// trace of a spatial field, `SpaceTime` needs a space-time field.
    pub fn integrate_region(&self, f: &[f64], nlev: usize, region: Region) -> Result<f64> {
        match region {
            Region::Interior => {
                check_len(self.npts, f.len())?;
                Ok(self.integrate(f))
            }
            Region::Boundary => {
                check_len(self.npts, f.len())?;
                Ok(self.integrate_boundary(f))
            }
            Region::SpaceTime => {
                check_len(self.npts * nlev, f.len())?;
                let per: Vec<f64> = (0..nlev).map(|l| self.integrate(&f[l * self.npts..(l + 1) * self.npts])).collect();
                Ok(self.integrate_time(&per))
            }
        }
    }

    /// Max-norm over interior nodes.
    pub fn interior_max(&self, f: &[f64]) -> f64 {
        self.interior_nodes.iter().fold(0.0, |m, &p| m.max(f[p].abs()))
    }

    /// Relative L2 error over interior nodes (quadrature weighted).
    pub fn rel_l2(&self, approx: &[f64], truth: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for p in 0..self.npts {
            num += self.weights[p] * (approx[p] - truth[p]).powi(2);
            den += self.weights[p] * truth[p].powi(2);
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}

fn decompose(mut p: usize, strides: &[usize], idx: &mut [usize]) {
    for (a, s) in strides.iter().enumerate() {
        idx[a] = p / s;
        p %= s;
    }
}

/// Values over (time level, node), level-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    pub npts: usize,
    pub nlev: usize,
    pub data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(npts: usize, nlev: usize) -> Self {
        SpaceTimeField { npts, nlev, data: vec![0.0; npts * nlev] }
    }

    pub fn from_levels(levels: Vec<Vec<f64>>) -> Self {
        let nlev = levels.len();
        let npts = levels.first().map_or(0, |l| l.len());
        SpaceTimeField { npts, nlev, data: levels.concat() }
    }

    /// Same spatial field at every level.
    pub fn constant_in_time(f: &[f64], nlev: usize) -> Self {
        let mut data = Vec::with_capacity(f.len() * nlev);
        for _ in 0..nlev {
            data.extend_from_slice(f);
        }
        SpaceTimeField { npts: f.len(), nlev, data }
    }

    pub fn level(&self, l: usize) -> &[f64] {
        &self.data[l * self.npts..(l + 1) * self.npts]
    }

    pub fn level_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[l * self.npts..(l + 1) * self.npts]
    }

    pub fn max_abs(&self) -> f64 {
        crate::linalg::max_abs(&self.data)
    }

    pub fn max_abs_diff(&self, other: &SpaceTimeField) -> f64 {
        crate::linalg::max_abs_diff(&self.data, &other.data)
    }

    pub fn scaled(&self, c: f64) -> Self {
        SpaceTimeField { npts: self.npts, nlev: self.nlev, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn axpy(&mut self, a: f64, x: &SpaceTimeField) {
        for (y, v) in self.data.iter_mut().zip(&x.data) {
            *y += a * v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Boundary values and outward normal derivatives, level-major, faces
/// concatenated in [`Grid::faces`] order within a level.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrace {
    pub nlev: usize,
    /// Face points per level.
    pub npts: usize,
    pub values: Vec<f64>,
    pub normal: Vec<f64>,
}

impl BoundaryTrace {
    pub fn level_values(&self, l: usize) -> &[f64] {
        &self.values[l * self.npts..(l + 1) * self.npts]
    }

    pub fn level_normal(&self, l: usize) -> &[f64] {
        &self.normal[l * self.npts..(l + 1) * self.npts]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::loglog_slope;
    use std::f64::consts::PI;

    #[test]
    fn one_d_counts_and_volume() {
        let g = Grid::new(GridSpec::unit_box(1, 5, 0)).unwrap();
        assert_eq!(g.npts, 7);
        assert_eq!(g.interior_nodes.len(), 5);
        assert_eq!(g.boundary_nodes.len(), 2);
        assert!((g.integrate(&[1.0; 7]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_d_boundary_enumeration() {
        let g = Grid::new(GridSpec::unit_box(2, 8, 0)).unwrap();
        assert_eq!(g.boundary_nodes.len(), 4 * 8 + 4);
        for nrm in &g.boundary_normals {
            let len: f64 = nrm.iter().map(|v| v * v).sum();
            assert!((len - 1.0).abs() < 1e-15);
        }
        assert!((g.integrate_boundary(&vec![1.0; g.npts]) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn three_d_volume() {
        let spec = GridSpec { lower: vec![0.0; 3], upper: vec![2.0, 1.0, 1.0], nx: vec![5, 4, 6], nt: 0, horizon: 1.0 };
        let g = Grid::new(spec).unwrap();
        assert!((g.integrate(&vec![1.0; g.npts]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = GridSpec::unit_box(2, 8, 0);
        s.upper[1] = 0.0;
        assert!(Grid::new(s).is_err());
        assert!(Grid::new(GridSpec::unit_box(2, 3, 0)).is_err());
        assert!(Grid::new(GridSpec::unit_box(1, 8, 1)).is_err());
        assert!("volume".parse::<Region>().is_err());
    }

    #[test]
    fn linear_and_quadratic_fields() {
        let g = Grid::new(GridSpec::unit_box(3, 5, 0)).unwrap();
        let a = [0.3, -1.2, 2.0];
        let f = g.sample(0.0, |x, _| a[0] * x[0] + a[1] * x[1] + a[2] * x[2] + 0.7);
        let gr = g.gradient(&f).unwrap();
        for ax in 0..3 {
            assert!(gr[ax].iter().all(|v| (v - a[ax]).abs() < 1e-12));
        }
        let q = g.sample(0.0, |x, _| 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
        let l = g.laplacian(&q).unwrap();
        for &p in &g.interior_nodes {
            assert!((l[p] - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn laplacian_second_order() {
        let mut hs = Vec::new();
        let mut es = Vec::new();
        for nx in [9, 19, 39] {
            let g = Grid::new(GridSpec::unit_box(1, nx, 0)).unwrap();
            let f = g.sample(0.0, |x, _| (PI * x[0]).sin());
            let l = g.laplacian(&f).unwrap();
            let err: Vec<f64> = (0..g.npts).map(|p| l[p] + PI * PI * f[p]).collect();
            let e = g.interior_max(&err);
            hs.push(g.h[0]);
            es.push(e);
        }
        let s = loglog_slope(&hs, &es);
        assert!((s - 2.0).abs() < 0.3, "slope {s}");
    }

    #[test]
    fn traces_of_simple_fields() {
        let g = Grid::new(GridSpec::unit_box(2, 6, 0)).unwrap();
        let c = g.restrict_to_boundary(&vec![2.5; g.npts]).unwrap();
        assert!(c.values.iter().all(|v| *v == 2.5));
        assert!(c.normal.iter().all(|v| v.abs() < 1e-12));
        let x1 = g.sample(0.0, |x, _| x[0]);
        let tr = g.restrict_to_boundary(&x1).unwrap();
        let mut off = 0;
        for face in &g.faces {
            let k = face.nodes.len();
            let expect = if face.axis == 0 { if face.upper { 1.0 } else { -1.0 } } else { 0.0 };
            assert!(tr.normal[off..off + k].iter().all(|v| (v - expect).abs() < 1e-12));
            off += k;
        }
    }

    #[test]
    fn exponential_normal_derivative_second_order() {
        let mut hs = Vec::new();
        let mut es = Vec::new();
        for nx in [7, 15, 31] {
            let g = Grid::new(GridSpec::unit_box(1, nx, 0)).unwrap();
            let f = g.sample(0.0, |x, _| x[0].exp());
            let d = g.normal_derivative(&f, &g.faces[1]);
            hs.push(g.h[0]);
            es.push((d[0] - 1f64.exp()).abs());
        }
        assert!((loglog_slope(&hs, &es) - 2.0).abs() < 0.3);
    }

    #[test]
    fn sine_product_integral() {
        let g = Grid::new(GridSpec::unit_box(2, 31, 0)).unwrap();
        let f = g.sample(0.0, |x, _| (PI * x[0]).sin() * (PI * x[1]).sin());
        let exact = 4.0 / (PI * PI);
        assert!((g.integrate(&f) - exact).abs() < 2.0 * g.h[0] * g.h[0]);
    }

    #[test]
    fn divergence_theorem_order() {
        let mut hs = Vec::new();
        let mut es = Vec::new();
        for nx in [7, 15, 31] {
            let g = Grid::new(GridSpec::unit_box(2, nx, 0)).unwrap();
            let w = vec![g.sample(0.0, |x, _| (x[0] * x[1]).sin()), g.sample(0.0, |x, _| (x[0] + 2.0 * x[1]).exp())];
            let div = g.divergence(&w).unwrap();
            let mut flux = Vec::new();
            for face in &g.faces {
                let nrm = face.normal(2);
                flux.extend(face.nodes.iter().map(|&p| w[0][p] * nrm[0] + w[1][p] * nrm[1]));
            }
            hs.push(g.h[0]);
            es.push((g.integrate(&div) - g.integrate_faces(&flux)).abs());
        }
        assert!((loglog_slope(&hs, &es) - 2.0).abs() < 0.3, "{es:?}");
    }
}
