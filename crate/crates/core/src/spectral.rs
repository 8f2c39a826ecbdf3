//! Periodic extension of a box grid onto a torus of doubled side, with
//! separable FFTs and a smooth cutoff.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

pub struct Torus {
    /// Torus nodes per axis, `2 (N - 1)` for `N` grid nodes.
    pub n: Vec<usize>,
    pub strides: Vec<usize>,
    pub len: usize,
    /// Torus side lengths.
    pub period: Vec<f64>,
    /// Torus index of grid index 0 on each axis.
    pub offset: Vec<usize>,
    pub h: Vec<f64>,
    pub lower: Vec<f64>,
    /// Grid node -> torus node.
    pub grid_map: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

fn smooth_step(s: f64) -> f64 {
    // 1 at s <= 0, 0 at s >= 1, C-infinity in between.
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / (1.0 - s)).exp();
    let b = (-1.0 / s).exp();
    a / (a + b)
}

impl Torus {
    pub fn new(grid: &Grid) -> Self {
        let d = grid.dim();
        let n: Vec<usize> = grid.n.iter().map(|k| 2 * (k - 1)).collect();
        let offset: Vec<usize> = (0..d).map(|a| (n[a] - grid.n[a]) / 2).collect();
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * n[a + 1];
        }
        let len = n.iter().product();
        let period = (0..d).map(|a| n[a] as f64 * grid.h[a]).collect();
        let grid_map = (0..grid.npts)
            .map(|p| {
                let idx = grid.index(p);
                (0..d).map(|a| (idx[a] + offset[a]) * strides[a]).sum()
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = n.iter().map(|&k| planner.plan_fft_forward(k)).collect();
        let inv = n.iter().map(|&k| planner.plan_fft_inverse(k)).collect();
        Torus {
            n,
            strides,
            len,
            period,
            offset,
            h: grid.h.clone(),
            lower: grid.spec.lower.clone(),
            grid_map,
            fwd,
            inv,
        }
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn index(&self, mut q: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in 0..self.dim() {
            idx[a] = q / self.strides[a];
            q %= self.strides[a];
        }
        idx
    }

    /// Physical coordinate of torus node `q` (the grid box keeps its coordinates).
    pub fn coord(&self, q: usize, axis: usize) -> f64 {
        let i = (q / self.strides[axis]) % self.n[axis];
        self.lower[axis] + (i as f64 - self.offset[axis] as f64) * self.h[axis]
    }

    /// Angular frequency of Fourier index `j` on `axis`.
    pub fn wavenumber(&self, j: usize, axis: usize) -> f64 {
        let n = self.n[axis] as i64;
        let js = if (j as i64) <= n / 2 { j as i64 } else { j as i64 - n };
        2.0 * std::f64::consts::PI * js as f64 / self.period[axis]
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let mut line = Vec::new();
        for a in 0..self.dim() {
            let n = self.n[a];
            let s = self.strides[a];
            let plan = if inverse { &self.inv[a] } else { &self.fwd[a] };
            line.resize(n, Complex64::new(0.0, 0.0));
            for start in 0..self.len {
                if !(start / s).is_multiple_of(n) {
                    continue;
                }
                for j in 0..n {
                    line[j] = data[start + j * s];
                }
                plan.process(&mut line);
                for j in 0..n {
                    data[start + j * s] = line[j];
                }
            }
        }
        if inverse {
            let c = 1.0 / self.len as f64;
            for v in data.iter_mut() {
                *v *= c;
            }
        }
    }

    pub fn fft(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub fn ifft(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Cutoff equal to 1 on the box and decaying smoothly to 0 before the
    /// torus seam.
    pub fn cutoff(&self, box_n: &[usize]) -> Vec<f64> {
        let d = self.dim();
        (0..self.len)
            .map(|q| {
                let idx = self.index(q);
                let mut c = 1.0;
                for a in 0..d {
                    let lo = self.offset[a] as f64;
                    let hi = (self.offset[a] + box_n[a] - 1) as f64;
                    let i = idx[a] as f64;
                    let (dist, margin) = if i < lo {
                        (lo - i, lo)
                    } else if i > hi {
                        (i - hi, self.n[a] as f64 - hi)
                    } else {
                        (0.0, 1.0)
                    };
                    c *= smooth_step(dist / (margin - 0.5).max(1.0));
                }
                c
            })
            .collect()
    }

    /// Extends a grid field to the torus by odd reflection about each face,
    /// `f(b + s) = 2 f(b) - f(b - s)`, which keeps the first derivative
    /// continuous.
    pub fn extend_reflect(&self, grid: &Grid, f: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..self.len)
            .map(|q| {
                let idx = self.index(q);
                let mut terms: Vec<(usize, f64)> = vec![(0, 1.0)];
                for a in 0..d {
                    let n = grid.n[a] as i64;
                    let i = idx[a] as i64 - self.offset[a] as i64;
                    let s = grid.strides[a];
                    let parts: Vec<(i64, f64)> = if i < 0 {
                        vec![(0, 2.0), ((-i).min(n - 1), -1.0)]
                    } else if i >= n {
                        vec![(n - 1, 2.0), ((2 * (n - 1) - i).max(0), -1.0)]
                    } else {
                        vec![(i, 1.0)]
                    };
                    terms = terms
                        .iter()
                        .flat_map(|&(p, c)| parts.iter().map(move |&(j, w)| (p + j as usize * s, c * w)))
                        .collect();
                }
                terms.iter().map(|&(p, c)| c * f[p]).sum()
            })
            .collect()
    }

    /// Extends a grid field to the torus by its value at the nearest grid node.
    pub fn extend_nearest(&self, grid: &Grid, f: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..self.len)
            .map(|q| {
                let idx = self.index(q);
                let mut p = 0;
                for a in 0..d {
                    let i = idx[a] as i64 - self.offset[a] as i64;
                    let i = i.clamp(0, grid.n[a] as i64 - 1) as usize;
                    p += i * grid.strides[a];
                }
                f[p]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn fft_roundtrip_and_derivative() {
        let g = Grid::new(GridSpec::unit_box(2, 6, 0)).unwrap();
        let t = Torus::new(&g);
        assert_eq!(t.n, vec![14, 14]);
        let mut f: Vec<Complex64> = (0..t.len)
            .map(|q| {
                let x = t.coord(q, 0);
                Complex64::new((2.0 * std::f64::consts::PI * x / t.period[0]).sin(), 0.0)
            })
            .collect();
        let orig = f.clone();
        t.fft(&mut f);
        let mut back = f.clone();
        t.ifft(&mut back);
        for (a, b) in back.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
        for q in 0..t.len {
            let j = t.index(q)[0];
            f[q] *= Complex64::new(0.0, t.wavenumber(j, 0));
        }
        t.ifft(&mut f);
        let k = 2.0 * std::f64::consts::PI / t.period[0];
        for q in 0..t.len {
            let x = t.coord(q, 0);
            assert!((f[q].re - k * (k * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn cutoff_is_one_on_box_and_zero_at_seam() {
        let g = Grid::new(GridSpec::unit_box(1, 8, 0)).unwrap();
        let t = Torus::new(&g);
        let c = t.cutoff(&g.n);
        for &q in &t.grid_map {
            assert_eq!(c[q], 1.0);
        }
        assert_eq!(c[0], 0.0);
    }
}
