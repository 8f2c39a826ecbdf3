//! Banded LU with partial pivoting (the LAPACK `gbtf2` layout) and
//! Tikhonov-regularised least squares on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square banded matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage is column-major with leading dimension `2*kl + ku + 1`; the
/// extra `kl` rows receive fill-in from row interchanges.
#[derive(Clone, Debug)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Banded { n, kl, ku, ld, ab: vec![0.0; ld * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) + j * self.ld
    }

    /// Adds `v` to entry (i, j). Panics outside the declared band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j <= i + self.ku && i <= j + self.kl,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let p = self.pos(i, j);
        self.ab[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i + self.ku || i > j + self.kl {
            0.0
        } else {
            self.ab[self.pos(i, j)]
        }
    }

    /// y = A x, using only the declared band.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.ab[self.pos(i, j)] * x[j];
            }
        }
        y
    }

    /// In-place factorisation; consumes the matrix.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        let scale = self.ab.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = 0.0;
            for p in 0..=km {
                let a = self.ab[kv + p + j * self.ld].abs();
                if a > best {
                    best = a;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            if best <= 1e-14 * scale {
                return Err(Error::Singular(format!("zero pivot in column {j} of {n}")));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.pos(j, c);
                    let b = self.pos(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            if km > 0 {
                let piv = self.ab[self.pos(j, j)];
                for r in 1..=km {
                    let p = self.pos(j + r, j);
                    self.ab[p] /= piv;
                }
                for c in (j + 1)..=ju {
                    let a = self.ab[self.pos(j, c)];
                    if a != 0.0 {
                        for r in 1..=km {
                            let l = self.ab[self.pos(j + r, j)];
                            let p = self.pos(j + r, c);
                            self.ab[p] -= l * a;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { m: self, ipiv })
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu {
    m: Banded,
    ipiv: Vec<usize>,
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.m;
        let n = a.n;
        assert_eq!(b.len(), n);
        let kv = a.kl + a.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = a.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for r in 1..=km {
                    b[j + r] -= a.ab[a.pos(j + r, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= a.ab[a.pos(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= a.ab[a.pos(i, j)] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Outcome of a regularised least-squares fit.
#[derive(Clone, Debug)]
pub struct TikhonovFit {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub rhs_norm: f64,
    pub singular_values: Vec<f64>,
    /// Absolute weight `alpha = rel * sigma_max`.
    pub alpha: f64,
    /// Number of singular values above `alpha`.
    pub effective_rank: usize,
}

/// Minimises `|A x - b|^2 + alpha^2 |x|^2` with `alpha = rel * sigma_max(A)`.
pub fn tikhonov(a: &DMatrix<f64>, b: &[f64], rel: f64) -> Result<TikhonovFit> {
    if a.nrows() != b.len() {
        return Err(Error::ShapeMismatch { expected: a.nrows(), got: b.len() });
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Singular("svd without U".into()))?;
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::Singular("svd without V".into()))?;
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(Error::RankDeficient("operator is identically zero".into()));
    }
    let alpha = rel * smax;
    let bv = DVector::from_column_slice(b);
    let utb = u.transpose() * &bv;
    let mut coef = DVector::zeros(s.len());
    for i in 0..s.len() {
        coef[i] = s[i] * utb[i] / (s[i] * s[i] + alpha * alpha);
    }
    let x = vt.transpose() * coef;
    let r = a * &x - &bv;
    let mut sv: Vec<f64> = s.iter().cloned().collect();
    sv.sort_by(|p, q| q.partial_cmp(p).unwrap());
    Ok(TikhonovFit {
        x: x.iter().cloned().collect(),
        residual_norm: r.norm(),
        rhs_norm: bv.norm(),
        effective_rank: sv.iter().filter(|&&v| v > alpha).count(),
        singular_values: sv,
        alpha,
    })
}

pub fn dense_solve(a: DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let lu = a.lu();
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::Singular("dense LU failed".into()))?;
    Ok(x.iter().cloned().collect())
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}
