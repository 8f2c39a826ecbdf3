//! Expression strings over `x1, x2, x3, t` for coefficients and costs.

use crate::error::{Error, Result};
use crate::grid::{Grid, SpaceTimeField};

/// A compiled expression in `x1, x2, x3, t`. Unused coordinates read as 0.
pub struct Expr {
    src: String,
    f: Box<dyn Fn(f64, f64, f64, f64) -> f64>,
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Expr({})", self.src)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let err = |msg: String| Error::Expression { expr: src.to_string(), msg };
        let e: meval::Expr = src.parse().map_err(|e: meval::Error| err(e.to_string()))?;
        let f = e.bind4("x1", "x2", "x3", "t").map_err(|e| err(e.to_string()))?;
        Ok(Expr { src: src.to_string(), f: Box::new(f) })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn eval(&self, x: &[f64; 3], t: f64) -> f64 {
        (self.f)(x[0], x[1], x[2], t)
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> Result<Vec<f64>> {
        let v = grid.sample(t, |x, t| self.eval(x, t));
        self.finite(v)
    }

    pub fn sample_st(&self, grid: &Grid) -> Result<SpaceTimeField> {
        let v = grid.sample_st(|x, t| self.eval(x, t));
        let data = self.finite(v.data)?;
        Ok(SpaceTimeField { data, ..v })
    }

    fn finite(&self, v: Vec<f64>) -> Result<Vec<f64>> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(Error::Expression { expr: self.src.clone(), msg: "non-finite value on the grid".into() })
        }
    }
}

pub fn sample(src: &str, grid: &Grid, t: f64) -> Result<Vec<f64>> {
    Expr::parse(src)?.sample(grid, t)
}

pub fn sample_st(src: &str, grid: &Grid) -> Result<SpaceTimeField> {
    Expr::parse(src)?.sample_st(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_in_all_variables() {
        let e = Expr::parse("sin(pi*x1)*exp(-t) + x2^2 + ln(2) * x3").unwrap();
        let v = e.eval(&[0.5, 2.0, 1.0], 0.0);
        assert!((v - (1.0 + 4.0 + 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn rejects_unknown_symbols() {
        assert!(matches!(Expr::parse("y + 1"), Err(Error::Expression { .. })));
        assert!(Expr::parse("1 +").is_err());
    }
}
