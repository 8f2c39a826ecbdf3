//! Run configuration (TOML). The schema is documented in `configs/README.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forward::{CostModel, MfgCoefficients, SolverOptions};
use crate::grid::{Grid, GridSpec};
use crate::inverse::timedep::CoarseMesh;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub nx: usize,
    #[serde(default)]
    pub nt: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            lower: self.lower.clone().unwrap_or_else(|| vec![0.0; self.dim]),
            upper: self.upper.clone().unwrap_or_else(|| vec![1.0; self.dim]),
            nx: vec![self.nx; self.dim],
            nt: self.nt,
            horizon: self.horizon,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.spec())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_theta() -> f64 {
    0.5
}
fn default_max_iter() -> usize {
    200
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: default_tol(), theta: default_theta(), max_iter: default_max_iter() }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, theta: self.theta, max_iter: self.max_iter, ..SolverOptions::default() }
    }
}

/// Time-dependent experiment: nonlinear forward run, lateral perturbations
/// and higher-order recovery.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimedepConfig {
    pub grid: GridConfig,
    pub sigma: String,
    pub kappa: String,
    /// Expansion density of the cost model.
    #[serde(default = "one_str")]
    pub m0: String,
    /// Taylor coefficients `F_1, F_2, ...` (ground truth; `F_1` is a declared known).
    pub f: Vec<String>,
    /// Taylor coefficients `G_1, G_2, ...` (ground truth).
    pub g: Vec<String>,
    /// Dirichlet data of the base run.
    #[serde(default = "zero_str")]
    pub v_boundary: String,
    #[serde(default = "one_str")]
    pub m_boundary: String,
    #[serde(default = "one_str")]
    pub m_initial: String,
    pub perturbations: Vec<Perturbation>,
    #[serde(default = "default_eps")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_reg")]
    pub regularization: f64,
    #[serde(default = "default_terminal_factor")]
    pub terminal_factor: usize,
    #[serde(default)]
    pub mesh: CoarseMesh,
}

fn one_str() -> String {
    "1".into()
}
fn zero_str() -> String {
    "0".into()
}
fn default_eps() -> Vec<f64> {
    vec![1e-1, 3e-2, 1e-2]
}
fn default_reg() -> f64 {
    1e-6
}
fn default_terminal_factor() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Lateral Dirichlet data of `v`.
    pub g: String,
    /// Lateral Dirichlet data of `m`.
    pub h: String,
}

/// Stationary experiment: baseline, CGO probes and first-order recovery.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    pub grid: GridConfig,
    /// Seed potential of the Gibbs baseline; constant baseline when absent.
    #[serde(default)]
    pub v0: Option<String>,
    /// Ground-truth first-order coefficient.
    pub f1: String,
    #[serde(default = "default_jmax")]
    pub jmax: i64,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    /// Decay study frequency (in units of `2 pi`).
    #[serde(default = "default_decay_k")]
    pub decay_k: Vec<f64>,
    #[serde(default = "default_decay_radii")]
    pub decay_radii: Vec<f64>,
    #[serde(default = "default_cgo_tol")]
    pub cgo_tol: f64,
}

fn default_jmax() -> i64 {
    1
}
fn default_radii() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn default_decay_k() -> Vec<f64> {
    vec![1.0, 0.0, 0.0]
}
fn default_decay_radii() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn default_cgo_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Standard deviation of additive Gaussian noise on archived traces.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    pub timedep: TimedepConfig,
    pub stationary: StationaryConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Field-level checks beyond parsing: expressions compile, tolerances
    /// are positive, grids are valid.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        let td = &self.timedep;
        let st = &self.stationary;
        td.grid.spec().validate().map_err(|e| field("timedep.grid", e))?;
        st.grid.spec().validate().map_err(|e| field("stationary.grid", e))?;
        if td.grid.nt < 2 {
            return Err(Error::Config("timedep.grid.nt must be >= 2".into()));
        }
        if st.grid.nt != 0 || st.grid.dim != 3 {
            return Err(Error::Config("stationary.grid must be 3D with nt = 0".into()));
        }
        let mut exprs: Vec<(String, &str)> = vec![
            ("timedep.sigma".into(), &td.sigma),
            ("timedep.kappa".into(), &td.kappa),
            ("timedep.m0".into(), &td.m0),
            ("timedep.v_boundary".into(), &td.v_boundary),
            ("timedep.m_boundary".into(), &td.m_boundary),
            ("timedep.m_initial".into(), &td.m_initial),
            ("stationary.f1".into(), &st.f1),
        ];
        for (i, s) in td.f.iter().enumerate() {
            exprs.push((format!("timedep.f[{i}]"), s));
        }
        for (i, s) in td.g.iter().enumerate() {
            exprs.push((format!("timedep.g[{i}]"), s));
        }
        for (i, p) in td.perturbations.iter().enumerate() {
            exprs.push((format!("timedep.perturbations[{i}].g"), &p.g));
            exprs.push((format!("timedep.perturbations[{i}].h"), &p.h));
        }
        if let Some(v0) = &st.v0 {
            exprs.push(("stationary.v0".into(), v0));
        }
        for (name, src) in exprs {
            Expr::parse(src).map_err(|e| field(&name, e))?;
        }
        if td.f.is_empty() || td.g.is_empty() {
            return Err(Error::Config("timedep.f and timedep.g need at least the first-order coefficient".into()));
        }
        if td.perturbations.is_empty() {
            return Err(Error::Config("timedep.perturbations is empty".into()));
        }
        let positive = [
            ("solver.tol", self.solver.tol),
            ("solver.theta", self.solver.theta),
            ("timedep.regularization", td.regularization),
            ("stationary.cgo_tol", st.cgo_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, found {v}")));
            }
        }
        if self.solver.theta > 1.0 {
            return Err(Error::Config("solver.theta must lie in (0, 1]".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("noise must be nonnegative".into()));
        }
        if st.radii.iter().chain(&st.decay_radii).any(|r| !(*r >= 0.25)) {
            return Err(Error::Config("probe radii must be >= 1/4".into()));
        }
        if st.decay_k.len() != 3 {
            return Err(Error::Config("stationary.decay_k needs three components".into()));
        }
        if td.mesh.space == 0 || td.mesh.time == 0 || td.terminal_factor == 0 {
            return Err(Error::Config("coarsening factors must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn coefficients(&self, grid: &Grid) -> Result<MfgCoefficients> {
        let c = MfgCoefficients {
            sigma: Expr::parse(&self.timedep.sigma)?.sample_st(grid)?,
            kappa: Expr::parse(&self.timedep.kappa)?.sample_st(grid)?,
        };
        c.validate(grid)?;
        Ok(c)
    }

    /// Ground-truth cost model of the time-dependent experiment.
    pub fn cost(&self, grid: &Grid) -> Result<CostModel> {
        let td = &self.timedep;
        let t = grid.spec.horizon;
        Ok(CostModel {
            m0: Expr::parse(&td.m0)?.sample_st(grid)?,
            f: td.f.iter().map(|s| Expr::parse(s)?.sample_st(grid)).collect::<Result<_>>()?,
            g: td.g.iter().map(|s| Expr::parse(s)?.sample(grid, t)).collect::<Result<_>>()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[timedep]
grid = { dim = 1, nx = 7, nt = 8 }
sigma = "1"
kappa = "1"
f = ["1"]
g = ["1"]
perturbations = [{ g = "t*t", h = "t" }]

[stationary]
grid = { dim = 3, nx = 7 }
f1 = "1"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.timedep.mesh, CoarseMesh::default());
        assert_eq!(c.stationary.radii, vec![2.0, 4.0, 8.0]);
        assert_eq!(c.solver.tol, 1e-10);
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 7;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn bad_fields_are_reported_by_name() {
        let bad = MINIMAL.replace("sigma = \"1\"", "sigma = \"1 +* x1\"");
        let e = RunConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(e.contains("timedep.sigma"), "{e}");
        let bad = MINIMAL.replace("f1 = \"1\"", "f1 = \"1\"\nbogus = 3");
        assert!(RunConfig::from_toml(&bad).is_err());
        let bad = format!("[solver]\ntol = -1\n{MINIMAL}");
        assert!(RunConfig::from_toml(&bad).unwrap_err().to_string().contains("solver.tol"));
    }
}
