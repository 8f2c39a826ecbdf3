//! Subcommand implementations behind the `mfg` binary.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::archive::{c2_csv, write_c3, Archive, Manifest, ProbeSet, StationaryManifest, TimedepManifest, TraceFiles, FORMAT};
use crate::cauchy::{extract_c3, C2Record, C3Record};
use crate::cgo::{verify_decay, CgoOptions};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field_io::{trace_csv, write_atomic, write_field};
use crate::forward::{
    build_stationary_baseline, fpk_residual, hjb_residual, solve_mfg_timedep, CostModel, MfgCoefficients,
    StationarySolution, TimeDependentSolution,
};
use crate::grid::{Grid, GridSpec, SpaceTimeField};
use crate::inverse::stationary::{
    forward_reduced, invert_fourier, probe_plan, probing_record, recover_fourier_samples, recover_stationary_state,
};
use crate::inverse::timedep::{
    recover_higher_order, recover_terminal_linear, FitSummary, LateralExperiment, MixedRecord,
};
use crate::linearize::{check_compatibility, frechet_check, solve_first_order, solve_mixed, LinearSolver, LinearizedSolution, NonlinearProblem};
use crate::verify::{run_all, VerifyOptions};

const TAU: f64 = 2.0 * std::f64::consts::PI;

pub struct Context {
    pub out: PathBuf,
    pub parallel: bool,
    pub ground_truth: Option<PathBuf>,
    pub archive: Option<PathBuf>,
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn static_field(f: &[f64]) -> SpaceTimeField {
    SpaceTimeField { npts: f.len(), nlev: 1, data: f.to_vec() }
}

struct TimedepRun {
    grid: Grid,
    coeffs: MfgCoefficients,
    cost: CostModel,
    vb: SpaceTimeField,
    mb: SpaceTimeField,
    initial: Vec<f64>,
    base: TimeDependentSolution,
}

fn timedep_run(cfg: &RunConfig) -> Result<TimedepRun> {
    let td = &cfg.timedep;
    let grid = td.grid.grid()?;
    let coeffs = cfg.coefficients(&grid)?;
    let cost = cfg.cost(&grid)?;
    let vb = Expr::parse(&td.v_boundary)?.sample_st(&grid)?;
    let mb = Expr::parse(&td.m_boundary)?.sample_st(&grid)?;
    let initial = Expr::parse(&td.m_initial)?.sample(&grid, 0.0)?;
    let base = solve_mfg_timedep(&grid, &coeffs, &cost, &initial, &vb, &mb, None, &cfg.solver.options())?;
    Ok(TimedepRun { grid, coeffs, cost, vb, mb, initial, base })
}

/// Sampled lateral inputs, checked against the corner conditions for `g1`.
fn perturbation_fields(cfg: &RunConfig, grid: &Grid, g1: &[f64]) -> Result<Vec<(SpaceTimeField, SpaceTimeField)>> {
    cfg.timedep
        .perturbations
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (g, h) = (Expr::parse(&p.g)?.sample_st(grid)?, Expr::parse(&p.h)?.sample_st(grid)?);
            check_compatibility(grid, &g, &h, g1, 1e-8)
                .map_err(|e| Error::Config(format!("timedep.perturbations[{i}]: {e}")))?;
            Ok((g, h))
        })
        .collect()
}

fn stationary_base(cfg: &RunConfig, grid: &Grid) -> Result<StationarySolution> {
    match &cfg.stationary.v0 {
        Some(s) => build_stationary_baseline(grid, Some(&Expr::parse(s)?.sample(grid, 0.0)?)),
        None => build_stationary_baseline(grid, None),
    }
}

fn cgo_options(cfg: &RunConfig) -> CgoOptions {
    CgoOptions { tol: cfg.stationary.cgo_tol, ..CgoOptions::default() }
}

pub fn forward(cfg: &RunConfig, ctx: &Context) -> Result<Value> {
    let dir = ctx.out.join("forward");
    let r = timedep_run(cfg)?;
    let spec = &r.grid.spec;
    write_field(&dir.join("v.mfgf"), spec, &r.base.v)?;
    write_field(&dir.join("m.mfgf"), spec, &r.base.m)?;
    let sg = cfg.stationary.grid.grid()?;
    let st = stationary_base(cfg, &sg)?;
    write_field(&dir.join("v0.mfgf"), &sg.spec, &static_field(&st.v0))?;
    write_field(&dir.join("m0.mfgf"), &sg.spec, &static_field(&st.m0))?;
    let summary = json!({
        "picard_iterations": r.base.picard_iterations,
        "final_update": r.base.final_update_norm,
        "update_history": r.base.update_history,
        "hjb_residual": hjb_residual(&r.grid, &r.coeffs, &r.cost, &r.base.v, &r.base.m),
        "fpk_residual": fpk_residual(&r.grid, &r.coeffs, &r.base.v, &r.base.m),
        "stationary": {"lambda": st.lambda, "gibbs_defect": st.gibbs_defect(&sg), "mass": sg.integrate(&st.m0)},
    });
    write_json(&dir.join("forward.json"), &summary)?;
    Ok(summary)
}

pub fn linearize(cfg: &RunConfig, ctx: &Context) -> Result<Value> {
    let dir = ctx.out.join("linearize");
    let r = timedep_run(cfg)?;
    let g = &r.grid;
    let opts = cfg.solver.options();
    let solver = LinearSolver::new(g, &r.coeffs, &r.base.v, &r.base.m, opts.clone())?;
    let data = perturbation_fields(cfg, g, &r.cost.g[0])?;
    let mut firsts = Vec::new();
    for (i, (gg, hh)) in data.iter().enumerate() {
        let s = solve_first_order(&solver, &r.cost, gg, hh)?;
        write_field(&dir.join(format!("first_{i}_v.mfgf")), &g.spec, &s.v)?;
        write_field(&dir.join(format!("first_{i}_m.mfgf")), &g.spec, &s.m)?;
        firsts.push(s);
    }
    if firsts.len() >= 2 {
        let s = solve_mixed(&solver, &r.cost, &[&firsts[0], &firsts[1]])?;
        write_field(&dir.join("mixed_0_1_v.mfgf"), &g.spec, &s.v)?;
        write_field(&dir.join("mixed_0_1_m.mfgf"), &g.spec, &s.m)?;
    }
    let prob = NonlinearProblem {
        grid: g,
        coeffs: &r.coeffs,
        cost: &r.cost,
        f: &r.initial,
        vb: &r.vb,
        mb: &r.mb,
        opts,
    };
    let rep = frechet_check(&prob, &data[0].0, &data[0].1, &cfg.timedep.epsilons)?;
    write_json(&dir.join("frechet.json"), &rep)?;
    let summary = json!({"first_order": firsts.len(), "frechet": rep});
    if !(1.8..=2.2).contains(&rep.slope) {
        return Err(Error::Property(format!("Frechet remainder slope {:.3} outside [1.8, 2.2]", rep.slope)));
    }
    Ok(summary)
}

pub fn probe(cfg: &RunConfig, ctx: &Context) -> Result<Value> {
    let dir = ctx.out.join("probe");
    let st = &cfg.stationary;
    let g = st.grid.grid()?;
    let base = stationary_base(cfg, &g)?;
    let f1 = Expr::parse(&st.f1)?.sample(&g, 0.0)?;
    let eq = forward_reduced(&g, &base, &f1)?;
    let k: Vec<f64> = st.decay_k.iter().map(|x| TAU * x).collect();
    let rep = verify_decay(&g, &eq, &k, &st.decay_radii, &cgo_options(cfg), ctx.parallel)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "xi_norm", "omega_l2", "iterations"]).map_err(|e| Error::Format(e.to_string()))?;
    for row in &rep.rows {
        w.write_record([row.r.to_string(), format!("{:e}", row.xi_norm), format!("{:e}", row.omega_l2), row.iterations.to_string()])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    write_atomic(&dir.join("decay.csv"), &w.into_inner().map_err(|e| Error::Format(e.to_string()))?)?;
    write_json(&dir.join("decay.json"), &rep)?;
    let summary = json!({"slope": rep.slope, "degenerate": rep.degenerate, "rows": rep.rows.len()});
    if rep.degenerate || !(-1.3..=-0.7).contains(&rep.slope) {
        return Err(Error::Property(format!("remainder decay slope {:.3} outside [-1.3, -0.7]", rep.slope)));
    }
    Ok(summary)
}

struct Noise {
    rng: ChaCha8Rng,
    dist: Option<Normal<f64>>,
}

impl Noise {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let dist = if cfg.noise > 0.0 {
            Some(Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Noise { rng: ChaCha8Rng::seed_from_u64(cfg.seed), dist })
    }

    fn real(&mut self, v: &mut [f64]) {
        if let Some(d) = &self.dist {
            v.iter_mut().for_each(|x| *x += d.sample(&mut self.rng));
        }
    }

    fn c2(&mut self, r: &mut C2Record) {
        if let Some(d) = &self.dist {
            for z in r.values.iter_mut().chain(r.normal.iter_mut()) {
                z.re += d.sample(&mut self.rng);
                z.im += d.sample(&mut self.rng);
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct GroundTruth {
    pub stationary_f1: String,
    pub timedep_m0: String,
    pub timedep_f: Vec<String>,
    pub timedep_g: Vec<String>,
}

pub fn measure(cfg: &RunConfig, ctx: &Context) -> Result<Value> {
    let dir = ctx.archive.clone().unwrap_or_else(|| ctx.out.join("archive"));
    let mut noise = Noise::new(cfg)?;
    let st = &cfg.stationary;
    let copts = cgo_options(cfg);

    // Stationary probing records.
    let sg = st.grid.grid()?;
    let base = stationary_base(cfg, &sg)?;
    let f1 = Expr::parse(&st.f1)?.sample(&sg, 0.0)?;
    let mut trace = sg.restrict_to_boundary(&base.v0)?;
    noise.real(&mut trace.normal);
    write_atomic(&dir.join("stationary/baseline_trace.csv"), &trace_csv(&sg, &trace)?)?;
    let mut sets = Vec::new();
    for &r in &st.radii {
        let plan = probe_plan(&sg, st.jmax, r, r * TAU);
        let mut recs = crate::par_map(plan.clone(), ctx.parallel, |p| probing_record(&sg, &base, &f1, &p, &copts).map(|x| x.0))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        recs.iter_mut().for_each(|r| noise.c2(r));
        let rel = format!("stationary/records_R{r}.csv");
        write_atomic(&dir.join(&rel), &c2_csv(&sg, &recs)?)?;
        sets.push(ProbeSet { r, probes: plan, records: rel });
    }

    // Time-dependent lateral records.
    let run = timedep_run(cfg)?;
    let g = &run.grid;
    write_field(&dir.join("timedep/base_v.mfgf"), &g.spec, &run.base.v)?;
    write_field(&dir.join("timedep/base_m.mfgf"), &g.spec, &run.base.m)?;
    let solver = LinearSolver::new(g, &run.coeffs, &run.base.v, &run.base.m, cfg.solver.options())?;
    let data = perturbation_fields(cfg, g, &run.cost.g[0])?;
    let firsts: Vec<LinearizedSolution> =
        data.iter().map(|(gg, hh)| solve_first_order(&solver, &run.cost, gg, hh)).collect::<Result<_>>()?;
    let noisy = |mut rec: C3Record, noise: &mut Noise| {
        noise.real(&mut rec.v.normal);
        noise.real(&mut rec.m.normal);
        rec
    };
    let mut first_files = Vec::new();
    for (i, s) in firsts.iter().enumerate() {
        let rec = noisy(extract_c3(g, &format!("first_{i}"), &s.v, &s.m)?, &mut noise);
        first_files.push(write_c3(&dir, g, &rec, vec![i])?);
    }
    let mut second_files = Vec::new();
    if cfg.timedep.f.len() >= 2 || cfg.timedep.g.len() >= 2 {
        for i in 0..firsts.len() {
            for j in i..firsts.len() {
                let s = solve_mixed(&solver, &run.cost, &[&firsts[i], &firsts[j]])?;
                let rec = noisy(extract_c3(g, &format!("second_{i}_{j}"), &s.v, &s.m)?, &mut noise);
                second_files.push(write_c3(&dir, g, &rec, vec![i, j])?);
            }
        }
    }

    let manifest = Manifest {
        format: FORMAT,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        noise: cfg.noise,
        version: env!("CARGO_PKG_VERSION").to_string(),
        stationary: StationaryManifest { grid: sg.spec.clone(), baseline_trace: "stationary/baseline_trace.csv".into(), probe_sets: sets },
        timedep: TimedepManifest {
            grid: g.spec.clone(),
            sigma: cfg.timedep.sigma.clone(),
            kappa: cfg.timedep.kappa.clone(),
            known_f1: cfg.timedep.f[0].clone(),
            base_v: "timedep/base_v.mfgf".into(),
            base_m: "timedep/base_m.mfgf".into(),
            perturbations: cfg.timedep.perturbations.clone(),
            first_order: first_files,
            second_order: second_files,
        },
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    let truth = GroundTruth {
        stationary_f1: st.f1.clone(),
        timedep_m0: cfg.timedep.m0.clone(),
        timedep_f: cfg.timedep.f.clone(),
        timedep_g: cfg.timedep.g.clone(),
    };
    write_json(&ctx.out.join("ground_truth.json"), &truth)?;
    Ok(json!({
        "archive": dir,
        "probe_records": manifest.stationary.probe_sets.iter().map(|s| s.probes.len()).sum::<usize>(),
        "first_order": manifest.timedep.first_order.len(),
        "second_order": manifest.timedep.second_order.len(),
        "config_hash": manifest.config_hash,
    }))
}

#[derive(Serialize)]
pub struct StationaryEntry {
    pub r: f64,
    pub samples: usize,
    pub conjugate_defect: f64,
    pub max_probe_residual: f64,
    pub field: String,
    pub error: Option<f64>,
}

#[derive(Serialize)]
pub struct HigherEntry {
    pub order: usize,
    pub fit: FitSummary,
    pub roundtrip_residual: f64,
    pub degenerate_fraction: f64,
    pub f_error: Option<f64>,
    pub g_error: Option<f64>,
}

#[derive(Serialize)]
pub struct ReconstructionReport {
    pub config_hash: String,
    pub regularization: f64,
    pub stationary: Vec<StationaryEntry>,
    pub baseline_lambda: f64,
    pub g1_fits: Vec<FitSummary>,
    pub g1_error: Option<f64>,
    pub higher: Vec<HigherEntry>,
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d / n.max(f64::MIN_POSITIVE)).sqrt()
}

/// Interior time levels where the scheme reads the running cost and the
/// recovered product fields are informative.
fn inner_levels(g: &Grid, f: &SpaceTimeField) -> Vec<f64> {
    f.data[g.npts..g.npts * (f.nlev - 1)].to_vec()
}

pub fn reconstruct(cfg: &RunConfig, ctx: &Context) -> Result<Value> {
    let dir = ctx.archive.clone().unwrap_or_else(|| ctx.out.join("archive"));
    let archive = Archive::load(&dir)?;
    archive.check_hash(&cfg.hash())?;
    let m = &archive.manifest;
    let truth: Option<GroundTruth> = match &ctx.ground_truth {
        Some(p) => {
            let b = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            Some(serde_json::from_slice(&b).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let out = ctx.out.join("reconstruct");
    let copts = cgo_options(cfg);

    // Stationary: base state from the v0 trace, then F1 per probe set.
    let sg = Grid::new(m.stationary.grid.clone())?;
    let base = recover_stationary_state(&sg, &archive.baseline_trace(&sg)?, 1e-3)?;
    write_field(&out.join("v0.mfgf"), &sg.spec, &static_field(&base.v0))?;
    write_field(&out.join("m0.mfgf"), &sg.spec, &static_field(&base.m0))?;
    let f1_true = match &truth {
        Some(t) => Some(Expr::parse(&t.stationary_f1)?.sample(&sg, 0.0)?),
        None => None,
    };
    let mut stationary = Vec::new();
    for set in &m.stationary.probe_sets {
        let recs = archive.probe_records(&sg, set)?;
        let smp = recover_fourier_samples(&sg, &base, &set.probes, &recs, &copts, ctx.parallel)?;
        let f1 = invert_fourier(&sg, &smp, &base, 1e-6)?;
        let name = format!("f1_R{}.mfgf", set.r);
        write_field(&out.join(&name), &sg.spec, &static_field(&f1))?;
        stationary.push(StationaryEntry {
            r: set.r,
            samples: smp.values.len(),
            conjugate_defect: smp.conjugate_defect,
            max_probe_residual: smp.probe_residuals.iter().cloned().fold(0.0, f64::max),
            field: name,
            error: f1_true.as_ref().map(|t| sg.rel_l2(&f1, t)),
        });
    }

    // Time-dependent: G1 from first-order records, then order two.
    let td = &m.timedep;
    let g = Grid::new(td.grid.clone())?;
    let coeffs = MfgCoefficients { sigma: Expr::parse(&td.sigma)?.sample_st(&g)?, kappa: Expr::parse(&td.kappa)?.sample_st(&g)? };
    coeffs.validate(&g)?;
    let (bv, bm) = archive.base_fields()?;
    let solver = LinearSolver::new(&g, &coeffs, &bv, &bm, cfg.solver.options())?;
    let f1 = Expr::parse(&td.known_f1)?.sample_st(&g)?;
    let inputs: Vec<(SpaceTimeField, SpaceTimeField)> = td
        .perturbations
        .iter()
        .map(|p| Ok((Expr::parse(&p.g)?.sample_st(&g)?, Expr::parse(&p.h)?.sample_st(&g)?)))
        .collect::<Result<_>>()?;
    let exps: Vec<LateralExperiment> = td
        .first_order
        .iter()
        .map(|f: &TraceFiles| {
            let (gg, hh) = inputs.get(f.inputs[0]).ok_or_else(|| Error::Integrity(format!("{} has no inputs", f.label)))?;
            Ok(LateralExperiment { g: gg.clone(), h: hh.clone(), record: archive.c3(&g, f)? })
        })
        .collect::<Result<_>>()?;
    let reg = cfg.timedep.regularization;
    let tfit = recover_terminal_linear(&solver, &f1, &exps, cfg.timedep.terminal_factor, reg, 1e-6, ctx.parallel)?;
    write_field(&out.join("g1.mfgf"), &g.spec, &static_field(&tfit.g1))?;
    let t = g.spec.horizon;
    let sample_truth = |src: &str| -> Result<Vec<f64>> { Expr::parse(src)?.sample(&g, t) };
    let g1_error = match &truth {
        Some(tr) => Some(rel_l2(&tfit.g1, &sample_truth(&tr.timedep_g[0])?)),
        None => None,
    };

    let mut higher = Vec::new();
    if !td.second_order.is_empty() {
        let mut known = CostModel { m0: bm.clone(), f: vec![f1.clone()], g: vec![tfit.g1.clone()] };
        if let Some(tr) = &truth {
            known.m0 = Expr::parse(&tr.timedep_m0)?.sample_st(&g)?;
        }
        let firsts: Vec<LinearizedSolution> =
            exps.iter().map(|e| solve_first_order(&solver, &known, &e.g, &e.h)).collect::<Result<_>>()?;
        let recs: Vec<MixedRecord> = td
            .second_order
            .iter()
            .map(|f| Ok(MixedRecord { inputs: f.inputs.clone(), record: archive.c3(&g, f)? }))
            .collect::<Result<_>>()?;
        let fit = recover_higher_order(&solver, &known, &firsts, &recs, cfg.timedep.mesh, reg, 1e-6, ctx.parallel)?;
        write_field(&out.join("f2.mfgf"), &g.spec, &fit.f)?;
        write_field(&out.join("g2.mfgf"), &g.spec, &static_field(&fit.g))?;
        let (mut fe, mut ge) = (None, None);
        if let Some(tr) = &truth {
            if tr.timedep_f.len() >= 2 {
                let ft = Expr::parse(&tr.timedep_f[1])?.sample_st(&g)?;
                fe = Some(rel_l2(&inner_levels(&g, &fit.f), &inner_levels(&g, &ft)));
            }
            if tr.timedep_g.len() >= 2 {
                ge = Some(rel_l2(&fit.g, &sample_truth(&tr.timedep_g[1])?));
            }
        }
        higher.push(HigherEntry {
            order: fit.order,
            fit: fit.fit,
            roundtrip_residual: fit.roundtrip_residual,
            degenerate_fraction: fit.degenerate_fraction,
            f_error: fe,
            g_error: ge,
        });
    }
    let report = ReconstructionReport {
        config_hash: m.config_hash.clone(),
        regularization: reg,
        stationary,
        baseline_lambda: base.lambda,
        g1_fits: tfit.fits,
        g1_error,
        higher,
    };
    write_json(&out.join("report.json"), &report)?;
    let v = serde_json::to_value(&report).map_err(|e| Error::Format(e.to_string()))?;
    for h in &report.higher {
        if h.roundtrip_residual > 2.0 * h.fit.residual_norm + 1e-9 {
            return Err(Error::Property(format!(
                "round-trip residual {:.3e} exceeds twice the fit residual {:.3e}",
                h.roundtrip_residual, h.fit.residual_norm
            )));
        }
    }
    Ok(v)
}

pub fn verify(seed: u64, ctx: &Context) -> Result<Value> {
    let checks = run_all(&VerifyOptions { parallel: ctx.parallel, seed });
    for c in &checks {
        eprintln!("[{}] {:>2}. {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.name, c.detail);
    }
    write_json(&ctx.out.join("verify.json"), &checks)?;
    let failed: Vec<u8> = checks.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    if !failed.is_empty() {
        return Err(Error::Property(format!("criteria {failed:?} failed")));
    }
    Ok(json!({"passed": checks.len()}))
}

/// Grid spec of a stored field, for tools that only need the geometry.
pub fn field_grid(path: &Path) -> Result<GridSpec> {
    Ok(crate::field_io::read_field(path)?.0)
}

/// Per-run record written to `<out>/<command>_manifest.json`.
#[derive(Serialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: u64,
    pub version: String,
    pub seconds: f64,
    /// Exit status the run maps to.
    pub status: i32,
    pub error: Option<String>,
    pub artifacts: Vec<String>,
}

fn list_files(dir: &Path, base: &Path, out: &mut Vec<String>) {
    let Ok(rd) = std::fs::read_dir(dir) else { return };
    let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            list_files(&p, base, out);
        } else if !p.to_string_lossy().ends_with(".tmp") {
            out.push(p.strip_prefix(base).unwrap_or(&p).to_string_lossy().into_owned());
        }
    }
}

/// Dispatches `command`, then records its manifest. `cfg` may be absent only
/// for `verify`.
pub fn execute(command: &str, cfg: Option<&RunConfig>, seed: u64, ctx: &Context) -> Result<Value> {
    let start = std::time::Instant::now();
    let need = || cfg.ok_or_else(|| Error::Config("a configuration is required".into()));
    let (res, dir) = match command {
        "forward" => (need().and_then(|c| forward(c, ctx)), ctx.out.join("forward")),
        "linearize" => (need().and_then(|c| linearize(c, ctx)), ctx.out.join("linearize")),
        "probe" => (need().and_then(|c| probe(c, ctx)), ctx.out.join("probe")),
        "measure" => (need().and_then(|c| measure(c, ctx)), ctx.archive.clone().unwrap_or_else(|| ctx.out.join("archive"))),
        "reconstruct" => (need().and_then(|c| reconstruct(c, ctx)), ctx.out.join("reconstruct")),
        "verify" => (verify(seed, ctx), ctx.out.join("verify.json")),
        other => return Err(Error::Config(format!("unknown command {other}"))),
    };
    let mut artifacts = Vec::new();
    if dir.is_file() {
        artifacts.push(dir.strip_prefix(&ctx.out).unwrap_or(&dir).to_string_lossy().into_owned());
    } else {
        list_files(&dir, &ctx.out, &mut artifacts);
    }
    if matches!(&res, Err(e) if e.exit_code() == 2) && artifacts.is_empty() {
        return res;
    }
    let manifest = ExperimentManifest {
        command: command.to_string(),
        config_hash: cfg.map(RunConfig::hash),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seconds: start.elapsed().as_secs_f64(),
        status: res.as_ref().map_or_else(Error::exit_code, |_| 0),
        error: res.as_ref().err().map(ToString::to_string),
        artifacts,
    };
    write_json(&ctx.out.join(format!("{command}_manifest.json")), &manifest)?;
    res
}
