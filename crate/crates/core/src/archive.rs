//! Measurement archives: a directory with `manifest.json`, CSV traces and the
//! declared-known base fields. The manifest carries the grid, the `sigma` and
//! `kappa` expressions, the perturbation inputs, the probe plan and the
//! known first-order running cost; the ground-truth cost model is never
//! written here.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cauchy::{C2Record, C3Record};
use crate::config::Perturbation;
use crate::error::{Error, Result};
use crate::field_io::{parse_trace_csv, read_field, trace_csv, write_atomic};
use crate::grid::{Grid, GridSpec, SpaceTimeField};
use crate::inverse::stationary::ProbeSpec;

pub const FORMAT: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProbeSet {
    pub r: f64,
    pub probes: Vec<ProbeSpec>,
    pub records: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StationaryManifest {
    pub grid: GridSpec,
    pub baseline_trace: String,
    pub probe_sets: Vec<ProbeSet>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceFiles {
    pub label: String,
    pub inputs: Vec<usize>,
    pub v: String,
    pub m: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TimedepManifest {
    pub grid: GridSpec,
    pub sigma: String,
    pub kappa: String,
    /// Declared known: first-order running cost.
    pub known_f1: String,
    /// Declared known: the base path the experiments linearise about.
    pub base_v: String,
    pub base_m: String,
    pub perturbations: Vec<Perturbation>,
    pub first_order: Vec<TraceFiles>,
    pub second_order: Vec<TraceFiles>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub format: u32,
    pub config_hash: String,
    pub seed: u64,
    pub noise: f64,
    pub version: String,
    pub stationary: StationaryManifest,
    pub timedep: TimedepManifest,
}

/// `label, face, i1.., value_re, value_im, normal_re, normal_im` per face point.
pub fn c2_csv(grid: &Grid, records: &[C2Record]) -> Result<Vec<u8>> {
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["label".to_string(), "face".to_string()];
    head.extend((0..grid.dim()).map(|a| format!("i{}", a + 1)));
    head.extend(["value_re", "value_im", "normal_re", "normal_im"].map(String::from));
    w.write_record(&head).map_err(fmt)?;
    for r in records {
        if r.values.len() != grid.face_points() || r.normal.len() != grid.face_points() {
            return Err(Error::ShapeMismatch { expected: grid.face_points(), got: r.values.len() });
        }
        let mut off = 0;
        for face in &grid.faces {
            for &p in &face.nodes {
                let mut row = vec![r.label.clone(), face.name()];
                row.extend(grid.index(p).iter().map(|i| i.to_string()));
                let (v, n) = (r.values[off], r.normal[off]);
                row.extend([v.re, v.im, n.re, n.im].iter().map(|x| format!("{x:e}")));
                w.write_record(&row).map_err(fmt)?;
                off += 1;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn parse_c2_csv(grid: &Grid, bytes: &[u8]) -> Result<Vec<C2Record>> {
    let mut r = csv::Reader::from_reader(bytes);
    let d = grid.dim();
    let mut out: Vec<C2Record> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Format("short record row".into()))?
                .parse::<f64>()
                .map_err(|e| Error::Format(e.to_string()))
        };
        let label = rec.get(0).ok_or_else(|| Error::Format("empty row".into()))?;
        let v = Complex64::new(num(d + 2)?, num(d + 3)?);
        let n = Complex64::new(num(d + 4)?, num(d + 5)?);
        match out.last_mut() {
            Some(last) if last.label == label => {
                last.values.push(v);
                last.normal.push(n);
            }
            _ => out.push(C2Record { label: label.to_string(), values: vec![v], normal: vec![n] }),
        }
    }
    if let Some(bad) = out.iter().find(|r| r.values.len() != grid.face_points()) {
        return Err(Error::Format(format!("record {} has {} face points", bad.label, bad.values.len())));
    }
    Ok(out)
}

pub struct Archive {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Archive {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if manifest.format != FORMAT {
            return Err(Error::Format(format!("archive format {} is not {FORMAT}", manifest.format)));
        }
        Ok(Archive { dir: dir.to_path_buf(), manifest })
    }

    /// Refuses an archive produced from a different configuration.
    pub fn check_hash(&self, expected: &str) -> Result<()> {
        if self.manifest.config_hash != expected {
            return Err(Error::Integrity(format!(
                "archive hash {} does not match the configuration hash {expected}",
                self.manifest.config_hash
            )));
        }
        Ok(())
    }

    fn read(&self, rel: &str) -> Result<Vec<u8>> {
        let p = self.dir.join(rel);
        std::fs::read(&p).map_err(|e| Error::io(&p, e))
    }

    pub fn baseline_trace(&self, grid: &Grid) -> Result<crate::grid::BoundaryTrace> {
        parse_trace_csv(grid, &self.read(&self.manifest.stationary.baseline_trace)?)
    }

    pub fn probe_records(&self, grid: &Grid, set: &ProbeSet) -> Result<Vec<C2Record>> {
        parse_c2_csv(grid, &self.read(&set.records)?)
    }

    pub fn c3(&self, grid: &Grid, files: &TraceFiles) -> Result<C3Record> {
        Ok(C3Record {
            label: files.label.clone(),
            v: parse_trace_csv(grid, &self.read(&files.v)?)?,
            m: parse_trace_csv(grid, &self.read(&files.m)?)?,
        })
    }

    pub fn base_fields(&self) -> Result<(SpaceTimeField, SpaceTimeField)> {
        let (_, v) = read_field(&self.dir.join(&self.manifest.timedep.base_v))?;
        let (_, m) = read_field(&self.dir.join(&self.manifest.timedep.base_m))?;
        Ok((v, m))
    }
}

/// Writes a C3 record as two trace files under `dir` and returns their entry.
pub fn write_c3(dir: &Path, grid: &Grid, rec: &C3Record, inputs: Vec<usize>) -> Result<TraceFiles> {
    let v = format!("timedep/{}_v.csv", rec.label);
    let m = format!("timedep/{}_m.csv", rec.label);
    write_atomic(&dir.join(&v), &trace_csv(grid, &rec.v)?)?;
    write_atomic(&dir.join(&m), &trace_csv(grid, &rec.m)?)?;
    Ok(TraceFiles { label: rec.label.clone(), inputs, v, m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cauchy::extract_c2;
    use crate::grid::GridSpec;

    #[test]
    fn c2_csv_roundtrip_is_exact() {
        let g = Grid::new(GridSpec::unit_box(3, 4, 0)).unwrap();
        let m: Vec<Complex64> =
            g.sample(0.0, |x, _| (x[0] + 0.3 * x[1]).exp()).iter().map(|v| Complex64::new(*v, 1.0 / 3.0 - v)).collect();
        let a = extract_c2(&g, "a", &m, None).unwrap();
        let mut b = a.clone();
        b.label = "b".into();
        let bytes = c2_csv(&g, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(parse_c2_csv(&g, &bytes).unwrap(), vec![a, b]);
    }

    #[test]
    fn truncated_record_is_rejected() {
        let g = Grid::new(GridSpec::unit_box(3, 4, 0)).unwrap();
        let m = vec![Complex64::new(1.0, 0.0); g.npts];
        let a = extract_c2(&g, "a", &m, None).unwrap();
        let text = String::from_utf8(c2_csv(&g, &[a]).unwrap()).unwrap();
        let cut: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(parse_c2_csv(&g, cut.as_bytes()).is_err());
    }
}
