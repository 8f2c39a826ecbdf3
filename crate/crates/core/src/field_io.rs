//! Binary field files and CSV trace export.
//!
//! Layout (little-endian): `MFGF`, version u16, dim u8, per-axis interior
//! counts u32, extents as (lower, upper) f64 pairs, nt u32, horizon f64,
//! level count u32, then the row-major f64 payload level by level.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BoundaryTrace, Grid, GridSpec, SpaceTimeField};

const MAGIC: &[u8; 4] = b"MFGF";
const VERSION: u16 = 1;

pub fn encode(spec: &GridSpec, field: &SpaceTimeField) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + 8 * field.data.len());
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.push(spec.dim() as u8);
    for &n in &spec.nx {
        b.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for a in 0..spec.dim() {
        b.extend_from_slice(&spec.lower[a].to_le_bytes());
        b.extend_from_slice(&spec.upper[a].to_le_bytes());
    }
    b.extend_from_slice(&(spec.nt as u32).to_le_bytes());
    b.extend_from_slice(&spec.horizon.to_le_bytes());
    b.extend_from_slice(&(field.nlev as u32).to_le_bytes());
    for v in &field.data {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.b.len() {
            return Err(Error::Format("truncated field file".into()));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(GridSpec, SpaceTimeField)> {
    let mut r = Reader { b: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let ver = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if ver != VERSION {
        return Err(Error::Format(format!("unsupported version {ver}")));
    }
    let dim = r.take(1)?[0] as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::Format(format!("bad dimension {dim}")));
    }
    let mut nx = Vec::with_capacity(dim);
    for _ in 0..dim {
        nx.push(r.u32()? as usize);
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for _ in 0..dim {
        lower.push(r.f64()?);
        upper.push(r.f64()?);
    }
    let nt = r.u32()? as usize;
    let horizon = r.f64()?;
    let nlev = r.u32()? as usize;
    let spec = GridSpec { lower, upper, nx, nt, horizon };
    spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    let npts: usize = spec.nx.iter().map(|n| n + 2).product();
    let mut data = Vec::with_capacity(npts * nlev);
    for _ in 0..npts * nlev {
        data.push(r.f64()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite payload".into()));
    }
    Ok((spec, SpaceTimeField { npts, nlev, data }))
}

/// Writes via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join(format!(".{}.tmp", path.file_name().and_then(|s| s.to_str()).unwrap_or("out")));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_field(path: &Path, spec: &GridSpec, field: &SpaceTimeField) -> Result<()> {
    write_atomic(path, &encode(spec, field))
}

pub fn read_field(path: &Path) -> Result<(GridSpec, SpaceTimeField)> {
    let b = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&b)
}

/// CSV with columns `face, i1[, i2[, i3]], t, value, normal_derivative`.
pub fn trace_csv(grid: &Grid, tr: &BoundaryTrace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["face".to_string()];
    for a in 0..grid.dim() {
        head.push(format!("i{}", a + 1));
    }
    head.extend(["t", "value", "normal_derivative"].map(String::from));
    w.write_record(&head).map_err(|e| Error::Format(e.to_string()))?;
    for l in 0..tr.nlev {
        let t = grid.time(l);
        let mut off = l * tr.npts;
        for face in &grid.faces {
            for &p in &face.nodes {
                let mut rec = vec![face.name()];
                rec.extend(grid.index(p).iter().map(|i| i.to_string()));
                rec.push(format!("{t:e}"));
                rec.push(format!("{:e}", tr.values[off]));
                rec.push(format!("{:e}", tr.normal[off]));
                w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
                off += 1;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Inverse of [`trace_csv`]; rows must be in the written order.
pub fn parse_trace_csv(grid: &Grid, bytes: &[u8]) -> Result<BoundaryTrace> {
    let mut r = csv::Reader::from_reader(bytes);
    let npts = grid.face_points();
    let mut values = Vec::new();
    let mut normal = Vec::new();
    let d = grid.dim();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Format("short trace row".into()))?
                .parse::<f64>()
                .map_err(|e| Error::Format(e.to_string()))
        };
        values.push(num(d + 2)?);
        normal.push(num(d + 3)?);
    }
    if npts == 0 || values.len() % npts != 0 {
        return Err(Error::Format(format!("{} trace rows is not a multiple of {npts}", values.len())));
    }
    Ok(BoundaryTrace { nlev: values.len() / npts, npts, values, normal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_roundtrip_is_exact() {
        let spec = GridSpec::unit_box(2, 4, 3);
        let g = Grid::new(spec.clone()).unwrap();
        let f = g.sample_st(|x, t| x[0].sin() + t * x[1] + 1e-300);
        let (s2, f2) = decode(&encode(&spec, &f)).unwrap();
        assert_eq!(s2, spec);
        assert_eq!(f2, f);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let spec = GridSpec::unit_box(1, 4, 0);
        let f = SpaceTimeField::zeros(6, 1);
        let mut b = encode(&spec, &f);
        b.pop();
        assert!(decode(&b).is_err());
        let mut b = encode(&spec, &f);
        b[0] = b'X';
        assert!(decode(&b).is_err());
    }

    #[test]
    fn trace_csv_roundtrip() {
        let g = Grid::new(GridSpec::unit_box(2, 4, 2)).unwrap();
        let f = g.sample_st(|x, t| x[0] * x[1] + t);
        let tr = g.restrict_st_to_boundary(&f).unwrap();
        let back = parse_trace_csv(&g, &trace_csv(&g, &tr).unwrap()).unwrap();
        assert_eq!(back, tr);
    }
}
