//! Serialization of solved fields: CSV (`t,m,N[,P]`), a compact binary
//! table and a JSON sidecar describing model and grid.
//!
//! CSV values carry 17 significant digits, so parsing reproduces every `f64`
//! bit for bit.

use std::io::{BufRead, Read, Write};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::solver::{ProliferatingField, SolutionField};

/// A field flattened onto `times × m` with optional `P` of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    /// `n[i][j] = N(times[i], m[j])`.
    pub n: Vec<Vec<f64>>,
    pub p: Option<Vec<Vec<f64>>>,
}

impl FieldTable {
    pub fn from_field(field: &SolutionField, p: Option<&ProliferatingField>) -> Result<Self> {
        let rows = field.table();
        let times: Vec<f64> = rows.iter().map(|(t, _)| *t).collect();
        let p = match p {
            Some(pf) => {
                if pf.times.len() != times.len() || pf.values.iter().any(|r| r.len() != field.grid().len()) {
                    return Err(Error::Format("P table shape differs from N".into()));
                }
                Some(pf.values.clone())
            }
            None => None,
        };
        Ok(Self {
            times,
            m: field.grid().m().to_vec(),
            n: rows.into_iter().map(|(_, r)| r).collect(),
            p,
        })
    }

    fn check(&self) -> Result<()> {
        let cols = self.m.len();
        let ok_shape = |v: &Vec<Vec<f64>>| v.len() == self.times.len() && v.iter().all(|r| r.len() == cols);
        if !ok_shape(&self.n) || self.p.as_ref().is_some_and(|p| !ok_shape(p)) {
            return Err(Error::Format("ragged table".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        self.check()?;
        let has_p = self.p.is_some();
        writeln!(w, "{}", if has_p { "t,m,N,P" } else { "t,m,N" })?;
        for (i, t) in self.times.iter().enumerate() {
            for (j, m) in self.m.iter().enumerate() {
                write!(w, "{t:.16e},{m:.16e},{:.16e}", self.n[i][j])?;
                if let Some(p) = &self.p {
                    write!(w, ",{:.16e}", p[i][j])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Parses a table written by [`write_csv`](Self::write_csv): rows grouped
    /// by time, the maturity sequence repeated for every time.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))??;
        let has_p = match header.trim() {
            "t,m,N" => false,
            "t,m,N,P" => true,
            other => return Err(Error::Format(format!("unexpected header {other:?}"))),
        };
        let width = if has_p { 4 } else { 3 };
        let mut times: Vec<f64> = Vec::new();
        let mut m: Vec<f64> = Vec::new();
        let mut n: Vec<Vec<f64>> = Vec::new();
        let mut p: Vec<Vec<f64>> = Vec::new();
        let mut col = 0usize;
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", k + 2)))?;
            if vals.len() != width {
                return Err(Error::Format(format!("line {}: expected {width} fields", k + 2)));
            }
            if times.last() != Some(&vals[0]) {
                if !times.is_empty() && col != m.len() {
                    return Err(Error::Format(format!("line {}: incomplete time block", k + 2)));
                }
                times.push(vals[0]);
                n.push(Vec::new());
                p.push(Vec::new());
                col = 0;
            }
            if times.len() == 1 {
                m.push(vals[1]);
            } else if m.get(col) != Some(&vals[1]) {
                return Err(Error::Format(format!("line {}: maturity column out of order", k + 2)));
            }
            n.last_mut().unwrap().push(vals[2]);
            if has_p {
                p.last_mut().unwrap().push(vals[3]);
            }
            col += 1;
        }
        if !times.is_empty() && col != m.len() {
            return Err(Error::Format("incomplete final time block".into()));
        }
        Ok(Self {
            times,
            m,
            n,
            p: has_p.then_some(p),
        })
    }

    /// Little-endian layout: `b"HSFD"`, `u32` version, `u64` rows, `u64`
    /// columns, `u8` P flag, then times, maturities, `N` rows, `P` rows.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        self.check()?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        w.write_all(&(self.m.len() as u64).to_le_bytes())?;
        w.write_all(&[u8::from(self.p.is_some())])?;
        let mut put = |v: &[f64]| -> Result<()> {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        put(&self.times)?;
        put(&self.m)?;
        for row in &self.n {
            put(row)?;
        }
        if let Some(p) = &self.p {
            for row in p {
                put(row)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let mut take = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut b8)?;
                out.push(f64::from_le_bytes(b8));
            }
            Ok(out)
        };
        let times = take(rows)?;
        let m = take(cols)?;
        let n = (0..rows).map(|_| take(cols)).collect::<Result<Vec<_>>>()?;
        let p = match flag[0] {
            0 => None,
            1 => Some((0..rows).map(|_| take(cols)).collect::<Result<Vec<_>>>()?),
            other => return Err(Error::Format(format!("bad P flag {other}"))),
        };
        Ok(Self { times, m, n, p })
    }
}

const MAGIC: &[u8; 4] = b"HSFD";
const VERSION: u32 = 1;

/// Sidecar metadata: model description, grid, per-window statistics and
/// the reproducibility digest.
pub fn sidecar(field: &SolutionField, extra: Value) -> Value {
    let grid = field.grid();
    json!({
        "digest": field.digest(),
        "model": field.params().describe(),
        "grid": {
            "m_nodes": grid.len(),
            "dt": grid.dt(),
            "steps_per_window": grid.steps_per_window(),
            "x_max": grid.x_max(),
        },
        "horizon": field.horizon(),
        "windows": field.windows(),
        "max_iterations": field.max_iterations(),
        "extra": extra,
    })
}
