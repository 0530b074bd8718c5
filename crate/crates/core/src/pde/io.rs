//! Trajectory export: long-format CSV and a raw binary snapshot format.

use std::io::{self, Read, Write};

use super::{Grid, Trajectory};

/// Writes `step,time,node,value` rows for every `every`-th snapshot (and the last one).
pub fn write_csv(traj: &Trajectory, every: usize, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "step,time,node,value")?;
    let every = every.max(1);
    let last = traj.len().saturating_sub(1);
    for k in (0..traj.len()).filter(|k| k % every == 0 || *k == last) {
        let t = traj.grid.time(k);
        for (i, v) in traj.snapshot(k).values.iter().enumerate() {
            writeln!(out, "{k},{t:.17e},{i},{v:.17e}")?;
        }
    }
    Ok(())
}

/// Header `dim, n_0, n_1, dt, steps, rows` followed by row-major little-endian doubles,
/// one row of interior values per snapshot.
pub fn write_binary(traj: &Trajectory, out: &mut impl Write) -> io::Result<()> {
    let g = &traj.grid;
    let n = g.n();
    out.write_all(&(g.dim() as u64).to_le_bytes())?;
    out.write_all(&(n[0] as u64).to_le_bytes())?;
    out.write_all(&(*n.get(1).unwrap_or(&1) as u64).to_le_bytes())?;
    out.write_all(&g.dt().to_le_bytes())?;
    out.write_all(&(g.steps() as u64).to_le_bytes())?;
    out.write_all(&(traj.len() as u64).to_le_bytes())?;
    for k in 0..traj.len() {
        for v in traj.snapshot(k).values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Snapshot file contents: header fields and the value rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshots {
    pub dim: usize,
    pub n: [usize; 2],
    pub dt: f64,
    pub steps: usize,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_binary(input: &mut impl Read) -> io::Result<Snapshots> {
    let mut word = [0u8; 8];
    let mut next = |inp: &mut dyn Read| -> io::Result<[u8; 8]> {
        inp.read_exact(&mut word)?;
        Ok(word)
    };
    let dim = u64::from_le_bytes(next(input)?) as usize;
    let n0 = u64::from_le_bytes(next(input)?) as usize;
    let n1 = u64::from_le_bytes(next(input)?) as usize;
    let dt = f64::from_le_bytes(next(input)?);
    let steps = u64::from_le_bytes(next(input)?) as usize;
    let rows = u64::from_le_bytes(next(input)?) as usize;
    let len = n0
        .checked_mul(n1)
        .filter(|l| *l > 0 && rows.checked_mul(*l).is_some_and(|t| t < 1 << 32))
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "bad snapshot header"))?;
    let mut data = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut row = Vec::with_capacity(len);
        for _ in 0..len {
            row.push(f64::from_le_bytes(next(input)?));
        }
        data.push(row);
    }
    Ok(Snapshots {
        dim,
        n: [n0, n1],
        dt,
        steps,
        rows: data,
    })
}

impl Snapshots {
    pub fn grid_matches(&self, g: &Grid) -> bool {
        self.dim == g.dim() && self.n[0] == g.n()[0] && self.steps == g.steps() && self.dt == g.dt()
    }
}
