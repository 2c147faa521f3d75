//! `HFOL` binary snapshots of the stored time levels.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 4 | magic `b"HFOL"` |
//! | 4 | 4 | version `u32` (= 1) |
//! | 8 | 1 | mode `u8`: 0 radial, 1 full 3D |
//! | 9 | 24 | grid dims `3 × u64` (radial: `[n, 1, 1]`) |
//! | 33 | 8 | `Δx` `f64` |
//! | 41 | 8 | `Δt` `f64` |
//! | 49 | 4 | level count `L` `u32` |
//! | 53 | 8L | level times `f64` |
//! | 53 + 8L | 16·L·M | per level: `M` values of `u`, then `M` values of `v` (`f64`) |
//!
//! `M` is the product of the dims; 3D values are in row-major `(x¹, x², x³)`
//! order, radial values at `r_i = (i + ½)Δx`.

use std::io::{self, Read, Write};

use super::History;

pub const MAGIC: [u8; 4] = *b"HFOL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub mode: u8,
    pub dims: [u64; 3],
    pub dx: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Snapshot {
    /// Copies every stored level of a history.
    pub fn capture(h: History<'_>) -> Snapshot {
        match h {
            History::Radial(r) => {
                let levels: Vec<_> = r.levels().collect();
                Snapshot {
                    mode: 0,
                    dims: [r.grid.len() as u64, 1, 1],
                    dx: r.grid.dr,
                    dt: r.dt,
                    times: levels.iter().map(|l| l.t).collect(),
                    u: levels.iter().map(|l| l.u.clone()).collect(),
                    v: levels.iter().map(|l| l.v.clone()).collect(),
                }
            }
            History::Cartesian(c) => {
                let lat = c.lattice();
                let steps = c.u.steps();
                Snapshot {
                    mode: 1,
                    dims: [lat.n[0] as u64, lat.n[1] as u64, lat.n[2] as u64],
                    dx: lat.dx,
                    dt: h.dt(),
                    times: steps.clone().map(|s| c.time(s)).collect(),
                    u: steps.clone().map(|s| c.u.level(s).expect("stored").to_vec()).collect(),
                    v: steps.map(|s| c.v.level(s).expect("stored").to_vec()).collect(),
                }
            }
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.mode])?;
        for d in self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&self.dx.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.times.len() as u32).to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for (u, v) in self.u.iter().zip(&self.v) {
            for x in u.iter().chain(v) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Snapshot> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(bad("not an HFOL snapshot"));
        }
        let version = u32::from_le_bytes(read_n(r)?);
        if version != VERSION {
            return Err(bad(&format!("unsupported HFOL version {version}")));
        }
        let [mode] = read_n::<1>(r)?;
        let mut dims = [0u64; 3];
        for d in &mut dims {
            *d = u64::from_le_bytes(read_n(r)?);
        }
        let dx = f64::from_le_bytes(read_n(r)?);
        let dt = f64::from_le_bytes(read_n(r)?);
        let count = u32::from_le_bytes(read_n(r)?) as usize;
        let times = (0..count).map(|_| read_n(r).map(f64::from_le_bytes)).collect::<io::Result<Vec<_>>>()?;
        let m = dims.iter().product::<u64>() as usize;
        let mut read_vec = || (0..m).map(|_| read_n(r).map(f64::from_le_bytes)).collect::<io::Result<Vec<_>>>();
        let mut u = Vec::with_capacity(count);
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            u.push(read_vec()?);
            v.push(read_vec()?);
        }
        Ok(Snapshot { mode, dims, dx, dt, times, u, v })
    }
}

fn read_n<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{GridSpec, InitialData, ModelParams, RadialSolver, System};

    #[test]
    fn roundtrip_and_layout() {
        let mut s = RadialSolver::new(
            System::model(ModelParams::default()),
            GridSpec::radial(3.0, 0.5, 0.5),
            &InitialData::bumps(3.0, 0.01, 0.02, 1.0),
            4,
        )
        .unwrap();
        s.step().unwrap();
        let snap = Snapshot::capture(History::Radial(s.history()));
        let mut buf = Vec::new();
        snap.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HFOL");
        assert_eq!(buf[8], 0);
        assert_eq!(buf.len(), 53 + 8 * 3 + 16 * 3 * 6);
        assert_eq!(f64::from_le_bytes(buf[33..41].try_into().unwrap()), 0.5);
        let back = Snapshot::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, snap);
        assert!(Snapshot::read_from(&mut &b"HFOX"[..]).is_err());
    }
}
