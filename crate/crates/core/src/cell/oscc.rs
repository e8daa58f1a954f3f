//! Coefficient sample files: magic `OSCC`, version u32, d u32, N_y u32,
//! N_tau u32, then row-major (a11, a12, a22) f64 triples per node.

use super::CellCoefficient;
use crate::error::{Error, Result};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"OSCC";
pub const VERSION: u32 = 1;

pub fn write_coefficient(w: &mut impl Write, c: &CellCoefficient) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&2u32.to_le_bytes())?;
    w.write_all(&(c.n as u32).to_le_bytes())?;
    w.write_all(&(c.n_tau as u32).to_le_bytes())?;
    for m in &c.samples {
        w.write_all(&m[0].to_le_bytes())?;
        w.write_all(&(0.5 * (m[1] + m[2])).to_le_bytes())?;
        w.write_all(&m[3].to_le_bytes())?;
    }
    Ok(())
}

pub fn read_coefficient(r: &mut impl Read) -> Result<CellCoefficient> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadSnapshot("bad magic, expected OSCC".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
        r.read_exact(&mut b4)?;
        Ok(u32::from_le_bytes(b4))
    };
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::BadSnapshot(format!("unsupported OSCC version {version}")));
    }
    let d = read_u32(r)?;
    if d != 2 {
        return Err(Error::BadSnapshot(format!("only d = 2 supported, got {d}")));
    }
    let n = read_u32(r)? as usize;
    let n_tau = read_u32(r)? as usize;
    if n < 2 || n_tau < 2 {
        return Err(Error::BadSnapshot("grid sizes must be >= 2".into()));
    }
    let mut samples = Vec::with_capacity(n * n * n_tau);
    for _ in 0..n * n * n_tau {
        let mut triple = [0.0f64; 3];
        for t in triple.iter_mut() {
            r.read_exact(&mut b8)?;
            *t = f64::from_le_bytes(b8);
        }
        samples.push([triple[0], triple[1], triple[1], triple[2]]);
    }
    Ok(CellCoefficient {
        n,
        n_tau,
        samples,
        kappa: f64::NAN,
    })
}
