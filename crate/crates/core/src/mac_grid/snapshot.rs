//! Flat binary field snapshots.
//!
//! Record layout: magic `OSCF`, version u32, role tag u32, nx u32, ny u32,
//! time f64, then row-major little-endian f64 payload. A trajectory file is
//! a plain concatenation of records; staggered velocities are written as a
//! u-face record followed by a v-face record.

use super::{Grid2D, ScalarField, StaggeredVelocity};
use crate::error::{Error, Result};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"OSCF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Generic = 0,
    Density = 1,
    Pressure = 2,
    UFace = 3,
    VFace = 4,
}

impl Role {
    fn from_u32(v: u32) -> Result<Role> {
        Ok(match v {
            0 => Role::Generic,
            1 => Role::Density,
            2 => Role::Pressure,
            3 => Role::UFace,
            4 => Role::VFace,
            _ => return Err(Error::BadSnapshot(format!("unknown role tag {v}"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Record {
    pub role: Role,
    pub nx: u32,
    pub ny: u32,
    pub time: f64,
    pub data: Vec<f64>,
}

pub fn write_record(w: &mut impl Write, rec: &Record) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(rec.role as u32).to_le_bytes())?;
    w.write_all(&rec.nx.to_le_bytes())?;
    w.write_all(&rec.ny.to_le_bytes())?;
    w.write_all(&rec.time.to_le_bytes())?;
    for v in &rec.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_record(r: &mut impl Read) -> Result<Option<Record>> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    if &magic != MAGIC {
        return Err(Error::BadSnapshot("bad magic, expected OSCF".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::BadSnapshot(format!("unsupported version {version}")));
    }
    let role = Role::from_u32(read_u32(r)?)?;
    let nx = read_u32(r)?;
    let ny = read_u32(r)?;
    r.read_exact(&mut f64buf)?;
    let time = f64::from_le_bytes(f64buf);
    let len = match role {
        Role::UFace => (nx as usize + 1) * ny as usize,
        Role::VFace => nx as usize * (ny as usize + 1),
        _ => nx as usize * ny as usize,
    };
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut f64buf)?;
        data.push(f64::from_le_bytes(f64buf));
    }
    Ok(Some(Record {
        role,
        nx,
        ny,
        time,
        data,
    }))
}

pub fn scalar_record(field: &ScalarField, role: Role, time: f64) -> Record {
    Record {
        role,
        nx: field.grid.nx as u32,
        ny: field.grid.ny as u32,
        time,
        data: field.data.clone(),
    }
}

pub fn write_velocity(w: &mut impl Write, vel: &StaggeredVelocity, time: f64) -> Result<()> {
    write_record(
        w,
        &Record {
            role: Role::UFace,
            nx: vel.grid.nx as u32,
            ny: vel.grid.ny as u32,
            time,
            data: vel.u.clone(),
        },
    )?;
    write_record(
        w,
        &Record {
            role: Role::VFace,
            nx: vel.grid.nx as u32,
            ny: vel.grid.ny as u32,
            time,
            data: vel.v.clone(),
        },
    )
}

pub fn velocity_from_records(urec: &Record, vrec: &Record) -> Result<StaggeredVelocity> {
    if urec.role != Role::UFace || vrec.role != Role::VFace || urec.nx != vrec.nx || urec.ny != vrec.ny
    {
        return Err(Error::BadSnapshot("mismatched velocity records".into()));
    }
    let grid = Grid2D::new(urec.nx as usize, urec.ny as usize);
    let mut vel = StaggeredVelocity::zeros(grid);
    vel.u.copy_from_slice(&urec.data);
    vel.v.copy_from_slice(&vrec.data);
    Ok(vel)
}
