//! Binary snapshots of grid fields.
//!
//! Layout, little-endian throughout: magic `P3DS`, version `u32`, dims
//! `nx, ny, nz` as `u64`, the x, y and z axes as `f64`, a `u32` block count,
//! then per block a `u32` name length, the UTF-8 name and `nx·ny·nz` values
//! in row-major order with z fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::background::BackgroundProfile;
use crate::error::{Error, Result};
use crate::grid::{Dims, Field3, FieldState, Grid3};

pub const MAGIC: [u8; 4] = *b"P3DS";
pub const VERSION: u32 = 1;

/// Block names written for a [`FieldState`].
pub const STATE_FIELDS: [&str; 6] = ["u", "v", "q", "int_dx_u", "int_dy_v", "psi"];

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub grid: Grid3,
    pub fields: Vec<(String, Field3)>,
}

impl Snapshot {
    pub fn new(grid: Grid3) -> Snapshot {
        Snapshot {
            grid,
            fields: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, f: Field3) -> Result<()> {
        if f.dims() != self.grid.dims() {
            return Err(Error::GridMismatch);
        }
        if name.len() > u32::MAX as usize {
            return Err(Error::InvalidInput("field name too long".into()));
        }
        self.fields.push((name.to_string(), f));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Field3> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn from_state(grid: &Grid3, s: &FieldState) -> Result<Snapshot> {
        let mut snap = Snapshot::new(grid.clone());
        for (name, f) in
            STATE_FIELDS
                .iter()
                .zip([&s.u, &s.v, &s.q, &s.int_dx_u, &s.int_dy_v, &s.psi])
        {
            snap.push(name, f.clone())?;
        }
        Ok(snap)
    }

    /// Rebuilds the state from its stored blocks without recomputing the
    /// derived fields.
    pub fn to_state(&self, iterate_index: usize) -> Result<FieldState> {
        let take = |n: &str| {
            self.get(n)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("snapshot lacks field `{n}`")))
        };
        Ok(FieldState {
            u: take("u")?,
            v: take("v")?,
            q: take("q")?,
            int_dx_u: take("int_dx_u")?,
            int_dy_v: take("int_dy_v")?,
            psi: take("psi")?,
            iterate_index,
        })
    }

    pub fn from_background(bg: &BackgroundProfile) -> Result<Snapshot> {
        let mut snap = Snapshot::new((*bg.grid).clone());
        snap.push("ubar", bg.ubar.clone())?;
        snap.push("d_z_ubar", bg.d_z_ubar.clone())?;
        snap.push("d_x_ubar", bg.d_x_ubar.clone())?;
        snap.push("d_zz_ubar", bg.d_zz_ubar.clone())?;
        snap.push("wbar", bg.wbar.clone())?;
        Ok(snap)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.grid.dims();
        let mut out =
            Vec::with_capacity(32 + 8 * (d.nx + d.ny + d.nz + self.fields.len() * d.len()));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for n in [d.nx, d.ny, d.nz] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for axis in [&self.grid.x, &self.grid.y, &self.grid.z] {
            for v in axis.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, f) in &self.fields {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for v in f.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Snapshot> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::VersionMismatch("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch(format!(
                "version {version}, expected {VERSION}"
            )));
        }
        let (nx, ny, nz) = (r.len()?, r.len()?, r.len()?);
        let x = r.f64s(nx)?;
        let y = r.f64s(ny)?;
        let z = r.f64s(nz)?;
        let grid = Grid3::from_axes(x, y, z)?;
        let dims = Dims::new(nx, ny, nz);
        let count = r.u32()? as usize;
        let mut snap = Snapshot::new(grid);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::InvalidInput("field name is not UTF-8".into()))?
                .to_string();
            let data = r.f64s(dims.len())?;
            snap.fields.push((name, Field3::from_vec(dims, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidInput(format!(
                "{} trailing bytes after the last block",
                bytes.len() - r.pos
            )));
        }
        Ok(snap)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::InvalidInput("snapshot is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::InvalidInput(format!("dimension {v} too large")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::InvalidInput("block size overflows".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn write_snapshot(snap: &Snapshot, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&snap.to_bytes())?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Snapshot::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(g: &Grid3, seed: u64) -> FieldState {
        let mut s = seed;
        let mut rnd = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let d = g.dims();
        let u = Field3::from_vec(d, (0..d.len()).map(|_| 0.5 + rnd()).collect()).unwrap();
        let v = Field3::from_vec(d, (0..d.len()).map(|_| 0.5 + rnd()).collect()).unwrap();
        FieldState::from_uv(g, u, v, 3).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn byte_round_trip(nx in 8usize..11, ny in 8usize..11, nz in 8usize..14, seed in 0u64..10_000) {
            let g = Grid3::stretched(nx, ny, nz, 0.1, 1.0, 5.0, 1.5).unwrap();
            let snap = Snapshot::from_state(&g, &state(&g, seed)).unwrap();
            let bytes = snap.to_bytes();
            let back = Snapshot::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(&back.grid.z, &g.z);
            for ((na, fa), (nb, fb)) in snap.fields.iter().zip(&back.fields) {
                prop_assert_eq!(na, nb);
                let same = fa.data().iter().zip(fb.data()).all(|(a, b)| a.to_bits() == b.to_bits());
                prop_assert!(same);
            }
        }
    }

    #[test]
    fn state_survives_file_round_trip() {
        let g = Grid3::uniform(8, 9, 10, 0.1, 1.0, 4.0).unwrap();
        let s = state(&g, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.p3ds");
        write_snapshot(&Snapshot::from_state(&g, &s).unwrap(), &path).unwrap();
        let back = read_snapshot(&path).unwrap().to_state(3).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn header_checks() {
        let g = Grid3::uniform(8, 8, 8, 0.1, 1.0, 4.0).unwrap();
        let bytes = Snapshot::from_state(&g, &state(&g, 1)).unwrap().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Snapshot::from_bytes(&bad),
            Err(Error::VersionMismatch(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            Snapshot::from_bytes(&bad),
            Err(Error::VersionMismatch(_))
        ));
        assert!(Snapshot::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Snapshot::from_bytes(&long).is_err());
    }

    #[test]
    fn mismatched_field_rejected() {
        let g = Grid3::uniform(8, 8, 8, 0.1, 1.0, 4.0).unwrap();
        let mut s = Snapshot::new(g);
        assert!(s.push("w", Field3::zeros(Dims::new(8, 8, 9))).is_err());
    }
}
