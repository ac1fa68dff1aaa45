//! Little-endian binary dataset format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex32;

use super::{ChannelDataset, Extents, Location};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"FDMIMO01";
pub const DATASET_VERSION: u32 = 1;

pub fn save_dataset(ds: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

pub fn write_dataset<W: Write>(ds: &ChannelDataset, w: &mut W) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    for v in [DATASET_VERSION, ds.t as u32, ds.k as u32, ds.q as u32, ds.n_rx as u32, ds.n_tx as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&ds.carrier_hz.to_le_bytes())?;
    w.write_all(&ds.subcarrier_spacing_hz.to_le_bytes())?;
    w.write_all(&ds.seed.to_le_bytes())?;
    for l in &ds.locations {
        w.write_all(&l.q.to_le_bytes())?;
        for c in l.coords {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    let mut buf = Vec::with_capacity(ds.tensor.len() * 8);
    for z in &ds.tensor {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads exactly `n` bytes, reporting a truncation with the byte counts.
fn take<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(n);
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() < n {
        return Err(Error::Truncated { expected: n, found: buf.len() });
    }
    Ok(buf)
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes(b[i..i + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], i: usize) -> f64 {
    f64::from_le_bytes(b[i..i + 8].try_into().unwrap())
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<ChannelDataset> {
    let magic = take(r, 8)?;
    if magic != DATASET_MAGIC {
        return Err(Error::Format(format!("bad magic bytes {:?}", String::from_utf8_lossy(&magic))));
    }
    let head = take(r, 6 * 4 + 3 * 8)?;
    let version = u32_at(&head, 0);
    if version != DATASET_VERSION {
        return Err(Error::Version(version));
    }
    let (t, k, q) = (u32_at(&head, 4) as usize, u32_at(&head, 8) as usize, u32_at(&head, 12) as usize);
    let (n_rx, n_tx) = (u32_at(&head, 16) as usize, u32_at(&head, 20) as usize);
    let carrier_hz = f64_at(&head, 24);
    let spacing = f64_at(&head, 32);
    let seed = u64::from_le_bytes(head[40..48].try_into().unwrap());
    if t == 0 || k == 0 || q == 0 || n_rx == 0 || n_tx == 0 {
        return Err(Error::Format("header holds a zero extent".into()));
    }

    let rec = take(r, q * 28)?;
    let locations = rec
        .chunks_exact(28)
        .map(|c| Location { q: u32_at(c, 0), coords: [f64_at(c, 4), f64_at(c, 12), f64_at(c, 20)] })
        .collect();

    let n = t
        .checked_mul(k)
        .and_then(|v| v.checked_mul(q))
        .and_then(|v| v.checked_mul(n_rx * n_tx))
        .ok_or_else(|| Error::Format("header extents overflow".into()))?;
    let payload = take(r, n * 8).map_err(|e| match e {
        // Report truncation in whole matrices.
        Error::Truncated { found, .. } => Error::Truncated {
            expected: t * k * q,
            found: found / (8 * n_rx * n_tx),
        },
        other => other,
    })?;
    let tensor = payload
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            )
        })
        .collect();
    ChannelDataset::from_parts(Extents { t, k, q }, n_rx, n_tx, carrier_hz, spacing, seed, locations, tensor)
        .map_err(|e| Error::Format(e.to_string()))
}
