//! Model file and latent export.
//!
//! Model layout (little-endian): magic, `u32` rank, input size, two hidden
//! sizes and latent size, `f64` input scale, leaky slope and log-variance
//! clamp, then the encoder and decoder parameters layer by layer (weights
//! row-major, then biases).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::Mlp;
use super::{layer_plan, LatentGaussian, Vae};
use crate::error::{Error, Result};

pub const VAE_MAGIC: &[u8; 8] = b"FDMVAE01";

pub fn save_vae(model: &Vae, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vae(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_vae(path: impl AsRef<Path>) -> Result<Vae> {
    read_vae(&mut BufReader::new(File::open(path)?))
}

pub fn write_vae<W: Write>(m: &Vae, w: &mut W) -> Result<()> {
    let s = m.encoder.sizes();
    w.write_all(VAE_MAGIC)?;
    for v in [m.rank, s[0], s[1], s[2], m.n_lv()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in [m.scale, m.leaky_slope, m.logvar_clamp] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * m.num_params());
    for p in m.encoder.params().iter().chain(m.decoder.params()) {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn exact<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(n);
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() < n {
        return Err(Error::Truncated { expected: n, found: buf.len() });
    }
    Ok(buf)
}

pub fn read_vae<R: Read>(r: &mut R) -> Result<Vae> {
    if exact(r, 8)? != VAE_MAGIC {
        return Err(Error::Format("not a VAE model file".into()));
    }
    let head = exact(r, 5 * 4 + 3 * 8)?;
    let u = |i: usize| u32::from_le_bytes(head[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let f = |i: usize| f64::from_le_bytes(head[20 + 8 * i..28 + 8 * i].try_into().unwrap());
    let (rank, n_in, h1, h2, n_lv) = (u(0), u(1), u(2), u(3), u(4));
    let (scale, slope, clamp) = (f(0), f(1), f(2));
    if rank == 0 || n_in == 0 || h1 == 0 || h2 == 0 || n_lv == 0 || !(scale > 0.0) {
        return Err(Error::Format("model header holds invalid sizes".into()));
    }
    let (es, ds, ea, da) = layer_plan(n_in, (h1, h2), n_lv, slope);
    let mut encoder = Mlp::zeros(&es, &ea);
    let mut decoder = Mlp::zeros(&ds, &da);
    let n = encoder.params().len() + decoder.params().len();
    let raw = exact(r, 8 * n)?;
    let vals: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let ne = encoder.params().len();
    encoder.params_mut().copy_from_slice(&vals[..ne]);
    decoder.params_mut().copy_from_slice(&vals[ne..]);
    Ok(Vae { rank, scale, leaky_slope: slope, logvar_clamp: clamp, encoder, decoder })
}

/// One exported latent representation.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub q: usize,
    pub t: usize,
    pub latent: LatentGaussian,
}

/// Writes `q, t, mu_0.., logvar_0..` rows.
pub fn write_latent_csv<W: Write>(rows: &[LatentRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = rows.first().map_or(0, |r| r.latent.dim());
    let mut header = vec!["q".to_string(), "t".to_string()];
    header.extend((0..n).map(|j| format!("mu_{j}")));
    header.extend((0..n).map(|j| format!("logvar_{j}")));
    out.write_record(&header)?;
    for r in rows {
        if r.latent.dim() != n {
            return Err(Error::DimensionMismatch("latent rows differ in dimension".into()));
        }
        let mut rec = vec![r.q.to_string(), r.t.to_string()];
        rec.extend(r.latent.mu.iter().chain(&r.latent.logvar).map(|v| format!("{v:.9e}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::VaeConfig;

    #[test]
    fn model_roundtrip_bit_exact() {
        let cfg = VaeConfig { hidden: (7, 5), seed: 3, ..VaeConfig::default() };
        let m = Vae::new(2, 64, 0.37, &cfg).unwrap();
        let mut buf = Vec::new();
        write_vae(&m, &mut buf).unwrap();
        assert_eq!(read_vae(&mut buf.as_slice()).unwrap(), m);
        assert!(read_vae(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_vae(&mut bad.as_slice()), Err(Error::Format(_))));
    }
}
