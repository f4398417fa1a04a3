//! `PCEB` embedding store and the identity metadata CSV.
//!
//! Store layout, little-endian: magic `PCEB`, version `u32`, `d` as `u32`,
//! record count `u64`, then per record `image_id u64`, `identity_id u64`,
//! `q f64`, degradation bitmask `u32` and `d` embedding values as `f64`.

use std::io::{Read, Write};

use super::{DegradationSet, Identity, ImageRecord};
use crate::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"PCEB";
pub const STORE_VERSION: u32 = 1;

pub fn write_store<W: Write>(mut w: W, dim: usize, records: &[ImageRecord]) -> Result<()> {
    w.write_all(STORE_MAGIC)?;
    w.write_all(&STORE_VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        if r.embedding.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.embedding.len(),
            });
        }
        w.write_all(&r.image_id.to_le_bytes())?;
        w.write_all(&r.identity_id.to_le_bytes())?;
        w.write_all(&r.quality.to_le_bytes())?;
        w.write_all(&r.degradations.bits().to_le_bytes())?;
        for x in &r.embedding {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::format("embedding store", format!("truncated: {e}")))?;
    Ok(buf)
}

/// Returns `(d, records)`.
pub fn read_store<R: Read>(mut r: R) -> Result<(usize, Vec<ImageRecord>)> {
    let magic: [u8; 4] = take(&mut r)?;
    if &magic != STORE_MAGIC {
        return Err(Error::format("embedding store", "bad magic"));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != STORE_VERSION {
        return Err(Error::format(
            "embedding store",
            format!("unsupported version {version}"),
        ));
    }
    let dim = u32::from_le_bytes(take(&mut r)?) as usize;
    let count = u64::from_le_bytes(take(&mut r)?);
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let image_id = u64::from_le_bytes(take(&mut r)?);
        let identity_id = u64::from_le_bytes(take(&mut r)?);
        let quality = f64::from_le_bytes(take(&mut r)?);
        let degradations = DegradationSet::from_bits(u32::from_le_bytes(take(&mut r)?))?;
        let mut embedding = Vec::with_capacity(dim);
        for _ in 0..dim {
            embedding.push(f64::from_le_bytes(take(&mut r)?));
        }
        records.push(ImageRecord {
            image_id,
            identity_id,
            quality,
            degradations,
            embedding,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("embedding store", "trailing bytes"));
    }
    Ok((dim, records))
}

/// CSV with header `id,z0,…,z{k-1}`. Prototypes are not stored; they are
/// recomputed from the latent and the seeded basis.
pub fn write_identities<W: Write>(w: W, identities: &[Identity]) -> Result<()> {
    let k = identities.first().map_or(0, |i| i.latent.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend((0..k).map(|i| format!("z{i}")));
    out.write_record(&header)?;
    for identity in identities {
        let mut row = vec![identity.id.to_string()];
        row.extend(identity.latent.iter().map(|z| z.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Returns `(id, latent)` rows.
pub fn read_identities<R: Read>(r: R) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let mut fields = row.iter();
        let id = fields
            .next()
            .ok_or_else(|| Error::format("identity csv", "empty row"))?
            .parse::<u64>()
            .map_err(|e| Error::format("identity csv", e.to_string()))?;
        let latent = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format("identity csv", e.to_string()))?;
        out.push((id, latent));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedsim::{generate_world, WorldConfig};

    fn tiny() -> WorldConfig {
        WorldConfig {
            ambient_dim: 6,
            identity_dim: 2,
            num_identities: 3,
            images_per_identity: 4,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn store_write_read_write_is_byte_identical() {
        let world = generate_world(&tiny()).unwrap();
        let mut first = Vec::new();
        write_store(&mut first, 6, &world.records).unwrap();
        let (d, back) = read_store(first.as_slice()).unwrap();
        assert_eq!(d, 6);
        assert_eq!(back, world.records);
        let mut second = Vec::new();
        write_store(&mut second, d, &back).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn store_rejects_garbage() {
        assert!(read_store(&b"XXXX"[..]).is_err());
        let world = generate_world(&tiny()).unwrap();
        let mut buf = Vec::new();
        write_store(&mut buf, 6, &world.records).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_store(buf.as_slice()).is_err());
    }

    #[test]
    fn identities_round_trip() {
        let world = generate_world(&tiny()).unwrap();
        let mut first = Vec::new();
        write_identities(&mut first, &world.identities).unwrap();
        let rows = read_identities(first.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        for ((id, z), ident) in rows.iter().zip(&world.identities) {
            assert_eq!(*id, ident.id);
            assert_eq!(z, &ident.latent);
        }
        assert!(String::from_utf8(first).unwrap().starts_with("id,z0,z1\n"));
    }
}
