//! `PCNM` checkpoint and its JSON sidecar.
//!
//! Little-endian: magic `PCNM`, version `u32`, number of layer sizes `u32`,
//! the sizes as `u32`, then per layer the row-major weights followed by the
//! biases, all `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ConfidenceModel, Layer, TrainConfig, TrainReport};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCNM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub layer_sizes: Vec<usize>,
    pub degradation_features: bool,
    pub train_config: TrainConfig,
    pub report: TrainReport,
    pub final_loss: Option<f64>,
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &ConfidenceModel) -> Result<()> {
    let sizes = model.layer_sizes();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for s in &sizes {
        w.write_all(&(*s as u32).to_le_bytes())?;
    }
    for x in model.parameters() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::format("checkpoint", format!("truncated: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ConfidenceModel> {
    if &read_array::<4, _>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::format("checkpoint", format!("{n} layer sizes")));
    }
    let sizes = (0..n)
        .map(|_| Ok(u32::from_le_bytes(read_array(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(n - 1);
    for w in sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let mut read_n = |count: usize| {
            (0..count)
                .map(|_| Ok(f64::from_le_bytes(read_array(&mut r)?)))
                .collect::<Result<Vec<f64>>>()
        };
        let weights = read_n(inputs * outputs)?;
        let biases = read_n(outputs)?;
        layers.push(Layer {
            inputs,
            outputs,
            weights,
            biases,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    ConfidenceModel::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let m = ConfidenceModel::xavier(&[5, 7, 3, 1], 12).unwrap();
        let mut first = Vec::new();
        write_checkpoint(&mut first, &m).unwrap();
        assert_eq!(&first[..4], b"PCNM");
        let back = read_checkpoint(first.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut second = Vec::new();
        write_checkpoint(&mut second, &back).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.len(), 4 + 4 + 4 + 4 * 4 + 8 * m.num_parameters());
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let m = ConfidenceModel::xavier(&[2, 2, 1], 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        buf.pop();
        assert!(read_checkpoint(buf.as_slice()).is_err());
        assert!(read_checkpoint(&b"PCEB\x01\0\0\0"[..]).is_err());
    }
}
