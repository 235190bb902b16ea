//! Flat binary decoder checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic            8 bytes  "NADMDEC1"
//! num_channels     u64      J + 1
//! channels         u64 × (J + 1)
//! out_channels     u64
//! latent_h         u64
//! latent_w         u64
//! activation       u64      0 relu, 1 leaky_relu, 2 tanh, 3 sigmoid, 4 elu
//! seed             u64
//! latent           f64 × (c_0 · latent_h · latent_w)
//! W_0 … W_J        f64 × rows·cols each, row-major, in declaration order
//! ```

use std::io::{Read, Write};

use super::{Activation, DecoderConfig, DecoderNet, Matrix};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NADMDEC1";

pub fn save_checkpoint<W: Write>(net: &DecoderNet, mut out: W) -> Result<()> {
    let cfg = net.config();
    out.write_all(MAGIC)?;
    let mut header = vec![cfg.channels.len() as u64];
    header.extend(cfg.channels.iter().map(|&c| c as u64));
    header.extend([
        cfg.out_channels as u64,
        cfg.latent_h as u64,
        cfg.latent_w as u64,
        cfg.activation.code(),
        cfg.seed,
    ]);
    for v in header {
        out.write_all(&v.to_le_bytes())?;
    }
    for m in std::iter::once(net.latent()).chain(net.weights()) {
        for v in &m.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_matrix<R: Read>(input: &mut R, rows: usize, cols: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        input.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(Matrix::new(rows, cols, data))
}

pub fn load_checkpoint<R: Read>(mut input: R) -> Result<DecoderNet> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let n = read_u64(&mut input)? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let channels = (0..n)
        .map(|_| read_u64(&mut input).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let out_channels = read_u64(&mut input)? as usize;
    let latent_h = read_u64(&mut input)? as usize;
    let latent_w = read_u64(&mut input)? as usize;
    let code = read_u64(&mut input)?;
    let activation = Activation::from_code(code)
        .ok_or_else(|| Error::Checkpoint(format!("unknown activation code {code}")))?;
    let seed = read_u64(&mut input)?;
    let config = DecoderConfig {
        channels,
        out_channels,
        latent_h,
        latent_w,
        activation,
        seed,
    };
    config.validate()?;
    let latent = read_matrix(&mut input, config.channels[0], latent_h * latent_w)?;
    let weights = config
        .weight_shapes()
        .into_iter()
        .map(|(r, c)| read_matrix(&mut input, r, c))
        .collect::<Result<Vec<_>>>()?;
    DecoderNet::from_parts(config, latent, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let cfg = DecoderConfig::for_output(vec![5, 4, 3], 3, 8, 12, 77)
            .unwrap()
            .with_activation(Activation::Tanh);
        let net = DecoderNet::init(cfg).unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&net, &mut bytes).unwrap();
        let expected_len = 8 + 8 * (1 + 3 + 5) + 8 * (5 * 6 + 4 * 5 + 3 * 4 + 3 * 3);
        assert_eq!(bytes.len(), expected_len);
        assert_eq!(load_checkpoint(bytes.as_slice()).unwrap(), net);
    }

    #[test]
    fn rejects_garbage() {
        assert!(load_checkpoint(&b"NOTADECODER....."[..]).is_err());
        let net =
            DecoderNet::init(DecoderConfig::for_output(vec![2, 2], 1, 4, 4, 1).unwrap()).unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&net, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(load_checkpoint(bytes.as_slice()).is_err());
    }
}
