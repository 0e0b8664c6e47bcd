//! Flat binary parameter dump.
//!
//! Layout: `V`, `D`, `H` as little-endian `u64`, then every scalar as a
//! little-endian IEEE-754 `f64` in the field order W, U_i, b_i, U_o, b_o,
//! U_c, b_c, P (see [`Layout`](super::Layout)).

use super::params::{count_params, ModelParams, Shape};
use crate::error::{Error, Result};

const HEADER_LEN: usize = 24;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let shape = params.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    for n in [shape.vocab, shape.dim, shape.hidden] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for w in params.as_slice() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let dim = |i: usize| -> Result<usize> {
        let raw = u64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().expect("8 bytes"));
        usize::try_from(raw).map_err(|_| Error::Checkpoint(format!("dimension {raw} does not fit in memory")))
    };
    let shape = Shape::new(dim(0)?, dim(1)?, dim(2)?);
    shape.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

    let expected = checked_count(shape)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Checkpoint(format!("parameter count overflows for {shape}")))?;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!("expected {expected} bytes for {shape}, found {}", bytes.len())));
    }
    let data: Vec<f64> =
        bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if let Some(pos) = data.iter().position(|w| !w.is_finite()) {
        return Err(Error::Checkpoint(format!("non-finite value at scalar {pos}")));
    }
    ModelParams::from_vec(shape, data)
}

fn checked_count(shape: Shape) -> Option<usize> {
    let Shape { vocab, dim, hidden } = shape;
    let vd = vocab.checked_mul(dim)?;
    let dh = dim.checked_mul(hidden)?;
    let gates = dh.checked_mul(2)?.checked_add(hidden)?.checked_mul(3)?;
    let total = vd.checked_add(gates)?.checked_add(dh)?;
    debug_assert_eq!(total, count_params(shape));
    Some(total)
}
