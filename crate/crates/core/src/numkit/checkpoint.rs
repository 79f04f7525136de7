//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "REFNETCK"
//! version    u32      1
//! layers     u32      L
//! dropout    f64
//! L times:   in u32, out u32, activation u8 (0 identity, 1 relu, 2 sigmoid)
//! L times:   weights out*in f64 (row-major), bias out f64
//! ```

use std::io::{Read, Write};

use super::dense::Dense;
use super::mlp::{Activation, Layer, Mlp};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"REFNETCK";
pub const VERSION: u32 = 1;

fn io(e: std::io::Error) -> Error {
    Error::io("<checkpoint>", e)
}

pub fn write_mlp<W: Write>(mlp: &Mlp, mut out: W) -> Result<()> {
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(mlp.layers.len() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(&mlp.dropout.to_le_bytes()).map_err(io)?;
    for l in &mlp.layers {
        out.write_all(&(l.input_dim() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&(l.output_dim() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&[l.activation.code()]).map_err(io)?;
    }
    for l in &mlp.layers {
        for v in l.weights.as_slice().iter().chain(&l.bias) {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(io)?;
    Ok(buf)
}

pub fn read_mlp<R: Read>(mut input: R) -> Result<Mlp> {
    if &read_array::<8, _>(&mut input)? != MAGIC {
        return Err(Error::invalid("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let n_layers = u32::from_le_bytes(read_array(&mut input)?) as usize;
    let dropout = f64::from_le_bytes(read_array(&mut input)?);
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let fan_in = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let fan_out = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let [code] = read_array::<1, _>(&mut input)?;
        let act = Activation::from_code(code)
            .ok_or_else(|| Error::invalid(format!("unknown activation code {code}")))?;
        shapes.push((fan_in, fan_out, act));
    }
    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        (0..n)
            .map(|_| Ok(f64::from_le_bytes(read_array(&mut input)?)))
            .collect()
    };
    let mut layers = Vec::with_capacity(n_layers);
    for (fan_in, fan_out, activation) in shapes {
        let weights = Dense::from_vec(fan_out, fan_in, read_f64s(fan_in * fan_out)?)?;
        let bias = read_f64s(fan_out)?;
        layers.push(Layer {
            weights,
            bias,
            activation,
        });
    }
    Ok(Mlp { layers, dropout })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = Mlp::new(&[4, 3, 1], &[Activation::Relu, Activation::Sigmoid], 0.3, 5).unwrap();
        let mut buf = Vec::new();
        write_mlp(&m, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(read_mlp(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn truncated_or_foreign_files_rejected() {
        let m = Mlp::new(&[2, 1], &[Activation::Sigmoid], 0.0, 5).unwrap();
        let mut buf = Vec::new();
        write_mlp(&m, &mut buf).unwrap();
        assert!(read_mlp(&buf[..buf.len() - 3]).is_err());
        assert!(read_mlp(&b"NOTACKPTxxxxxxxx"[..]).is_err());
    }
}
