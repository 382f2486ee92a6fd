//! Binary checkpoint format.
//!
//! ```text
//! "FLIPNET1"                     8 bytes
//! layer_count                    u64 LE
//! widths[layer_count + 1]        u64 LE each (input, then every layer's output)
//! class_count                    u64 LE
//! per layer:
//!   weights   n_out * n_in f64 LE, row-major
//!   bias      n_out f64 LE
//!   sigma     f64 LE
//! ```

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::{Layer, Network};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FLIPNET1";

pub fn write_checkpoint<W: Write>(net: &Network, mut out: W) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    let widths = net.widths();
    out.write_all(&(net.layers().len() as u64).to_le_bytes())?;
    for w in &widths {
        out.write_all(&(*w as u64).to_le_bytes())?;
    }
    out.write_all(&(net.class_count() as u64).to_le_bytes())?;
    for layer in net.layers() {
        for r in 0..layer.n_out() {
            for c in 0..layer.n_in() {
                out.write_all(&layer.weights[(r, c)].to_le_bytes())?;
            }
        }
        for b in layer.bias.iter() {
            out.write_all(&b.to_le_bytes())?;
        }
        out.write_all(&layer.sigma.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

struct Reader<'a, R> {
    inner: R,
    offset: u64,
    name: &'a str,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Format {
            file: self.name.to_string(),
            offset: self.offset,
            reason: format!("truncated checkpoint ({e})"),
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes::<8>()?))
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            file: self.name.to_string(),
            offset: self.offset,
            reason: reason.into(),
        }
    }
}

/// Reads a checkpoint; `name` labels format errors.
pub fn read_checkpoint<R: Read>(input: R, name: &str) -> Result<Network> {
    let mut rd = Reader {
        inner: input,
        offset: 0,
        name,
    };
    if &rd.bytes::<8>()? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            file: name.to_string(),
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let layer_count = rd.u64()? as usize;
    if layer_count == 0 || layer_count > 1 << 16 {
        return Err(rd.fail(format!("implausible layer count {layer_count}")));
    }
    let mut widths = Vec::with_capacity(layer_count + 1);
    for _ in 0..=layer_count {
        let w = rd.u64()? as usize;
        if w == 0 || w > 1 << 24 {
            return Err(rd.fail(format!("implausible width {w}")));
        }
        widths.push(w);
    }
    let classes = rd.u64()? as usize;
    if classes != widths[layer_count] {
        return Err(rd.fail(format!(
            "class count {classes} disagrees with output width {}",
            widths[layer_count]
        )));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for w in widths.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let mut weights = DMatrix::zeros(n_out, n_in);
        for r in 0..n_out {
            for c in 0..n_in {
                weights[(r, c)] = rd.f64()?;
            }
        }
        let mut bias = DVector::zeros(n_out);
        for b in bias.iter_mut() {
            *b = rd.f64()?;
        }
        let at = rd.offset;
        let sigma = rd.f64()?;
        layers.push(Layer::new(weights, bias, sigma).map_err(|e| Error::Format {
            file: name.to_string(),
            offset: at,
            reason: e.to_string(),
        })?);
    }
    let mut extra = [0u8; 1];
    if rd.inner.read(&mut extra)? != 0 {
        return Err(rd.fail("trailing bytes after last layer"));
    }
    Network::new(layers)
}
