//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes   "CMIXCKPT"
//! version  u32       1
//! act      u32       0 relu, 1 logistic, 2 tanh
//! layers   u32       L
//! shapes   L × (u32 rows, u32 cols)
//! payload  f64       current parameters, then the initial copy; per layer
//!                    the row-major weights followed by the bias
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{FineTuneError, ReferenceModel, Result};
use crate::models::mlp::{Dense, Network};
use crate::models::Activation;

pub const MAGIC: &[u8; 8] = b"CMIXCKPT";
pub const VERSION: u32 = 1;

fn act_code(a: Activation) -> u32 {
    match a {
        Activation::Relu => 0,
        Activation::Logistic => 1,
        Activation::Tanh => 2,
    }
}

pub fn to_bytes(model: &ReferenceModel) -> Vec<u8> {
    let net = model.network();
    let mut out = Vec::with_capacity(24 + 16 * net.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&act_code(net.activation).to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        out.extend_from_slice(&(layer.weights.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.weights.ncols() as u32).to_le_bytes());
    }
    for n in [net, model.init()] {
        for layer in &n.layers {
            for v in layer.weights.iter().chain(layer.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(FineTuneError::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ReferenceModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(FineTuneError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FineTuneError::Checkpoint(format!("unsupported version {version}")));
    }
    let activation = match r.u32()? {
        0 => Activation::Relu,
        1 => Activation::Logistic,
        2 => Activation::Tanh,
        c => return Err(FineTuneError::Checkpoint(format!("unknown activation code {c}"))),
    };
    let n_layers = r.u32()? as usize;
    if n_layers == 0 {
        return Err(FineTuneError::Checkpoint("no layers".into()));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        shapes.push((r.u32()? as usize, r.u32()? as usize));
    }
    if shapes.windows(2).any(|w| w[0].1 != w[1].0) {
        return Err(FineTuneError::Checkpoint("layer shapes do not chain".into()));
    }
    let mut read_net = || -> Result<Network> {
        let mut layers = Vec::with_capacity(n_layers);
        for &(rows, cols) in &shapes {
            let w = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let b = (0..cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            layers.push(Dense {
                weights: Array2::from_shape_vec((rows, cols), w).expect("sized"),
                bias: Array1::from(b),
            });
        }
        Ok(Network { layers, activation })
    };
    let current = read_net()?;
    let init = read_net()?;
    if r.pos != bytes.len() {
        return Err(FineTuneError::Checkpoint("trailing bytes".into()));
    }
    ReferenceModel::from_parts(current, init)
}

pub fn write_checkpoint(model: &ReferenceModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| FineTuneError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ReferenceModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FineTuneError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    from_bytes(&bytes)
}
