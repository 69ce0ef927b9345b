//! Binary weight container: the magic line `MEMSEG1\n`, nine little-endian
//! `u64` config fields, then every tensor in declaration order as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use super::config::SegmenterConfig;
use super::weights::SegmenterWeights;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"MEMSEG1\n";
const CONFIG_FIELDS: usize = 9;

fn config_fields(c: &SegmenterConfig) -> [u64; CONFIG_FIELDS] {
    [
        c.patch_size as u64,
        c.embed_dim as u64,
        c.layers as u64,
        c.heads as u64,
        c.classes as u64,
        c.mlp_ratio as u64,
        c.seed,
        c.pos_grid_w as u64,
        c.pos_grid_h as u64,
    ]
}

pub fn encode_weights<T: Scalar>(weights: &SegmenterWeights<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC.len() + 8 * (CONFIG_FIELDS + weights.param_count()));
    out.extend_from_slice(MAGIC);
    for v in config_fields(&weights.config) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    weights.for_each_tensor(|_, t| {
        for &v in t {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    });
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    expected_total: usize,
}

impl Reader<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        match self.bytes.get(self.pos..self.pos + 8) {
            Some(b) => {
                self.pos += 8;
                Ok(b.try_into().expect("8 bytes"))
            }
            None => Err(Error::Truncated {
                expected: self.expected_total.max(self.pos + 8),
                found: self.bytes.len(),
            }),
        }
    }
}

pub fn decode_weights<T: Scalar>(bytes: &[u8]) -> Result<SegmenterWeights<T>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        let n = bytes.len().min(MAGIC.len());
        return Err(Error::WrongFormat {
            expected: "MEMSEG1 weight container".into(),
            found: format!("{:?}", String::from_utf8_lossy(&bytes[..n])),
        });
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
        expected_total: 0,
    };
    let mut f = [0u64; CONFIG_FIELDS];
    for v in f.iter_mut() {
        *v = u64::from_le_bytes(r.take8()?);
    }
    let to_usize = |v: u64| -> Result<usize> {
        usize::try_from(v).map_err(|_| Error::InvalidConfig(format!("config field {v} too large")))
    };
    let config = SegmenterConfig {
        patch_size: to_usize(f[0])?,
        embed_dim: to_usize(f[1])?,
        layers: to_usize(f[2])?,
        heads: to_usize(f[3])?,
        classes: to_usize(f[4])?,
        mlp_ratio: to_usize(f[5])?,
        seed: f[6],
        pos_grid_w: to_usize(f[7])?,
        pos_grid_h: to_usize(f[8])?,
    };
    config.validate()?;
    let mut weights = SegmenterWeights::<T>::zeros(config)?;
    r.expected_total = r.pos + 8 * weights.param_count();

    let mut failure = None;
    weights.for_each_tensor_mut(|_, t| {
        for v in t.iter_mut() {
            if failure.is_some() {
                return;
            }
            match r.take8() {
                Ok(b) => *v = T::lit(f64::from_le_bytes(b)),
                Err(e) => failure = Some(e),
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if r.pos != bytes.len() {
        return Err(Error::TrailingData(bytes.len() - r.pos));
    }
    if !weights.all_finite() {
        return Err(Error::NonFinite("weight file"));
    }
    Ok(weights)
}

pub fn save_weights<T: Scalar>(
    weights: &SegmenterWeights<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(weights)).map_err(|e| Error::io(path, e))
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<SegmenterWeights<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

/// Loads weights and checks that they were built for `expected`. The seed
/// and positional grid are not compared.
pub fn load_weights_for<T: Scalar>(
    path: impl AsRef<Path>,
    expected: &SegmenterConfig,
) -> Result<SegmenterWeights<T>> {
    let w = load_weights::<T>(path)?;
    let got = &w.config;
    let shape = |c: &SegmenterConfig| {
        (
            c.patch_size,
            c.embed_dim,
            c.layers,
            c.heads,
            c.classes,
            c.mlp_ratio,
        )
    };
    if shape(got) != shape(expected) {
        return Err(Error::ConfigMismatch(format!(
            "file holds {:?}, expected {:?} (patch, dim, layers, heads, classes, mlp_ratio)",
            shape(got),
            shape(expected)
        )));
    }
    Ok(w)
}
