//! HAMNET1 model files.
//!
//! ```text
//! 8 bytes   magic "HAMNET1\0"
//! 4 bytes   metadata length L, little-endian u32
//! L bytes   UTF-8 metadata, one `key=value` per line
//! ...       W_h, W_c, class bias, [hidden bias] as little-endian f64, row-major
//! ```
//!
//! Required metadata keys: `algo`, `inputs`, `hidden`, `classes`, `seed`,
//! `hidden_bias` (`0`/`1`). Keys prefixed `param.` carry training
//! hyperparameters.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{Algorithm, NetworkModel};

pub const MAGIC: &[u8; 8] = b"HAMNET1\0";
const FAMILY: &[u8; 6] = b"HAMNET";

pub fn encode_model(model: &NetworkModel) -> Vec<u8> {
    let mut meta = String::new();
    meta.push_str(&format!("algo={}\n", model.algorithm));
    meta.push_str(&format!("inputs={}\n", model.input_dim()));
    meta.push_str(&format!("hidden={}\n", model.hidden_size()));
    meta.push_str(&format!("classes={}\n", model.num_classes()));
    meta.push_str(&format!("seed={}\n", model.seed));
    meta.push_str(&format!(
        "hidden_bias={}\n",
        u8::from(model.hidden_bias.is_some())
    ));
    for (k, v) in &model.hyperparameters {
        meta.push_str(&format!("param.{k}={v}\n"));
    }

    let floats = model.w_hidden.as_slice().len()
        + model.w_class.as_slice().len()
        + model.class_bias.len()
        + model.hidden_bias.as_ref().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(12 + meta.len() + 8 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    let mut put = |values: &[f64]| {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    put(model.w_hidden.as_slice());
    put(model.w_class.as_slice());
    put(&model.class_bias);
    if let Some(hb) = &model.hidden_bias {
        put(hb);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::TruncatedFile(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Metadata(format!("{what}: size overflows"))
        })?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

fn field<'m>(meta: &'m [(String, String)], key: &str) -> Result<&'m str> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Metadata(format!("missing `{key}`")))
}

fn number<T: std::str::FromStr>(meta: &[(String, String)], key: &str) -> Result<T> {
    let raw = field(meta, key)?;
    raw.parse()
        .map_err(|_| Error::Metadata(format!("`{key}` is not a number: {raw}")))
}

pub fn decode_model(bytes: &[u8]) -> Result<NetworkModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        if magic.starts_with(FAMILY) {
            return Err(Error::VersionMismatch(
                String::from_utf8_lossy(&magic[6..]).trim_end_matches('\0').to_string(),
            ));
        }
        return Err(Error::BadModelMagic);
    }
    let len = u32::from_le_bytes(r.take(4, "metadata length")?.try_into().expect("4 bytes"));
    let text = std::str::from_utf8(r.take(len as usize, "metadata")?)
        .map_err(|e| Error::Metadata(e.to_string()))?;
    let meta: Vec<(String, String)> = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Metadata(format!("line without `=`: {l}")))
        })
        .collect::<Result<_>>()?;

    let algorithm: Algorithm = field(&meta, "algo")?
        .parse()
        .map_err(|_| Error::Metadata("unknown algo".into()))?;
    let inputs: usize = number(&meta, "inputs")?;
    let hidden: usize = number(&meta, "hidden")?;
    let classes: usize = number(&meta, "classes")?;
    let seed: u64 = number(&meta, "seed")?;
    let has_hidden_bias = match field(&meta, "hidden_bias")? {
        "0" => false,
        "1" => true,
        other => return Err(Error::Metadata(format!("hidden_bias={other}"))),
    };

    let w_hidden = Matrix::from_vec(inputs, hidden, r.floats(inputs * hidden, "W_h")?)?;
    let w_class = Matrix::from_vec(hidden, classes, r.floats(hidden * classes, "W_c")?)?;
    let class_bias = r.floats(classes, "class bias")?;
    let hidden_bias = if has_hidden_bias {
        Some(r.floats(hidden, "hidden bias")?)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Metadata(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }

    let hyperparameters = meta
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix("param.").map(|k| (k.to_string(), v)))
        .collect();
    Ok(NetworkModel {
        algorithm,
        seed,
        w_hidden,
        w_class,
        class_bias,
        hidden_bias,
        hyperparameters,
    })
}

pub fn save_model(model: &NetworkModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<NetworkModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
