//! Checkpoint file format, bit-exact:
//!
//! ```text
//! magic "SLMB" | u32 version=1 | u32 config_len | config JSON (UTF-8)
//! | u32 tensor_count | per tensor:
//!     u16 name_len | name UTF-8 | u8 rank | u32 dims[rank] | f32 LE data
//! ```
//!
//! All integers little-endian. Values are stored as f32 regardless of the
//! in-memory scalar type; loading into f64 widens losslessly, saving from
//! f64 narrows.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{err, Result};
use crate::net::{Model, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SLMB";
const VERSION: u32 = 1;

pub fn save_model<T: Scalar>(path: &Path, model: &Model<T>) -> Result<()> {
    let config_json = serde_json::to_string(&model.config)
        .map_err(|e| err!(Checkpoint, "config serialization: {e}"))?;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(config_json.as_bytes());
    let params = model.named_params();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, var) in params {
        let value = var.value();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(value.shape().len() as u8);
        for &d in value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in value.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(err!(Checkpoint, "truncated checkpoint"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Raw contents: the embedded config JSON and named f32 tensors.
pub fn read_checkpoint(path: &Path) -> Result<(String, Vec<(String, Vec<usize>, Vec<f32>)>)> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(err!(Checkpoint, "{}: bad magic", path.display()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(err!(Checkpoint, "unsupported checkpoint version {version}"));
    }
    let config_len = r.u32()? as usize;
    let config_json = std::str::from_utf8(r.take(config_len)?)
        .map_err(|_| err!(Checkpoint, "config block is not UTF-8"))?
        .to_string();
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| err!(Checkpoint, "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = r.take(4 * n)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, dims, data));
    }
    if r.pos != bytes.len() {
        return Err(err!(Checkpoint, "{} trailing bytes", bytes.len() - r.pos));
    }
    Ok((config_json, tensors))
}

/// Rebuilds a model from a checkpoint. The embedded config fully
/// determines parameter shapes; every stored tensor must match one model
/// parameter exactly.
pub fn load_model<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let (config_json, tensors) = read_checkpoint(path)?;
    let config: ModelConfig = serde_json::from_str(&config_json)
        .map_err(|e| err!(Checkpoint, "embedded config: {e}"))?;
    let model = Model::<T>::init(config, 0)?;
    let params = model.named_params();
    if params.len() != tensors.len() {
        return Err(err!(
            Checkpoint,
            "checkpoint has {} tensors, model needs {}",
            tensors.len(),
            params.len()
        ));
    }
    for ((name, var), (stored_name, dims, data)) in params.iter().zip(&tensors) {
        if name != stored_name {
            return Err(err!(
                Checkpoint,
                "tensor order mismatch: expected {name}, found {stored_name}"
            ));
        }
        if var.value().shape() != dims.as_slice() {
            return Err(err!(
                Checkpoint,
                "{name}: stored shape {dims:?} vs model {:?}",
                var.value().shape()
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(err!(Checkpoint, "{name}: non-finite value in checkpoint"));
        }
        let cast: Vec<T> = data.iter().map(|&v| T::of_f64(v as f64)).collect();
        var.set_value(Tensor::from_vec(dims, cast));
    }
    Ok(model)
}
