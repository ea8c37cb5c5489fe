//! Versioned JSON weight files.
//!
//! ```text
//! {"version":1, "layout_hash":"…", "dtype":"f32"|"f64",
//!  "config":{d_in, d_h, n_heads, d_ff, pooling, …},
//!  "tensors":{"gru.0.w_z":{"shape":[16,256],"data":[…]}, …}}
//! ```
//! Values are written in their stored precision with shortest round-trip
//! formatting, so `save(load(save(p)))` is byte-identical to `save(p)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::IgnoredAny;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelParams};
use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord<T> {
    shape: [usize; 2],
    data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct WeightFile<T> {
    version: u32,
    layout_hash: String,
    dtype: String,
    config: ModelConfig,
    tensors: BTreeMap<String, TensorRecord<T>>,
}

#[derive(Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    #[allow(dead_code)]
    tensors: IgnoredAny,
}

pub fn to_json<T: Scalar>(params: &ModelParams<T>) -> Result<String> {
    let tensors = params
        .named_tensors()
        .into_iter()
        .map(|(name, t)| (name, TensorRecord { shape: [t.rows(), t.cols()], data: t.data().to_vec() }))
        .collect();
    let file = WeightFile {
        version: WEIGHTS_VERSION,
        layout_hash: params.layout_hash.clone(),
        dtype: T::DTYPE.to_string(),
        config: params.config.clone(),
        tensors,
    };
    Ok(serde_json::to_string(&file)?)
}

fn build<S: Scalar, T: Scalar>(file: WeightFile<S>) -> Result<ModelParams<T>> {
    let mut params = ModelParams::<T>::zeros(file.config)?;
    params.layout_hash = file.layout_hash;
    let mut records = file.tensors;
    for (name, slot) in params.named_tensors_mut() {
        let rec = records.remove(&name).ok_or_else(|| Error::Weights(format!("missing tensor {name}")))?;
        if rec.shape != [slot.rows(), slot.cols()] {
            return Err(Error::Weights(format!(
                "tensor {name} has shape {:?}, config implies {:?}",
                rec.shape,
                [slot.rows(), slot.cols()]
            )));
        }
        *slot = Tensor2::<S>::from_vec(rec.shape[0], rec.shape[1], rec.data)?.cast::<T>();
    }
    if let Some(extra) = records.keys().next() {
        return Err(Error::Weights(format!("unexpected tensor {extra}")));
    }
    Ok(params)
}

/// Parses a weight file into precision `T`, converting from the stored precision if needed.
pub fn from_json<T: Scalar>(text: &str) -> Result<ModelParams<T>> {
    let header: Header = serde_json::from_str(text)?;
    if header.version != WEIGHTS_VERSION {
        return Err(Error::Weights(format!("unsupported version {}", header.version)));
    }
    match header.dtype.as_str() {
        "f32" => build::<f32, T>(serde_json::from_str(text)?),
        "f64" => build::<f64, T>(serde_json::from_str(text)?),
        other => Err(Error::Weights(format!("unknown dtype {other}"))),
    }
}

pub fn save<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(params)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig { d_in: 3, d_h: 4, n_heads: 2, d_ff: 6, head_hidden: 3, seq_len: 2, ..Default::default() }
    }

    #[test]
    fn round_trip_is_byte_identical_in_both_precisions() {
        let p = ModelParams::<f64>::init(small(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let s = to_json(&p).unwrap();
        let back: ModelParams<f64> = from_json(&s).unwrap();
        assert_eq!(back, p);
        assert_eq!(to_json(&back).unwrap(), s);

        let p32: ModelParams<f32> = p.cast();
        let s32 = to_json(&p32).unwrap();
        let back32: ModelParams<f32> = from_json(&s32).unwrap();
        assert_eq!(back32, p32);
        assert_eq!(to_json(&back32).unwrap(), s32);
        assert!(s32.contains("\"dtype\":\"f32\""));
    }

    #[test]
    fn rejects_wrong_version_and_shapes() {
        let p = ModelParams::<f64>::zeros(small()).unwrap();
        let s = to_json(&p).unwrap();
        assert!(from_json::<f64>(&s.replace("\"version\":1", "\"version\":2")).is_err());
        let bad = s.replace("\"shape\":[1,1]", "\"shape\":[1,2]");
        assert!(from_json::<f64>(&bad).is_err());
    }
}
