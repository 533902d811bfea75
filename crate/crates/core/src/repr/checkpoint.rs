use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{Autoencoder, EncoderSpec};
use crate::error::{Error, Result};

const FORMAT: &str = "lobspoof-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    spec: EncoderSpec,
    frozen: bool,
    param_hash: String,
    tensors: Vec<Tensor>,
}

pub fn write_checkpoint<W: Write>(model: &Autoencoder, out: W) -> Result<()> {
    let tensors = model
        .param_names()
        .iter()
        .zip(model.params())
        .map(|(name, p)| Tensor { name: name.clone(), shape: [p.nrows(), p.ncols()], data: p.iter().copied().collect() })
        .collect();
    let ckpt = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        spec: model.spec().clone(),
        frozen: model.is_frozen(),
        param_hash: model.param_hash(),
        tensors,
    };
    serde_json::to_writer(out, &ckpt)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Autoencoder> {
    let ckpt: Checkpoint = serde_json::from_reader(input)?;
    if ckpt.format != FORMAT || ckpt.version != VERSION {
        return Err(Error::config(format!("unsupported checkpoint {} v{}", ckpt.format, ckpt.version)));
    }
    let mut model = Autoencoder::new(ckpt.spec)?;
    let mut params = Vec::with_capacity(ckpt.tensors.len());
    for (t, expected) in ckpt.tensors.into_iter().zip(model.param_names()) {
        if &t.name != expected {
            return Err(Error::shape(format!("checkpoint tensor {} where {expected} was expected", t.name)));
        }
        params.push(Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data).map_err(|e| Error::shape(format!("{}: {e}", t.name)))?);
    }
    model.replace_params(params)?;
    let hash = model.param_hash();
    if hash != ckpt.param_hash {
        return Err(Error::config(format!("checkpoint hash mismatch: stored {}, computed {hash}", ckpt.param_hash)));
    }
    if ckpt.frozen {
        model.freeze();
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Autoencoder, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Autoencoder> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::model::Family;

    #[test]
    fn round_trip_is_exact() {
        for family in Family::ALL {
            let mut spec = EncoderSpec::new(family, 3, 4, 2);
            spec.hidden = 5;
            spec.d_model = 6;
            spec.seed = 99;
            let mut model = Autoencoder::new(spec).unwrap();
            model.params_mut().unwrap()[0][[0, 0]] = 0.1 + 0.2;
            model.freeze();
            let mut buf = Vec::new();
            write_checkpoint(&model, &mut buf).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(back.param_hash(), model.param_hash());
            assert!(back.is_frozen());
            assert_eq!(back.spec(), model.spec());
        }
    }

    #[test]
    fn tampered_values_are_rejected() {
        let model = Autoencoder::new(EncoderSpec::new(Family::Feedforward, 2, 2, 2)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let mut doc: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        doc["tensors"][0]["data"][0] = serde_json::json!(12.5);
        let err = read_checkpoint(serde_json::to_vec(&doc).unwrap().as_slice()).unwrap_err();
        assert!(err.to_string().contains("hash mismatch"));
    }
}
