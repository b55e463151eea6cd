//! Model checkpoints: magic `SGN1`, a length-prefixed JSON header (spec
//! plus metadata), then one raw float block per parameter tensor.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{NetSpec, TrainedNet};
use super::tensor::Tensor;
use super::NnError;
use crate::imageproc::io::{read_sgf_block, write_sgf_block};
use crate::scalar::Scalar;

const SGN_MAGIC: &[u8; 4] = b"SGN1";

/// Header persisted alongside the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: NetSpec,
    pub class_count: usize,
    pub training_set_id: String,
    /// Defense used during training ("none", "ens_adv", "madry").
    pub defense: String,
    /// Perturbation budget of the defense, when one applies.
    pub epsilon: Option<f64>,
}

pub fn save_checkpoint<T: Scalar>(path: &Path, net: &TrainedNet<T>, defense: &str, epsilon: Option<f64>) -> Result<(), NnError> {
    let meta = CheckpointMeta {
        spec: net.spec().clone(),
        class_count: net.class_count(),
        training_set_id: net.training_set_id.clone(),
        defense: defense.to_string(),
        epsilon,
    };
    let header = serde_json::to_string(&meta).map_err(|e| NnError::Format(e.to_string()))?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(SGN_MAGIC)?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(header.as_bytes())?;
    out.write_all(&(net.params().len() as u32).to_le_bytes())?;
    for tensor in net.params() {
        let rows = tensor.shape()[0];
        let cols = tensor.numel() / rows;
        write_sgf_block(&mut out, rows, cols, tensor.data())?;
    }
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(TrainedNet<T>, CheckpointMeta), NnError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != SGN_MAGIC {
        return Err(NnError::Format("missing SGN1 magic".into()));
    }
    let mut len_buf = [0u8; 4];
    input.read_exact(&mut len_buf)?;
    let header_len = u32::from_le_bytes(len_buf) as usize;
    let mut header = vec![0u8; header_len];
    input.read_exact(&mut header)?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&header).map_err(|e| NnError::Format(e.to_string()))?;
    input.read_exact(&mut len_buf)?;
    let count = u32::from_le_bytes(len_buf) as usize;
    let mut flat = Vec::with_capacity(count);
    for _ in 0..count {
        let (rows, cols, data) = read_sgf_block::<T>(&mut input)?;
        flat.push((rows, cols, data));
    }
    // Shapes are re-derived from the spec; the stored 2D dims only need to
    // carry the right element counts.
    let mut seeded = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let template = TrainedNet::<T>::init(meta.spec.clone(), &mut seeded)?;
    let mut params = Vec::with_capacity(count);
    for (expected, (rows, cols, data)) in template.params().iter().zip(flat) {
        if rows * cols != expected.numel() {
            return Err(NnError::Format(format!(
                "parameter block {}x{} does not match expected {} elements",
                rows,
                cols,
                expected.numel()
            )));
        }
        params.push(Tensor::new(expected.shape().to_vec(), data));
    }
    let net = TrainedNet::from_params(meta.spec.clone(), params, meta.training_set_id.clone())?;
    Ok((net, meta))
}

use rand::SeedableRng;

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip() {
        let spec = NetSpec::mini_signet_thin(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = TrainedNet::<f32>::init(spec, &mut rng).unwrap();
        net.training_set_id = "unit-test".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.sgn");
        save_checkpoint(&path, &net, "none", None).unwrap();
        let (back, meta) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(meta.class_count, 3);
        assert_eq!(meta.training_set_id, "unit-test");
        assert_eq!(back.params().len(), net.params().len());
        for (a, b) in back.params().iter().zip(net.params()) {
            assert_eq!(a.shape(), b.shape());
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn checkpoint_is_byte_stable() {
        let spec = NetSpec::mini_signet_smaller(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = TrainedNet::<f64>::init(spec, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.sgn"), dir.path().join("b.sgn"));
        save_checkpoint(&p1, &net, "madry", Some(2.0)).unwrap();
        save_checkpoint(&p2, &net, "madry", Some(2.0)).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }
}
