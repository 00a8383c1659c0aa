//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "MOONCKPT"
//! version   u32      currently 1
//! layers    u32
//! per layer:
//!   n_out   u32
//!   n_in    u32
//!   mask    ceil(n_out*n_in / 8) bytes, row-major flat bits,
//!           LSB-first within each byte
//!   weights n_out*n_in f64, row-major
//!   biases  n_out f64
//! trailer   32 bytes  SHA-256 of the canonical config text
//! ```
//!
//! Reloading yields a network bitwise equal in parameters and masks, so
//! save -> load -> save reproduces the file byte for byte.

use std::path::Path;

use moon_core::network::Layer;
use moon_core::sparsity::BitMatrix;
use moon_core::tensor::Tensor;
use moon_core::SparseNetwork;

use crate::CliError;

pub const MAGIC: &[u8; 8] = b"MOONCKPT";
pub const VERSION: u32 = 1;

pub fn to_bytes(net: &SparseNetwork, config_digest: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        let (n_out, n_in) = (layer.n_out(), layer.n_in());
        out.extend_from_slice(&(n_out as u32).to_le_bytes());
        out.extend_from_slice(&(n_in as u32).to_le_bytes());
        let bits = n_out * n_in;
        let mut packed = vec![0u8; bits.div_ceil(8)];
        for idx in 0..bits {
            if layer.mask.get_flat(idx) {
                packed[idx / 8] |= 1 << (idx % 8);
            }
        }
        out.extend_from_slice(&packed);
        for &w in layer.weight.data() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for &b in layer.bias.data() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out.extend_from_slice(config_digest);
    out
}

pub fn save(path: &Path, net: &SparseNetwork, config_digest: &[u8; 32]) -> Result<(), CliError> {
    crate::report::atomic_write(path, &to_bytes(net, config_digest))
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CliError> {
        if self.bytes.len() < self.offset + n {
            return Err(CliError::integrity(format!(
                "checkpoint truncated at byte {} reading {}",
                self.offset, what
            )));
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CliError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(SparseNetwork, [u8; 32]), CliError> {
    let mut r = Reader { bytes, offset: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(CliError::integrity(format!(
            "bad checkpoint magic {:?}",
            magic
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CliError::integrity(format!(
            "unsupported checkpoint version {}",
            version
        )));
    }
    let layer_count = r.u32("layer count")? as usize;
    if layer_count == 0 {
        return Err(CliError::integrity("checkpoint with zero layers"));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for li in 0..layer_count {
        let n_out = r.u32("n_out")? as usize;
        let n_in = r.u32("n_in")? as usize;
        if n_out == 0 || n_in == 0 {
            return Err(CliError::integrity(format!("layer {} has zero dim", li)));
        }
        let bits = n_out * n_in;
        let packed = r.take(bits.div_ceil(8), "mask")?;
        let mut mask = BitMatrix::zeros(n_out, n_in);
        for idx in 0..bits {
            if (packed[idx / 8] >> (idx % 8)) & 1 == 1 {
                mask.set_flat(idx, true);
            }
        }
        let wbytes = r.take(bits * 8, "weights")?;
        let weights: Vec<f64> = wbytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bbytes = r.take(n_out * 8, "biases")?;
        let biases: Vec<f64> = bbytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        layers.push(Layer {
            weight: Tensor::new(vec![n_out, n_in], weights)
                .map_err(|e| CliError::integrity(format!("layer {}: {}", li, e)))?,
            bias: Tensor::vector(biases),
            mask,
        });
    }
    let digest: [u8; 32] = r
        .take(32, "config digest")?
        .try_into()
        .expect("fixed-size slice");
    if r.offset != bytes.len() {
        return Err(CliError::integrity(format!(
            "{} trailing bytes after checkpoint trailer",
            bytes.len() - r.offset
        )));
    }
    let num_classes = layers.last().unwrap().n_out() - 1;
    let net = SparseNetwork::from_parts(layers, num_classes)
        .map_err(|e| CliError::integrity(format!("inconsistent checkpoint: {}", e)))?;
    Ok((net, digest))
}

pub fn load(path: &Path) -> Result<(SparseNetwork, [u8; 32]), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::integrity(format!("cannot read {}: {}", path.display(), e)))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use moon_core::rng::SeededRng;
    use moon_core::sparsity::erk_init;

    fn sample_net(seed: u64) -> SparseNetwork {
        let mut rng = SeededRng::new(seed);
        let dims = [5, 7];
        let masks = erk_init(&SparseNetwork::layer_dims(&dims, 3), 0.5, &mut rng).unwrap();
        SparseNetwork::new(&dims, 3, masks, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_lossless_and_byte_stable() {
        let net = sample_net(5);
        let digest = [7u8; 32];
        let bytes = to_bytes(&net, &digest);
        let (loaded, d2) = from_bytes(&bytes).unwrap();
        assert_eq!(d2, digest);
        assert_eq!(loaded.num_classes(), net.num_classes());
        for (a, b) in net.layers().iter().zip(loaded.layers()) {
            assert_eq!(a.weight.data(), b.weight.data());
            assert_eq!(a.bias.data(), b.bias.data());
            assert_eq!(a.mask, b.mask);
        }
        assert_eq!(to_bytes(&loaded, &d2), bytes);
    }

    #[test]
    fn corrupt_magic_rejected() {
        let net = sample_net(6);
        let mut bytes = to_bytes(&net, &[0u8; 32]);
        bytes[0] = b'X';
        assert!(from_bytes(&bytes).is_err());
    }

    #[test]
    fn truncation_rejected() {
        let net = sample_net(7);
        let bytes = to_bytes(&net, &[0u8; 32]);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn trailing_garbage_rejected() {
        let net = sample_net(8);
        let mut bytes = to_bytes(&net, &[0u8; 32]);
        bytes.push(0);
        assert!(from_bytes(&bytes).is_err());
    }
}
