//! Binary model files.
//!
//! Layout (little-endian): magic, `u32` version, `u32` n_layers, width,
//! n_in, n_out, `f64` c_nn, u_max, then each raw weight matrix row-major,
//! each bias vector, the input and output normalization vectors.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::network::{Architecture, SnDnnModel};
use super::N_FEATURES;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 8] = *b"NRSNDNN\0";
pub const MODEL_VERSION: u32 = 1;

pub fn model_to_bytes(model: &SnDnnModel) -> Vec<u8> {
    let arch = model.architecture();
    let mut out = Vec::with_capacity(48 + 8 * model.n_params());
    out.extend_from_slice(&MODEL_MAGIC);
    for v in [MODEL_VERSION, arch.n_layers as u32, arch.width as u32, N_FEATURES as u32, 3] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&arch.c_nn.to_le_bytes());
    out.extend_from_slice(&arch.u_max.to_le_bytes());
    for w in model.raw_weights() {
        for x in w.transpose().iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    for b in model.biases() {
        for x in b.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    for x in model.input_norm().iter().chain(model.output_norm().iter()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn model_from_bytes(buf: &[u8], path: &Path) -> Result<SnDnnModel> {
    let mut r = Reader { buf, pos: 0, path };
    if r.take(8)? != MODEL_MAGIC {
        return Err(r.fail("not a model file (bad magic)"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(r.fail(format!("unsupported model version {version}")));
    }
    let n_layers = r.u32()? as usize;
    let width = r.u32()? as usize;
    let (n_in, n_out) = (r.u32()? as usize, r.u32()? as usize);
    if n_in != N_FEATURES || n_out != 3 {
        return Err(r.fail(format!("unexpected shape {n_in} -> {n_out}")));
    }
    if n_layers > 1024 || width > 1 << 16 {
        return Err(r.fail("implausible architecture"));
    }
    let arch = Architecture {
        n_layers,
        width,
        c_nn: r.f64()?,
        u_max: r.f64()?,
    };
    let mut dims = vec![(if n_layers == 0 { 3 } else { width }, n_in)];
    if n_layers > 0 {
        dims.extend((1..n_layers).map(|_| (width, width)));
        dims.push((3, width));
    }
    let mut raw = Vec::with_capacity(dims.len());
    for &(rows, cols) in &dims {
        raw.push(DMatrix::from_row_slice(rows, cols, &r.f64s(rows * cols)?));
    }
    let mut bias = Vec::with_capacity(dims.len());
    for &(rows, _) in &dims {
        bias.push(DVector::from_vec(r.f64s(rows)?));
    }
    let input_norm = r.f64s(N_FEATURES)?;
    let on = r.f64s(3)?;
    if r.pos != buf.len() {
        return Err(r.fail(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    SnDnnModel::from_parts(arch, raw, bias, input_norm, [on[0], on[1], on[2]]).map_err(|e| r.fail(e.to_string()))
}

pub fn save_model(model: &SnDnnModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SnDnnModel> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&buf, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> SnDnnModel {
        let arch = Architecture { n_layers: 3, width: 10, c_nn: 4.0, u_max: 3.0 };
        let mut m = SnDnnModel::new_random(arch, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p: Vec<f64> = m.params().iter().map(|x| x + rng.random_range(-0.1..0.1)).collect();
        m.set_params(&p).unwrap();
        let norm = (0..N_FEATURES).map(|_| rng.random_range(0.5..5.0)).collect();
        m.set_normalization(norm, [1.0, 2.0, 3.0]).unwrap();
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = model();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(m, back);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let z: Vec<f64> = (0..N_FEATURES).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (a, b) = (m.forward_normalized(&z).unwrap(), back.forward_normalized(&z).unwrap());
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }

    #[test]
    fn truncated_and_foreign_files_rejected() {
        let p = Path::new("x");
        let bytes = model_to_bytes(&model());
        for cut in [0, 7, 20, bytes.len() - 1] {
            assert!(matches!(model_from_bytes(&bytes[..cut], p), Err(Error::Format { .. })));
        }
        let mut foreign = bytes.clone();
        foreign[..8].copy_from_slice(b"NRDATA\0\0");
        assert!(matches!(model_from_bytes(&foreign, p), Err(Error::Format { .. })));
        let mut future = bytes;
        future[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(model_from_bytes(&future, p), Err(Error::Format { .. })));
    }
}
