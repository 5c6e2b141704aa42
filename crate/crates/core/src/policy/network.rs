//! Fixed-width tanh network with spectrally normalized layers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spectral::{power_iteration, SpectralInfo};
use super::N_FEATURES;
use crate::dynamics::Vec3;
use crate::error::{Error, Result};

/// Spectrally-normalized MLP guidance policy.
///
/// Each layer uses `W = c_nn Ω / ||Ω||₂` and a free bias, followed by `tanh`
/// (the last layer included). Output `i` is `s_i tanh(z_i)` with
/// `s_i = min(output_norm_i, u_max)`, so `|u_i| <= u_max` structurally.
/// The effective weights are recomputed whenever the raw weights change.
#[derive(Debug, Clone)]
pub struct SnDnnModel {
    n_layers: usize,
    width: usize,
    c_nn: f64,
    u_max: f64,
    raw: Vec<DMatrix<f64>>,
    bias: Vec<DVector<f64>>,
    input_norm: Vec<f64>,
    output_norm: [f64; 3],
    eff: Vec<DMatrix<f64>>,
    spec: Vec<SpectralInfo>,
}

impl PartialEq for SnDnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.n_layers == other.n_layers
            && self.width == other.width
            && self.c_nn == other.c_nn
            && self.u_max == other.u_max
            && self.raw == other.raw
            && self.bias == other.bias
            && self.input_norm == other.input_norm
            && self.output_norm == other.output_norm
    }
}

/// Network architecture and caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_layers: usize,
    pub width: usize,
    pub c_nn: f64,
    pub u_max: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            n_layers: 6,
            width: 64,
            c_nn: 25.0,
            u_max: 3.0,
        }
    }
}

/// Gradient with respect to raw weights and biases, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub w: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
}

impl ModelGrad {
    pub fn zeros_like(model: &SnDnnModel) -> Self {
        Self {
            w: model.raw.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect(),
            b: model.bias.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.w.iter_mut().for_each(|m| *m *= k);
        self.b.iter_mut().for_each(|b| *b *= k);
    }

    pub fn add(&mut self, other: &ModelGrad) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = self.w.iter().map(|m| m.norm_squared()).sum::<f64>()
            + self.b.iter().map(|b| b.norm_squared()).sum::<f64>();
        s.sqrt()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.transpose().iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input; `acts[l + 1] = tanh(W_l acts[l] + b_l)`.
    pub acts: Vec<DVector<f64>>,
}

/// Lipschitz accounting of the whole map from raw features to thrust.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `c_nn^(N+1) L_φ^N` with `L_φ = 1` for tanh.
    pub core: f64,
    /// Output scale multiplying the network (N).
    pub output_scale: f64,
    /// Smallest input normalization constant dividing raw features.
    pub min_input_norm: f64,
    /// `core · output_scale / min_input_norm`.
    pub total: f64,
}

impl SnDnnModel {
    /// Gaussian initialization; the scale is irrelevant after normalization
    /// except for the biases, which start at zero.
    pub fn new_random(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = layer_dims(arch.n_layers, arch.width);
        let raw = dims
            .iter()
            .map(|&(r, c)| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let bias = dims.iter().map(|&(r, _)| DVector::zeros(r)).collect();
        Self::from_parts(arch, raw, bias, vec![1.0; N_FEATURES], [arch.u_max; 3])
    }

    pub fn from_parts(
        arch: Architecture,
        raw: Vec<DMatrix<f64>>,
        bias: Vec<DVector<f64>>,
        input_norm: Vec<f64>,
        output_norm: [f64; 3],
    ) -> Result<Self> {
        if arch.width == 0 || !(arch.c_nn > 0.0) || !(arch.u_max > 0.0) {
            return Err(Error::invalid("need width > 0, c_nn > 0, u_max > 0"));
        }
        let dims = layer_dims(arch.n_layers, arch.width);
        if raw.len() != dims.len() || bias.len() != dims.len() {
            return Err(Error::Dimension {
                expected: dims.len(),
                got: raw.len().min(bias.len()),
            });
        }
        for ((w, b), &(r, c)) in raw.iter().zip(&bias).zip(&dims) {
            if w.shape() != (r, c) || b.len() != r {
                return Err(Error::Dimension {
                    expected: r * c,
                    got: w.len(),
                });
            }
        }
        if input_norm.len() != N_FEATURES {
            return Err(Error::Dimension {
                expected: N_FEATURES,
                got: input_norm.len(),
            });
        }
        if input_norm.iter().chain(&output_norm).any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("normalization constants must be positive and finite"));
        }
        let mut model = Self {
            n_layers: arch.n_layers,
            width: arch.width,
            c_nn: arch.c_nn,
            u_max: arch.u_max,
            raw,
            bias,
            input_norm,
            output_norm,
            eff: Vec::new(),
            spec: Vec::new(),
        };
        model.refresh();
        Ok(model)
    }

    fn refresh(&mut self) {
        self.spec = self.raw.iter().map(power_iteration).collect();
        self.eff = self
            .raw
            .iter()
            .zip(&self.spec)
            .map(|(w, s)| {
                if s.sigma == 0.0 {
                    DMatrix::zeros(w.nrows(), w.ncols())
                } else {
                    w * (self.c_nn / s.sigma)
                }
            })
            .collect();
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            n_layers: self.n_layers,
            width: self.width,
            c_nn: self.c_nn,
            u_max: self.u_max,
        }
    }

    pub fn raw_weights(&self) -> &[DMatrix<f64>] {
        &self.raw
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.bias
    }

    pub fn effective_weights(&self) -> &[DMatrix<f64>] {
        &self.eff
    }

    pub fn input_norm(&self) -> &[f64] {
        &self.input_norm
    }

    pub fn output_norm(&self) -> [f64; 3] {
        self.output_norm
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn c_nn(&self) -> f64 {
        self.c_nn
    }

    pub fn set_normalization(&mut self, input_norm: Vec<f64>, output_norm: [f64; 3]) -> Result<()> {
        *self = Self::from_parts(
            self.architecture(),
            std::mem::take(&mut self.raw),
            std::mem::take(&mut self.bias),
            input_norm,
            output_norm,
        )?;
        Ok(())
    }

    pub fn output_scale(&self) -> [f64; 3] {
        self.output_norm.map(|s| s.min(self.u_max))
    }

    pub fn n_params(&self) -> usize {
        self.raw.iter().map(|w| w.len()).sum::<usize>() + self.bias.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters flattened layer by layer (weights row-major, then bias).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.raw.iter().zip(&self.bias) {
            out.extend(w.transpose().iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Dimension {
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let mut k = 0;
        for (w, b) in self.raw.iter_mut().zip(self.bias.iter_mut()) {
            let (r, c) = w.shape();
            *w = DMatrix::from_row_slice(r, c, &flat[k..k + r * c]);
            k += r * c;
            b.copy_from_slice(&flat[k..k + r]);
            k += r;
        }
        self.refresh();
        Ok(())
    }

    /// Plain gradient step `θ ← θ − lr·g`.
    pub fn sgd_step(&mut self, grad: &ModelGrad, lr: f64) {
        for (w, g) in self.raw.iter_mut().zip(&grad.w) {
            *w -= g * lr;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.b) {
            *b -= g * lr;
        }
        self.refresh();
    }

    /// Forward pass on already normalized features.
    pub fn forward_normalized(&self, z: &[f64]) -> Result<Vec3> {
        if z.len() != N_FEATURES {
            return Err(Error::Dimension {
                expected: N_FEATURES,
                got: z.len(),
            });
        }
        let mut a = DVector::from_column_slice(z);
        for (w, b) in self.eff.iter().zip(&self.bias) {
            a = (w * &a + b).map(f64::tanh);
        }
        let s = self.output_scale();
        Ok(Vec3::new(s[0] * a[0], s[1] * a[1], s[2] * a[2]))
    }

    /// Forward pass on raw features (divided by the input normalization).
    pub fn forward_raw(&self, f: &[f64; N_FEATURES]) -> Result<Vec3> {
        let z: Vec<f64> = f.iter().zip(&self.input_norm).map(|(x, s)| x / s).collect();
        self.forward_normalized(&z)
    }

    pub fn trace(&self, z: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.eff.len() + 1);
        acts.push(DVector::from_column_slice(z));
        for (w, b) in self.eff.iter().zip(&self.bias) {
            let next = (w * acts.last().expect("non-empty") + b).map(f64::tanh);
            acts.push(next);
        }
        Trace { acts }
    }

    pub fn output_of(&self, trace: &Trace) -> Vec3 {
        let a = trace.acts.last().expect("non-empty");
        let s = self.output_scale();
        Vec3::new(s[0] * a[0], s[1] * a[1], s[2] * a[2])
    }

    /// Backpropagates `g_out = ∂L/∂u` through one traced pass.
    ///
    /// When `acc` is given, accumulates `∂L/∂W_eff` and `∂L/∂b` into it
    /// (effective-weight space; see [`Self::to_raw_grad`]). Returns `∂L/∂z`.
    pub fn backward(&self, trace: &Trace, g_out: &Vec3, mut acc: Option<&mut ModelGrad>) -> DVector<f64> {
        let s = self.output_scale();
        let mut g = DVector::from_vec(vec![s[0] * g_out.x, s[1] * g_out.y, s[2] * g_out.z]);
        for l in (0..self.eff.len()).rev() {
            let a_next = &trace.acts[l + 1];
            let g_pre = g.component_mul(&a_next.map(|a| 1.0 - a * a));
            if let Some(acc) = acc.as_deref_mut() {
                acc.w[l].ger(1.0, &g_pre, &trace.acts[l], 1.0);
                acc.b[l] += &g_pre;
            }
            g = self.eff[l].transpose() * g_pre;
        }
        g
    }

    /// Maps an effective-weight gradient to raw weights through `W = cΩ/σ(Ω)`:
    /// `∂L/∂Ω = (c/σ)(G − (⟨G,Ω⟩/σ) u₁v₁ᵀ)`.
    pub fn to_raw_grad(&self, g_eff: &ModelGrad) -> ModelGrad {
        let w = g_eff
            .w
            .iter()
            .zip(&self.raw)
            .zip(&self.spec)
            .map(|((g, omega), sp)| {
                if sp.sigma == 0.0 {
                    return DMatrix::zeros(g.nrows(), g.ncols());
                }
                let inner = g.dot(omega) / sp.sigma;
                let mut out = g.clone();
                out.ger(-inner, &sp.u, &sp.v, 1.0);
                out * (self.c_nn / sp.sigma)
            })
            .collect();
        ModelGrad { w, b: g_eff.b.clone() }
    }

    pub fn layer_spectral_norms(&self) -> Vec<f64> {
        self.eff.iter().map(super::spectral::spectral_norm).collect()
    }

    pub fn lipschitz_bound(&self) -> LipschitzReport {
        let core = self.c_nn.powi(self.eff.len() as i32);
        let min_input_norm = self.input_norm.iter().copied().fold(f64::INFINITY, f64::min);
        LipschitzReport {
            core,
            output_scale: self.u_max,
            min_input_norm,
            total: core * self.u_max / min_input_norm,
        }
    }
}

/// `(rows, cols)` of each of the `n_layers + 1` weight matrices.
fn layer_dims(n_layers: usize, width: usize) -> Vec<(usize, usize)> {
    if n_layers == 0 {
        return vec![(3, N_FEATURES)];
    }
    let mut dims = vec![(width, N_FEATURES)];
    dims.extend((1..n_layers).map(|_| (width, width)));
    dims.push((3, width));
    dims
}
