//! 1-D fully-convolutional denoiser with hand-written forward and backward
//! passes in `f64`.
//!
//! # Overview
//!
//! A network is a stack of `L` correlation layers. Layer `i` maps
//! `k_{i-1}` feature maps (with `k_0 = 1`, the noise-estimate input) to
//! `k_i` maps using length-`f_i` kernels, "same" zero padding, and a bias
//! per output map; every layer but the last is followed by
//! `ReLU(x) = max(x, 0)`. The last layer has a single output map — the
//! denoised noise estimate — and no activation, so the output can take
//! either sign.
//!
//! "Convolution" here is cross-correlation with a centered window:
//!
//! ```text
//! out(v) = bias + sum_m sum_t kernel[m][t] * in[m][v + t - (f-1)/2]
//! ```
//!
//! with zero contribution outside the block. Filter lengths are therefore
//! required to be odd so the window has an unambiguous center.
//!
//! # Parameter layout
//!
//! Layer `i` stores its kernels in one flat vector indexed
//! `weights[i][((j * k_in) + m) * f + t]` where `j` is the output map, `m`
//! the input map, and `t` the tap (`t = offset + (f-1)/2`). Biases are
//! `biases[i][j]`. The [`io`] module serializes exactly this layout.
//!
//! Submodules: [`loss`] (quadratic and normality-penalized losses with
//! analytic gradients), [`adam`] (optimizer), [`io`] (model files).

pub mod adam;
pub mod io;
pub mod loss;

use rand::RngExt as _;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Structure
// ---------------------------------------------------------------------------

/// Layer-count/filter-length/feature-map description of a network, e.g.
/// `{4; 9,3,3,15; 64,32,16,1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStructure", into = "RawStructure")]
pub struct CnnStructure {
    filters: Vec<usize>,
    maps: Vec<usize>,
}

/// Serialization mirror of [`CnnStructure`]: `layers` is optional and, when
/// present, cross-checked against the array lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawStructure {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
    filters: Vec<usize>,
    maps: Vec<usize>,
}

impl From<CnnStructure> for RawStructure {
    fn from(s: CnnStructure) -> Self {
        RawStructure {
            layers: Some(s.filters.len()),
            filters: s.filters,
            maps: s.maps,
        }
    }
}

impl TryFrom<RawStructure> for CnnStructure {
    type Error = String;

    fn try_from(raw: RawStructure) -> Result<Self, String> {
        if let Some(l) = raw.layers {
            if l != raw.filters.len() {
                return Err(format!(
                    "declared {l} layers but {} filter lengths",
                    raw.filters.len()
                ));
            }
        }
        CnnStructure::new(raw.filters, raw.maps).map_err(|e| e.to_string())
    }
}

/// Structure validation failure.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StructureError {
    #[error("network must have at least one layer")]
    Empty,
    #[error("got {filters} filter lengths but {maps} map counts")]
    LengthMismatch { filters: usize, maps: usize },
    #[error("layer {layer} filter length {len} must be odd and >= 1")]
    EvenFilter { layer: usize, len: usize },
    #[error("layer {layer} must have at least one feature map")]
    ZeroMaps { layer: usize },
    #[error("last layer must have exactly one output map, got {got}")]
    LastLayerMaps { got: usize },
}

impl CnnStructure {
    /// Validates and builds a structure. `filters[i]` and `maps[i]` describe
    /// layer `i + 1`; the input is always a single map.
    pub fn new(filters: Vec<usize>, maps: Vec<usize>) -> Result<Self, StructureError> {
        if filters.is_empty() {
            return Err(StructureError::Empty);
        }
        if filters.len() != maps.len() {
            return Err(StructureError::LengthMismatch {
                filters: filters.len(),
                maps: maps.len(),
            });
        }
        for (i, &f) in filters.iter().enumerate() {
            if f == 0 || f % 2 == 0 {
                return Err(StructureError::EvenFilter { layer: i + 1, len: f });
            }
        }
        for (i, &k) in maps.iter().enumerate() {
            if k == 0 {
                return Err(StructureError::ZeroMaps { layer: i + 1 });
            }
        }
        if *maps.last().unwrap() != 1 {
            return Err(StructureError::LastLayerMaps {
                got: *maps.last().unwrap(),
            });
        }
        Ok(CnnStructure { filters, maps })
    }

    /// Number of layers `L`.
    pub fn num_layers(&self) -> usize {
        self.filters.len()
    }

    /// Per-layer filter lengths `f_1..f_L`.
    pub fn filters(&self) -> &[usize] {
        &self.filters
    }

    /// Per-layer output map counts `k_1..k_L`.
    pub fn maps(&self) -> &[usize] {
        &self.maps
    }

    /// Input map count of layer `i` (0-based): `k_0 = 1`.
    pub fn maps_in(&self, layer: usize) -> usize {
        if layer == 0 {
            1
        } else {
            self.maps[layer - 1]
        }
    }

    /// Total trainable parameter count:
    /// `sum_i f_i * k_{i-1} * k_i + sum_i k_i`.
    pub fn param_count(&self) -> usize {
        let weights: usize = (0..self.num_layers())
            .map(|i| self.filters[i] * self.maps_in(i) * self.maps[i])
            .sum();
        let biases: usize = self.maps.iter().sum();
        weights + biases
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A concrete parameter set for a [`CnnStructure`]. See the module docs for
/// the flat weight layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    structure: CnnStructure,
    /// `weights[i][((j * k_in) + m) * f + t]`.
    weights: Vec<Vec<f64>>,
    /// `biases[i][j]`.
    biases: Vec<Vec<f64>>,
}

/// Per-parameter values shaped like a model: gradients or optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    /// All-zero gradients shaped like `model`.
    pub fn zeros_like(model: &CnnModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Elementwise `self += other`.
    ///
    /// # Panics
    ///
    /// Panics on shape mismatch.
    pub fn accumulate(&mut self, other: &Gradients) {
        assert_eq!(self.weights.len(), other.weights.len(), "layer count mismatch");
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            assert_eq!(a.len(), b.len(), "weight shape mismatch");
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            assert_eq!(a.len(), b.len(), "bias shape mismatch");
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Elementwise `self *= s`.
    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= s;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= s;
            }
        }
    }
}

/// Activations retained by [`CnnModel::forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// The layer-0 input (single map, length `N`).
    input: Vec<f64>,
    /// Pre-activation outputs per layer, map-major (`k_i * N`).
    pre: Vec<Vec<f64>>,
    /// Post-activation outputs per layer (last layer: same as `pre`).
    post: Vec<Vec<f64>>,
}

impl CnnModel {
    /// All-zero parameters (outputs 0 for any input).
    pub fn zeros(structure: CnnStructure) -> Self {
        let weights = (0..structure.num_layers())
            .map(|i| vec![0.0; structure.filters()[i] * structure.maps_in(i) * structure.maps()[i]])
            .collect();
        let biases = structure.maps().iter().map(|&k| vec![0.0; k]).collect();
        CnnModel {
            structure,
            weights,
            biases,
        }
    }

    /// Xavier initialization: each kernel entry uniform on
    /// `+-sqrt(6 / (fan_in + fan_out))` with `fan_in = f_i * k_{i-1}` and
    /// `fan_out = f_i * k_i`; biases zero.
    pub fn xavier_init<R: rand::Rng + ?Sized>(structure: CnnStructure, rng: &mut R) -> Self {
        let mut model = CnnModel::zeros(structure);
        for i in 0..model.structure.num_layers() {
            let f = model.structure.filters()[i];
            let fan_in = (f * model.structure.maps_in(i)) as f64;
            let fan_out = (f * model.structure.maps()[i]) as f64;
            let bound = (6.0 / (fan_in + fan_out)).sqrt();
            for w in &mut model.weights[i] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        model
    }

    /// Builds a model from explicit per-layer parameters.
    ///
    /// # Panics
    ///
    /// Panics if any parameter vector does not match the structure's shape.
    pub fn from_parameters(
        structure: CnnStructure,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Self {
        assert_eq!(weights.len(), structure.num_layers(), "layer count mismatch");
        assert_eq!(biases.len(), structure.num_layers(), "layer count mismatch");
        for i in 0..structure.num_layers() {
            let expected = structure.filters()[i] * structure.maps_in(i) * structure.maps()[i];
            assert_eq!(weights[i].len(), expected, "layer {i} weight shape");
            assert_eq!(biases[i].len(), structure.maps()[i], "layer {i} bias shape");
        }
        CnnModel {
            structure,
            weights,
            biases,
        }
    }

    /// The model's structure.
    pub fn structure(&self) -> &CnnStructure {
        &self.structure
    }

    /// Per-layer flat weight vectors (see module docs for the index layout).
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Per-layer bias vectors.
    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Mutable weight access, for diagnostics such as finite-difference
    /// gradient verification. Shapes must not change.
    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    /// Mutable bias access; see [`CnnModel::weights_mut`].
    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.structure.param_count()
    }

    /// True when every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|w| w.is_finite())
            && self.biases.iter().flatten().all(|b| b.is_finite())
    }

    /// Runs the network on one block, returning the denoised estimate only.
    pub fn forward_only(&self, input: &[f64]) -> Vec<f64> {
        let n = input.len();
        let mut current = input.to_vec();
        let layers = self.structure.num_layers();
        for i in 0..layers {
            let mut out = self.conv_layer(i, &current, n);
            if i + 1 < layers {
                for x in &mut out {
                    *x = x.max(0.0);
                }
            }
            current = out;
        }
        current
    }

    /// Runs the network on one block, retaining activations for
    /// [`CnnModel::backward`]. Returns `(output, cache)`; the output has the
    /// input's length.
    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        let n = input.len();
        let layers = self.structure.num_layers();
        let mut pre = Vec::with_capacity(layers);
        let mut post = Vec::with_capacity(layers);
        let mut current = input.to_vec();
        for i in 0..layers {
            let z = self.conv_layer(i, &current, n);
            let a = if i + 1 < layers {
                z.iter().map(|&x| x.max(0.0)).collect()
            } else {
                z.clone()
            };
            current = a.clone();
            pre.push(z);
            post.push(a);
        }
        let output = post.last().unwrap().clone();
        (
            output,
            ForwardCache {
                input: input.to_vec(),
                pre,
                post,
            },
        )
    }

    /// One correlation layer: `input` holds `k_in` maps of length `n`,
    /// map-major; the result holds `k_out` maps.
    fn conv_layer(&self, layer: usize, input: &[f64], n: usize) -> Vec<f64> {
        let f = self.structure.filters()[layer];
        let k_in = self.structure.maps_in(layer);
        let k_out = self.structure.maps()[layer];
        assert_eq!(input.len(), k_in * n, "layer {layer} input shape");
        let center = (f - 1) / 2;
        let w = &self.weights[layer];
        let mut out = vec![0.0; k_out * n];
        for j in 0..k_out {
            let out_map = &mut out[j * n..(j + 1) * n];
            out_map.fill(self.biases[layer][j]);
            for m in 0..k_in {
                let in_map = &input[m * n..(m + 1) * n];
                let w_base = ((j * k_in) + m) * f;
                for t in 0..f {
                    let coef = w[w_base + t];
                    if coef == 0.0 {
                        continue;
                    }
                    // in index = v + t - center; keep both in range.
                    let shift = t as isize - center as isize;
                    let v_lo = (-shift).max(0) as usize;
                    let v_hi = ((n as isize - shift).min(n as isize)).max(0) as usize;
                    for v in v_lo..v_hi {
                        out_map[v] += coef * in_map[(v as isize + shift) as usize];
                    }
                }
            }
        }
        out
    }

    /// Backpropagates `dloss_dout` (gradient of a scalar loss with respect
    /// to the network output) through the cached forward pass, returning
    /// gradients for every weight and bias. The ReLU subgradient at 0 is 0.
    ///
    /// # Panics
    ///
    /// Panics if `cache` does not match this model's structure or
    /// `dloss_dout` has the wrong length.
    pub fn backward(&self, cache: &ForwardCache, dloss_dout: &[f64]) -> Gradients {
        let layers = self.structure.num_layers();
        assert_eq!(cache.pre.len(), layers, "cache does not match model depth");
        let n = cache.input.len();
        assert_eq!(dloss_dout.len(), n, "output gradient length mismatch");

        let mut grads = Gradients::zeros_like(self);
        // delta = dloss/d(pre-activation of current layer), map-major.
        let mut delta = dloss_dout.to_vec();
        for i in (0..layers).rev() {
            let f = self.structure.filters()[i];
            let k_in = self.structure.maps_in(i);
            let k_out = self.structure.maps()[i];
            let center = (f - 1) / 2;
            assert_eq!(delta.len(), k_out * n, "delta shape at layer {i}");
            let input: &[f64] = if i == 0 { &cache.input } else { &cache.post[i - 1] };

            for j in 0..k_out {
                let d_map = &delta[j * n..(j + 1) * n];
                grads.biases[i][j] = d_map.iter().sum();
                for m in 0..k_in {
                    let in_map = &input[m * n..(m + 1) * n];
                    let w_base = ((j * k_in) + m) * f;
                    for t in 0..f {
                        let shift = t as isize - center as isize;
                        let v_lo = (-shift).max(0) as usize;
                        let v_hi = ((n as isize - shift).min(n as isize)).max(0) as usize;
                        let mut acc = 0.0;
                        for v in v_lo..v_hi {
                            acc += d_map[v] * in_map[(v as isize + shift) as usize];
                        }
                        grads.weights[i][w_base + t] = acc;
                    }
                }
            }

            if i == 0 {
                break;
            }

            // Gradient with respect to this layer's input, then the ReLU
            // mask of the previous layer's pre-activations.
            let mut d_in = vec![0.0; k_in * n];
            let w = &self.weights[i];
            for j in 0..k_out {
                let d_map = &delta[j * n..(j + 1) * n];
                for m in 0..k_in {
                    let d_in_map = &mut d_in[m * n..(m + 1) * n];
                    let w_base = ((j * k_in) + m) * f;
                    for t in 0..f {
                        let coef = w[w_base + t];
                        if coef == 0.0 {
                            continue;
                        }
                        let shift = t as isize - center as isize;
                        // forward read in[v + shift] -> adjoint writes
                        // d_in[u] += w * delta[u - shift].
                        let u_lo = shift.max(0) as usize;
                        let u_hi = ((n as isize + shift).min(n as isize)).max(0) as usize;
                        for u in u_lo..u_hi {
                            d_in_map[u] += coef * d_map[(u as isize - shift) as usize];
                        }
                    }
                }
            }
            let prev_pre = &cache.pre[i - 1];
            for (d, &z) in d_in.iter_mut().zip(prev_pre) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = d_in;
        }
        grads
    }
}

// ---------------------------------------------------------------------------
// Standalone single-map correlation
// ---------------------------------------------------------------------------

/// Centered cross-correlation of one sequence with one kernel plus a bias:
/// `out(v) = bias + sum_t kernel[t] * input[v + t - (f-1)/2]`, zero outside
/// the block; the output has the input's length.
///
/// # Panics
///
/// Panics if the kernel length is even or zero, or the input is empty.
pub fn conv1d(input: &[f64], kernel: &[f64], bias: f64) -> Vec<f64> {
    assert!(
        kernel.len() % 2 == 1,
        "kernel length must be odd for centered correlation"
    );
    assert!(!input.is_empty(), "input must be non-empty");
    let n = input.len();
    let center = (kernel.len() - 1) / 2;
    let mut out = vec![bias; n];
    for (t, &coef) in kernel.iter().enumerate() {
        let shift = t as isize - center as isize;
        let v_lo = (-shift).max(0) as usize;
        let v_hi = ((n as isize - shift).min(n as isize)).max(0) as usize;
        for (v, o) in out.iter_mut().enumerate().take(v_hi).skip(v_lo) {
            *o += coef * input[(v as isize + shift) as usize];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
