//! The learnable scene function `(x, d) -> (thermal, density)`.
//!
//! Positions (already contracted into `[-1, 1]³`) and view directions are
//! lifted with sinusoidal encodings and fed to a ReLU MLP. Density branches
//! off the trunk before direction features join, so it depends on position
//! alone; the thermal value comes from a small direction-conditioned head.
//!
//! ```text
//! enc(x) ─▶ [dense+relu] × H ─┬─▶ dense ─▶ softplus ─▶ σ
//!                             └─▶ concat(enc(d)) ─▶ dense+relu ─▶ dense ─▶ sigmoid ─▶ t
//! ```
//!
//! All parameters live in one flat buffer with a parallel gradient buffer so
//! optimizers and checkpoints can treat them uniformly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::rng::stream_rng;
use crate::{Error, Result, Vec3};

/// Sinusoidal encoding settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub position_frequencies: usize,
    pub direction_frequencies: usize,
    pub include_input: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            position_frequencies: 10,
            direction_frequencies: 4,
            include_input: true,
        }
    }
}

impl EncodingConfig {
    pub fn position_dim(&self) -> usize {
        encoded_len(self.position_frequencies, self.include_input)
    }

    pub fn direction_dim(&self) -> usize {
        encoded_len(self.direction_frequencies, self.include_input)
    }
}

/// Length of the encoding of a 3-vector: `3 · (include + 2L)`.
pub fn encoded_len(frequencies: usize, include_input: bool) -> usize {
    3 * (usize::from(include_input) + 2 * frequencies)
}

/// Writes the encoding of `x` into `out`.
///
/// Layout: `[x₀ x₁ x₂]` when `include_input`, then for each `j` in
/// `0..frequencies` the block `[sin(2ʲπx₀..₂), cos(2ʲπx₀..₂)]`.
pub fn encode_into(x: &Vec3, frequencies: usize, include_input: bool, out: &mut [f64]) {
    encode_windowed(x, frequencies, include_input, frequencies as f64, out);
}

/// Weight of frequency band `band` when only `bandwidth` bands are open:
/// 0 below, 1 above, and a cosine ramp across the band being opened.
pub fn band_weight(band: usize, bandwidth: f64) -> f64 {
    let r = (bandwidth - band as f64).clamp(0.0, 1.0);
    if r == 1.0 {
        1.0
    } else {
        0.5 * (1.0 - libm::cos(PI * r))
    }
}

/// [`encode_into`] with every sinusoid of band `j` scaled by
/// [`band_weight`]`(j, bandwidth)`.
pub fn encode_windowed(x: &Vec3, frequencies: usize, include_input: bool, bandwidth: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), encoded_len(frequencies, include_input));
    let mut k = 0;
    if include_input {
        out[..3].copy_from_slice(x.as_slice());
        k = 3;
    }
    let mut scale = PI;
    for band in 0..frequencies {
        let w = band_weight(band, bandwidth);
        for i in 0..3 {
            let (s, c) = libm::sincos(scale * x[i]);
            out[k + i] = w * s;
            out[k + 3 + i] = w * c;
        }
        k += 6;
        scale *= 2.0;
    }
}

pub fn encode(x: &Vec3, frequencies: usize, include_input: bool) -> Vec<f64> {
    let mut out = vec![0.0; encoded_len(frequencies, include_input)];
    encode_into(x, frequencies, include_input, &mut out);
    out
}

/// Chain rule through [`encode_windowed`] given the encoded values and the
/// upstream gradient with respect to them. Band weights are already folded
/// into the encoded values.
fn encode_backward(encoded: &[f64], grad: &[f64], frequencies: usize, include_input: bool) -> Vec3 {
    let mut g = Vec3::zeros();
    let mut k = 0;
    if include_input {
        for i in 0..3 {
            g[i] += grad[i];
        }
        k = 3;
    }
    let mut scale = PI;
    for _ in 0..frequencies {
        for i in 0..3 {
            // d sin/dx = s·cos, d cos/dx = -s·sin
            g[i] += scale * (grad[k + i] * encoded[k + 3 + i] - grad[k + 3 + i] * encoded[k + i]);
        }
        k += 6;
        scale *= 2.0;
    }
    g
}

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldArch {
    pub encoding: EncodingConfig,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub thermal_width: usize,
}

impl Default for FieldArch {
    fn default() -> Self {
        Self {
            encoding: EncodingConfig::default(),
            hidden_layers: 4,
            hidden_width: 64,
            thermal_width: 32,
        }
    }
}

impl FieldArch {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.hidden_width == 0 || self.thermal_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "field needs at least one hidden layer and nonzero widths, got {self:?}"
            )));
        }
        if self.encoding.position_dim() == 0 || self.encoding.direction_dim() == 0 {
            return Err(Error::InvalidConfig(
                "encoding must produce at least one feature".into(),
            ));
        }
        Ok(())
    }

    /// `(inputs, outputs)` of every dense layer in evaluation order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let w = self.hidden_width;
        let mut shapes = Vec::with_capacity(self.hidden_layers + 3);
        shapes.push((self.encoding.position_dim(), w));
        for _ in 1..self.hidden_layers {
            shapes.push((w, w));
        }
        shapes.push((w, 1));
        shapes.push((w + self.encoding.direction_dim(), self.thermal_width));
        shapes.push((self.thermal_width, 1));
        shapes
    }

    pub fn density_layer(&self) -> usize {
        self.hidden_layers
    }

    pub fn thermal_hidden_layer(&self) -> usize {
        self.hidden_layers + 1
    }

    pub fn thermal_layer(&self) -> usize {
        self.hidden_layers + 2
    }
}

/// Location of one dense layer inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpan {
    pub inputs: usize,
    pub outputs: usize,
    /// Start of the row-major `outputs × inputs` weight block; biases follow.
    pub offset: usize,
}

impl LayerSpan {
    pub fn weight_range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    pub fn bias_range(&self) -> core::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    pub fn len(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }

    pub fn is_empty(&self) -> bool {
        self.outputs == 0
    }
}

/// All learnable weights of the field plus their gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    arch: FieldArch,
    spans: Vec<LayerSpan>,
    values: Vec<f64>,
    grads: Vec<f64>,
    /// Number of open position bands, in `[0, position_frequencies]`.
    bandwidth: f64,
}

/// Network outputs at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOutput {
    pub thermal: f64,
    pub density: f64,
}

/// Gradients with respect to the network inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputGrad {
    pub position: Vec3,
    pub direction: Vec3,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-libm::fabs(z)))
}

/// `fan_in`-scaled uniform bound `√(6 / fan_in)`.
pub fn he_uniform_bound(fan_in: usize) -> f64 {
    libm::sqrt(6.0 / fan_in as f64)
}

impl FieldParams {
    /// All-zero parameters for `arch`.
    pub fn zeros(arch: FieldArch) -> Result<Self> {
        arch.validate()?;
        let mut spans = Vec::new();
        let mut offset = 0;
        for (inputs, outputs) in arch.layer_shapes() {
            let span = LayerSpan {
                inputs,
                outputs,
                offset,
            };
            offset += span.len();
            spans.push(span);
        }
        Ok(Self {
            arch,
            spans,
            values: vec![0.0; offset],
            grads: vec![0.0; offset],
            bandwidth: arch.encoding.position_frequencies as f64,
        })
    }

    /// Replaces the parameter values, keeping the layout.
    pub fn with_values(arch: FieldArch, values: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        if values.len() != params.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "architecture needs {} parameters, got {}",
                params.values.len(),
                values.len()
            )));
        }
        params.values = values;
        Ok(params)
    }

    pub fn arch(&self) -> &FieldArch {
        &self.arch
    }

    /// Open position bands; all of them unless annealing narrowed it.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Limits the position encoding to `bandwidth` bands, clamped to the
    /// available range. Non-finite values open every band.
    pub fn set_bandwidth(&mut self, bandwidth: f64) {
        let full = self.arch.encoding.position_frequencies as f64;
        self.bandwidth = if bandwidth.is_nan() { full } else { bandwidth.clamp(0.0, full) };
    }

    pub fn spans(&self) -> &[LayerSpan] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    /// Parameter values and gradient buffer, borrowed together.
    pub fn split_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.values, &mut self.grads)
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Index of the first layer holding a non-finite parameter, if any.
    pub fn check_finite(&self) -> Result<()> {
        for (layer, span) in self.spans.iter().enumerate() {
            let block = &self.values[span.offset..span.offset + span.len()];
            if !block.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteParameter { layer });
            }
        }
        Ok(())
    }

    fn dense(&self, layer: usize, input: &[f64], out: &mut [f64]) -> Result<()> {
        let span = self.spans[layer];
        debug_assert_eq!(input.len(), span.inputs);
        let weights = &self.values[span.weight_range()];
        let bias = &self.values[span.bias_range()];
        for (o, row) in weights.chunks_exact(span.inputs).enumerate() {
            let mut acc = bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            if !acc.is_finite() {
                return Err(Error::NonFiniteParameter { layer });
            }
            out[o] = acc;
        }
        Ok(())
    }

    /// Accumulates `grad_out ⊗ input` into the layer gradient and writes
    /// `Wᵀ grad_out` into `grad_in`.
    fn dense_backward(&mut self, layer: usize, input: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
        let span = self.spans[layer];
        grad_in.iter_mut().for_each(|g| *g = 0.0);
        let (values, grads) = (&self.values, &mut self.grads);
        let weights = &values[span.weight_range()];
        let bias_start = span.bias_range().start;
        for o in 0..span.outputs {
            let g = grad_out[o];
            if g == 0.0 {
                continue;
            }
            grads[bias_start + o] += g;
            let row = span.offset + o * span.inputs;
            let w_row = &weights[o * span.inputs..(o + 1) * span.inputs];
            for (i, (x, w)) in input.iter().zip(w_row).enumerate() {
                grads[row + i] += g * x;
                grad_in[i] += g * w;
            }
        }
    }

    /// Forward pass keeping every intermediate in `cache` for backward.
    pub fn forward(&self, x: &Vec3, d: &Vec3, cache: &mut FieldCache) -> Result<FieldOutput> {
        cache.ensure(&self.arch);
        let enc = self.arch.encoding;
        let w = self.arch.hidden_width;
        cache.x = *x;
        cache.d = *d;
        encode_windowed(
            x,
            enc.position_frequencies,
            enc.include_input,
            self.bandwidth,
            &mut cache.enc_x,
        );
        encode_into(d, enc.direction_frequencies, enc.include_input, &mut cache.enc_d);

        for l in 0..self.arch.hidden_layers {
            let (before, rest) = cache.trunk_act.split_at_mut(l * w);
            let input: &[f64] = if l == 0 { &cache.enc_x } else { &before[(l - 1) * w..] };
            let pre = &mut cache.trunk_pre[l * w..(l + 1) * w];
            self.dense(l, input, pre)?;
            for (a, p) in rest[..w].iter_mut().zip(pre.iter()) {
                *a = p.max(0.0);
            }
        }
        let last = (self.arch.hidden_layers - 1) * w;
        let features = &cache.trunk_act[last..last + w];

        let mut density_pre = [0.0];
        self.dense(self.arch.density_layer(), features, &mut density_pre)?;
        cache.density_pre = density_pre[0];

        cache.thermal_in[..w].copy_from_slice(features);
        cache.thermal_in[w..].copy_from_slice(&cache.enc_d);
        self.dense(
            self.arch.thermal_hidden_layer(),
            &cache.thermal_in,
            &mut cache.thermal_hidden_pre,
        )?;
        for (a, p) in cache
            .thermal_hidden_act
            .iter_mut()
            .zip(cache.thermal_hidden_pre.iter())
        {
            *a = p.max(0.0);
        }
        let mut thermal_pre = [0.0];
        self.dense(
            self.arch.thermal_layer(),
            &cache.thermal_hidden_act,
            &mut thermal_pre,
        )?;
        cache.thermal_pre = thermal_pre[0];

        let out = FieldOutput {
            thermal: sigmoid(cache.thermal_pre),
            density: softplus(cache.density_pre),
        };
        cache.output = out;
        Ok(out)
    }

    /// Forward pass without keeping a cache around.
    pub fn evaluate(&self, x: &Vec3, d: &Vec3) -> Result<FieldOutput> {
        let mut cache = FieldCache::new(&self.arch);
        self.forward(x, d, &mut cache)
    }

    /// Reverse pass: `grads += ∂(d_thermal·t + d_density·σ)/∂Θ`.
    ///
    /// Returns the gradient with respect to the (contracted) position and the
    /// direction fed to [`forward`](Self::forward).
    pub fn backward(&mut self, cache: &mut FieldCache, d_thermal: f64, d_density: f64) -> InputGrad {
        let arch = self.arch;
        let w = arch.hidden_width;
        let h = arch.hidden_layers;
        let out = cache.output;
        let FieldCache {
            enc_x,
            enc_d,
            trunk_pre,
            trunk_act,
            density_pre,
            thermal_in,
            thermal_hidden_pre,
            thermal_hidden_act,
            grad_a,
            grad_b,
            grad_thermal_in,
            grad_thermal_hidden,
            ..
        } = cache;

        // thermal head
        let g_thermal_pre = [d_thermal * out.thermal * (1.0 - out.thermal)];
        self.dense_backward(
            arch.thermal_layer(),
            thermal_hidden_act,
            &g_thermal_pre,
            grad_thermal_hidden,
        );
        for (g, p) in grad_thermal_hidden.iter_mut().zip(thermal_hidden_pre.iter()) {
            if *p <= 0.0 {
                *g = 0.0;
            }
        }
        self.dense_backward(
            arch.thermal_hidden_layer(),
            thermal_in,
            grad_thermal_hidden,
            grad_thermal_in,
        );

        // density head: softplus' = sigmoid
        let g_density_pre = [d_density * sigmoid(*density_pre)];
        let last = (h - 1) * w;
        let grad_features = &mut grad_a[..w];
        self.dense_backward(
            arch.density_layer(),
            &trunk_act[last..last + w],
            &g_density_pre,
            grad_features,
        );
        for (g, t) in grad_features.iter_mut().zip(&grad_thermal_in[..w]) {
            *g += t;
        }
        let direction = encode_backward(
            enc_d,
            &grad_thermal_in[w..],
            arch.encoding.direction_frequencies,
            arch.encoding.include_input,
        );

        // trunk, last layer first; grad_a holds ∂/∂activation of layer l
        for l in (0..h).rev() {
            let g_act = &mut grad_a[..w];
            for (g, p) in g_act.iter_mut().zip(&trunk_pre[l * w..(l + 1) * w]) {
                if *p <= 0.0 {
                    *g = 0.0;
                }
            }
            let input: &[f64] = if l == 0 { &enc_x[..] } else { &trunk_act[(l - 1) * w..l * w] };
            let in_len = input.len();
            self.dense_backward(l, input, &grad_a[..w], &mut grad_b[..in_len]);
            core::mem::swap(grad_a, grad_b);
        }
        let position = encode_backward(
            enc_x,
            &grad_a[..enc_x.len()],
            arch.encoding.position_frequencies,
            arch.encoding.include_input,
        );
        InputGrad {
            position,
            direction,
        }
    }
}

/// Deterministic He-uniform initialization; biases start at zero.
pub fn init_params(seed: u64, arch: FieldArch) -> Result<FieldParams> {
    let mut params = FieldParams::zeros(arch)?;
    let mut rng = stream_rng(seed, 0);
    let spans = params.spans.clone();
    for span in spans {
        let bound = he_uniform_bound(span.inputs);
        for v in &mut params.values[span.weight_range()] {
            *v = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

/// Intermediate values of one forward pass plus scratch space for backward.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCache {
    arch: Option<FieldArch>,
    x: Vec3,
    d: Vec3,
    enc_x: Vec<f64>,
    enc_d: Vec<f64>,
    trunk_pre: Vec<f64>,
    trunk_act: Vec<f64>,
    density_pre: f64,
    thermal_in: Vec<f64>,
    thermal_hidden_pre: Vec<f64>,
    thermal_hidden_act: Vec<f64>,
    thermal_pre: f64,
    output: FieldOutput,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
    grad_thermal_in: Vec<f64>,
    grad_thermal_hidden: Vec<f64>,
}

impl FieldCache {
    pub fn new(arch: &FieldArch) -> Self {
        let mut cache = Self {
            arch: None,
            x: Vec3::zeros(),
            d: Vec3::zeros(),
            enc_x: Vec::new(),
            enc_d: Vec::new(),
            trunk_pre: Vec::new(),
            trunk_act: Vec::new(),
            density_pre: 0.0,
            thermal_in: Vec::new(),
            thermal_hidden_pre: Vec::new(),
            thermal_hidden_act: Vec::new(),
            thermal_pre: 0.0,
            output: FieldOutput {
                thermal: 0.0,
                density: 0.0,
            },
            grad_a: Vec::new(),
            grad_b: Vec::new(),
            grad_thermal_in: Vec::new(),
            grad_thermal_hidden: Vec::new(),
        };
        cache.ensure(arch);
        cache
    }

    fn ensure(&mut self, arch: &FieldArch) {
        if self.arch.as_ref() == Some(arch) {
            return;
        }
        let w = arch.hidden_width;
        let px = arch.encoding.position_dim();
        let dd = arch.encoding.direction_dim();
        let scratch = px.max(w);
        self.enc_x = vec![0.0; px];
        self.enc_d = vec![0.0; dd];
        self.trunk_pre = vec![0.0; arch.hidden_layers * w];
        self.trunk_act = vec![0.0; arch.hidden_layers * w];
        self.thermal_in = vec![0.0; w + dd];
        self.thermal_hidden_pre = vec![0.0; arch.thermal_width];
        self.thermal_hidden_act = vec![0.0; arch.thermal_width];
        self.grad_a = vec![0.0; scratch];
        self.grad_b = vec![0.0; scratch];
        self.grad_thermal_in = vec![0.0; w + dd];
        self.grad_thermal_hidden = vec![0.0; arch.thermal_width];
        self.arch = Some(*arch);
    }

    pub fn output(&self) -> FieldOutput {
        self.output
    }

    pub fn position(&self) -> Vec3 {
        self.x
    }

    pub fn direction(&self) -> Vec3 {
        self.d
    }

    /// Smallest `|preactivation|` over every ReLU unit. Finite-difference
    /// checks use it to stay away from kinks.
    pub fn min_abs_relu_preactivation(&self) -> f64 {
        self.trunk_pre
            .iter()
            .chain(&self.thermal_hidden_pre)
            .fold(f64::INFINITY, |m, p| m.min(libm::fabs(*p)))
    }

    /// On/off state of every ReLU unit.
    pub fn relu_pattern(&self) -> impl Iterator<Item = bool> + '_ {
        self.trunk_pre
            .iter()
            .chain(&self.thermal_hidden_pre)
            .map(|p| *p > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> FieldArch {
        FieldArch {
            encoding: EncodingConfig {
                position_frequencies: 3,
                direction_frequencies: 2,
                include_input: true,
            },
            hidden_layers: 2,
            hidden_width: 16,
            thermal_width: 8,
        }
    }

    #[test]
    fn encoding_layout() {
        let x = Vec3::new(0.25, -0.5, 0.1);
        let e = encode(&x, 2, true);
        assert_eq!(e.len(), 15);
        assert_eq!(&e[..3], x.as_slice());
        assert!((e[3] - libm::sin(PI * 0.25)).abs() < 1e-15);
        assert!((e[6] - libm::cos(PI * 0.25)).abs() < 1e-15);
        assert!((e[9 + 1] - libm::sin(2.0 * PI * -0.5)).abs() < 1e-15);
        assert_eq!(encoded_len(10, true), 63);
        assert_eq!(encoded_len(4, true), 27);
    }

    #[test]
    fn parameter_count_matches_shapes() {
        let arch = small_arch();
        let p = FieldParams::zeros(arch).unwrap();
        let px = arch.encoding.position_dim();
        let dd = arch.encoding.direction_dim();
        let expected = (px + 1) * 16 + 17 * 16 + 17 + (16 + dd + 1) * 8 + 9;
        assert_eq!(p.len(), expected);
    }

    #[test]
    fn outputs_are_in_range() {
        let p = init_params(3, small_arch()).unwrap();
        let mut cache = FieldCache::new(p.arch());
        for i in 0..50 {
            let s = i as f64 / 50.0;
            let x = Vec3::new(2.0 * s - 1.0, 0.3 - s, s * s);
            let d = Vec3::new(s, 1.0, -s).normalize();
            let out = p.forward(&x, &d, &mut cache).unwrap();
            assert!(out.thermal > 0.0 && out.thermal < 1.0);
            assert!(out.density >= 0.0);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(9, small_arch()).unwrap();
        let b = init_params(9, small_arch()).unwrap();
        let c = init_params(10, small_arch()).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        let span = a.spans()[0];
        let bound = he_uniform_bound(span.inputs);
        assert!(a.values()[span.weight_range()].iter().all(|v| v.abs() <= bound));
        assert!(a.values()[span.bias_range()].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_finite_weight_names_layer() {
        let mut p = init_params(1, small_arch()).unwrap();
        let span = p.spans()[1];
        p.values_mut()[span.offset] = f64::NAN;
        assert!(matches!(
            p.evaluate(&Vec3::new(0.1, 0.2, 0.3), &Vec3::z()),
            Err(Error::NonFiniteParameter { layer: 1 })
        ));
        assert!(matches!(p.check_finite(), Err(Error::NonFiniteParameter { layer: 1 })));
    }

    #[test]
    fn band_weights_ramp_and_saturate() {
        assert_eq!(band_weight(0, 0.0), 0.0);
        assert_eq!(band_weight(2, 3.0), 1.0);
        assert_eq!(band_weight(3, 2.0), 0.0);
        assert!((band_weight(1, 1.5) - 0.5).abs() < 1e-15);
        let mut p = init_params(1, small_arch()).unwrap();
        p.set_bandwidth(99.0);
        assert_eq!(p.bandwidth(), small_arch().encoding.position_frequencies as f64);
        let full = p.clone();
        p.set_bandwidth(f64::NAN);
        assert_eq!(p, full);
    }

    #[test]
    fn backward_matches_finite_differences_with_partial_bands() {
        check_backward(1.4);
    }

    #[test]
    fn backward_matches_finite_differences() {
        check_backward(f64::INFINITY);
    }

    fn check_backward(bandwidth: f64) {
        let mut p = init_params(5, small_arch()).unwrap();
        p.set_bandwidth(bandwidth);
        // make biases nonzero so every path is exercised
        for (i, v) in p.values_mut().iter_mut().enumerate() {
            if i % 7 == 0 {
                *v += 0.05;
            }
        }
        let x = Vec3::new(0.31, -0.42, 0.17);
        let d = Vec3::new(0.2, -0.3, 0.9).normalize();
        let (a, b) = (0.7, -1.3);
        let mut cache = FieldCache::new(p.arch());
        p.forward(&x, &d, &mut cache).unwrap();
        p.zero_grads();
        let ig = p.backward(&mut cache, a, b);
        let objective = |p: &FieldParams, x: &Vec3, d: &Vec3| {
            let o = p.evaluate(x, d).unwrap();
            a * o.thermal + b * o.density
        };
        let h = 1e-6;
        let mut q = p.clone();
        for k in (0..p.len()).step_by(3) {
            let v = q.values()[k];
            q.values_mut()[k] = v + h;
            let fp = objective(&q, &x, &d);
            q.values_mut()[k] = v - h;
            let fm = objective(&q, &x, &d);
            q.values_mut()[k] = v;
            let num = (fp - fm) / (2.0 * h);
            let ana = p.grads()[k];
            assert!((num - ana).abs() <= 1e-6 * (1.0 + ana.abs()), "param {k}: {ana} vs {num}");
        }
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let num = (objective(&p, &xp, &d) - objective(&p, &xm, &d)) / (2.0 * h);
            assert!((num - ig.position[i]).abs() <= 1e-6 * (1.0 + num.abs()));
            let mut dp = d;
            dp[i] += h;
            let mut dm = d;
            dm[i] -= h;
            let num = (objective(&p, &x, &dp) - objective(&p, &x, &dm)) / (2.0 * h);
            assert!((num - ig.direction[i]).abs() <= 1e-6 * (1.0 + num.abs()));
        }
    }
}
