//! Minimal feed-forward networks over flat `f64` parameter vectors.
//!
//! Parameters live outside the layer description so that shared, snapshot
//! and target copies are plain `Vec<f64>`s. Backward passes accumulate into a
//! caller-provided gradient buffer of the same layout.

use rand::Rng;

/// Kernel edge length of [`Layer::Conv3d`].
pub const KERNEL: usize = 3;
const KERNEL_VOLUME: usize = KERNEL * KERNEL * KERNEL;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    /// `y = W x + b`, `W` stored row-major `[outputs][inputs]`, then `b`.
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Same-padded 3×3×3 convolution over a channel-major `[c][x][y][z]`
    /// grid. Weights `[out][in][27]`, then one bias per output channel.
    Conv3d {
        in_channels: usize,
        out_channels: usize,
        dims: [usize; 3],
    },
    Tanh,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Dense { inputs, outputs } => outputs * inputs + outputs,
            Layer::Conv3d {
                in_channels,
                out_channels,
                ..
            } => out_channels * in_channels * KERNEL_VOLUME + out_channels,
            Layer::Tanh => 0,
        }
    }

    fn output_len(&self, input_len: usize) -> usize {
        match *self {
            Layer::Dense { outputs, .. } => outputs,
            Layer::Conv3d { out_channels, dims, .. } => out_channels * dims[0] * dims[1] * dims[2],
            Layer::Tanh => input_len,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv3d { in_channels, .. } => in_channels * KERNEL_VOLUME,
            Layer::Tanh => 1,
        }
    }

    fn fan_out(&self) -> usize {
        match *self {
            Layer::Dense { outputs, .. } => outputs,
            Layer::Conv3d { out_channels, .. } => out_channels * KERNEL_VOLUME,
            Layer::Tanh => 1,
        }
    }
}

/// A chain of layers with a fixed parameter layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequential {
    layers: Vec<Layer>,
    offsets: Vec<usize>,
    input_len: usize,
    output_len: usize,
    param_count: usize,
}

/// Per-layer activations from a forward pass; `values[0]` is the input.
#[derive(Clone, Debug)]
pub struct Activations {
    values: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("at least the input")
    }
}

impl Sequential {
    pub fn new(input_len: usize, layers: Vec<Layer>) -> Sequential {
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        let mut len = input_len;
        for layer in &layers {
            offsets.push(total);
            total += layer.param_count();
            if let Layer::Dense { inputs, .. } = *layer {
                assert_eq!(inputs, len, "dense layer input size mismatch");
            }
            if let Layer::Conv3d { in_channels, dims, .. } = *layer {
                assert_eq!(
                    in_channels * dims[0] * dims[1] * dims[2],
                    len,
                    "conv input size mismatch"
                );
            }
            len = layer.output_len(len);
        }
        Sequential {
            layers,
            offsets,
            input_len,
            output_len: len,
            param_count: total,
        }
    }

    /// Dense/tanh stack: `input -> hidden... -> outputs`, tanh between layers.
    pub fn mlp(input_len: usize, hidden: &[usize], outputs: usize) -> Sequential {
        let mut layers = Vec::new();
        let mut prev = input_len;
        for &h in hidden {
            layers.push(Layer::Dense {
                inputs: prev,
                outputs: h,
            });
            layers.push(Layer::Tanh);
            prev = h;
        }
        layers.push(Layer::Dense { inputs: prev, outputs });
        Sequential::new(input_len, layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Glorot-uniform weights scaled by `gain`, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R, gain: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count];
        for (layer, &off) in self.layers.iter().zip(&self.offsets) {
            let weights = match *layer {
                Layer::Dense { inputs, outputs } => inputs * outputs,
                Layer::Conv3d {
                    in_channels,
                    out_channels,
                    ..
                } => in_channels * out_channels * KERNEL_VOLUME,
                Layer::Tanh => 0,
            };
            if weights == 0 {
                continue;
            }
            let limit = gain * (6.0 / (layer.fan_in() + layer.fan_out()) as f64).sqrt();
            for w in &mut params[off..off + weights] {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Activations {
        assert_eq!(params.len(), self.param_count, "parameter length mismatch");
        assert_eq!(input.len(), self.input_len, "input length mismatch");
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for (layer, &off) in self.layers.iter().zip(&self.offsets) {
            let x = values.last().expect("input pushed");
            let p = &params[off..off + layer.param_count()];
            let y = match *layer {
                Layer::Dense { inputs, outputs } => dense_forward(p, x, inputs, outputs),
                Layer::Conv3d {
                    in_channels,
                    out_channels,
                    dims,
                } => conv_forward(p, x, in_channels, out_channels, dims),
                Layer::Tanh => x.iter().map(|v| v.tanh()).collect(),
            };
            values.push(y);
        }
        Activations { values }
    }

    /// Back-propagates `d_output`, adding parameter gradients into `grad`.
    /// Returns the gradient with respect to the input.
    pub fn backward(&self, params: &[f64], acts: &Activations, d_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        self.backward_inner(params, acts, d_output, grad, true)
    }

    /// As [`Sequential::backward`] but skips the input gradient.
    pub fn backward_params(&self, params: &[f64], acts: &Activations, d_output: &[f64], grad: &mut [f64]) {
        self.backward_inner(params, acts, d_output, grad, false);
    }

    fn backward_inner(
        &self,
        params: &[f64],
        acts: &Activations,
        d_output: &[f64],
        grad: &mut [f64],
        want_input: bool,
    ) -> Vec<f64> {
        assert_eq!(grad.len(), self.param_count, "gradient length mismatch");
        assert_eq!(d_output.len(), self.output_len, "output gradient length mismatch");
        let mut delta = d_output.to_vec();
        for (i, (layer, &off)) in self.layers.iter().zip(&self.offsets).enumerate().rev() {
            let x = &acts.values[i];
            let y = &acts.values[i + 1];
            let n = layer.param_count();
            let p = &params[off..off + n];
            let g = &mut grad[off..off + n];
            let need_dx = i > 0 || want_input;
            delta = match *layer {
                Layer::Dense { inputs, outputs } => dense_backward(p, x, &delta, g, inputs, outputs, need_dx),
                Layer::Conv3d {
                    in_channels,
                    out_channels,
                    dims,
                } => conv_backward(p, x, &delta, g, in_channels, out_channels, dims, need_dx),
                Layer::Tanh => delta.iter().zip(y).map(|(d, t)| d * (1.0 - t * t)).collect(),
            };
        }
        delta
    }
}

fn dense_forward(p: &[f64], x: &[f64], inputs: usize, outputs: usize) -> Vec<f64> {
    let (w, b) = p.split_at(inputs * outputs);
    w.chunks_exact(inputs)
        .zip(b)
        .map(|(row, bias)| bias + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

fn dense_backward(
    p: &[f64],
    x: &[f64],
    dy: &[f64],
    g: &mut [f64],
    inputs: usize,
    outputs: usize,
    need_dx: bool,
) -> Vec<f64> {
    let (w, _) = p.split_at(inputs * outputs);
    let (gw, gb) = g.split_at_mut(inputs * outputs);
    let mut dx = if need_dx { vec![0.0; inputs] } else { Vec::new() };
    for (o, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        gb[o] += d;
        let row = &mut gw[o * inputs..(o + 1) * inputs];
        for (gr, v) in row.iter_mut().zip(x) {
            *gr += d * v;
        }
        if need_dx {
            for (acc, wv) in dx.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                *acc += d * wv;
            }
        }
    }
    dx
}

/// Calls `f(kernel_index, neighbor_offset)` for every in-bounds tap around
/// voxel `(x, y, z)`.
#[inline]
fn for_each_tap(dims: [usize; 3], x: usize, y: usize, z: usize, mut f: impl FnMut(usize, usize)) {
    let [nx, ny, nz] = dims;
    for dx in 0..KERNEL {
        let Some(xx) = (x + dx).checked_sub(1).filter(|&v| v < nx) else {
            continue;
        };
        for dy in 0..KERNEL {
            let Some(yy) = (y + dy).checked_sub(1).filter(|&v| v < ny) else {
                continue;
            };
            for dz in 0..KERNEL {
                let Some(zz) = (z + dz).checked_sub(1).filter(|&v| v < nz) else {
                    continue;
                };
                f((dx * KERNEL + dy) * KERNEL + dz, (xx * ny + yy) * nz + zz);
            }
        }
    }
}

fn conv_forward(p: &[f64], input: &[f64], cin: usize, cout: usize, dims: [usize; 3]) -> Vec<f64> {
    let vol = dims[0] * dims[1] * dims[2];
    let (w, b) = p.split_at(cout * cin * KERNEL_VOLUME);
    let mut out = vec![0.0; cout * vol];
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let v = (x * dims[1] + y) * dims[2] + z;
                for_each_tap(dims, x, y, z, |k, u| {
                    for ic in 0..cin {
                        let xin = input[ic * vol + u];
                        if xin == 0.0 {
                            continue;
                        }
                        for oc in 0..cout {
                            out[oc * vol + v] += w[(oc * cin + ic) * KERNEL_VOLUME + k] * xin;
                        }
                    }
                });
                for oc in 0..cout {
                    out[oc * vol + v] += b[oc];
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    p: &[f64],
    input: &[f64],
    dy: &[f64],
    g: &mut [f64],
    cin: usize,
    cout: usize,
    dims: [usize; 3],
    need_dx: bool,
) -> Vec<f64> {
    let vol = dims[0] * dims[1] * dims[2];
    let (w, _) = p.split_at(cout * cin * KERNEL_VOLUME);
    let (gw, gb) = g.split_at_mut(cout * cin * KERNEL_VOLUME);
    let mut dx = if need_dx { vec![0.0; cin * vol] } else { Vec::new() };
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let v = (x * dims[1] + y) * dims[2] + z;
                for oc in 0..cout {
                    gb[oc] += dy[oc * vol + v];
                }
                for_each_tap(dims, x, y, z, |k, u| {
                    for ic in 0..cin {
                        let xin = input[ic * vol + u];
                        let mut acc = 0.0;
                        for oc in 0..cout {
                            let d = dy[oc * vol + v];
                            let idx = (oc * cin + ic) * KERNEL_VOLUME + k;
                            gw[idx] += d * xin;
                            acc += d * w[idx];
                        }
                        if need_dx {
                            dx[ic * vol + u] += acc;
                        }
                    }
                });
            }
        }
    }
    dx
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Central-difference gradient of `f` at `params`, for tests and audits.
pub fn finite_difference(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let plus = f(&p);
            p[i] = orig - h;
            let minus = f(&p);
            p[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
