//! Sequential convolutional network with reverse-mode differentiation.
//!
//! The network is a fixed pipeline of layers described by [`NetSpec`].
//! Forward keeps every intermediate activation; backward walks the layers
//! in reverse, seeding either at the logits (loss gradients) or at the
//! embedding layer (for score functions composed on top of the features).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NnError;
use crate::clbp::FeatureVector;
use crate::imageproc::{CanonImage, CANON_HEIGHT, CANON_WIDTH};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Convolution { out_channels: usize, kernel: usize, stride: usize, pad: usize },
    MaxPool { kernel: usize, stride: usize },
    Relu,
    FullyConnected { width: usize },
    SoftmaxHead { classes: usize },
}

/// Ordered layer stack plus the index of the layer whose activations serve
/// as the feature embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub layers: Vec<LayerSpec>,
    pub embedding_layer: usize,
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Map { channels: usize, height: usize, width: usize },
    Flat { len: usize },
}

impl Shape {
    pub fn numel(&self) -> usize {
        match *self {
            Shape::Map { channels, height, width } => channels * height * width,
            Shape::Flat { len } => len,
        }
    }

    fn as_vec(&self) -> Vec<usize> {
        match *self {
            Shape::Map { channels, height, width } => vec![channels, height, width],
            Shape::Flat { len } => vec![len],
        }
    }
}

impl NetSpec {
    /// The default feature-learning architecture: three conv/pool stages
    /// (stride-4 11x11 stem) into a 128-wide embedding and a softmax head.
    pub fn mini_signet(classes: usize) -> Self {
        NetSpec {
            layers: vec![
                LayerSpec::Convolution { out_channels: 16, kernel: 11, stride: 4, pad: 0 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::Convolution { out_channels: 32, kernel: 5, stride: 1, pad: 2 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::Convolution { out_channels: 48, kernel: 3, stride: 1, pad: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::FullyConnected { width: 128 },
                LayerSpec::Relu,
                LayerSpec::SoftmaxHead { classes },
            ],
            embedding_layer: 10,
        }
    }

    /// Half-width variant of [`NetSpec::mini_signet`].
    pub fn mini_signet_thin(classes: usize) -> Self {
        NetSpec {
            layers: vec![
                LayerSpec::Convolution { out_channels: 8, kernel: 11, stride: 4, pad: 0 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::Convolution { out_channels: 16, kernel: 5, stride: 1, pad: 2 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::Convolution { out_channels: 24, kernel: 3, stride: 1, pad: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::FullyConnected { width: 64 },
                LayerSpec::Relu,
                LayerSpec::SoftmaxHead { classes },
            ],
            embedding_layer: 10,
        }
    }

    /// Variant of [`NetSpec::mini_signet`] with one conv stage removed.
    pub fn mini_signet_smaller(classes: usize) -> Self {
        NetSpec {
            layers: vec![
                LayerSpec::Convolution { out_channels: 16, kernel: 11, stride: 4, pad: 0 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::Convolution { out_channels: 32, kernel: 5, stride: 1, pad: 2 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                LayerSpec::FullyConnected { width: 128 },
                LayerSpec::Relu,
                LayerSpec::SoftmaxHead { classes },
            ],
            embedding_layer: 7,
        }
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::SoftmaxHead { classes }) => *classes,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let heads = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::SoftmaxHead { .. }))
            .count();
        if heads != 1 || !matches!(self.layers.last(), Some(LayerSpec::SoftmaxHead { .. })) {
            return Err(NnError::BadSpec("exactly one softmax head is required, as the last layer".into()));
        }
        if self.embedding_layer + 1 >= self.layers.len() {
            return Err(NnError::BadSpec("embedding layer must precede the softmax head".into()));
        }
        Ok(())
    }

    /// Activation shapes for a given input; `shapes[0]` is the input itself.
    pub fn infer_shapes(&self, input: Shape) -> Result<Vec<Shape>, NnError> {
        let mut shapes = vec![input];
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = shapes[i];
            let next = match *layer {
                LayerSpec::Convolution { out_channels, kernel, stride, pad } => {
                    let Shape::Map { height, width, .. } = prev else {
                        return Err(NnError::BadSpec(format!("layer {i}: convolution needs a feature map input")));
                    };
                    let (h, w) = (height + 2 * pad, width + 2 * pad);
                    if kernel > h || kernel > w || stride == 0 {
                        return Err(NnError::BadSpec(format!("layer {i}: kernel does not fit input")));
                    }
                    Shape::Map {
                        channels: out_channels,
                        height: (h - kernel) / stride + 1,
                        width: (w - kernel) / stride + 1,
                    }
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    let Shape::Map { channels, height, width } = prev else {
                        return Err(NnError::BadSpec(format!("layer {i}: max-pool needs a feature map input")));
                    };
                    if kernel > height || kernel > width || stride == 0 {
                        return Err(NnError::BadSpec(format!("layer {i}: pool window does not fit input")));
                    }
                    Shape::Map {
                        channels,
                        height: (height - kernel) / stride + 1,
                        width: (width - kernel) / stride + 1,
                    }
                }
                LayerSpec::Relu => prev,
                LayerSpec::FullyConnected { width } => Shape::Flat { len: width },
                LayerSpec::SoftmaxHead { classes } => Shape::Flat { len: classes },
            };
            shapes.push(next);
        }
        Ok(shapes)
    }
}

/// A network with concrete parameters.
#[derive(Debug, Clone)]
pub struct TrainedNet<T> {
    spec: NetSpec,
    /// Parameter tensors in layer order; parametric layers contribute
    /// a weight tensor followed by a bias tensor.
    params: Vec<Tensor<T>>,
    shapes: Vec<Shape>,
    /// `(weight_index_in_params, layer_index)` for each parametric layer.
    param_layers: Vec<(usize, usize)>,
    pub training_set_id: String,
}

/// Gradients aligned with [`TrainedNet::params`].
pub type ParamGrads<T> = Vec<Tensor<T>>;

impl<T: Scalar> TrainedNet<T> {
    /// Fresh network with He-initialized weights drawn from `rng`.
    pub fn init(spec: NetSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        let input = Shape::Map { channels: 1, height: CANON_HEIGHT, width: CANON_WIDTH };
        Self::init_with_input(spec, input, rng)
    }

    /// As [`TrainedNet::init`] but for an arbitrary input geometry.
    pub fn init_with_input(spec: NetSpec, input: Shape, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let shapes = spec.infer_shapes(input)?;
        let mut params = Vec::new();
        let mut param_layers = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Convolution { out_channels, kernel, .. } => {
                    let Shape::Map { channels: in_ch, .. } = shapes[i] else { unreachable!() };
                    let fan_in = in_ch * kernel * kernel;
                    param_layers.push((params.len(), i));
                    params.push(he_tensor(vec![out_channels, fan_in], fan_in, rng));
                    params.push(Tensor::zeros(vec![out_channels]));
                }
                LayerSpec::FullyConnected { width } | LayerSpec::SoftmaxHead { classes: width } => {
                    let fan_in = shapes[i].numel();
                    param_layers.push((params.len(), i));
                    params.push(he_tensor(vec![width, fan_in], fan_in, rng));
                    params.push(Tensor::zeros(vec![width]));
                }
                _ => {}
            }
        }
        Ok(Self { spec, params, shapes, param_layers, training_set_id: String::new() })
    }

    /// Rebuilds a network from a spec and serialized parameter tensors.
    pub fn from_params(spec: NetSpec, params: Vec<Tensor<T>>, training_set_id: String) -> Result<Self, NnError> {
        let template = Self::init(spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
        if params.len() != template.params.len() {
            return Err(NnError::BadSpec(format!(
                "expected {} parameter tensors, got {}",
                template.params.len(),
                params.len()
            )));
        }
        for (have, want) in params.iter().zip(&template.params) {
            if have.shape() != want.shape() {
                return Err(NnError::BadSpec(format!(
                    "parameter shape mismatch: {:?} vs {:?}",
                    have.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Self { params, training_set_id, ..template })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn class_count(&self) -> usize {
        self.spec.classes()
    }

    pub fn embedding_len(&self) -> usize {
        self.shapes[self.spec.embedding_layer + 1].numel()
    }

    pub fn zero_grads(&self) -> ParamGrads<T> {
        self.params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect()
    }

    /// Network input from a canonical image: shape (1, 150, 220), scaled by 1/255.
    pub fn input_tensor(img: &CanonImage<T>) -> Tensor<T> {
        let scale = T::cast(1.0 / 255.0);
        let data = img.pixels().iter().map(|&p| p * scale).collect();
        Tensor::new(vec![1, CANON_HEIGHT, CANON_WIDTH], data)
    }

    /// Runs the network, returning every activation (`acts[0]` is the input).
    pub fn forward_cached(&self, input: &Tensor<T>) -> Vec<Tensor<T>> {
        assert_eq!(input.numel(), self.shapes[0].numel(), "input size mismatch");
        let mut acts = Vec::with_capacity(self.spec.layers.len() + 1);
        acts.push(input.clone());
        let mut param_iter = self.param_layers.iter().peekable();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let x = &acts[i];
            let out = match *layer {
                LayerSpec::Convolution { out_channels, kernel, stride, pad } => {
                    let (w, b) = self.layer_params(&mut param_iter, i);
                    conv_forward(x, self.shapes[i], self.shapes[i + 1], out_channels, kernel, stride, pad, w, b)
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    max_pool_forward(x, self.shapes[i], self.shapes[i + 1], kernel, stride)
                }
                LayerSpec::Relu => {
                    let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
                    Tensor::new(x.shape().to_vec(), data)
                }
                LayerSpec::FullyConnected { .. } | LayerSpec::SoftmaxHead { .. } => {
                    let (w, b) = self.layer_params(&mut param_iter, i);
                    fc_forward(x, w, b)
                }
            };
            acts.push(out);
        }
        acts
    }

    fn layer_params<'a>(
        &'a self,
        iter: &mut std::iter::Peekable<std::slice::Iter<'_, (usize, usize)>>,
        layer: usize,
    ) -> (&'a Tensor<T>, &'a Tensor<T>) {
        let &(pi, li) = iter.next().expect("parametric layer without params");
        debug_assert_eq!(li, layer);
        (&self.params[pi], &self.params[pi + 1])
    }

    fn params_of_layer(&self, layer: usize) -> Option<(usize, &Tensor<T>, &Tensor<T>)> {
        self.param_layers
            .iter()
            .find(|&&(_, li)| li == layer)
            .map(|&(pi, _)| (pi, &self.params[pi], &self.params[pi + 1]))
    }

    pub fn logits<'a>(&self, acts: &'a [Tensor<T>]) -> &'a [T] {
        acts.last().expect("empty activations").data()
    }

    pub fn embedding_of(&self, acts: &[Tensor<T>]) -> FeatureVector<T> {
        FeatureVector::new(acts[self.spec.embedding_layer + 1].data().to_vec())
            .expect("non-finite activation in embedding")
    }

    /// Reverse pass from the activation after `start_layer` down to the
    /// input. `seed` is the objective gradient at that activation. Returns
    /// the input gradient (same scale as the network input) and, when
    /// requested, gradients for every parameter tensor at or below
    /// `start_layer`.
    pub fn backward(
        &self,
        acts: &[Tensor<T>],
        start_layer: usize,
        seed: Tensor<T>,
        mut param_grads: Option<&mut ParamGrads<T>>,
    ) -> Tensor<T> {
        let mut grad = seed;
        for i in (0..=start_layer).rev() {
            let x = &acts[i];
            grad = match self.spec.layers[i] {
                LayerSpec::Convolution { out_channels, kernel, stride, pad } => {
                    let (pi, w, _) = self.params_of_layer(i).expect("conv params");
                    let want_input_grad = i > 0 || param_grads.is_none();
                    let grads = param_grads.as_deref_mut().map(|g| {
                        let (wg, rest) = g[pi..].split_first_mut().unwrap();
                        (wg, &mut rest[0])
                    });
                    conv_backward(
                        x,
                        self.shapes[i],
                        self.shapes[i + 1],
                        out_channels,
                        kernel,
                        stride,
                        pad,
                        w,
                        &grad,
                        grads,
                        want_input_grad,
                    )
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    max_pool_backward(x, self.shapes[i], self.shapes[i + 1], kernel, stride, &grad)
                }
                LayerSpec::Relu => {
                    let data = x
                        .data()
                        .iter()
                        .zip(grad.data())
                        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                        .collect();
                    Tensor::new(x.shape().to_vec(), data)
                }
                LayerSpec::FullyConnected { .. } | LayerSpec::SoftmaxHead { .. } => {
                    let (pi, w, _) = self.params_of_layer(i).expect("fc params");
                    if let Some(g) = param_grads.as_deref_mut() {
                        fc_param_grads(x, &grad, &mut g[pi..pi + 2]);
                    }
                    fc_backward_input(x, w, &grad)
                }
            };
        }
        grad
    }

    /// Forward pass: logits plus the feature embedding.
    pub fn forward(&self, img: &CanonImage<T>) -> (Vec<T>, FeatureVector<T>) {
        let acts = self.forward_cached(&Self::input_tensor(img));
        (self.logits(&acts).to_vec(), self.embedding_of(&acts))
    }
}

use rand::SeedableRng;

fn he_tensor<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let std = T::cast((2.0 / fan_in as f64).sqrt());
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::standard_normal(rng) * std).collect();
    Tensor::new(shape, data)
}

/// Unrolls conv patches into a `(in_ch*k*k) x (oh*ow)` matrix.
fn im2col<T: Scalar>(x: &[T], in_shape: Shape, kernel: usize, stride: usize, pad: usize, oh: usize, ow: usize) -> Vec<T> {
    let Shape::Map { channels, height, width } = in_shape else { panic!("im2col needs a map") };
    let rows = channels * kernel * kernel;
    let cols = oh * ow;
    let mut out = vec![T::zero(); rows * cols];
    for ch in 0..channels {
        let plane = &x[ch * height * width..(ch + 1) * height * width];
        for kr in 0..kernel {
            for kc in 0..kernel {
                let row = (ch * kernel + kr) * kernel + kc;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for or in 0..oh {
                    let ir = (or * stride + kr) as isize - pad as isize;
                    if ir < 0 || ir as usize >= height {
                        continue;
                    }
                    let src_row = &plane[ir as usize * width..(ir as usize + 1) * width];
                    let base = or * ow;
                    for oc in 0..ow {
                        let ic = (oc * stride + kc) as isize - pad as isize;
                        if ic >= 0 && (ic as usize) < width {
                            dst[base + oc] = src_row[ic as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Scatter-adds a column matrix back into image layout (adjoint of im2col).
fn col2im<T: Scalar>(cols: &[T], in_shape: Shape, kernel: usize, stride: usize, pad: usize, oh: usize, ow: usize) -> Vec<T> {
    let Shape::Map { channels, height, width } = in_shape else { panic!("col2im needs a map") };
    let ncols = oh * ow;
    let mut out = vec![T::zero(); channels * height * width];
    for ch in 0..channels {
        let plane = &mut out[ch * height * width..(ch + 1) * height * width];
        for kr in 0..kernel {
            for kc in 0..kernel {
                let row = (ch * kernel + kr) * kernel + kc;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for or in 0..oh {
                    let ir = (or * stride + kr) as isize - pad as isize;
                    if ir < 0 || ir as usize >= height {
                        continue;
                    }
                    let dst_row = &mut plane[ir as usize * width..(ir as usize + 1) * width];
                    let base = or * ow;
                    for oc in 0..ow {
                        let ic = (oc * stride + kc) as isize - pad as isize;
                        if ic >= 0 && (ic as usize) < width {
                            dst_row[ic as usize] += src[base + oc];
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    in_shape: Shape,
    out_shape: Shape,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Tensor<T> {
    let Shape::Map { height: oh, width: ow, .. } = out_shape else { panic!() };
    let cols = im2col(x.data(), in_shape, kernel, stride, pad, oh, ow);
    let k = w.shape()[1];
    let n = oh * ow;
    let mut out = vec![T::zero(); out_channels * n];
    T::gemm(out_channels, k, n, T::one(), w.data(), &cols, T::zero(), &mut out);
    for o in 0..out_channels {
        let bias = b.data()[o];
        for v in &mut out[o * n..(o + 1) * n] {
            *v += bias;
        }
    }
    Tensor::new(out_shape.as_vec(), out)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    in_shape: Shape,
    out_shape: Shape,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    param_grads: Option<(&mut Tensor<T>, &mut Tensor<T>)>,
    want_input_grad: bool,
) -> Tensor<T> {
    let Shape::Map { height: oh, width: ow, .. } = out_shape else { panic!() };
    let k = w.shape()[1];
    let n = oh * ow;
    if let Some((wg, bg)) = param_grads {
        // dW = dY * cols^T; gemm with B transposed is expressed by strides,
        // so transpose cols explicitly (small matrices at this scale).
        let cols = im2col(x.data(), in_shape, kernel, stride, pad, oh, ow);
        let mut cols_t = vec![T::zero(); cols.len()];
        for r in 0..k {
            for c in 0..n {
                cols_t[c * k + r] = cols[r * n + c];
            }
        }
        T::gemm(out_channels, n, k, T::one(), grad_out.data(), &cols_t, T::one(), wg.data_mut());
        for o in 0..out_channels {
            let sum: T = grad_out.data()[o * n..(o + 1) * n].iter().copied().sum();
            bg.data_mut()[o] += sum;
        }
    }
    if !want_input_grad {
        return Tensor::zeros(in_shape.as_vec());
    }
    // dX = col2im(W^T * dY)
    let mut w_t = vec![T::zero(); w.numel()];
    for r in 0..out_channels {
        for c in 0..k {
            w_t[c * out_channels + r] = w.data()[r * k + c];
        }
    }
    let mut grad_cols = vec![T::zero(); k * n];
    T::gemm(k, out_channels, n, T::one(), &w_t, grad_out.data(), T::zero(), &mut grad_cols);
    Tensor::new(in_shape.as_vec(), col2im(&grad_cols, in_shape, kernel, stride, pad, oh, ow))
}

fn max_pool_forward<T: Scalar>(x: &Tensor<T>, in_shape: Shape, out_shape: Shape, kernel: usize, stride: usize) -> Tensor<T> {
    let Shape::Map { channels, height, width } = in_shape else { panic!() };
    let Shape::Map { height: oh, width: ow, .. } = out_shape else { panic!() };
    let mut out = Vec::with_capacity(channels * oh * ow);
    for ch in 0..channels {
        let plane = &x.data()[ch * height * width..(ch + 1) * height * width];
        for or in 0..oh {
            for oc in 0..ow {
                let mut best = plane[or * stride * width + oc * stride];
                for kr in 0..kernel {
                    let row = &plane[(or * stride + kr) * width..];
                    for kc in 0..kernel {
                        let v = row[oc * stride + kc];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    Tensor::new(out_shape.as_vec(), out)
}

/// Routes gradient to the first maximum in scan order (deterministic ties).
fn max_pool_backward<T: Scalar>(
    x: &Tensor<T>,
    in_shape: Shape,
    out_shape: Shape,
    kernel: usize,
    stride: usize,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let Shape::Map { channels, height, width } = in_shape else { panic!() };
    let Shape::Map { height: oh, width: ow, .. } = out_shape else { panic!() };
    let mut grad = vec![T::zero(); x.numel()];
    for ch in 0..channels {
        let plane = &x.data()[ch * height * width..(ch + 1) * height * width];
        let grad_plane = &mut grad[ch * height * width..(ch + 1) * height * width];
        for or in 0..oh {
            for oc in 0..ow {
                let mut best = plane[or * stride * width + oc * stride];
                let mut best_idx = or * stride * width + oc * stride;
                for kr in 0..kernel {
                    for kc in 0..kernel {
                        let idx = (or * stride + kr) * width + oc * stride + kc;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                grad_plane[best_idx] += grad_out.data()[(ch * oh + or) * ow + oc];
            }
        }
    }
    Tensor::new(in_shape.as_vec(), grad)
}

fn fc_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.numel(), in_dim, "fc input size mismatch");
    let mut out = b.data().to_vec();
    T::gemm(out_dim, in_dim, 1, T::one(), w.data(), x.data(), T::one(), &mut out);
    Tensor::new(vec![out_dim], out)
}

fn fc_param_grads<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>, grads: &mut [Tensor<T>]) {
    let (wg, rest) = grads.split_first_mut().unwrap();
    let bg = &mut rest[0];
    let out_dim = grad_out.numel();
    let in_dim = x.numel();
    // dW += dY x^T (rank-1 update)
    T::gemm(out_dim, 1, in_dim, T::one(), grad_out.data(), x.data(), T::one(), wg.data_mut());
    for (g, &d) in bg.data_mut().iter_mut().zip(grad_out.data()) {
        *g += d;
    }
}

fn fc_backward_input<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    // dX = W^T dY
    let mut w_t = vec![T::zero(); w.numel()];
    for r in 0..out_dim {
        for c in 0..in_dim {
            w_t[c * out_dim + r] = w.data()[r * in_dim + c];
        }
    }
    let mut grad = vec![T::zero(); in_dim];
    T::gemm(in_dim, out_dim, 1, T::one(), &w_t, grad_out.data(), T::zero(), &mut grad);
    Tensor::new(x.shape().to_vec(), grad)
}

/// Numerically stable softmax cross-entropy; returns the loss and the
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let loss = total.ln() + max - logits[label];
    let mut grad: Vec<T> = exps.iter().map(|&e| e / total).collect();
    grad[label] -= T::one();
    (loss, grad)
}

/// Softmax probabilities (used in reporting; training uses the fused loss).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}
