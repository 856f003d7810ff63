use super::loss::{logistic_loss, softmax_cross_entropy, LossKind};
use super::matrix::{axpy, Matrix};
use super::rng::SeedStream;
use crate::error::{Error, Result};
use crate::qt::{qt_scalar, Barrier, EnergyMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Qt { barrier: Barrier, map: EnergyMap },
    Relu,
    Identity,
}

impl Activation {
    /// QT activation with the default barrier (`V₀ = 1`, `a = 1`) and the
    /// smooth-positive energy map.
    pub fn qt_default() -> Self {
        Activation::Qt {
            barrier: Barrier::default(),
            map: EnergyMap::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Qt { .. } => "qt",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    /// `(activation, d activation / d pre-activation)`.
    pub fn apply(&self, x: f64) -> Result<(f64, f64)> {
        match self {
            Activation::Qt { barrier, map } => qt_scalar(x, barrier, map),
            Activation::Relu => Ok(if x > 0.0 { (x, 1.0) } else { (0.0, 0.0) }),
            Activation::Identity => Ok((x, 1.0)),
        }
    }

    pub fn apply_into(&self, pre: &[f64], act: &mut [f64], deriv: &mut [f64]) -> Result<()> {
        for ((&x, a), d) in pre.iter().zip(act.iter_mut()).zip(deriv.iter_mut()) {
            (*a, *d) = self.apply(x)?;
        }
        Ok(())
    }
}

/// Result of pushing one input vector through a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    pub deriv: Vec<f64>,
}

/// Batched counterpart of [`LayerOutput`]; one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub pre: Matrix,
    pub act: Matrix,
    pub deriv: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape(
                format!("bias of length {}", weights.rows()),
                bias.len(),
            ));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
            activation,
        }
    }

    /// Weights uniform in `±√(6/(fan_in + fan_out))` drawn row-major from
    /// `stream`; biases zero.
    pub fn glorot(
        input: usize,
        output: usize,
        activation: Activation,
        stream: &mut SeedStream,
    ) -> Self {
        Self {
            weights: glorot_matrix(output, input, stream),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, input: &[f64]) -> Result<LayerOutput> {
        let mut pre = self.weights.matvec(input)?;
        axpy(1.0, &self.bias, &mut pre);
        let mut act = vec![0.0; pre.len()];
        let mut deriv = vec![0.0; pre.len()];
        self.activation.apply_into(&pre, &mut act, &mut deriv)?;
        Ok(LayerOutput { pre, act, deriv })
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<BatchOutput> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                input.cols(),
            ));
        }
        let mut pre = input.matmul_transposed(&self.weights)?;
        for r in 0..pre.rows() {
            axpy(1.0, &self.bias, pre.row_mut(r));
        }
        let mut act = Matrix::zeros(pre.rows(), pre.cols());
        let mut deriv = Matrix::zeros(pre.rows(), pre.cols());
        self.activation
            .apply_into(pre.data(), act.data_mut(), deriv.data_mut())?;
        Ok(BatchOutput { pre, act, deriv })
    }
}

/// One-vector forward through a single layer.
pub fn dense_forward(layer: &DenseLayer, input: &[f64]) -> Result<LayerOutput> {
    layer.forward(input)
}

pub(crate) fn glorot_matrix(rows: usize, cols: usize, stream: &mut SeedStream) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| stream.uniform_range(-limit, limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches by construction")
}

/// Layer sizes and activations of a feed-forward classifier. The output
/// layer is always linear (logits).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub sizes: Vec<usize>,
    pub hidden_activations: Vec<Activation>,
    pub loss: LossKind,
}

impl NetworkSpec {
    /// `input → hidden… → output`, the same activation on every hidden layer.
    pub fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        loss: LossKind,
    ) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let spec = Self {
            sizes,
            hidden_activations: vec![activation; hidden.len()],
            loss,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 3 {
            return Err(Error::InvalidArgument(
                "a network needs at least one hidden layer".into(),
            ));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "layer sizes must be positive".into(),
            ));
        }
        if self.hidden_activations.len() != self.sizes.len() - 2 {
            return Err(Error::shape(
                format!("{} hidden activations", self.sizes.len() - 2),
                self.hidden_activations.len(),
            ));
        }
        if self.loss == LossKind::Logistic && self.output_dim() != 1 {
            return Err(Error::InvalidArgument(
                "logistic loss needs a single output".into(),
            ));
        }
        if self.loss == LossKind::SoftmaxCrossEntropy && self.output_dim() < 2 {
            return Err(Error::InvalidArgument(
                "softmax loss needs at least two outputs".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    /// Activation of layer `i` (hidden layers, then the identity output).
    pub fn activation(&self, i: usize) -> Activation {
        self.hidden_activations
            .get(i)
            .copied()
            .unwrap_or(Activation::Identity)
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }
}

/// Which array a flat parameter index falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLocation {
    pub layer: usize,
    pub kind: ParamKind,
    /// Row-major index within the array.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
    pub loss: LossKind,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<Matrix>,
    pub pre: Vec<Matrix>,
    pub derivs: Vec<Matrix>,
    pub logits: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                    bias: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.scale(s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_scaled(1.0, &b.weights);
            axpy(1.0, &b.bias, &mut a.bias);
        }
    }

    /// Flattened in declaration order (layer by layer, weights then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn get_mut(&mut self, loc: ParamLocation) -> &mut f64 {
        let l = &mut self.layers[loc.layer];
        match loc.kind {
            ParamKind::Weight => &mut l.weights.data_mut()[loc.index],
            ParamKind::Bias => &mut l.bias[loc.index],
        }
    }
}

impl DenseNet {
    /// Glorot-initialised network. Draws from `stream` layer by layer in
    /// row-major order, independent of the activation, so QT and ReLU nets
    /// built from the same stream start with identical weights.
    pub fn init(spec: &NetworkSpec, stream: &mut SeedStream) -> Result<Self> {
        spec.validate()?;
        let layers = (0..spec.num_layers())
            .map(|i| {
                DenseLayer::glorot(spec.sizes[i], spec.sizes[i + 1], spec.activation(i), stream)
            })
            .collect();
        Ok(Self {
            layers,
            loss: spec.loss,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn locate(&self, mut flat: usize) -> Option<ParamLocation> {
        for (layer, l) in self.layers.iter().enumerate() {
            if flat < l.weights.len() {
                return Some(ParamLocation {
                    layer,
                    kind: ParamKind::Weight,
                    index: flat,
                });
            }
            flat -= l.weights.len();
            if flat < l.bias.len() {
                return Some(ParamLocation {
                    layer,
                    kind: ParamKind::Bias,
                    index: flat,
                });
            }
            flat -= l.bias.len();
        }
        None
    }

    pub fn param_mut(&mut self, loc: ParamLocation) -> &mut f64 {
        let l = &mut self.layers[loc.layer];
        match loc.kind {
            ParamKind::Weight => &mut l.weights.data_mut()[loc.index],
            ParamKind::Bias => &mut l.bias[loc.index],
        }
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardCache> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut derivs = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let out = layer.forward_batch(&x)?;
            inputs.push(x);
            pre.push(out.pre);
            derivs.push(out.deriv);
            x = out.act;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            derivs,
            logits: x,
        })
    }

    /// Class probabilities, one row per example.
    pub fn predict_proba(&self, batch: &Matrix) -> Result<Matrix> {
        let cache = self.forward(batch)?;
        Ok(probabilities(self.loss, &cache.logits))
    }

    /// Mean loss over the batch and its gradient with respect to the logits.
    pub fn loss_from_logits(&self, logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
        batch_loss(self.loss, logits, labels)
    }

    pub fn loss(&self, batch: &Matrix, labels: &[usize]) -> Result<f64> {
        let cache = self.forward(batch)?;
        Ok(self.loss_from_logits(&cache.logits, labels)?.0)
    }

    pub fn loss_and_grad(&self, batch: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        let cache = self.forward(batch)?;
        let (loss, grad_out) = self.loss_from_logits(&cache.logits, labels)?;
        Ok((loss, backward(self, &cache, &grad_out)?))
    }

    /// `p ← p − lr·g` on every parameter.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            sgd_update(l.weights.data_mut(), g.weights.data(), lr);
            sgd_update(&mut l.bias, &g.bias, lr);
        }
    }
}

pub(crate) fn probabilities(loss: LossKind, logits: &Matrix) -> Matrix {
    match loss {
        LossKind::SoftmaxCrossEntropy => {
            let mut out = Matrix::zeros(logits.rows(), logits.cols());
            for r in 0..logits.rows() {
                out.row_mut(r)
                    .copy_from_slice(&super::loss::softmax(logits.row(r)));
            }
            out
        }
        LossKind::Logistic => {
            let mut out = Matrix::zeros(logits.rows(), 2);
            for r in 0..logits.rows() {
                let p = crate::qt::logistic(logits.get(r, 0));
                out.set(r, 0, 1.0 - p);
                out.set(r, 1, p);
            }
            out
        }
    }
}

pub(crate) fn batch_loss(
    kind: LossKind,
    logits: &Matrix,
    labels: &[usize],
) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(
            format!("{} labels", logits.rows()),
            labels.len(),
        ));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let scale = 1.0 / labels.len() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (r, &y) in labels.iter().enumerate() {
        match kind {
            LossKind::SoftmaxCrossEntropy => {
                let (l, g) = softmax_cross_entropy(logits.row(r), y)?;
                total += l;
                axpy(scale, &g, grad.row_mut(r));
            }
            LossKind::Logistic => {
                if y > 1 {
                    return Err(Error::InvalidArgument(format!(
                        "binary label expected, got {y}"
                    )));
                }
                let (l, g) = logistic_loss(logits.get(r, 0), y);
                total += l;
                grad.set(r, 0, scale * g);
            }
        }
    }
    Ok((total * scale, grad))
}

/// Reverse-mode pass through `net` given the gradient of the loss with
/// respect to the logits.
pub fn backward(net: &DenseNet, cache: &ForwardCache, grad_out: &Matrix) -> Result<Gradients> {
    if grad_out.shape() != cache.logits.shape() {
        return Err(Error::shape(
            format!("{:?}", cache.logits.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    if cache.inputs.len() != net.layers.len() {
        return Err(Error::shape(
            format!("cache for {} layers", net.layers.len()),
            cache.inputs.len(),
        ));
    }
    let mut grads = Gradients::zeros_like(net);
    let mut delta_act = grad_out.clone();
    for i in (0..net.layers.len()).rev() {
        let layer = &net.layers[i];
        // dL/dpre = dL/dact ⊙ local derivative
        let mut delta = delta_act;
        for (d, &ld) in delta.data_mut().iter_mut().zip(cache.derivs[i].data()) {
            *d *= ld;
        }
        let g = &mut grads.layers[i];
        delta.transposed_matmul_acc(&cache.inputs[i], &mut g.weights);
        for r in 0..delta.rows() {
            axpy(1.0, delta.row(r), &mut g.bias);
        }
        if i == 0 {
            break;
        }
        delta_act = delta.matmul(&layer.weights)?;
    }
    Ok(grads)
}

pub fn sgd_update(params: &mut [f64], grads: &[f64], lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}
