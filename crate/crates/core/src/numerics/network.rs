//! Feed-forward backbone, linear classification head, and their exact gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the post-activation value.
    #[inline]
    fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map `x · weight + bias` with `weight` stored as (in × out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::dim("Dense bias", weight.cols(), bias.len()));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    /// Uniform fan-in initialization: weights in ±`weight_gain`/√fan_in, biases in ±1/√fan_in.
    pub fn uniform_fan_in<R: Rng>(input: usize, output: usize, weight_gain: f64, rng: &mut R) -> Self {
        let fan = (input.max(1) as f64).sqrt();
        let wb = weight_gain / fan;
        let bb = 1.0 / fan;
        let weight = Matrix::from_fn(input, output, |_, _| rng.random_range(-wb..=wb));
        let bias = (0..output).map(|_| rng.random_range(-bb..=bb)).collect();
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("dense input", self.input_dim(), x.cols()));
        }
        let mut out = x.matmul(&self.weight)?;
        out.add_row_vector(&self.bias)?;
        Ok(out)
    }
}

/// Gradient of a [`Dense`] layer, same shapes as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        Self {
            weight: Matrix::zeros(layer.input_dim(), layer.output_dim()),
            bias: vec![0.0; layer.output_dim()],
        }
    }
}

/// Deterministic MLP mapping inputs to the representation `T`.
///
/// Every layer, including the last, is followed by `activation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    layers: Vec<Dense>,
    activation: Activation,
}

impl Backbone {
    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("backbone needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dim(
                    format!("backbone layer {} input", i + 1),
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Rectifier MLP `input → hidden… → rep_dim` with seeded fan-in init.
    pub fn init<R: Rng>(input_dim: usize, hidden: &[usize], rep_dim: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || rep_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config("backbone dimensions must be positive".into()));
        }
        let dims: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(rep_dim))
            .collect();
        let layers = dims
            .windows(2)
            .map(|w| Dense::uniform_fan_in(w[0], w[1], 6f64.sqrt(), rng))
            .collect();
        Self::from_layers(layers, Activation::Relu)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn rep_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Representations only; no cache.
    pub fn extract(&self, x: &Matrix) -> Result<Matrix> {
        let mut a = self.layers[0].apply(x)?;
        a = a.map(|v| self.activation.apply(v));
        for layer in &self.layers[1..] {
            a = layer.apply(&a)?.map(|v| self.activation.apply(v));
        }
        Ok(a)
    }
}

/// Linear classifier on top of the representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    layer: Dense,
}

impl LinearHead {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        Ok(Self {
            layer: Dense::new(weight, bias)?,
        })
    }

    pub fn zeros(rep_dim: usize, classes: usize) -> Self {
        Self {
            layer: Dense::zeros(rep_dim, classes),
        }
    }

    pub fn init<R: Rng>(rep_dim: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            layer: Dense::uniform_fan_in(rep_dim, classes, 1.0, rng),
        }
    }

    pub fn weight(&self) -> &Matrix {
        &self.layer.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.layer.bias
    }

    pub fn layer(&self) -> &Dense {
        &self.layer
    }

    pub fn layer_mut(&mut self) -> &mut Dense {
        &mut self.layer
    }

    pub fn rep_dim(&self) -> usize {
        self.layer.input_dim()
    }

    pub fn class_count(&self) -> usize {
        self.layer.output_dim()
    }

    pub fn logits(&self, reps: &Matrix) -> Result<Matrix> {
        self.layer.apply(reps)
    }
}

/// Backbone plus head, the unit the training loop optimizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub backbone: Backbone,
    pub head: LinearHead,
}

impl Classifier {
    pub fn new(backbone: Backbone, head: LinearHead) -> Result<Self> {
        if backbone.rep_dim() != head.rep_dim() {
            return Err(Error::dim("head input", backbone.rep_dim(), head.rep_dim()));
        }
        Ok(Self { backbone, head })
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass> {
        forward(&self.backbone, &self.head, x)
    }
}

/// Activations kept from [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `activations[0]` is the input; the last entry is the representation.
    activations: Vec<Matrix>,
    pub logits: Matrix,
}

impl ForwardPass {
    pub fn reps(&self) -> &Matrix {
        self.activations.last().expect("at least input and one layer")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

pub fn forward(backbone: &Backbone, head: &LinearHead, x: &Matrix) -> Result<ForwardPass> {
    if x.cols() != backbone.input_dim() {
        return Err(Error::dim("forward input", backbone.input_dim(), x.cols()));
    }
    if head.rep_dim() != backbone.rep_dim() {
        return Err(Error::dim("head input", backbone.rep_dim(), head.rep_dim()));
    }
    let act = backbone.activation;
    let mut activations = Vec::with_capacity(backbone.layers.len() + 1);
    activations.push(x.clone());
    for layer in &backbone.layers {
        let pre = layer.apply(activations.last().expect("non-empty"))?;
        activations.push(pre.map(|v| act.apply(v)));
    }
    let logits = head.logits(activations.last().expect("non-empty"))?;
    Ok(ForwardPass {
        activations,
        logits,
    })
}

/// Parameter gradients of a [`Classifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrads {
    pub layers: Vec<DenseGrad>,
    pub head: DenseGrad,
}

impl ClassifierGrads {
    pub fn zeros_like(model: &Classifier) -> Self {
        Self {
            layers: model.backbone.layers.iter().map(DenseGrad::zeros_like).collect(),
            head: DenseGrad::zeros_like(&model.head.layer),
        }
    }
}

/// Backpropagates upstream gradients on the representation and/or the logits.
///
/// The representation receives `grad_reps + grad_logits · W_headᵀ`.
pub fn backward(
    backbone: &Backbone,
    head: &LinearHead,
    pass: &ForwardPass,
    grad_reps: Option<&Matrix>,
    grad_logits: Option<&Matrix>,
) -> Result<ClassifierGrads> {
    let n = pass.input().rows();
    let reps = pass.reps();
    let mut head_grad = DenseGrad::zeros_like(&head.layer);
    let mut g = match grad_reps {
        Some(gr) => {
            if gr.shape() != reps.shape() {
                return Err(Error::dim(
                    "backward grad_reps",
                    format!("{:?}", reps.shape()),
                    format!("{:?}", gr.shape()),
                ));
            }
            gr.clone()
        }
        None => Matrix::zeros(n, backbone.rep_dim()),
    };
    if let Some(gl) = grad_logits {
        if gl.shape() != pass.logits.shape() {
            return Err(Error::dim(
                "backward grad_logits",
                format!("{:?}", pass.logits.shape()),
                format!("{:?}", gl.shape()),
            ));
        }
        head_grad.weight = reps.t_matmul(gl)?;
        head_grad.bias = gl.column_sums();
        g.axpy(1.0, &gl.matmul_t(&head.layer.weight)?)?;
    }

    let act = backbone.activation;
    let mut layer_grads = Vec::with_capacity(backbone.layers.len());
    for (l, layer) in backbone.layers.iter().enumerate().rev() {
        let out = &pass.activations[l + 1];
        for (gv, &o) in g.as_mut_slice().iter_mut().zip(out.as_slice()) {
            *gv *= act.grad_from_output(o);
        }
        let input = &pass.activations[l];
        let grad = DenseGrad {
            weight: input.t_matmul(&g)?,
            bias: g.column_sums(),
        };
        if l > 0 {
            g = g.matmul_t(&layer.weight)?;
        }
        layer_grads.push(grad);
    }
    layer_grads.reverse();
    Ok(ClassifierGrads {
        layers: layer_grads,
        head: head_grad,
    })
}

/// Named flat views over trainable tensors, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Concatenation of all tensors.
    fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.parameter_count();
        if flat.len() != expected {
            return Err(Error::dim("load_flat", expected, flat.len()));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }
}

fn dense_tensors<'a>(prefix: &str, d: &'a Dense) -> [(String, &'a [f64]); 2] {
    [
        (format!("{prefix}.weight"), d.weight.as_slice()),
        (format!("{prefix}.bias"), d.bias.as_slice()),
    ]
}

fn dense_tensors_mut<'a>(prefix: &str, d: &'a mut Dense) -> [(String, &'a mut [f64]); 2] {
    [
        (format!("{prefix}.weight"), d.weight.as_mut_slice()),
        (format!("{prefix}.bias"), d.bias.as_mut_slice()),
    ]
}

impl Parameters for Backbone {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, d)| dense_tensors(&format!("layer{i}"), d))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, d)| dense_tensors_mut(&format!("layer{i}"), d))
            .collect()
    }
}

impl Parameters for LinearHead {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        dense_tensors("head", &self.layer).into()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        dense_tensors_mut("head", &mut self.layer).into()
    }
}

impl Parameters for Classifier {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut t = self.backbone.tensors();
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut t = self.backbone.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }
}

impl ClassifierGrads {
    /// Gradient tensors in the same order as [`Classifier::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for g in &self.layers {
            out.push(g.weight.as_slice());
            out.push(g.bias.as_slice());
        }
        out.push(self.head.weight.as_slice());
        out.push(self.head.bias.as_slice());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flatten().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let backbone = Backbone::from_layers(
            vec![Dense::zeros(3, 4), Dense::zeros(4, 2)],
            Activation::Relu,
        )
        .unwrap();
        let head = LinearHead::zeros(2, 5);
        let x = Matrix::from_fn(6, 3, |i, j| i as f64 - j as f64 * 1.7);
        let pass = forward(&backbone, &head, &x).unwrap();
        assert!(pass.reps().as_slice().iter().all(|&v| v == 0.0));
        assert!(pass.logits.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(pass.logits.shape(), (6, 5));
    }

    #[test]
    fn identity_layer_rectifies() {
        let layer = Dense::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let backbone = Backbone::from_layers(vec![layer], Activation::Relu).unwrap();
        let x = Matrix::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        assert_eq!(backbone.extract(&x).unwrap().as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let backbone = Backbone::init(4, &[5], 3, &mut rng).unwrap();
        let head = LinearHead::init(3, 2, &mut rng);
        assert!(matches!(
            forward(&backbone, &head, &Matrix::zeros(2, 5)),
            Err(Error::Dimension { .. })
        ));
        assert!(LinearHead::new(Matrix::zeros(3, 2), vec![0.0; 3]).is_err());
        assert!(Classifier::new(backbone, LinearHead::zeros(4, 2)).is_err());
    }

    #[test]
    fn layer_chain_is_validated() {
        let r = Backbone::from_layers(vec![Dense::zeros(3, 4), Dense::zeros(5, 2)], Activation::Relu);
        assert!(r.is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let backbone = Backbone::init(4, &[6, 5], 3, &mut rng).unwrap();
        let head = LinearHead::init(3, 2, &mut rng);
        let x = Matrix::from_fn(5, 4, |i, j| ((i * 4 + j) as f64).cos());
        let pass = forward(&backbone, &head, &x).unwrap();
        let g = backward(
            &backbone,
            &head,
            &pass,
            Some(&Matrix::zeros(5, 3)),
            Some(&Matrix::zeros(5, 2)),
        )
        .unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_wrong_upstream_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let backbone = Backbone::init(4, &[6], 3, &mut rng).unwrap();
        let head = LinearHead::init(3, 2, &mut rng);
        let pass = forward(&backbone, &head, &Matrix::zeros(5, 4)).unwrap();
        assert!(backward(&backbone, &head, &pass, Some(&Matrix::zeros(4, 3)), None).is_err());
        assert!(backward(&backbone, &head, &pass, None, Some(&Matrix::zeros(5, 3))).is_err());
    }

    #[test]
    fn linear_least_squares_matches_closed_form() {
        // single identity-activation layer, L = ½·mean‖XW + b − Y‖²
        let x = Matrix::from_fn(7, 3, |i, j| ((i + 1) as f64 * 0.37 + j as f64).sin());
        let y = Matrix::from_fn(7, 2, |i, j| (i as f64 - j as f64) * 0.1);
        let w = Matrix::from_fn(3, 2, |i, j| 0.2 * i as f64 - 0.3 * j as f64);
        let layer = Dense::new(w, vec![0.05, -0.1]).unwrap();
        let backbone = Backbone::from_layers(vec![layer], Activation::Identity).unwrap();
        let head = LinearHead::zeros(2, 1);
        let pass = forward(&backbone, &head, &x).unwrap();
        let mut err = pass.reps().clone();
        err.axpy(-1.0, &y).unwrap();
        let mut upstream = err.clone();
        upstream.scale(1.0 / 7.0);
        let g = backward(&backbone, &head, &pass, Some(&upstream), None).unwrap();

        let closed = Matrix::from_fn(3, 2, |i, j| (0..7).map(|n| x[(n, i)] * err[(n, j)]).sum::<f64>() / 7.0);
        assert!(g.layers[0].weight.max_abs_diff(&closed) < 1e-15);
    }
}
