//! A small fully connected network with manual backpropagation and Adam.
//!
//! Only what the autoencoder and the clustering policy need: dense layers,
//! rectifier / identity / softmax activations, MSE and cross-entropy losses.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid network: {0}")]
    BadArchitecture(String),
    #[error("parameter file: {0}")]
    Format(String),
}

fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<(), NeuralError> {
    if expected == found {
        Ok(())
    } else {
        Err(NeuralError::ShapeMismatch { expected, found })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Rectifier,
    Identity,
    SoftmaxOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

/// Per-layer inputs and outputs recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub inputs: Vec<Array2<f64>>,
    pub outputs: Vec<Array2<f64>>,
}

impl Activations {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("network has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

pub type Gradients = Vec<LayerGrad>;

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

impl DenseNet {
    /// Glorot-uniform weights and zero biases for the layer widths in `dims`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, seed: u64) -> Self {
        assert!(dims.len() >= 2, "need input and output widths");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..=limit));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation: if l + 1 == n { output } else { hidden },
                }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::BadArchitecture("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(NeuralError::BadArchitecture(format!(
                    "layer {i}: bias length"
                )));
            }
            if l.activation == Activation::SoftmaxOutput && i + 1 != layers.len() {
                return Err(NeuralError::BadArchitecture(format!(
                    "layer {i}: softmax only allowed on the final layer"
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(NeuralError::BadArchitecture(format!(
                    "layer {i}: input width {} does not follow {}",
                    l.in_dim(),
                    layers[i - 1].out_dim()
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<Activations, NeuralError> {
        check_shape((batch.nrows(), self.in_dim()), batch.dim())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            let y = match layer.activation {
                Activation::Identity => z,
                Activation::Rectifier => z.mapv_into(|v| v.max(0.0)),
                Activation::SoftmaxOutput => softmax_rows(&z),
            };
            inputs.push(x);
            x = y.clone();
            outputs.push(y);
        }
        Ok(Activations { inputs, outputs })
    }

    pub fn predict(&self, batch: &Array2<f64>) -> Result<Array2<f64>, NeuralError> {
        Ok(self.forward(batch)?.outputs.pop().unwrap())
    }

    /// Parameter gradients given the loss gradient at the network output.
    ///
    /// For a softmax output layer `output_gradient` is taken with respect to the
    /// logits, which is what [`cross_entropy_loss`] returns.
    pub fn backward(
        &self,
        acts: &Activations,
        output_gradient: &Array2<f64>,
    ) -> Result<Gradients, NeuralError> {
        if acts.outputs.len() != self.layers.len() {
            return Err(NeuralError::BadArchitecture(
                "activations come from a different network".into(),
            ));
        }
        check_shape(acts.output().dim(), output_gradient.dim())?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_gradient.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Rectifier {
                Zip::from(&mut delta)
                    .and(&acts.outputs[l])
                    .for_each(|d, &y| {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            let weights = delta.t().dot(&acts.inputs[l]);
            let bias = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&layer.weights);
            }
            grads.push(LayerGrad { weights, bias });
        }
        grads.reverse();
        Ok(grads)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&NetFile::from(self)).expect("network serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NeuralError> {
        let file: NetFile =
            serde_json::from_str(s).map_err(|e| NeuralError::Format(e.to_string()))?;
        file.try_into()
    }
}

/// On-disk parameter layout: one entry per layer with a `[out, in]` shape
/// header and row-major weights.
#[derive(Debug, Serialize, Deserialize)]
struct NetFile {
    layers: Vec<LayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    shape: [usize; 2],
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<&DenseNet> for NetFile {
    fn from(net: &DenseNet) -> Self {
        NetFile {
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    shape: [l.out_dim(), l.in_dim()],
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetFile> for DenseNet {
    type Error = NeuralError;

    fn try_from(file: NetFile) -> Result<Self, NeuralError> {
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.shape[0], l.shape[1]), l.weights)
                    .map_err(|e| NeuralError::Format(e.to_string()))?;
                Ok(Layer {
                    weights,
                    bias: Array1::from_vec(l.bias),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>, NeuralError>>()?;
        DenseNet::from_layers(layers)
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(
    pred: &Array2<f64>,
    target: &Array2<f64>,
) -> Result<(f64, Array2<f64>), NeuralError> {
    check_shape(pred.dim(), target.dim())?;
    let diff = pred - target;
    let n = diff.len() as f64;
    let loss = diff.mapv(|d| d * d).sum() / n;
    Ok((loss, diff * (2.0 / n)))
}

/// Mean cross-entropy of softmax outputs against one-hot rows; the gradient is
/// with respect to the logits.
pub fn cross_entropy_loss(
    probs: &Array2<f64>,
    onehot_targets: &Array2<f64>,
) -> Result<(f64, Array2<f64>), NeuralError> {
    check_shape(probs.dim(), onehot_targets.dim())?;
    let rows = probs.nrows() as f64;
    let mut loss = 0.0;
    Zip::from(probs).and(onehot_targets).for_each(|&p, &t| {
        if t != 0.0 {
            loss -= t * p.max(PROB_FLOOR).ln();
        }
    });
    Ok((loss / rows, (probs - onehot_targets) / rows))
}

pub fn onehot(labels: &[usize], width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), width));
    for (r, &c) in labels.iter().enumerate() {
        out[[r, c]] = 1.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Gradients,
    pub v: Gradients,
}

pub const DEFAULT_LR: f64 = 0.001;

impl AdamState {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        let zeros: Gradients = net
            .layers
            .iter()
            .map(|l| LayerGrad {
                weights: Array2::zeros(l.weights.dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(
    state: &mut AdamState,
    net: &mut DenseNet,
    grads: &Gradients,
) -> Result<(), NeuralError> {
    if grads.len() != net.layers.len() || state.m.len() != net.layers.len() {
        return Err(NeuralError::BadArchitecture(
            "gradient count differs from layer count".into(),
        ));
    }
    for (layer, g) in net.layers.iter().zip(grads) {
        check_shape(layer.weights.dim(), g.weights.dim())?;
        check_shape((layer.bias.len(), 1), (g.bias.len(), 1))?;
    }
    state.step += 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.lr);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        Zip::from(&mut layer.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut layer.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn identity_layer_passes_input() {
        let net = DenseNet::from_layers(vec![Layer {
            weights: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn softmax_properties() {
        let p = softmax_rows(&array![[0.0, 0.0, 0.0]]);
        for &v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = random_matrix(20, 5, &mut rng) * 30.0;
        for row in softmax_rows(&logits).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = DenseNet::new(&[3, 2], Activation::Rectifier, Activation::Identity, 0);
        assert!(matches!(
            net.forward(&Array2::zeros((1, 4))),
            Err(NeuralError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn softmax_only_last() {
        let mut net = DenseNet::new(&[2, 2, 2], Activation::Rectifier, Activation::Identity, 0);
        net.layers[0].activation = Activation::SoftmaxOutput;
        assert!(DenseNet::from_layers(net.layers).is_err());
    }

    #[test]
    fn mse_cases() {
        let a = array![[1.0, 2.0]];
        let (l, g) = mse_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (l, g) = mse_loss(&array![[2.0]], &array![[0.0]]).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g, array![[4.0]]);
        assert!(mse_loss(&a, &array![[1.0]]).is_err());
    }

    #[test]
    fn mse_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pred = random_matrix(3, 3, &mut rng);
        let target = random_matrix(3, 3, &mut rng);
        let (_, g) = mse_loss(&pred, &target).unwrap();
        let h = 1e-5;
        for idx in 0..9 {
            let (r, c) = (idx / 3, idx % 3);
            let mut p = pred.clone();
            p[[r, c]] += h;
            let up = mse_loss(&p, &target).unwrap().0;
            p[[r, c]] -= 2.0 * h;
            let down = mse_loss(&p, &target).unwrap().0;
            assert!(rel_err(g[[r, c]], (up - down) / (2.0 * h)) < 1e-6);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let (l, _) = cross_entropy_loss(&array![[1.0, 0.0, 0.0]], &onehot(&[0], 3)).unwrap();
        assert_eq!(l, 0.0);
        let third = 1.0 / 3.0;
        let (l, _) = cross_entropy_loss(&array![[third, third, third]], &onehot(&[1], 3)).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        // clamp keeps the loss finite
        let (l, _) = cross_entropy_loss(&array![[1.0, 0.0]], &onehot(&[1], 2)).unwrap();
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = random_matrix(4, 3, &mut rng);
        let t = onehot(&[0, 2, 1, 2], 3);
        let loss = |z: &Array2<f64>| cross_entropy_loss(&softmax_rows(z), &t).unwrap().0;
        let (_, g) = cross_entropy_loss(&softmax_rows(&logits), &t).unwrap();
        let h = 1e-5;
        for r in 0..4 {
            for c in 0..3 {
                let mut z = logits.clone();
                z[[r, c]] += h;
                let up = loss(&z);
                z[[r, c]] -= 2.0 * h;
                let down = loss(&z);
                assert!(rel_err(g[[r, c]], (up - down) / (2.0 * h)) < 1e-4);
            }
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let net = DenseNet::new(&[4, 5, 3], Activation::Rectifier, Activation::Identity, 2);
        let x = random_matrix(6, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let acts = net.forward(&x).unwrap();
        let grads = net.backward(&acts, &Array2::zeros((6, 3))).unwrap();
        for g in grads {
            assert!(g.weights.iter().chain(g.bias.iter()).all(|&v| v == 0.0));
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn two_layer_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::new(&[3, 6, 2], Activation::Rectifier, Activation::Identity, 5);
        let x = random_matrix(5, 3, &mut rng);
        let y = random_matrix(5, 2, &mut rng);
        let loss = |n: &DenseNet| mse_loss(&n.predict(&x).unwrap(), &y).unwrap().0;
        let acts = net.forward(&x).unwrap();
        let (_, g_out) = mse_loss(acts.output(), &y).unwrap();
        let grads = net.backward(&acts, &g_out).unwrap();
        let h = 1e-5;
        for l in 0..net.layers.len() {
            for idx in 0..net.layers[l].weights.len() {
                let (r, c) = (idx / net.layers[l].in_dim(), idx % net.layers[l].in_dim());
                let mut n = net.clone();
                n.layers[l].weights[[r, c]] += h;
                let up = loss(&n);
                n.layers[l].weights[[r, c]] -= 2.0 * h;
                let down = loss(&n);
                let fd = (up - down) / (2.0 * h);
                assert!(
                    rel_err(grads[l].weights[[r, c]], fd) < 1e-4,
                    "layer {l} w[{r},{c}]"
                );
            }
        }
    }

    #[test]
    fn dead_rectifier_unit_has_zero_incoming_grads() {
        let mut net = DenseNet::new(&[2, 3, 1], Activation::Rectifier, Activation::Identity, 9);
        // unit 1 always has a negative pre-activation on non-negative inputs
        net.layers[0].weights.row_mut(1).fill(-1.0);
        net.layers[0].bias[1] = -0.5;
        let x = array![[0.3, 0.8], [1.0, 0.1]];
        let acts = net.forward(&x).unwrap();
        let grads = net.backward(&acts, &Array2::ones((2, 1))).unwrap();
        assert!(grads[0].weights.row(1).iter().all(|&v| v == 0.0));
        assert_eq!(grads[0].bias[1], 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut net = DenseNet::new(&[3, 2], Activation::Rectifier, Activation::Identity, 1);
        let before = net.clone();
        let mut state = AdamState::new(&net, DEFAULT_LR);
        let zeros = AdamState::new(&net, DEFAULT_LR).m;
        adam_step(&mut state, &mut net, &zeros).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut net = DenseNet::new(&[2, 2], Activation::Rectifier, Activation::Identity, 1);
        let before = net.clone();
        let mut state = AdamState::new(&net, DEFAULT_LR);
        let mut grads = state.m.clone();
        grads[0].weights = array![[0.5, -2.0], [1e-3, 0.0]];
        adam_step(&mut state, &mut net, &grads).unwrap();
        for ((&after, &b), &g) in net.layers[0]
            .weights
            .iter()
            .zip(before.layers[0].weights.iter())
            .zip(grads[0].weights.iter())
        {
            // m_hat = g, v_hat = g^2
            let expected = DEFAULT_LR * g / (g.abs() + 1e-8);
            assert!(((b - after) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let net = DenseNet::new(
            &[5, 7, 3],
            Activation::Rectifier,
            Activation::SoftmaxOutput,
            42,
        );
        let back = DenseNet::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((n, 2), |(r, c)| {
            let centre = if labels[r] == 0 { -1.0 } else { 1.0 };
            centre * if c == 0 { 1.0 } else { 0.5 } + rng.random_range(-0.4..0.4)
        });
        let mut net = DenseNet::new(
            &[2, 8, 2],
            Activation::Rectifier,
            Activation::SoftmaxOutput,
            4,
        );
        let mut adam = AdamState::new(&net, 0.01);
        let t = onehot(&labels, 2);
        for _ in 0..500 {
            let acts = net.forward(&x).unwrap();
            let (_, g) = cross_entropy_loss(acts.output(), &t).unwrap();
            let grads = net.backward(&acts, &g).unwrap();
            adam_step(&mut adam, &mut net, &grads).unwrap();
        }
        let p = net.predict(&x).unwrap();
        for (r, row) in p.rows().into_iter().enumerate() {
            let pred = if row[1] > row[0] { 1 } else { 0 };
            assert_eq!(pred, labels[r]);
        }
    }
}
