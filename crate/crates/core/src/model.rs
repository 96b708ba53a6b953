//! Feedforward networks: construction, JSON loading, forward evaluation and
//! the margin network `g(x) = f_y(x) - f_j(x)`.

use std::io::Read;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation applied after an affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    #[serde(rename = "none", alias = "identity")]
    Identity,
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => crate::relaxation::Sigmoidal::Sigmoid.value(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "none",
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "none" | "identity" => Ok(ActivationKind::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

/// `z = activation(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: ActivationKind,
}

impl AffineLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: ActivationKind) -> Result<Self> {
        if bias.len() != weights.nrows() {
            return Err(Error::Shape(format!(
                "bias has {} entries but weight matrix has {} rows",
                bias.len(),
                weights.nrows()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite layer parameter".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Pre-activation `W x + b`.
    pub fn preactivation(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weights.dot(x) + &self.bias
    }
}

/// A chain of affine layers, each followed by its activation.
///
/// Networks are immutable once built and can be shared across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<AffineLayer>,
}

impl Network {
    /// Builds a network, checking that dimensions chain and that identity
    /// activations only appear on the final layer.
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self> {
        let net = Self::chained(layers)?;
        let last = net.layers.len() - 1;
        if let Some(i) = net.layers[..last]
            .iter()
            .position(|l| l.activation == ActivationKind::Identity)
        {
            return Err(Error::Shape(format!(
                "layer {i} has an identity activation but is not the final layer"
            )));
        }
        Ok(net)
    }

    pub(crate) fn chained(layers: Vec<AffineLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(Error::Shape(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    i + 1,
                    pair[1].input_dim(),
                    i,
                    pair[0].output_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Exact forward pass.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has length {} but network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut z = Array1::from(x.to_vec());
        for layer in &self.layers {
            z = layer.preactivation(&z).mapv(|v| layer.activation.apply(v));
        }
        Ok(z.to_vec())
    }

    /// Pre-activation values of every layer for input `x`.
    pub fn preactivations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has length {} but network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut z = Array1::from(x.to_vec());
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let pre = layer.preactivation(&z);
            z = pre.mapv(|v| layer.activation.apply(v));
            out.push(pre.to_vec());
        }
        Ok(out)
    }

    /// Serializes to the dense JSON network format.
    pub fn to_json(&self) -> serde_json::Value {
        let file = NetworkFile {
            input_dim: Some(self.input_dim()),
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec::Dense {
                    weights: l.weights.outer_iter().map(|r| r.to_vec()).collect(),
                    bias: l.bias.to_vec(),
                    activation: l.activation,
                })
                .collect(),
        };
        serde_json::to_value(file).expect("network serialization is infallible")
    }
}

/// Evaluates `net` at `x`.
pub fn eval_forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    net.eval(x)
}

/// The ℓ∞ ball `{x : |x - center|∞ ≤ radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRegion {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl InputRegion {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "radius must be a finite value >= 0, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.center[i] - self.radius
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.center[i] + self.radius
    }

    pub(crate) fn check_dim(&self, net: &Network) -> Result<()> {
        if self.dim() != net.input_dim() {
            return Err(Error::Shape(format!(
                "region has dimension {} but network expects {}",
                self.dim(),
                net.input_dim()
            )));
        }
        Ok(())
    }
}

/// Appends the margin row `e_true - e_other` so the resulting network has a
/// single output `f_true(x) - f_other(x)`.
///
/// The appended layer uses the identity activation; when the original final
/// layer is itself an identity layer the result contains two consecutive
/// affine layers, which is the only place a non-final identity layer occurs.
pub fn append_margin_layer(net: &Network, true_label: usize, other_label: usize) -> Result<Network> {
    let outputs = net.output_dim();
    for label in [true_label, other_label] {
        if label >= outputs {
            return Err(Error::LabelOutOfRange { label, outputs });
        }
    }
    if true_label == other_label {
        return Err(Error::InvalidArgument(format!(
            "margin labels must differ (both are {true_label})"
        )));
    }
    let mut row = Array2::zeros((1, outputs));
    row[[0, true_label]] = 1.0;
    row[[0, other_label]] = -1.0;
    let mut layers = net.layers.clone();
    layers.push(AffineLayer::new(row, Array1::zeros(1), ActivationKind::Identity)?);
    Network::chained(layers)
}

/// Parameters for [`gen_random_network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomNetSpec {
    /// Layer widths including the input, e.g. `[2, 3, 1]`.
    pub sizes: Vec<usize>,
    /// Activation of every hidden layer.
    pub activation: ActivationKind,
    /// Weights and biases are uniform in `[-scale, scale]`.
    pub scale: f64,
    /// Apply `activation` to the output layer too instead of leaving it affine.
    #[serde(default)]
    pub activate_output: bool,
}

impl RandomNetSpec {
    pub fn new(sizes: Vec<usize>, activation: ActivationKind, scale: f64) -> Self {
        Self {
            sizes,
            activation,
            scale,
            activate_output: false,
        }
    }
}

/// Deterministic random network for a given seed.
pub fn gen_random_network(spec: &RandomNetSpec, seed: u64) -> Result<Network> {
    if spec.sizes.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least an input and an output size".into(),
        ));
    }
    if spec.sizes.contains(&0) {
        return Err(Error::InvalidArgument("layer sizes must be positive".into()));
    }
    if !(spec.scale > 0.0) {
        return Err(Error::InvalidArgument("weight scale must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = spec.sizes.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for (i, dims) in spec.sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (dims[0], dims[1]);
        let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-spec.scale..=spec.scale));
        let bias = Array1::from_shape_fn(fan_out, |_| rng.gen_range(-spec.scale..=spec.scale));
        let last = i + 1 == n_layers;
        let activation = if last && !spec.activate_output {
            ActivationKind::Identity
        } else {
            spec.activation
        };
        layers.push(AffineLayer::new(weights, bias, activation)?);
    }
    Network::new(layers)
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_dim: Option<usize>,
    layers: Vec<LayerSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
enum LayerSpec {
    #[serde(rename = "dense")]
    Dense {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
        activation: ActivationKind,
    },
    #[serde(rename = "conv2d")]
    Conv2d {
        kernel: KernelSpec,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        input_shape: [usize; 3],
        #[serde(default)]
        bias: Option<Vec<f64>>,
        activation: ActivationKind,
    },
}

fn one() -> usize {
    1
}

/// `[out][in][kh][kw]`, or `[kh][kw]` for one input and one output channel.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum KernelSpec {
    Full(Vec<Vec<Vec<Vec<f64>>>>),
    Single(Vec<Vec<f64>>),
}

impl KernelSpec {
    fn into_full(self) -> Vec<Vec<Vec<Vec<f64>>>> {
        match self {
            KernelSpec::Full(k) => k,
            KernelSpec::Single(k) => vec![vec![k]],
        }
    }
}

/// Reads a network in the JSON network format. Convolutions are unrolled into
/// dense layers.
pub fn load_network<R: Read>(source: R) -> Result<Network> {
    let file: NetworkFile = serde_json::from_reader(source)?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, spec) in file.layers.into_iter().enumerate() {
        let layer = match spec {
            LayerSpec::Dense {
                weights,
                bias,
                activation,
            } => {
                let rows = weights.len();
                let cols = weights.first().map_or(0, Vec::len);
                if rows == 0 || cols == 0 || weights.iter().any(|r| r.len() != cols) {
                    return Err(Error::Shape(format!("layer {i}: ragged or empty weight matrix")));
                }
                let flat: Vec<f64> = weights.into_iter().flatten().collect();
                let w =
                    Array2::from_shape_vec((rows, cols), flat).map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
                AffineLayer::new(w, Array1::from(bias), activation)?
            }
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                input_shape,
                bias,
                activation,
            } => lower_conv2d(kernel.into_full(), stride, padding, input_shape, bias, activation).map_err(
                |e| match e {
                    Error::Shape(msg) => Error::Shape(format!("layer {i}: {msg}")),
                    other => other,
                },
            )?,
        };
        layers.push(layer);
    }
    let net = Network::new(layers)?;
    if let Some(n) = file.input_dim {
        if n != net.input_dim() {
            return Err(Error::Shape(format!(
                "declared input_dim {n} but first layer expects {}",
                net.input_dim()
            )));
        }
    }
    Ok(net)
}

/// Unrolls a 2-D convolution over a `[c, h, w]` input (flattened channel-major)
/// into an equivalent dense layer.
fn lower_conv2d(
    kernel: Vec<Vec<Vec<Vec<f64>>>>,
    stride: usize,
    padding: usize,
    input_shape: [usize; 3],
    bias: Option<Vec<f64>>,
    activation: ActivationKind,
) -> Result<AffineLayer> {
    let [channels, height, width] = input_shape;
    let out_channels = kernel.len();
    if out_channels == 0 || stride == 0 {
        return Err(Error::Shape("empty kernel or zero stride".into()));
    }
    let kh = kernel[0].first().map_or(0, Vec::len);
    let kw = kernel[0].first().and_then(|c| c.first()).map_or(0, Vec::len);
    for oc in &kernel {
        if oc.len() != channels || oc.iter().any(|c| c.len() != kh || c.iter().any(|r| r.len() != kw)) {
            return Err(Error::Shape(format!(
                "kernel must be [{out_channels}][{channels}][{kh}][{kw}]"
            )));
        }
    }
    if kh == 0 || kw == 0 || kh > height + 2 * padding || kw > width + 2 * padding {
        return Err(Error::Shape("kernel larger than padded input".into()));
    }
    let out_h = (height + 2 * padding - kh) / stride + 1;
    let out_w = (width + 2 * padding - kw) / stride + 1;
    let bias = bias.unwrap_or_else(|| vec![0.0; out_channels]);
    if bias.len() != out_channels {
        return Err(Error::Shape(format!(
            "conv bias has {} entries for {out_channels} output channels",
            bias.len()
        )));
    }

    let in_dim = channels * height * width;
    let out_dim = out_channels * out_h * out_w;
    let mut weights = Array2::zeros((out_dim, in_dim));
    let mut dense_bias = Array1::zeros(out_dim);
    for (oc, filters) in kernel.iter().enumerate() {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let row = (oc * out_h + oy) * out_w + ox;
                dense_bias[row] = bias[oc];
                for (ic, filter) in filters.iter().enumerate() {
                    for (ky, krow) in filter.iter().enumerate() {
                        for (kx, &k) in krow.iter().enumerate() {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= height as isize || ix >= width as isize {
                                continue;
                            }
                            let col = (ic * height + iy as usize) * width + ix as usize;
                            weights[[row, col]] += k;
                        }
                    }
                }
            }
        }
    }
    AffineLayer::new(weights, dense_bias, activation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dense(w: Array2<f64>, b: Array1<f64>, act: ActivationKind) -> AffineLayer {
        AffineLayer::new(w, b, act).unwrap()
    }

    #[test]
    fn loads_single_dense_layer() {
        let src = r#"{"input_dim": 2, "layers": [
            {"type": "dense", "weights": [[1, -1]], "bias": [0], "activation": "sigmoid"}]}"#;
        let net = load_network(src.as_bytes()).unwrap();
        assert_eq!(net.input_dim(), 2);
        assert_eq!(net.output_dim(), 1);
        assert_eq!(net.layers()[0].activation, ActivationKind::Sigmoid);
    }

    #[test]
    fn broken_chain_is_a_shape_error() {
        let src = r#"{"layers": [
            {"type": "dense", "weights": [[1,0,0],[0,1,0],[0,0,1],[1,1,1]], "bias": [0,0,0,0], "activation": "tanh"},
            {"type": "dense", "weights": [[1,1,1,1,1]], "bias": [0], "activation": "none"}]}"#;
        assert!(matches!(load_network(src.as_bytes()), Err(Error::Shape(_))));
    }

    #[test]
    fn malformed_json_and_unknown_layers_are_rejected() {
        assert!(matches!(load_network("{".as_bytes()), Err(Error::Parse(_))));
        let src = r#"{"layers": [{"type": "maxpool", "size": 2}]}"#;
        assert!(load_network(src.as_bytes()).is_err());
    }

    #[test]
    fn identity_only_on_final_layer() {
        let l1 = dense(array![[1.0]], array![0.0], ActivationKind::Identity);
        let l2 = dense(array![[1.0]], array![0.0], ActivationKind::Sigmoid);
        assert!(Network::new(vec![l1, l2]).is_err());
    }

    #[test]
    fn one_by_one_conv_lowers_to_diagonal() {
        let src = r#"{"layers": [{"type": "conv2d", "kernel": [[2]], "stride": 1,
            "input_shape": [1, 2, 2], "activation": "none"}]}"#;
        let net = load_network(src.as_bytes()).unwrap();
        let w = &net.layers()[0].weights;
        assert_eq!(w, &(Array2::<f64>::eye(4) * 2.0));
    }

    /// Direct convolution, used only to check the unrolled matrix.
    #[allow(clippy::needless_range_loop)]
    fn conv_reference(
        kernel: &[Vec<Vec<Vec<f64>>>],
        bias: &[f64],
        stride: usize,
        padding: usize,
        [c, h, w]: [usize; 3],
        x: &[f64],
    ) -> Vec<f64> {
        let kh = kernel[0][0].len();
        let kw = kernel[0][0][0].len();
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let mut out = Vec::new();
        for (oc, filt) in kernel.iter().enumerate() {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[oc];
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += filt[ic][ky][kx] * x[(ic * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn lowered_conv_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = [2, 5, 4];
        let kernel: Vec<Vec<Vec<Vec<f64>>>> = (0..3)
            .map(|_| {
                (0..2)
                    .map(|_| {
                        (0..3)
                            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let bias = vec![0.1, -0.2, 0.3];
        for (stride, padding) in [(1, 0), (2, 1), (1, 1)] {
            let src = serde_json::json!({"layers": [{"type": "conv2d", "kernel": kernel, "stride": stride,
                "padding": padding, "input_shape": shape, "bias": bias, "activation": "none"}]});
            let net = load_network(src.to_string().as_bytes()).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let got = net.eval(&x).unwrap();
                let want = conv_reference(&kernel, &bias, stride, padding, shape, &x);
                assert_eq!(got.len(), want.len());
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
                }
            }
        }
    }

    #[test]
    fn forward_examples() {
        let sig = Network::new(vec![dense(array![[1.0]], array![0.0], ActivationKind::Sigmoid)]).unwrap();
        assert_eq!(eval_forward(&sig, &[0.0]).unwrap(), vec![0.5]);
        let tanh = Network::new(vec![dense(array![[1.0]], array![0.0], ActivationKind::Tanh)]).unwrap();
        assert_eq!(eval_forward(&tanh, &[0.0]).unwrap(), vec![0.0]);
        let aff = Network::new(vec![dense(array![[1.0, 1.0]], array![1.0], ActivationKind::Identity)]).unwrap();
        assert_eq!(eval_forward(&aff, &[2.0, 3.0]).unwrap(), vec![6.0]);
        assert!(matches!(eval_forward(&aff, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn margin_layer_row_and_errors() {
        let net = gen_random_network(&RandomNetSpec::new(vec![2, 4, 3], ActivationKind::Sigmoid, 1.0), 3).unwrap();
        let g = append_margin_layer(&net, 0, 2).unwrap();
        let last = g.layers().last().unwrap();
        assert_eq!(last.weights, array![[1.0, 0.0, -1.0]]);
        assert_eq!(last.bias, array![0.0]);
        assert_eq!(g.input_dim(), 2);
        assert_eq!(g.output_dim(), 1);
        assert!(append_margin_layer(&net, 1, 1).is_err());
        assert!(matches!(
            append_margin_layer(&net, 0, 3),
            Err(Error::LabelOutOfRange { label: 3, outputs: 3 })
        ));
    }

    #[test]
    fn margin_network_matches_output_difference() {
        let net = gen_random_network(&RandomNetSpec::new(vec![3, 5, 3], ActivationKind::Tanh, 1.0), 11).unwrap();
        let g = append_margin_layer(&net, 0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let f = net.eval(&x).unwrap();
            assert_eq!(g.eval(&x).unwrap()[0], f[0] - f[2]);
        }
    }

    #[test]
    fn random_networks_are_seeded() {
        let spec = RandomNetSpec::new(vec![2, 3, 1], ActivationKind::Sigmoid, 1.0);
        let a = gen_random_network(&spec, 1).unwrap();
        assert_eq!(a, gen_random_network(&spec, 1).unwrap());
        assert_ne!(
            a.layers()[0].weights,
            gen_random_network(&spec, 2).unwrap().layers()[0].weights
        );
        assert_eq!(a.layers().len(), 2);
        assert_eq!((a.input_dim(), a.layers()[0].output_dim(), a.output_dim()), (2, 3, 1));
        assert!(gen_random_network(&RandomNetSpec::new(vec![], ActivationKind::Sigmoid, 1.0), 0).is_err());
    }

    #[test]
    fn json_round_trip_preserves_forward_pass() {
        let net = gen_random_network(&RandomNetSpec::new(vec![4, 6, 2], ActivationKind::Tanh, 0.7), 9).unwrap();
        let back = load_network(net.to_json().to_string().as_bytes()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_eq!(net.eval(&x).unwrap(), back.eval(&x).unwrap());
        }
    }
}
