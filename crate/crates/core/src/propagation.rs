//! Backward substitution of linear relaxations (CROWN-style).
//!
//! A linear function of some layer's values is pushed back towards the input:
//! through an affine layer by `Λ ← Λ W`, `c ← c + Λ b`, and through an
//! activation by replacing each neuron with one of its bounding lines. Which
//! line depends on the sign of its coefficient: a lower bound takes the lower
//! line for `λ ≥ 0` and the upper line for `λ < 0`, an upper bound the
//! opposite. The result is a linear function of `x` that is concretized in
//! closed form over the ℓ∞ ball.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationKind, InputRegion, Network};
use crate::relaxation::{relax_neuron, NeuronRelaxation, Sigmoidal};
use crate::search::TangentStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Lower,
    Upper,
}

/// `x ↦ coeffs · x + constant`, a lower or upper bound on some network quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicBound {
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub direction: Direction,
}

impl SymbolicBound {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.constant
    }
}

/// Pre-activation interval of every neuron in one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LayerBounds {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, values: &[f64], tol: f64) -> bool {
        values
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| l - tol <= v && v <= u + tol)
    }
}

/// Relaxations indexed by layer; `None` for layers without a sigmoidal activation.
pub type LayerRelaxations = Vec<Option<Vec<NeuronRelaxation>>>;

/// What to bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundTarget {
    /// Pre-activation of one neuron.
    Neuron { layer: usize, index: usize },
    /// Pre-activations of every neuron of a layer.
    Layer(usize),
    /// The network output, after the final activation.
    Output,
}

/// Pushes the rows of `coeffs` (a linear function of the post-activation values
/// of layer `depth - 1`, or of the input when `depth == 0`) back to the input.
fn fold_to_input(
    net: &Network,
    relaxations: &[Option<Vec<NeuronRelaxation>>],
    depth: usize,
    mut coeffs: Array2<f64>,
    mut constants: Array1<f64>,
    direction: Direction,
) -> Result<(Array2<f64>, Array1<f64>)> {
    for k in (0..depth).rev() {
        let layer = &net.layers()[k];
        if layer.activation != ActivationKind::Identity {
            let relax = relaxations
                .get(k)
                .and_then(Option::as_ref)
                .ok_or_else(|| Error::InvalidArgument(format!("missing relaxation for layer {k}")))?;
            if relax.len() != coeffs.ncols() {
                return Err(Error::Shape(format!(
                    "layer {k} has {} relaxations for {} neurons",
                    relax.len(),
                    coeffs.ncols()
                )));
            }
            for (mut row, c) in coeffs.outer_iter_mut().zip(constants.iter_mut()) {
                for (lambda, r) in row.iter_mut().zip(relax) {
                    let use_lower = match direction {
                        Direction::Lower => *lambda >= 0.0,
                        Direction::Upper => *lambda < 0.0,
                    };
                    let line = if use_lower { &r.lower } else { &r.upper };
                    *c += *lambda * line.intercept;
                    *lambda *= line.slope;
                }
            }
        }
        constants = constants + coeffs.dot(&layer.bias);
        coeffs = coeffs.dot(&layer.weights);
    }
    Ok((coeffs, constants))
}

fn rows_to_bounds(coeffs: Array2<f64>, constants: Array1<f64>, direction: Direction) -> Vec<SymbolicBound> {
    coeffs
        .outer_iter()
        .zip(constants.iter())
        .map(|(row, &c)| SymbolicBound {
            coeffs: row.to_vec(),
            constant: c,
            direction,
        })
        .collect()
}

/// Linear bounds of `target` in terms of the network input.
///
/// Requires relaxations for every activation layer that the substitution
/// crosses: all layers strictly before the target, plus the final layer for
/// [`BoundTarget::Output`] when it has a sigmoidal activation.
pub fn backward_substitute(
    net: &Network,
    relaxations: &[Option<Vec<NeuronRelaxation>>],
    target: BoundTarget,
    direction: Direction,
) -> Result<Vec<SymbolicBound>> {
    let n_layers = net.layers().len();
    let (coeffs, constants) = match target {
        BoundTarget::Output => {
            let m = net.output_dim();
            fold_to_input(net, relaxations, n_layers, Array2::eye(m), Array1::zeros(m), direction)?
        }
        BoundTarget::Layer(k) | BoundTarget::Neuron { layer: k, .. } => {
            let layer = net
                .layers()
                .get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("layer {k} out of range")))?;
            let (w, b) = match target {
                BoundTarget::Neuron { index, .. } => {
                    if index >= layer.output_dim() {
                        return Err(Error::InvalidArgument(format!(
                            "neuron {index} out of range for layer {k}"
                        )));
                    }
                    (
                        layer.weights.select(Axis(0), &[index]),
                        layer.bias.select(Axis(0), &[index]),
                    )
                }
                _ => (layer.weights.clone(), layer.bias.clone()),
            };
            fold_to_input(net, relaxations, k, w, b, direction)?
        }
    };
    Ok(rows_to_bounds(coeffs, constants, direction))
}

/// Exact optimum of a linear function over the ℓ∞ ball: `Λ·x0 + c ∓ ε‖Λ‖₁`.
pub fn concretize(bound: &SymbolicBound, region: &InputRegion) -> Result<f64> {
    if bound.coeffs.len() != region.dim() {
        return Err(Error::Shape(format!(
            "bound has {} coefficients but region has dimension {}",
            bound.coeffs.len(),
            region.dim()
        )));
    }
    let center = bound.eval(&region.center);
    if region.radius == 0.0 {
        return Ok(center);
    }
    let l1: f64 = bound.coeffs.iter().map(|a| a.abs()).sum();
    Ok(match bound.direction {
        Direction::Lower => center - region.radius * l1,
        Direction::Upper => center + region.radius * l1,
    })
}

/// Per-layer bounds and relaxations from one propagation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    pub bounds: Vec<LayerBounds>,
    pub relaxations: LayerRelaxations,
}

fn concretize_rows(
    coeffs: &Array2<f64>,
    constants: &Array1<f64>,
    region: &InputRegion,
    direction: Direction,
) -> Vec<f64> {
    let center = Array1::from(region.center.clone());
    let values = coeffs.dot(&center) + constants;
    if region.radius == 0.0 {
        return values.to_vec();
    }
    let l1 = coeffs.mapv(f64::abs).sum_axis(Axis(1));
    match direction {
        Direction::Lower => (values - l1 * region.radius).to_vec(),
        Direction::Upper => (values + l1 * region.radius).to_vec(),
    }
}

/// Computes pre-activation bounds front to back, relaxing every sigmoidal
/// layer with tangent points from `strategy` before moving on.
pub fn compute_preactivation_bounds(
    net: &Network,
    region: &InputRegion,
    strategy: &dyn TangentStrategy,
) -> Result<Propagation> {
    region.check_dim(net)?;
    let mut bounds = Vec::with_capacity(net.layers().len());
    let mut relaxations: LayerRelaxations = Vec::with_capacity(net.layers().len());
    for (k, layer) in net.layers().iter().enumerate() {
        let mut sides = [Direction::Lower, Direction::Upper].into_iter().map(|dir| {
            let (coeffs, constants) =
                fold_to_input(net, &relaxations, k, layer.weights.clone(), layer.bias.clone(), dir)?;
            Ok::<_, Error>(concretize_rows(&coeffs, &constants, region, dir))
        });
        let lower = sides.next().expect("two directions")?;
        let mut upper = sides.next().expect("two directions")?;
        // Rounding can invert the interval of a neuron whose bounds coincide.
        for (i, (u, &l)) in upper.iter_mut().zip(&lower).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "bounds of neuron {i} in layer {k} overflowed to [{l}, {u}]; the radius is too large"
                )));
            }
            if *u < l {
                *u = l;
            }
        }

        let relax = match Sigmoidal::try_from(layer.activation) {
            Ok(kind) => Some(
                lower
                    .iter()
                    .zip(&upper)
                    .map(|(&l, &u)| {
                        let choice = strategy.choose(kind, l, u)?;
                        relax_neuron(kind, l, u, choice.lower, choice.upper)
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            Err(_) => None,
        };
        bounds.push(LayerBounds { lower, upper });
        relaxations.push(relax);
    }
    Ok(Propagation { bounds, relaxations })
}

/// Result of [`global_lower_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBound {
    pub g_star: f64,
    pub output_bound: SymbolicBound,
    pub propagation: Propagation,
}

/// Certified lower bound `g*` of a single-output network over `region`.
pub fn global_lower_bound(net: &Network, region: &InputRegion, strategy: &dyn TangentStrategy) -> Result<GlobalBound> {
    if net.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "global lower bound needs a single-output network, got {} outputs",
            net.output_dim()
        )));
    }
    let propagation = compute_preactivation_bounds(net, region, strategy)?;
    let output_bound = backward_substitute(net, &propagation.relaxations, BoundTarget::Output, Direction::Lower)?
        .pop()
        .expect("one output row");
    let g_star = concretize(&output_bound, region)?;
    Ok(GlobalBound {
        g_star,
        output_bound,
        propagation,
    })
}
