//! Brute-force reference checks.
//!
//! Nothing here shares code with the propagation engine: sampling, grid
//! enumeration, dense validity scans and plain interval arithmetic. A
//! disagreement between these and the engine points at a bug in one of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationKind, InputRegion, Network};
use crate::propagation::LayerBounds;
use crate::relaxation::{BoundingLine, Sigmoidal};
use crate::search::Side;

/// Result of comparing an engine value against an oracle value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub quantity: String,
    pub oracle_value: f64,
    pub engine_value: f64,
    /// `oracle_value - engine_value`.
    pub margin: f64,
    pub tolerance: f64,
    pub verdict: bool,
}

impl OracleReport {
    /// Passes when `engine ≤ oracle + tolerance`, i.e. the engine's lower bound
    /// does not exceed an observed value.
    pub fn lower_bound(quantity: impl Into<String>, oracle_value: f64, engine_value: f64, tolerance: f64) -> Self {
        let margin = oracle_value - engine_value;
        Self {
            quantity: quantity.into(),
            oracle_value,
            engine_value,
            margin,
            tolerance,
            verdict: margin >= -tolerance,
        }
    }
}

fn scalar_output(net: &Network, x: &[f64]) -> Result<f64> {
    let out = net.eval(x)?;
    if out.len() != 1 {
        return Err(Error::Shape(format!(
            "expected a single-output network, got {} outputs",
            out.len()
        )));
    }
    Ok(out[0])
}

/// Minimum of `g` over `x0`, the `2·dim` axis extremes `x0 ± ε e_i`, and
/// `n_samples` uniform draws from the ball. The draws for a fixed seed are
/// nested: a larger `n_samples` extends the same sequence.
pub fn sampled_min(net: &Network, region: &InputRegion, n_samples: usize, seed: u64) -> Result<f64> {
    sampled_min_with(net, region, n_samples, seed, &[])
}

/// [`sampled_min`] with extra caller-supplied points (e.g. known corners).
pub fn sampled_min_with(
    net: &Network,
    region: &InputRegion,
    n_samples: usize,
    seed: u64,
    extra_points: &[Vec<f64>],
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    region.check_dim(net)?;
    let mut best = scalar_output(net, &region.center)?;
    for i in 0..region.dim() {
        for delta in [-region.radius, region.radius] {
            let mut x = region.center.clone();
            x[i] += delta;
            best = best.min(scalar_output(net, &x)?);
        }
    }
    for x in extra_points {
        best = best.min(scalar_output(net, x)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = region.center.clone();
    for _ in 0..n_samples {
        for (xi, ci) in x.iter_mut().zip(&region.center) {
            *xi = ci + rng.gen_range(-region.radius..=region.radius);
        }
        best = best.min(scalar_output(net, &x)?);
    }
    Ok(best)
}

/// `n` evenly spaced points from `lo` to `hi`, both included exactly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| {
            if k + 1 == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Minimum of `g` over the full tensor grid of the ball (input dim ≤ 3).
pub fn grid_min(net: &Network, region: &InputRegion, points_per_dim: usize) -> Result<f64> {
    region.check_dim(net)?;
    let dim = region.dim();
    if dim > 3 {
        return Err(Error::InvalidArgument(format!(
            "grid oracle supports at most 3 inputs, got {dim}"
        )));
    }
    if points_per_dim < 2 {
        return Err(Error::InvalidArgument(
            "grid needs at least 2 points per dimension".into(),
        ));
    }
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|i| linspace(region.lower(i), region.upper(i), points_per_dim))
        .collect();
    let total = points_per_dim.pow(dim as u32);
    let mut best = f64::INFINITY;
    let mut x = vec![0.0; dim];
    for flat in 0..total {
        let mut rest = flat;
        for (xi, axis) in x.iter_mut().zip(&axes) {
            *xi = axis[rest % points_per_dim];
            rest /= points_per_dim;
        }
        best = best.min(scalar_output(net, &x)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseValidity {
    pub valid: bool,
    /// Smallest `line - σ` (upper) or `σ - line` (lower) over the grid.
    pub worst_gap: f64,
    pub worst_at: f64,
}

fn reference_activation(kind: Sigmoidal, z: f64) -> f64 {
    match kind {
        Sigmoidal::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        Sigmoidal::Tanh => z.tanh(),
    }
}

/// Checks `line` against `σ` on an `n_points` grid over `[l, u]`.
pub fn dense_validity(
    kind: Sigmoidal,
    side: Side,
    line: &BoundingLine,
    l: f64,
    u: f64,
    n_points: usize,
    tolerance: f64,
) -> Result<DenseValidity> {
    if l > u {
        return Err(Error::InvalidInterval { lower: l, upper: u });
    }
    if n_points < 2 {
        return Err(Error::InvalidArgument("need at least two grid points".into()));
    }
    let mut worst = DenseValidity {
        valid: true,
        worst_gap: f64::INFINITY,
        worst_at: l,
    };
    for z in linspace(l, u, n_points) {
        let line_z = line.slope * z + line.intercept;
        let gap = match side {
            Side::Upper => line_z - reference_activation(kind, z),
            Side::Lower => reference_activation(kind, z) - line_z,
        };
        if gap < worst.worst_gap {
            worst.worst_gap = gap;
            worst.worst_at = z;
        }
    }
    worst.valid = worst.worst_gap >= -tolerance;
    Ok(worst)
}

/// Interval bound propagation: pre-activation boxes for every layer.
pub fn interval_bounds(net: &Network, region: &InputRegion) -> Result<Vec<LayerBounds>> {
    region.check_dim(net)?;
    let mut lo: Vec<f64> = (0..region.dim()).map(|i| region.lower(i)).collect();
    let mut hi: Vec<f64> = (0..region.dim()).map(|i| region.upper(i)).collect();
    let mut out = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let w = &layer.weights;
        let mut pre_lo = Vec::with_capacity(w.nrows());
        let mut pre_hi = Vec::with_capacity(w.nrows());
        for r in 0..w.nrows() {
            let (mut a, mut b) = (layer.bias[r], layer.bias[r]);
            for c in 0..w.ncols() {
                let v = w[[r, c]];
                if v >= 0.0 {
                    a += v * lo[c];
                    b += v * hi[c];
                } else {
                    a += v * hi[c];
                    b += v * lo[c];
                }
            }
            pre_lo.push(a);
            pre_hi.push(b);
        }
        let image = |z: f64| match layer.activation {
            ActivationKind::Sigmoid => reference_activation(Sigmoidal::Sigmoid, z),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Identity => z,
        };
        lo = pre_lo.iter().map(|&z| image(z)).collect();
        hi = pre_hi.iter().map(|&z| image(z)).collect();
        out.push(LayerBounds {
            lower: pre_lo,
            upper: pre_hi,
        });
    }
    Ok(out)
}

/// Post-activation box of `σ` over `[l, u]` (monotone image).
pub fn activation_image(kind: Sigmoidal, l: f64, u: f64) -> (f64, f64) {
    (reference_activation(kind, l), reference_activation(kind, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_random_network, AffineLayer, RandomNetSpec};
    use crate::propagation::{compute_preactivation_bounds, concretize, Direction, SymbolicBound};
    use crate::relaxation::{chord_line, tangent_line};
    use crate::search::Baseline;
    use ndarray::array;

    fn sigmoid_1d() -> Network {
        Network::new(vec![AffineLayer::new(
            array![[1.0]],
            array![0.0],
            ActivationKind::Sigmoid,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn sampled_min_of_affine_hits_the_corner() {
        let w = array![[0.7, -1.2, 0.4]];
        let net = Network::new(vec![
            AffineLayer::new(w.clone(), array![0.3], ActivationKind::Identity).unwrap()
        ])
        .unwrap();
        let region = InputRegion::new(vec![0.1, -0.2, 0.5], 0.25).unwrap();
        let corner: Vec<f64> = region
            .center
            .iter()
            .zip(w.row(0))
            .map(|(c, a)| c - 0.25 * a.signum())
            .collect();
        let got = sampled_min_with(&net, &region, 10, 0, &[corner]).unwrap();
        let exact = concretize(
            &SymbolicBound {
                coeffs: w.row(0).to_vec(),
                constant: 0.3,
                direction: Direction::Lower,
            },
            &region,
        )
        .unwrap();
        assert!((got - exact).abs() <= 1e-12);
    }

    #[test]
    fn sampled_min_point_region_and_nesting() {
        let net = gen_random_network(&RandomNetSpec::new(vec![2, 4, 1], ActivationKind::Tanh, 1.0), 2).unwrap();
        let point = InputRegion::new(vec![0.3, 0.1], 0.0).unwrap();
        assert_eq!(
            sampled_min(&net, &point, 5, 0).unwrap(),
            net.eval(&[0.3, 0.1]).unwrap()[0]
        );
        let region = InputRegion::new(vec![0.3, 0.1], 0.5).unwrap();
        let coarse = sampled_min(&net, &region, 100, 4).unwrap();
        let fine = sampled_min(&net, &region, 100_000, 4).unwrap();
        assert!(fine <= coarse);
        assert!(sampled_min(&net, &region, 0, 4).is_err());
    }

    #[test]
    fn grid_min_examples() {
        let region = InputRegion::new(vec![0.0], 1.0).unwrap();
        let m = grid_min(&sigmoid_1d(), &region, 1001).unwrap();
        assert!((m - 0.2689414).abs() <= 1e-4);
        let g = linspace(-1.0, 1.0, 7);
        assert_eq!((g[0], g[6]), (-1.0, 1.0));
        let net = gen_random_network(&RandomNetSpec::new(vec![2, 5, 1], ActivationKind::Sigmoid, 2.0), 3).unwrap();
        let r2 = InputRegion::new(vec![0.2, -0.4], 0.7).unwrap();
        let coarse = grid_min(&net, &r2, 11).unwrap();
        let fine = grid_min(&net, &r2, 21).unwrap();
        assert!(fine <= coarse);
        let wide = gen_random_network(&RandomNetSpec::new(vec![4, 2, 1], ActivationKind::Sigmoid, 1.0), 3).unwrap();
        assert!(grid_min(&wide, &InputRegion::new(vec![0.0; 4], 0.1).unwrap(), 3).is_err());
    }

    #[test]
    fn dense_validity_examples() {
        let s = Sigmoidal::Sigmoid;
        let chord = chord_line(s, 1.0, 3.0).unwrap();
        let v = dense_validity(s, Side::Lower, &chord, 1.0, 3.0, 1000, 1e-12).unwrap();
        assert!(v.valid && v.worst_gap <= 1e-12);

        let bad = dense_validity(s, Side::Upper, &tangent_line(s, 0.1), -4.0, 2.0, 1000, 1e-12).unwrap();
        assert!(!bad.valid);
        assert_eq!(bad.worst_at, -4.0);
        assert!((bad.worst_gap + 0.5154).abs() < 1e-4);

        let c = BoundingLine::constant(reference_activation(s, 0.4));
        for side in [Side::Lower, Side::Upper] {
            assert!(dense_validity(s, side, &c, 0.4, 0.4, 2, 1e-12).unwrap().valid);
        }
    }

    #[test]
    fn interval_examples() {
        let w = array![[1.0, -2.0], [0.5, 0.5]];
        let net = Network::new(vec![
            AffineLayer::new(w, array![0.1, -0.3], ActivationKind::Identity).unwrap()
        ])
        .unwrap();
        let region = InputRegion::new(vec![0.2, 0.4], 0.3).unwrap();
        let ibp = interval_bounds(&net, &region).unwrap();
        let crown = compute_preactivation_bounds(&net, &region, &Baseline).unwrap();
        for i in 0..2 {
            assert!((ibp[0].lower[i] - crown.bounds[0].lower[i]).abs() <= 1e-15);
            assert!((ibp[0].upper[i] - crown.bounds[0].upper[i]).abs() <= 1e-15);
        }
        let (a, b) = activation_image(Sigmoidal::Sigmoid, -1.0, 1.0);
        assert!((a - 0.2689414).abs() <= 1e-7 && (b - 0.7310586).abs() <= 1e-7);
    }

    #[test]
    fn interval_bounds_contain_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = gen_random_network(&RandomNetSpec::new(vec![3, 7, 5, 2], ActivationKind::Sigmoid, 1.0), 8).unwrap();
        let region = InputRegion::new(vec![0.0, 0.5, -0.5], 0.4).unwrap();
        let ibp = interval_bounds(&net, &region).unwrap();
        for _ in 0..10_000 {
            let x: Vec<f64> = region.center.iter().map(|c| c + rng.gen_range(-0.4..=0.4)).collect();
            for (b, v) in ibp.iter().zip(net.preactivations(&x).unwrap()) {
                assert!(b.contains(&v, 1e-12));
            }
        }
    }

    #[test]
    fn report_verdict() {
        assert!(OracleReport::lower_bound("g", 1.0, 0.5, 0.0).verdict);
        assert!(!OracleReport::lower_bound("g", 1.0, 1.1, 1e-9).verdict);
    }
}
