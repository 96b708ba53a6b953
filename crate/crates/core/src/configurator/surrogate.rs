//! Random-forest regression surrogate over the configuration space.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::Observation;

const DIMS: usize = 4;

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Split dimensions drawn at random per node.
    pub max_features: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_depth: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            max_features: 3,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_depth: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        dim: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, x: &[f64; DIMS]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf(v) => return *v,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => node = if x[*dim] <= *threshold { left } else { right },
            }
        }
    }
}

/// Ensemble of regression trees fit on `(config, cost)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    trees: Vec<Node>,
}

impl SurrogateModel {
    /// Mean and across-tree variance of the prediction at `x`.
    pub fn predict(&self, x: &[f64; DIMS]) -> (f64, f64) {
        let n = self.trees.len() as f64;
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let mean = preds.iter().sum::<f64>() / n;
        let var = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

/// Fits the default forest (10 bootstrapped trees).
pub fn fit_surrogate(history: &[Observation], seed: u64) -> Result<SurrogateModel> {
    fit_surrogate_with(history, seed, ForestParams::default())
}

pub fn fit_surrogate_with(history: &[Observation], seed: u64, params: ForestParams) -> Result<SurrogateModel> {
    if history.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit a surrogate on an empty history".into(),
        ));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let xs: Vec<[f64; DIMS]> = history.iter().map(|o| o.config.as_array()).collect();
    let ys: Vec<f64> = history.iter().map(|o| o.cost).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let trees = (0..params.n_trees)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            build(&xs, &ys, &mut idx, 0, &params, &mut rng)
        })
        .collect();
    Ok(SurrogateModel { trees })
}

fn mean_of(ys: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| ys[i]).sum::<f64>() / idx.len() as f64
}

fn build(
    xs: &[[f64; DIMS]],
    ys: &[f64],
    idx: &mut [usize],
    depth: usize,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> Node {
    let mean = mean_of(ys, idx);
    let constant = idx.iter().all(|&i| ys[i] == ys[idx[0]]);
    if constant || idx.len() < params.min_samples_split || depth >= params.max_depth {
        return Node::Leaf(mean);
    }

    let mut dims: Vec<usize> = (0..DIMS).collect();
    dims.shuffle(rng);
    dims.truncate(params.max_features.clamp(1, DIMS));

    // (sse, dim, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    for &dim in &dims {
        idx.sort_by(|&a, &b| xs[a][dim].total_cmp(&xs[b][dim]));
        let total: f64 = idx.iter().map(|&i| ys[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| ys[i] * ys[i]).sum();
        let (mut left_sum, mut left_sq) = (0.0, 0.0);
        for split in 1..idx.len() {
            let y = ys[idx[split - 1]];
            left_sum += y;
            left_sq += y * y;
            let lo = xs[idx[split - 1]][dim];
            let hi = xs[idx[split]][dim];
            if lo == hi || split < params.min_samples_leaf || idx.len() - split < params.min_samples_leaf {
                continue;
            }
            let nl = split as f64;
            let nr = (idx.len() - split) as f64;
            let right_sum = total - left_sum;
            let sse = (left_sq - left_sum * left_sum / nl) + (total_sq - left_sq - right_sum * right_sum / nr);
            if best.is_none_or(|(b, _, _)| sse < b) {
                best = Some((sse, dim, 0.5 * (lo + hi)));
            }
        }
    }

    let Some((_, dim, threshold)) = best else {
        return Node::Leaf(mean);
    };
    idx.sort_by(|&a, &b| xs[a][dim].total_cmp(&xs[b][dim]));
    let cut = idx.partition_point(|&i| xs[i][dim] <= threshold);
    let (left, right) = idx.split_at_mut(cut);
    Node::Split {
        dim,
        threshold,
        left: Box::new(build(xs, ys, left, depth + 1, params, rng)),
        right: Box::new(build(xs, ys, right, depth + 1, params, rng)),
    }
}
