//! Per-instance configuration of the tangent search.
//!
//! A sequential model-based loop over `(s_upper, ψ_upper, s_lower, |ψ_lower|)`:
//! evaluate a few random configurations, then repeatedly fit a random-forest
//! surrogate to the observed costs (`cost = -g*`), pick the candidate with the
//! largest expected improvement and evaluate it. The incumbent is the cheapest
//! configuration seen so far.

mod surrogate;

pub use surrogate::{fit_surrogate, fit_surrogate_with, ForestParams, SurrogateModel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::error::{Error, Result};
use crate::model::{InputRegion, Network};
use crate::propagation::{global_lower_bound, GlobalBound};
use crate::search::{MultiplicativeSearch, SearchConfig};

/// Cost recorded for a configuration whose tangent search fails.
pub const PENALTY_COST: f64 = 1e6;
pub const DEFAULT_TRIALS: usize = 150;
pub const DEFAULT_INITIAL_DESIGN: usize = 10;
const RANDOM_CANDIDATES: usize = 1000;
const LOCAL_CANDIDATES: usize = 100;
const LOCAL_STD_FRACTION: f64 = 0.1;

/// Box constraints for each of the four configuration dimensions, in
/// [`SearchConfig::as_array`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub bounds: [(f64, f64); 4],
}

impl Default for ConfigSpace {
    fn default() -> Self {
        Self {
            bounds: [(0.01, 2.0), (1.01, 3.0), (-2.0, -0.01), (1.01, 3.0)],
        }
    }
}

impl ConfigSpace {
    pub fn contains(&self, config: &SearchConfig) -> bool {
        config
            .as_array()
            .iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> SearchConfig {
        SearchConfig::from_array(self.bounds.map(|(lo, hi)| rng.gen_range(lo..=hi)))
    }

    fn clip(&self, mut v: [f64; 4]) -> [f64; 4] {
        for (x, (lo, hi)) in v.iter_mut().zip(&self.bounds) {
            *x = x.clamp(*lo, *hi);
        }
        v
    }

    fn validate(&self) -> Result<()> {
        let ok = self
            .bounds
            .iter()
            .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo <= hi)
            && self.bounds[0].0 > 0.0
            && self.bounds[1].0 > 1.0
            && self.bounds[2].1 < 0.0
            && self.bounds[3].0 > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid configuration space {:?}",
                self.bounds
            )))
        }
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: SearchConfig,
    pub cost: f64,
}

/// Outcome of a configuration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfiguratorResult {
    pub best_config: SearchConfig,
    pub best_cost: f64,
    pub history: Vec<Observation>,
    pub g_star: f64,
}

impl ConfiguratorResult {
    /// Incumbent cost after each trial.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::INFINITY, |best, o| {
                *best = best.min(o.cost);
                Some(*best)
            })
            .collect()
    }
}

/// Runs the bound computation with the multiplicative search for `config`.
pub fn evaluate_config_detailed(
    net: &Network,
    region: &InputRegion,
    config: &SearchConfig,
) -> (Observation, Option<GlobalBound>) {
    match global_lower_bound(net, region, &MultiplicativeSearch::new(*config)) {
        Ok(bound) => (
            Observation {
                config: *config,
                cost: -bound.g_star,
            },
            Some(bound),
        ),
        Err(err) => {
            debug!(%err, ?config, "configuration failed; recording penalty");
            (
                Observation {
                    config: *config,
                    cost: PENALTY_COST,
                },
                None,
            )
        }
    }
}

/// `cost = -g*` for `config`; failures cost [`PENALTY_COST`].
pub fn evaluate_config(net: &Network, region: &InputRegion, config: &SearchConfig) -> Observation {
    evaluate_config_detailed(net, region, config).0
}

fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best_cost` of a normal prediction `(mean, std)`.
pub fn expected_improvement_from(mean: f64, std: f64, best_cost: f64) -> f64 {
    let gain = best_cost - mean;
    if !(std > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / std;
    (gain * standard_normal_cdf(z) + std * standard_normal_pdf(z)).max(0.0)
}

/// Expected improvement of the surrogate's prediction at `config`.
pub fn expected_improvement(model: &SurrogateModel, config: &SearchConfig, best_cost: f64) -> f64 {
    let (mean, var) = model.predict(&config.as_array());
    expected_improvement_from(mean, var.sqrt(), best_cost)
}

fn incumbent(history: &[Observation]) -> Option<&Observation> {
    history.iter().fold(None, |best: Option<&Observation>, o| match best {
        Some(b) if b.cost <= o.cost => Some(b),
        _ => Some(o),
    })
}

/// The expected-improvement maximizer over a pool of uniform samples plus
/// Gaussian perturbations of the incumbent. Ties go to the earliest candidate.
pub fn propose_next<R: Rng>(
    model: &SurrogateModel,
    history: &[Observation],
    space: &ConfigSpace,
    rng: &mut R,
) -> SearchConfig {
    let mut pool: Vec<SearchConfig> = (0..RANDOM_CANDIDATES).map(|_| space.sample(rng)).collect();
    let best = incumbent(history);
    if let Some(best) = best {
        let center = best.config.as_array();
        let noise: Vec<Normal<f64>> = space
            .bounds
            .iter()
            .map(|(lo, hi)| Normal::new(0.0, LOCAL_STD_FRACTION * (hi - lo)).expect("finite std"))
            .collect();
        for _ in 0..LOCAL_CANDIDATES {
            let mut v = center;
            for (x, n) in v.iter_mut().zip(&noise) {
                *x += n.sample(rng);
            }
            pool.push(SearchConfig::from_array(space.clip(v)));
        }
    }
    let best_cost = best.map_or(f64::INFINITY, |o| o.cost);

    let mut chosen = pool[0];
    let mut chosen_ei = f64::NEG_INFINITY;
    for candidate in pool {
        let ei = expected_improvement(model, &candidate, best_cost);
        if ei > chosen_ei {
            chosen = candidate;
            chosen_ei = ei;
        }
    }
    chosen
}

/// Trial budget and seed for [`configure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigureOptions {
    pub n_max: usize,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for ConfigureOptions {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_TRIALS,
            n_init: DEFAULT_INITIAL_DESIGN,
            seed: 0,
        }
    }
}

/// Searches for the configuration that maximizes `g*` on one margin network.
pub fn configure(
    net: &Network,
    region: &InputRegion,
    space: &ConfigSpace,
    options: ConfigureOptions,
) -> Result<ConfiguratorResult> {
    let ConfigureOptions { n_max, n_init, seed } = options;
    if n_init == 0 || n_max < n_init {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= n_init <= n_max, got n_init = {n_init}, n_max = {n_max}"
        )));
    }
    space.validate()?;
    region.check_dim(net)?;
    if net.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "configuration needs a single-output network, got {} outputs",
            net.output_dim()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: Vec<Observation> = Vec::with_capacity(n_max);
    let mut best: Option<Observation> = None;
    for trial in 0..n_max {
        let config = if trial < n_init {
            space.sample(&mut rng)
        } else {
            let model = fit_surrogate(&history, rng.gen())?;
            propose_next(&model, &history, space, &mut rng)
        };
        let obs = evaluate_config(net, region, &config);
        if best.is_none_or(|b| obs.cost < b.cost) {
            best = Some(obs);
        }
        history.push(obs);
    }
    let best = best.expect("n_max >= 1");
    Ok(ConfiguratorResult {
        best_config: best.config,
        best_cost: best.cost,
        g_star: -best.cost,
        history,
    })
}
