//! Choosing tangent points.
//!
//! Two strategies are provided. The baseline mirrors vanilla CROWN: for
//! straddling intervals it bisects for the tangent whose line passes through
//! the opposite endpoint, and for one-sided intervals it uses the midpoint.
//! The multiplicative search starts at `s` and multiplies by `ψ` until the
//! tangent line is a valid bound; `(s, ψ)` per side is what the configurator
//! tunes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relaxation::{check_lower_valid, check_upper_valid, classify_case, tangent_line, ActivationCase, Sigmoidal};

pub const DEFAULT_MAX_STEPS: usize = 200;
pub const BASELINE_TOLERANCE: f64 = 1e-9;
const MAX_BRACKET: f64 = 1e6;

/// Which side of the activation a bounding line covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        }
    }
}

/// Starting points and growth rates for both bound sides.
///
/// `psi_lower` is stored as a magnitude: the lower search scales the negative
/// start point by `|psi_lower|`, keeping it on the negative axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub s_upper: f64,
    pub psi_upper: f64,
    pub s_lower: f64,
    pub psi_lower: f64,
}

impl SearchConfig {
    pub fn as_array(&self) -> [f64; 4] {
        [self.s_upper, self.psi_upper, self.s_lower, self.psi_lower]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            s_upper: v[0],
            psi_upper: v[1],
            s_lower: v[2],
            psi_lower: v[3],
        }
    }
}

/// First point of `s, sψ, sψ², …` whose tangent line is a valid upper bound on `[l, u]`.
pub fn search_tangent_upper(kind: Sigmoidal, l: f64, u: f64, s: f64, psi: f64, max_steps: usize) -> Result<f64> {
    if !(s > 0.0) || !(psi > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "upper search needs s > 0 and psi > 1, got s = {s}, psi = {psi}"
        )));
    }
    classify_case(l, u)?;
    let mut d = s;
    for _ in 0..=max_steps {
        if check_upper_valid(kind, &tangent_line(kind, d), l, u)? {
            return Ok(d);
        }
        d *= psi;
    }
    Err(Error::SearchExhausted {
        steps: max_steps,
        lower: l,
        upper: u,
    })
}

/// Lower-side counterpart of [`search_tangent_upper`]: `s < 0`, magnitudes grow by `|psi|`.
pub fn search_tangent_lower(kind: Sigmoidal, l: f64, u: f64, s: f64, psi: f64, max_steps: usize) -> Result<f64> {
    let rate = psi.abs();
    if !(s < 0.0) || !(rate > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lower search needs s < 0 and |psi| > 1, got s = {s}, psi = {psi}"
        )));
    }
    classify_case(l, u)?;
    let mut d = s;
    for _ in 0..=max_steps {
        if check_lower_valid(kind, &tangent_line(kind, d), l, u)? {
            return Ok(d);
        }
        d *= rate;
    }
    Err(Error::SearchExhausted {
        steps: max_steps,
        lower: l,
        upper: u,
    })
}

/// Bisects for the tangent point whose line passes through `(anchor, σ(anchor))`.
///
/// Upper side: `anchor ≤ 0`, result `d ≥ 0`. Lower side: `anchor ≥ 0`, result
/// `d ≤ 0`. The returned point always lies on the valid side of the root, so
/// the line is a sound bound, and its residual is at most `tol`.
pub fn binary_search_endpoint_tangent(kind: Sigmoidal, anchor: f64, side: Side, tol: f64) -> Result<f64> {
    let sign = match side {
        Side::Upper if anchor <= 0.0 => 1.0,
        Side::Lower if anchor >= 0.0 => -1.0,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{} endpoint tangent needs an anchor on the opposite side of zero, got {anchor}",
                side.name()
            )))
        }
    };
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let target = kind.value(anchor);
    // Positive on the valid side for either bound direction.
    let slack = |t: f64| sign * (tangent_line(kind, sign * t).eval(anchor) - target);

    if slack(0.0) >= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while slack(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_BRACKET {
            return Err(Error::NoBracket { anchor });
        }
    }
    for _ in 0..200 {
        if slack(hi) <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slack(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(sign * hi)
}

/// Tangent points for one neuron; `None` where a chord is used instead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TangentChoice {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Supplies tangent points for each neuron during bound propagation.
pub trait TangentStrategy: Sync {
    fn choose(&self, kind: Sigmoidal, l: f64, u: f64) -> Result<TangentChoice>;
}

impl<F> TangentStrategy for F
where
    F: Fn(Sigmoidal, f64, f64) -> Result<TangentChoice> + Sync,
{
    fn choose(&self, kind: Sigmoidal, l: f64, u: f64) -> Result<TangentChoice> {
        self(kind, l, u)
    }
}

/// Vanilla CROWN tangent points: midpoint for one-sided intervals, endpoint
/// tangency by bisection for straddling ones.
pub fn baseline_tangents(kind: Sigmoidal, l: f64, u: f64) -> Result<TangentChoice> {
    let case = classify_case(l, u)?;
    if l == u {
        return Ok(TangentChoice::default());
    }
    let mid = 0.5 * (l + u);
    Ok(match case {
        ActivationCase::SPlus => TangentChoice {
            lower: None,
            upper: Some(mid),
        },
        ActivationCase::SMinus => TangentChoice {
            lower: Some(mid),
            upper: None,
        },
        ActivationCase::SMixed => TangentChoice {
            lower: Some(binary_search_endpoint_tangent(
                kind,
                u,
                Side::Lower,
                BASELINE_TOLERANCE,
            )?),
            upper: Some(binary_search_endpoint_tangent(
                kind,
                l,
                Side::Upper,
                BASELINE_TOLERANCE,
            )?),
        },
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Baseline;

impl TangentStrategy for Baseline {
    fn choose(&self, kind: Sigmoidal, l: f64, u: f64) -> Result<TangentChoice> {
        baseline_tangents(kind, l, u)
    }
}

/// Geometric tangent search driven by a [`SearchConfig`].
#[derive(Debug, Clone, Copy)]
pub struct MultiplicativeSearch {
    pub config: SearchConfig,
    pub max_steps: usize,
}

impl MultiplicativeSearch {
    pub fn new(config: SearchConfig) -> Self {
        Self {
            config,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl TangentStrategy for MultiplicativeSearch {
    fn choose(&self, kind: Sigmoidal, l: f64, u: f64) -> Result<TangentChoice> {
        let case = classify_case(l, u)?;
        if l == u {
            return Ok(TangentChoice::default());
        }
        let c = &self.config;
        let upper = || search_tangent_upper(kind, l, u, c.s_upper, c.psi_upper, self.max_steps);
        let lower = || search_tangent_lower(kind, l, u, c.s_lower, c.psi_lower, self.max_steps);
        Ok(match case {
            ActivationCase::SPlus => TangentChoice {
                lower: None,
                upper: Some(upper()?),
            },
            ActivationCase::SMinus => TangentChoice {
                lower: Some(lower()?),
                upper: None,
            },
            ActivationCase::SMixed => TangentChoice {
                lower: Some(lower()?),
                upper: Some(upper()?),
            },
        })
    }
}
