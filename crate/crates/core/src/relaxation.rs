//! Linear relaxation of a single sigmoidal neuron.
//!
//! Over a pre-activation interval `[l, u]` the activation `σ` is sandwiched
//! between two lines `h_L(z) ≤ σ(z) ≤ h_U(z)`. Sigmoid and tanh are convex on
//! `z ≤ 0` and concave on `z ≥ 0`, so the construction depends on where the
//! interval sits relative to zero:
//!
//! | case     | interval      | upper line       | lower line       |
//! |----------|---------------|------------------|------------------|
//! | `SPlus`  | `0 ≤ l ≤ u`   | tangent          | chord            |
//! | `SMinus` | `l ≤ u ≤ 0`   | chord            | tangent          |
//! | `SMixed` | `l < 0 < u`   | tangent at d ≥ 0 | tangent at d ≤ 0 |
//!
//! Tangent points are chosen elsewhere (see [`crate::search`]); this module only
//! builds the lines and checks that they are valid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ActivationKind;

/// Lines within this distance below (or above) the activation still count as valid.
pub const VALIDITY_TOLERANCE: f64 = 1e-12;

/// The two activations that admit a sigmoidal relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigmoidal {
    Sigmoid,
    Tanh,
}

impl Sigmoidal {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Sigmoidal::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Sigmoidal::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Sigmoidal::Sigmoid => {
                let s = self.value(x);
                s * (1.0 - s)
            }
            Sigmoidal::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

impl TryFrom<ActivationKind> for Sigmoidal {
    type Error = Error;

    fn try_from(kind: ActivationKind) -> Result<Self> {
        match kind {
            ActivationKind::Sigmoid => Ok(Sigmoidal::Sigmoid),
            ActivationKind::Tanh => Ok(Sigmoidal::Tanh),
            ActivationKind::Identity => Err(Error::IdentityActivation),
        }
    }
}

impl From<Sigmoidal> for ActivationKind {
    fn from(kind: Sigmoidal) -> Self {
        match kind {
            Sigmoidal::Sigmoid => ActivationKind::Sigmoid,
            Sigmoidal::Tanh => ActivationKind::Tanh,
        }
    }
}

/// `σ(x)`; identity is rejected.
pub fn sigma(kind: ActivationKind, x: f64) -> Result<f64> {
    Ok(Sigmoidal::try_from(kind)?.value(x))
}

/// `σ'(x)` in closed form; identity is rejected.
pub fn sigma_prime(kind: ActivationKind, x: f64) -> Result<f64> {
    Ok(Sigmoidal::try_from(kind)?.derivative(x))
}

/// `h(z) = slope * z + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingLine {
    pub slope: f64,
    pub intercept: f64,
}

impl BoundingLine {
    pub fn constant(value: f64) -> Self {
        Self {
            slope: 0.0,
            intercept: value,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.slope * z + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationCase {
    SPlus,
    SMinus,
    SMixed,
}

/// Classifies `[l, u]`. Intervals touching zero from one side are `SPlus` or `SMinus`.
pub fn classify_case(l: f64, u: f64) -> Result<ActivationCase> {
    check_interval(l, u)?;
    Ok(if l >= 0.0 {
        ActivationCase::SPlus
    } else if u <= 0.0 {
        ActivationCase::SMinus
    } else {
        ActivationCase::SMixed
    })
}

fn check_interval(l: f64, u: f64) -> Result<()> {
    if l > u || l.is_nan() || u.is_nan() {
        return Err(Error::InvalidInterval { lower: l, upper: u });
    }
    Ok(())
}

/// Line through `(l, σ(l))` and `(u, σ(u))`; constant `σ(l)` when `l == u`.
pub fn chord_line(kind: Sigmoidal, l: f64, u: f64) -> Result<BoundingLine> {
    check_interval(l, u)?;
    let sl = kind.value(l);
    if l == u {
        return Ok(BoundingLine::constant(sl));
    }
    let slope = (kind.value(u) - sl) / (u - l);
    Ok(BoundingLine {
        slope,
        intercept: sl - slope * l,
    })
}

/// Tangent of `σ` at `d`.
pub fn tangent_line(kind: Sigmoidal, d: f64) -> BoundingLine {
    let slope = kind.derivative(d);
    BoundingLine {
        slope,
        intercept: kind.value(d) - slope * d,
    }
}

/// Whether a tangent taken at some `d ≥ 0` lies above `σ` on `[l, u]`.
///
/// On `z ≥ 0` this holds automatically. On the convex part `line - σ` is
/// concave, so its minimum over `[l, min(u, 0)]` sits at an endpoint.
pub fn check_upper_valid(kind: Sigmoidal, line: &BoundingLine, l: f64, u: f64) -> Result<bool> {
    check_interval(l, u)?;
    if l >= 0.0 {
        return Ok(true);
    }
    let gap = |z: f64| line.eval(z) - kind.value(z);
    Ok(gap(l) >= -VALIDITY_TOLERANCE && gap(u.min(0.0)) >= -VALIDITY_TOLERANCE)
}

/// Mirror of [`check_upper_valid`] for a tangent taken at some `d ≤ 0`.
pub fn check_lower_valid(kind: Sigmoidal, line: &BoundingLine, l: f64, u: f64) -> Result<bool> {
    check_interval(l, u)?;
    if u <= 0.0 {
        return Ok(true);
    }
    let gap = |z: f64| kind.value(z) - line.eval(z);
    Ok(gap(u) >= -VALIDITY_TOLERANCE && gap(l.max(0.0)) >= -VALIDITY_TOLERANCE)
}

/// Lower and upper lines for one neuron, together with the tangent points
/// they were built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronRelaxation {
    pub lower: BoundingLine,
    pub upper: BoundingLine,
    pub case: ActivationCase,
    pub pre_bounds: (f64, f64),
    pub tangent_lower: Option<f64>,
    pub tangent_upper: Option<f64>,
}

/// Builds the relaxation of `σ` over `[l, u]` from the supplied tangent points.
///
/// `SPlus` needs `tangent_upper`, `SMinus` needs `tangent_lower` and `SMixed`
/// needs both; extra tangent points are ignored. A degenerate interval yields
/// the constant `σ(l)` on both sides.
pub fn relax_neuron(
    kind: Sigmoidal,
    l: f64,
    u: f64,
    tangent_lower: Option<f64>,
    tangent_upper: Option<f64>,
) -> Result<NeuronRelaxation> {
    let case = classify_case(l, u)?;
    if l == u {
        let c = BoundingLine::constant(kind.value(l));
        return Ok(NeuronRelaxation {
            lower: c,
            upper: c,
            case,
            pre_bounds: (l, u),
            tangent_lower: None,
            tangent_upper: None,
        });
    }

    let upper_tangent = |d: Option<f64>| -> Result<(BoundingLine, f64)> {
        let d = d.ok_or(Error::MissingTangent("upper"))?;
        let line = tangent_line(kind, d);
        if !(d >= 0.0) || !check_upper_valid(kind, &line, l, u)? {
            return Err(Error::InvalidTangent {
                side: "upper",
                tangent: d,
                lower: l,
                upper: u,
            });
        }
        Ok((line, d))
    };
    let lower_tangent = |d: Option<f64>| -> Result<(BoundingLine, f64)> {
        let d = d.ok_or(Error::MissingTangent("lower"))?;
        let line = tangent_line(kind, d);
        if !(d <= 0.0) || !check_lower_valid(kind, &line, l, u)? {
            return Err(Error::InvalidTangent {
                side: "lower",
                tangent: d,
                lower: l,
                upper: u,
            });
        }
        Ok((line, d))
    };

    let relaxation = match case {
        ActivationCase::SPlus => {
            let (upper, d) = upper_tangent(tangent_upper)?;
            NeuronRelaxation {
                lower: chord_line(kind, l, u)?,
                upper,
                case,
                pre_bounds: (l, u),
                tangent_lower: None,
                tangent_upper: Some(d),
            }
        }
        ActivationCase::SMinus => {
            let (lower, d) = lower_tangent(tangent_lower)?;
            NeuronRelaxation {
                lower,
                upper: chord_line(kind, l, u)?,
                case,
                pre_bounds: (l, u),
                tangent_lower: Some(d),
                tangent_upper: None,
            }
        }
        ActivationCase::SMixed => {
            let (upper, du) = upper_tangent(tangent_upper)?;
            let (lower, dl) = lower_tangent(tangent_lower)?;
            NeuronRelaxation {
                lower,
                upper,
                case,
                pre_bounds: (l, u),
                tangent_lower: Some(dl),
                tangent_upper: Some(du),
            }
        }
    };
    Ok(relaxation)
}
