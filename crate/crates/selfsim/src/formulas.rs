//! Closed-form reference values for the built-in families, with their
//! proven validity ranges, plus the hypothesis test against confidence
//! intervals and the spectral enclosure.

use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{MeasureEstimate, MeasureKind};
use crate::ifs::IfSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FormulaName {
    G1,
    G2,
    G3,
    G4,
    G5,
}

impl FormulaName {
    pub fn label(&self) -> &'static str {
        match self {
            FormulaName::G1 => "g1",
            FormulaName::G2 => "g2",
            FormulaName::G3 => "g3",
            FormulaName::G4 => "g4",
            FormulaName::G5 => "g5",
        }
    }

    /// Which estimator the formula is a reference for.
    pub fn kind(&self) -> MeasureKind {
        match self {
            FormulaName::G1 | FormulaName::G2 => MeasureKind::Packing,
            _ => MeasureKind::CenteredHausdorff,
        }
    }
}

impl FromStr for FormulaName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g1" => Ok(FormulaName::G1),
            "g2" => Ok(FormulaName::G2),
            "g3" => Ok(FormulaName::G3),
            "g4" => Ok(FormulaName::G4),
            "g5" => Ok(FormulaName::G5),
            other => Err(Error::UnknownFormula(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BuiltinFamily {
    Cantor,
    Gasket,
    Planar,
}

fn classify(system: &IfSystem) -> Option<(BuiltinFamily, f64)> {
    let r = system.maps()[0].ratio;
    if system.maps().iter().any(|m| m.ratio != r) {
        return None;
    }
    match (system.len(), system.dim()) {
        (2, 1) => Some((BuiltinFamily::Cantor, r)),
        (3, 2) => Some((BuiltinFamily::Gasket, r)),
        (4, 2) => Some((BuiltinFamily::Planar, r)),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FormulaResult {
    pub name: FormulaName,
    pub value: f64,
    pub proven: bool,
    pub range_note: String,
}

/// Validity test for the planar centered formula: dimension below one
/// and 3 r^s / (1-r)^s <= 2^(-s/2). The joint threshold is
/// r_0 = 0.10832764... (checked in the tests by root finding).
fn planar_centered_proven(r: f64, s: f64) -> bool {
    s > 0.0 && s < 1.0 && 3.0 * (r / (1.0 - r)).powf(s) <= 2f64.powf(-s / 2.0)
}

/// Closed-form reference value for a built-in family system.
pub fn closed_form(name: FormulaName, system: &IfSystem) -> Result<FormulaResult> {
    let (family, r) = classify(system).ok_or_else(|| {
        Error::ROutOfDomain {
            name: name.label().to_string(),
            r: f64::NAN,
            reason: "closed forms are defined for the equal-ratio built-in families only"
                .to_string(),
        }
    })?;
    let s = (system.len() as f64).ln() / (1.0 / r).ln();
    let wrong_family = |reason: &str| Error::ROutOfDomain {
        name: name.label().to_string(),
        r,
        reason: reason.to_string(),
    };
    let (value, proven, range_note) = match (name, family) {
        (FormulaName::G1, BuiltinFamily::Cantor) => (
            (2.0 * (1.0 - r) / r).powf(s),
            true,
            "proven for every linear Cantor set".to_string(),
        ),
        (FormulaName::G1, BuiltinFamily::Gasket) => (
            (2.0 * (1.0 - r) / r).powf(s),
            r <= 1.0 / 3.0,
            "proven for gaskets with r <= 1/3".to_string(),
        ),
        (FormulaName::G1, _) => return Err(wrong_family("g1 applies to the line and gasket families")),
        (FormulaName::G2, BuiltinFamily::Planar) => (
            (2.0 * (1.0 - r) / r).powf(s),
            r <= std::f64::consts::SQRT_2 / 4.0,
            "proven for planar Cantor sets with r <= sqrt(2)/4".to_string(),
        ),
        (FormulaName::G2, _) => return Err(wrong_family("g2 applies to the planar family")),
        (FormulaName::G3, BuiltinFamily::Cantor) => (
            (2.0 * (1.0 - r)).powf(s),
            r <= 1.0 / 3.0,
            "proven for linear Cantor sets with r <= 1/3".to_string(),
        ),
        (FormulaName::G3, _) => return Err(wrong_family("g3 applies to the line family")),
        (FormulaName::G4, BuiltinFamily::Gasket) => (
            (2.0 * (1.0 - r) * (r * r + r + 1.0).sqrt()).powf(s),
            false,
            "conjectural only; disproven for r >= 0.278".to_string(),
        ),
        (FormulaName::G4, _) => return Err(wrong_family("g4 applies to the gasket family")),
        (FormulaName::G5, BuiltinFamily::Planar) => (
            (2.0 * std::f64::consts::SQRT_2 * (1.0 - r)).powf(s),
            planar_centered_proven(r, s),
            "proven for planar Cantor sets with r < 0.10832764...".to_string(),
        ),
        (FormulaName::G5, _) => return Err(wrong_family("g5 applies to the planar family")),
    };
    Ok(FormulaResult {
        name,
        value,
        proven,
        range_note,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Rejected,
    Consistent,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisVerdict {
    pub alpha: f64,
    pub interval: (f64, f64),
    pub verdict: Verdict,
    /// Signed distance from alpha to the interval: negative inside.
    pub slack: f64,
    /// When consistent, |measure - alpha| <= 2 epsilon is guaranteed.
    pub guaranteed_bound: Option<f64>,
}

/// Reject the hypothesis alpha = measure when alpha falls outside the
/// confidence interval of the estimate.
pub fn test_hypothesis(alpha: f64, estimate: &MeasureEstimate) -> HypothesisVerdict {
    let (lo, hi) = estimate.interval;
    let slack = (lo - alpha).max(alpha - hi);
    let verdict = if alpha < lo || alpha > hi {
        Verdict::Rejected
    } else {
        Verdict::Consistent
    };
    HypothesisVerdict {
        alpha,
        interval: estimate.interval,
        verdict,
        slack,
        guaranteed_bound: match verdict {
            Verdict::Consistent => Some(2.0 * estimate.epsilon),
            Verdict::Rejected => None,
        },
    }
}

/// Outer enclosure of the spectral interval [1/packing, 1/centered]
/// from the two certified estimates.
pub fn spectral_interval(
    packing: &MeasureEstimate,
    centered: &MeasureEstimate,
) -> Result<(f64, f64)> {
    for est in [packing, centered] {
        if est.epsilon >= est.value {
            return Err(Error::DegenerateInterval {
                value: est.value,
                epsilon: est.epsilon,
            });
        }
    }
    Ok((
        1.0 / (packing.value + packing.epsilon),
        1.0 / (centered.value - centered.epsilon),
    ))
}
