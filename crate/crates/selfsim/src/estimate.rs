//! Result types shared by the packing and centered estimators, plus the
//! stabilization detector.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MeasureKind {
    Packing,
    CenteredHausdorff,
}

impl MeasureKind {
    pub fn label(&self) -> &'static str {
        match self {
            MeasureKind::Packing => "packing",
            MeasureKind::CenteredHausdorff => "centered",
        }
    }
}

/// One endpoint of the witness ball: a cloud point with its code word.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub index: usize,
    pub code: String,
    pub coords: Vec<f64>,
}

/// Everything that enters the error bound, for audit output.
/// For packing, q depends on k and the window is the admissible radius
/// range; for the centered bound, q is level-free and the window is
/// the a priori radius range [c, R].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundInputs {
    pub q: u32,
    pub big_q: f64,
    pub window_lo: f64,
    pub window_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureEstimate {
    pub kind: MeasureKind,
    pub level: u32,
    pub value: f64,
    pub epsilon: f64,
    pub interval: (f64, f64),
    pub witness_center: Witness,
    pub witness_partner: Witness,
    pub witness_radius: f64,
    pub witness_mass: f64,
    pub bound: BoundInputs,
    pub elapsed_ms: f64,
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Smallest level from which every later value agrees at the printed
/// precision of 12 decimal places; None if the last two already differ.
pub fn detect_stabilization(values: &[(u32, f64)]) -> Option<u32> {
    if values.len() < 2 {
        return None;
    }
    let last = round12(values[values.len() - 1].1);
    let mut k_stb = None;
    for &(k, v) in values.iter().rev() {
        if round12(v) == last {
            k_stb = Some(k);
        } else {
            break;
        }
    }
    // A run of length one means the last two values differ.
    if k_stb == Some(values[values.len() - 1].0) {
        return None;
    }
    k_stb
}
