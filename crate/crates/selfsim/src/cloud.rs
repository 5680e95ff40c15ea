//! The point sets A_k: fixed points of the maps pushed forward k times,
//! carrying code words and the discrete measure weights r_code^s.

use std::io::Write;

use crate::error::{Error, Result};
use crate::ifs::IfSystem;

pub const DEFAULT_POINT_BUDGET: u64 = 2_000_000;

/// Levels beyond this cannot pack a code into u64 even for m = 2.
const MAX_LEVEL: u32 = 40;

/// A_k with codes packed as base-m integers, most significant letter
/// first, so that index order is exactly lexicographic code order.
#[derive(Debug, Clone)]
pub struct PointCloud {
    level: u32,
    m: usize,
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl PointCloud {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branching(&self) -> usize {
        self.m
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    /// First letter of the code word, in 0..m.
    pub fn first_letter(&self, index: usize) -> usize {
        index / self.m.pow(self.level - 1)
    }

    /// Code word as digits, most significant first.
    pub fn code_digits(&self, index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.level as usize];
        let mut rest = index;
        for slot in digits.iter_mut().rev() {
            *slot = rest % self.m;
            rest /= self.m;
        }
        digits
    }

    /// Code rendered as 1-based digits, e.g. "1221".
    pub fn code_string(&self, index: usize) -> String {
        self.code_digits(index)
            .iter()
            .map(|d| (d + 1).to_string())
            .collect()
    }
}

/// A_1: the m fixed points, weight r_i^s each.
pub fn fixed_points(system: &IfSystem, s: f64) -> Result<PointCloud> {
    let dim = system.dim();
    let mut coords = Vec::with_capacity(system.len() * dim);
    let mut weights = Vec::with_capacity(system.len());
    for (i, map) in system.maps().iter().enumerate() {
        coords.extend(map.fixed_point(i)?);
        weights.push(map.ratio.powf(s));
    }
    Ok(PointCloud {
        level: 1,
        m: system.len(),
        dim,
        coords,
        weights,
    })
}

/// A_k from A_{k-1}: apply every map to every point. The child with
/// code (i, w) lands at index i*m^(k-1) + index(w), keeping
/// lexicographic order without any sort.
pub fn extend_cloud(system: &IfSystem, cloud: &PointCloud, s: f64, budget: u64) -> Result<PointCloud> {
    let m = system.len();
    let level = cloud.level + 1;
    let needed = (m as u128).pow(level);
    if level > MAX_LEVEL || needed > budget as u128 {
        return Err(Error::CapacityExceeded {
            level,
            needed,
            budget,
        });
    }
    let n = cloud.len();
    let dim = cloud.dim;
    let mut coords = vec![0.0; n * m * dim];
    let mut weights = vec![0.0; n * m];
    let mut buf = vec![0.0; dim];
    for (i, map) in system.maps().iter().enumerate() {
        let ws = map.ratio.powf(s);
        for parent in 0..n {
            let child = i * n + parent;
            map.apply(cloud.point(parent), &mut buf);
            coords[child * dim..(child + 1) * dim].copy_from_slice(&buf);
            weights[child] = ws * cloud.weights[parent];
        }
    }
    Ok(PointCloud {
        level,
        m,
        dim,
        coords,
        weights,
    })
}

/// A_k in one call.
pub fn build_cloud(system: &IfSystem, s: f64, k: u32, budget: u64) -> Result<PointCloud> {
    let mut cloud = fixed_points(system, s)?;
    while cloud.level < k {
        cloud = extend_cloud(system, &cloud, s, budget)?;
    }
    Ok(cloud)
}

/// Total weight of the cylinder named by a code prefix (0-based letters).
pub fn mass_of_code_prefix(cloud: &PointCloud, prefix: &[usize]) -> Result<f64> {
    let q = prefix.len();
    if q > cloud.level as usize {
        return Err(Error::PrefixTooLong {
            prefix: q,
            level: cloud.level,
        });
    }
    let tail = cloud.m.pow(cloud.level - q as u32);
    let mut start = 0usize;
    for &letter in prefix {
        start = start * cloud.m + letter;
    }
    start *= tail;
    Ok(cloud.weights[start..start + tail].iter().sum())
}

/// Debug dump: one row per point, code as base-m digits.
pub fn write_csv<W: Write>(cloud: &PointCloud, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "code,coords,weight")?;
    for i in 0..cloud.len() {
        let coords: Vec<String> = cloud.point(i).iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(
            out,
            "{},{},{:.17e}",
            cloud.code_string(i),
            coords.join(";"),
            cloud.weight(i)
        )?;
    }
    Ok(())
}
