//! Systems of contracting similitudes and the constants every other
//! module consumes: the similarity dimension `s`, the separation gap `c`
//! between basic cylinders, the attractor diameter `R`, and the extreme
//! contraction ratios.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-12;

/// A contracting similitude x -> ratio * orthogonal * x + translation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Similitude {
    pub ratio: f64,
    /// n x n orthogonal part, row major. Identity for pure scalings.
    pub orthogonal: Vec<f64>,
    pub translation: Vec<f64>,
}

impl Similitude {
    /// Scaling plus translation, identity orthogonal part.
    pub fn scaling(ratio: f64, translation: Vec<f64>) -> Self {
        let n = translation.len();
        let mut orthogonal = vec![0.0; n * n];
        for i in 0..n {
            orthogonal[i * n + i] = 1.0;
        }
        Similitude {
            ratio,
            orthogonal,
            translation,
        }
    }

    /// 2-D similitude with a rotation given in degrees.
    pub fn rotation_2d(ratio: f64, degrees: f64, translation: Vec<f64>) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Similitude {
            ratio,
            orthogonal: vec![c, -s, s, c],
            translation,
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.orthogonal[i * n + j] * x[j];
            }
            out[i] = self.ratio * acc + self.translation[i];
        }
    }

    /// Solves f(x) = x, i.e. (I - ratio * O) x = translation.
    pub fn fixed_point(&self, index: usize) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = -self.ratio * self.orthogonal[i * n + j];
            }
            a[i * n + i] += 1.0;
        }
        solve_dense(&mut a, self.translation.clone(), n).ok_or(Error::SingularMap(index))
    }

    fn orthogonality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.orthogonal[k * n + i] * self.orthogonal[k * n + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - expect).abs());
            }
        }
        worst
    }
}

/// Gaussian elimination with partial pivoting; n is tiny here.
fn solve_dense(a: &mut [f64], mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| a[p * n + col].abs().total_cmp(&a[q * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for j in col..n {
                a[row * n + j] -= f * a[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[col * n + j] * b[j];
        }
        b[col] = acc / a[col * n + col];
    }
    Some(b)
}

/// Exact constants for the built-in families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KnownConstants {
    pub c_exact: f64,
    pub r_exact: f64,
}

/// A validated system of m >= 2 contracting similitudes.
#[derive(Debug, Clone, Serialize)]
pub struct IfSystem {
    maps: Vec<Similitude>,
    ambient_dim: usize,
    known_constants: Option<KnownConstants>,
}

impl IfSystem {
    pub fn new(maps: Vec<Similitude>, known_constants: Option<KnownConstants>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::TooFewMaps(maps.len()));
        }
        let ambient_dim = maps[0].dim();
        for (index, map) in maps.iter().enumerate() {
            if map.dim() != ambient_dim || map.orthogonal.len() != ambient_dim * ambient_dim {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: ambient_dim,
                    got: map.dim(),
                });
            }
            if !(map.ratio > 0.0 && map.ratio < 1.0) {
                return Err(Error::RatioOutOfRange {
                    index,
                    ratio: map.ratio,
                });
            }
            let defect = map.orthogonality_defect();
            if defect > ORTHO_TOL {
                return Err(Error::NotOrthogonal { index, defect });
            }
        }
        Ok(IfSystem {
            maps,
            ambient_dim,
            known_constants,
        })
    }

    pub fn maps(&self) -> &[Similitude] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn known_constants(&self) -> Option<KnownConstants> {
        self.known_constants
    }

    /// Copy with the exact constants suppressed, forcing the bracket path.
    pub fn without_known_constants(&self) -> IfSystem {
        IfSystem {
            maps: self.maps.clone(),
            ambient_dim: self.ambient_dim,
            known_constants: None,
        }
    }

    pub fn r_min(&self) -> f64 {
        self.maps
            .iter()
            .map(|m| m.ratio)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn r_max(&self) -> f64 {
        self.maps.iter().map(|m| m.ratio).fold(0.0, f64::max)
    }
}

/// Linear Cantor set C_r: {rx, rx + 1 - r} on the line, 0 < r < 1/2.
pub fn cantor(r: f64) -> Result<IfSystem> {
    require_ssc_ratio(r)?;
    IfSystem::new(
        vec![
            Similitude::scaling(r, vec![0.0]),
            Similitude::scaling(r, vec![1.0 - r]),
        ],
        Some(KnownConstants {
            c_exact: 1.0 - 2.0 * r,
            r_exact: 1.0,
        }),
    )
}

/// Sierpinski gasket S_r on the unit triangle, 0 < r < 1/2.
pub fn sierpinski(r: f64) -> Result<IfSystem> {
    require_ssc_ratio(r)?;
    let h = 3f64.sqrt() / 2.0;
    IfSystem::new(
        vec![
            Similitude::scaling(r, vec![0.0, 0.0]),
            Similitude::scaling(r, vec![1.0 - r, 0.0]),
            Similitude::scaling(r, vec![(1.0 - r) * 0.5, (1.0 - r) * h]),
        ],
        Some(KnownConstants {
            c_exact: 1.0 - 2.0 * r,
            r_exact: 1.0,
        }),
    )
}

/// Planar Cantor set K_r on the unit square corners, 0 < r < 1/2.
pub fn planar_cantor(r: f64) -> Result<IfSystem> {
    require_ssc_ratio(r)?;
    IfSystem::new(
        vec![
            Similitude::scaling(r, vec![0.0, 0.0]),
            Similitude::scaling(r, vec![1.0 - r, 0.0]),
            Similitude::scaling(r, vec![1.0 - r, 1.0 - r]),
            Similitude::scaling(r, vec![0.0, 1.0 - r]),
        ],
        Some(KnownConstants {
            c_exact: 1.0 - 2.0 * r,
            r_exact: std::f64::consts::SQRT_2,
        }),
    )
}

fn require_ssc_ratio(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 0.5) {
        let c = 1.0 - 2.0 * r;
        return Err(Error::NotSeparated { c_lo: c, c_hi: c });
    }
    Ok(())
}

/// The geometric constants feeding both estimators. Brackets are
/// degenerate (lo == hi) for the built-in families.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivedConstants {
    pub s: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub c_lo: f64,
    pub c_hi: f64,
    pub diam_lo: f64,
    pub diam_hi: f64,
}

impl DerivedConstants {
    pub fn width_c(&self) -> f64 {
        self.c_hi - self.c_lo
    }
}

/// Unique root of sum r_i^s = 1; closed form for equal ratios,
/// bisection plus Newton polish otherwise.
pub fn similarity_dimension(system: &IfSystem) -> f64 {
    let ratios: Vec<f64> = system.maps().iter().map(|m| m.ratio).collect();
    let m = ratios.len() as f64;
    if ratios.iter().all(|&r| r == ratios[0]) {
        return m.ln() / (1.0 / ratios[0]).ln();
    }
    let f = |s: f64| ratios.iter().map(|r| r.powf(s)).sum::<f64>() - 1.0;
    let mut lo = 0.0;
    let mut hi = (system.dim() + 1) as f64;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton polish; the sum is strictly decreasing in s.
    let mut s = 0.5 * (lo + hi);
    for _ in 0..4 {
        let val = f(s);
        let deriv: f64 = ratios.iter().map(|r| r.powf(s) * r.ln()).sum();
        if deriv == 0.0 {
            break;
        }
        let next = s - val / deriv;
        if next.is_finite() {
            s = next;
        }
    }
    s
}

pub fn derive_constants(system: &IfSystem) -> Result<DerivedConstants> {
    let s = similarity_dimension(system);
    let (r_min, r_max) = (system.r_min(), system.r_max());
    let (c_lo, c_hi, diam_lo, diam_hi) = match system.known_constants() {
        Some(k) => {
            if k.c_exact <= 0.0 {
                return Err(Error::NotSeparated {
                    c_lo: k.c_exact,
                    c_hi: k.c_exact,
                });
            }
            (k.c_exact, k.c_exact, k.r_exact, k.r_exact)
        }
        None => {
            // Best-effort brackets: looser ends only widen the window
            // conservatively, they never invalidate it.
            let (d_lo, d_hi) = diameter_bracket(system, 30, 1e-9)?;
            let (c_lo, c_hi) = separation_gap_with_diam(system, 40, 1e-9, d_hi)?;
            (c_lo, c_hi, d_lo, d_hi)
        }
    };
    Ok(DerivedConstants {
        s,
        r_min,
        r_max,
        c_lo,
        c_hi,
        diam_lo,
        diam_hi,
    })
}

/// True iff the packing radius window at level k is provably
/// nonempty, with the conservative bracket endpoints.
pub fn window_feasible(consts: &DerivedConstants, k: u32) -> bool {
    let rk = consts.r_max.powi(k as i32);
    consts.c_lo - 3.0 * consts.diam_hi * rk - 2.0 * consts.diam_hi * rk * consts.r_max > 0.0
}

const DIAMETER_POINT_CAP: usize = 40_000;

/// Certified bracket [R_lo, R_hi] for the attractor diameter.
///
/// A_k's diameter is a lower bound; |E| <= |A_k| + 2 R r_max^k turns it
/// into an upper one, refined by raising k until the width meets `tol`.
pub fn diameter(system: &IfSystem, k_probe: u32, tol: f64) -> Result<(f64, f64)> {
    if let Some(k) = system.known_constants() {
        return Ok((k.r_exact, k.r_exact));
    }
    let (d_lo, d_hi) = diameter_bracket(system, k_probe, tol)?;
    if d_hi - d_lo <= tol {
        Ok((d_lo, d_hi))
    } else {
        Err(Error::TolNotReached {
            tol,
            width: d_hi - d_lo,
        })
    }
}

/// Best bracket reachable within the probe depth and the point budget;
/// stops early once `tol` is met. The shrink factor always uses the
/// level the point set actually reached, so the upper end stays valid
/// when the budget halts iteration.
fn diameter_bracket(system: &IfSystem, k_probe: u32, tol: f64) -> Result<(f64, f64)> {
    let dim = system.dim();
    let mut points: Vec<f64> = Vec::new();
    for (i, map) in system.maps().iter().enumerate() {
        points.extend(map.fixed_point(i)?);
    }
    let mut level: u32 = 0;
    let mut best: Option<(f64, f64)> = None;
    while level < k_probe && points.len() / dim * system.len() <= DIAMETER_POINT_CAP {
        points = iterate_points(system, &points);
        level += 1;
        let shrink = 1.0 - 2.0 * system.r_max().powi(level as i32);
        if shrink <= 0.0 {
            continue;
        }
        let d_lo = max_pairwise_distance(&points, dim);
        let d_hi = d_lo / shrink;
        if best.map_or(true, |(lo, hi)| hi - lo > d_hi - d_lo) {
            best = Some((d_lo, d_hi));
        }
        if d_hi - d_lo <= tol {
            break;
        }
    }
    best.ok_or(Error::TolNotReached {
        tol,
        width: f64::INFINITY,
    })
}

fn iterate_points(system: &IfSystem, points: &[f64]) -> Vec<f64> {
    let dim = system.dim();
    let mut next = Vec::with_capacity(points.len() * system.len());
    let mut buf = vec![0.0; dim];
    for map in system.maps() {
        for p in points.chunks_exact(dim) {
            map.apply(p, &mut buf);
            next.extend_from_slice(&buf);
        }
    }
    next
}

fn max_pairwise_distance(points: &[f64], dim: usize) -> f64 {
    let n = points.len() / dim;
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let mut d2 = 0.0;
            for t in 0..dim {
                let d = points[i * dim + t] - points[j * dim + t];
                d2 += d * d;
            }
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Certified bracket [c_lo, c_hi] for the separation gap, by
/// branch-and-bound on pairs of cylinders.
pub fn separation_gap(system: &IfSystem, k_probe: u32, tol: f64) -> Result<(f64, f64)> {
    if let Some(k) = system.known_constants() {
        if k.c_exact <= 0.0 {
            return Err(Error::NotSeparated {
                c_lo: k.c_exact,
                c_hi: k.c_exact,
            });
        }
        return Ok((k.c_exact, k.c_exact));
    }
    let (_, d_hi) = diameter_bracket(system, 24, 1e-6)?;
    separation_gap_with_diam(system, k_probe, tol, d_hi)
}

/// One side of a cylinder pair: the composed affine map and its anchor.
#[derive(Clone)]
struct CylinderNode {
    ratio: f64,
    mat: Vec<f64>,
    tr: Vec<f64>,
    anchor: Vec<f64>,
    depth: u32,
}

impl CylinderNode {
    fn basic(system: &IfSystem, i: usize, seed: &[f64]) -> CylinderNode {
        let map = &system.maps()[i];
        let n = system.dim();
        let mat: Vec<f64> = map.orthogonal.iter().map(|v| v * map.ratio).collect();
        let mut anchor = vec![0.0; n];
        map.apply(seed, &mut anchor);
        CylinderNode {
            ratio: map.ratio,
            mat,
            tr: map.translation.clone(),
            anchor,
            depth: 1,
        }
    }

    fn child(&self, system: &IfSystem, i: usize, seed: &[f64]) -> CylinderNode {
        let map = &system.maps()[i];
        let n = system.dim();
        let mut mat = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for t in 0..n {
                    acc += self.mat[r * n + t] * map.orthogonal[t * n + c];
                }
                mat[r * n + c] = acc * map.ratio;
            }
        }
        let mut tr = self.tr.clone();
        for r in 0..n {
            let mut acc = 0.0;
            for t in 0..n {
                acc += self.mat[r * n + t] * map.translation[t];
            }
            tr[r] += acc;
        }
        let mut anchor = vec![0.0; n];
        for r in 0..n {
            let mut acc = tr[r];
            for t in 0..n {
                acc += mat[r * n + t] * seed[t];
            }
            anchor[r] = acc;
        }
        CylinderNode {
            ratio: self.ratio * map.ratio,
            mat,
            tr,
            anchor,
            depth: self.depth + 1,
        }
    }
}

#[derive(PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn separation_gap_with_diam(
    system: &IfSystem,
    k_probe: u32,
    tol: f64,
    diam_hi: f64,
) -> Result<(f64, f64)> {
    let seed = system.maps()[0].fixed_point(0)?;
    let m = system.len();
    let mut heap: BinaryHeap<(Reverse<OrdF64>, usize)> = BinaryHeap::new();
    let mut nodes: Vec<(CylinderNode, CylinderNode)> = Vec::new();
    let mut c_hi = f64::INFINITY;
    for i in 0..m {
        for j in i + 1..m {
            let a = CylinderNode::basic(system, i, &seed);
            let b = CylinderNode::basic(system, j, &seed);
            let d = dist(&a.anchor, &b.anchor);
            c_hi = c_hi.min(d);
            let lower = d - diam_hi * (a.ratio + b.ratio);
            nodes.push((a, b));
            heap.push((Reverse(OrdF64(lower)), nodes.len() - 1));
        }
    }
    let mut pops: u64 = 0;
    let mut c_lo = f64::NEG_INFINITY;
    while let Some((Reverse(OrdF64(lower)), idx)) = heap.pop() {
        c_lo = lower;
        if c_hi - c_lo <= tol {
            if c_lo <= 0.0 {
                return Err(Error::NotSeparated { c_lo, c_hi });
            }
            return Ok((c_lo.min(c_hi), c_hi));
        }
        let (a, b) = nodes[idx].clone();
        if a.depth.max(b.depth) >= k_probe {
            break;
        }
        pops += 1;
        if pops > 500_000 {
            break;
        }
        let (split, keep, swap) = if a.ratio >= b.ratio {
            (a, b, false)
        } else {
            (b, a, true)
        };
        for i in 0..m {
            let child = split.child(system, i, &seed);
            let d = dist(&child.anchor, &keep.anchor);
            c_hi = c_hi.min(d);
            let lower = d - diam_hi * (child.ratio + keep.ratio);
            if lower > c_hi {
                continue;
            }
            let pair = if swap {
                (keep.clone(), child)
            } else {
                (child, keep.clone())
            };
            nodes.push(pair);
            heap.push((Reverse(OrdF64(lower)), nodes.len() - 1));
        }
    }
    if c_lo <= 0.0 {
        return Err(Error::NotSeparated { c_lo, c_hi });
    }
    Ok((c_lo.min(c_hi), c_hi))
}
