//! Packing measure estimation: maximize h(x,d) = (2d)^s / mass of the
//! open ball B(x,d) over cloud centers x and admissible radii d, with
//! the certified error bound attached.

use std::time::Instant;

use rayon::prelude::*;

use crate::cloud::{build_cloud, PointCloud};
use crate::error::{Error, Result};
use crate::estimate::{BoundInputs, MeasureEstimate, MeasureKind, Witness};
use crate::ifs::{derive_constants, window_feasible, DerivedConstants, IfSystem};
use crate::neighbors::{
    build_index, collect_keys_into, key_dist, key_partner, truncate_keys, SpatialIndex,
    DEFAULT_TIE_TOL,
};

/// Admissible radius window at level k, with conservative endpoints:
/// the smallest separation gap for the lower end, the largest diameter
/// and gap for the upper end.
pub fn admissible_window(consts: &DerivedConstants, k: u32) -> (f64, f64) {
    let rk = consts.r_max.powi(k as i32);
    let lo = consts.c_lo - 2.0 * consts.diam_hi * rk - 2.0 * consts.diam_hi * rk * consts.r_max;
    let hi = consts.c_hi / consts.r_min;
    (lo, hi)
}

/// The a priori bound on |packing measure - estimate| at level k:
/// s 2^(s+1) R Q / r_min^(s q_k) * r_max^k.
pub fn packing_error_bound(consts: &DerivedConstants, k: u32) -> Result<(f64, BoundInputs)> {
    if !window_feasible(consts, k) {
        return Err(Error::WindowInfeasible { k });
    }
    let (window_lo, window_hi) = admissible_window(consts, k);
    // Smallest q with R r_max^q <= window_lo, by repeated multiplication.
    let mut q: u32 = 1;
    let mut t = consts.diam_hi * consts.r_max;
    while t > window_lo {
        t *= consts.r_max;
        q += 1;
    }
    let s = consts.s;
    let big_q = if s >= 1.0 {
        window_hi.powf(s - 1.0)
    } else {
        window_lo.powf(s - 1.0)
    };
    let epsilon = s * 2f64.powf(s + 1.0) * consts.diam_hi * big_q / consts.r_min.powf(s * q as f64)
        * consts.r_max.powi(k as i32);
    Ok((
        epsilon,
        BoundInputs {
            q,
            big_q,
            window_lo,
            window_hi,
        },
    ))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub h: f64,
    pub center: usize,
    pub partner: usize,
    pub radius: f64,
    pub mass: f64,
}

/// True iff `new` wins: larger h, or equal h with lexicographically
/// smaller (center, partner). Codes are index-ordered, so index pairs
/// decide code-word ties.
pub(crate) fn prefer_max(new: &Candidate, cur: &Candidate) -> bool {
    new.h > cur.h || (new.h == cur.h && (new.center, new.partner) < (cur.center, cur.partner))
}

fn merge_max(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => Some(if prefer_max(&y, &x) { y } else { x }),
    }
}

/// Best admissible ball centered at one cloud point. The ball mass is
/// accumulated by a left fold over partners in (distance, index) order,
/// starting from the center's own weight; the brute-force reference
/// uses the identical fold so the two agree bit for bit.
///
/// `mass_cut` and `record_cap` discard balls whose mass alone forces
/// h < the already-seeded maximum: since h <= (2 window_hi)^s / mass,
/// any ball with mass > mass_cut loses strictly, whatever its radius.
/// Pass `f64::INFINITY` / `usize::MAX` to scan everything.
fn best_for_center(
    cloud: &PointCloud,
    index: &SpatialIndex,
    center: usize,
    window_lo: f64,
    window_hi: f64,
    s: f64,
    mass_cut: f64,
    record_cap: usize,
    keys: &mut Vec<u128>,
) -> Option<Candidate> {
    collect_keys_into(index, cloud, center, 0.0, window_hi, keys);
    truncate_keys(keys, record_cap, window_hi, DEFAULT_TIE_TOL);
    keys.sort_unstable();

    let mut mass = cloud.weight(center);
    let mut best: Option<Candidate> = None;
    let mut start = 0;
    while start < keys.len() {
        let anchor = key_dist(keys[start]);
        // Same tie-group chain rule as the ranked-list API.
        let mut end = start + 1;
        while end < keys.len() {
            let d = key_dist(keys[end]);
            if d - anchor <= DEFAULT_TIE_TOL * d.abs().max(1.0) {
                end += 1;
            } else {
                break;
            }
        }
        if mass > mass_cut {
            break;
        }
        if anchor >= window_lo {
            let h = (2.0 * anchor).powf(s) / mass;
            let cand = Candidate {
                h,
                center,
                partner: key_partner(keys[start]),
                radius: anchor,
                mass,
            };
            best = merge_max(best, Some(cand));
        }
        for &key in &keys[start..end] {
            mass += cloud.weight(key_partner(key));
        }
        start = end;
    }
    best
}

/// The common weight if every atom carries the same one, bit for bit.
fn uniform_weight(cloud: &PointCloud) -> Option<f64> {
    let w = cloud.weight(0);
    (0..cloud.len()).all(|i| cloud.weight(i).to_bits() == w.to_bits()).then_some(w)
}

/// How many nearest partners can still start a ball of mass <= mass_cut,
/// walking the same left fold the scan uses.
fn record_cap_for(cloud: &PointCloud, mass_cut: f64) -> usize {
    match uniform_weight(cloud) {
        Some(w) => {
            let mut acc = w;
            let mut cnt = 0usize;
            while acc <= mass_cut && cnt < cloud.len() {
                acc += w;
                cnt += 1;
            }
            cnt
        }
        None => usize::MAX,
    }
}

pub(crate) fn candidate_to_estimate(
    cloud: &PointCloud,
    cand: Candidate,
    kind: MeasureKind,
    epsilon: f64,
    bound: BoundInputs,
    started: Instant,
) -> MeasureEstimate {
    let witness = |i: usize| Witness {
        index: i,
        code: cloud.code_string(i),
        coords: cloud.point(i).to_vec(),
    };
    MeasureEstimate {
        kind,
        level: cloud.level(),
        value: cand.h,
        epsilon,
        interval: (cand.h - epsilon, cand.h + epsilon),
        witness_center: witness(cand.center),
        witness_partner: witness(cand.partner),
        witness_radius: cand.radius,
        witness_mass: cand.mass,
        bound,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Level-k packing estimate. Every admissible pair is evaluated; the
/// reduction over centers is an ordered max, so the result does not
/// depend on thread count or partitioning.
pub fn estimate_packing(system: &IfSystem, k: u32, budget: u64) -> Result<MeasureEstimate> {
    let started = Instant::now();
    let consts = derive_constants(system)?;
    let (epsilon, bound) = packing_error_bound(&consts, k)?;
    let cloud = build_cloud(system, consts.s, k, budget)?;
    let cell = bound.window_hi.min(consts.diam_hi);
    let index = build_index(&cloud, cell);
    // Seed the maximum from the two extreme-index centers (full scan),
    // then discard balls whose mass alone puts them strictly below it.
    // The discards cannot touch the maximum or its witness, so the
    // result is bit-identical to an exhaustive scan.
    let n = cloud.len();
    let mut seed_keys = Vec::new();
    let seed = [0, n - 1]
        .iter()
        .map(|&c| {
            best_for_center(
                &cloud,
                &index,
                c,
                bound.window_lo,
                bound.window_hi,
                consts.s,
                f64::INFINITY,
                usize::MAX,
                &mut seed_keys,
            )
        })
        .fold(None, merge_max);
    let (mass_cut, record_cap) = match &seed {
        Some(c) => {
            let cut = (2.0 * bound.window_hi).powf(consts.s) * (1.0 + 1e-9) / c.h;
            (cut, record_cap_for(&cloud, cut))
        }
        None => (f64::INFINITY, usize::MAX),
    };
    let best = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |keys, c| {
            best_for_center(
                &cloud,
                &index,
                c,
                bound.window_lo,
                bound.window_hi,
                consts.s,
                mass_cut,
                record_cap,
                keys,
            )
        })
        .reduce(|| None, merge_max);
    let cand = best.ok_or(Error::NoAdmissible(0))?;
    Ok(candidate_to_estimate(
        &cloud,
        cand,
        MeasureKind::Packing,
        epsilon,
        bound,
        started,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::DEFAULT_POINT_BUDGET;
    use crate::ifs::{cantor, planar_cantor, sierpinski};

    fn sig6(v: f64) -> String {
        format!("{v:.5e}")
    }

    #[test]
    fn bound_cantor_quarter_k20() {
        let consts = derive_constants(&cantor(0.25).unwrap()).unwrap();
        let (eps, b) = packing_error_bound(&consts, 20).unwrap();
        assert_eq!(b.q, 1);
        assert!((b.big_q - 2f64.sqrt()).abs() < 1e-5, "Q = {}", b.big_q);
        assert_eq!(sig6(eps), "3.63798e-12");
    }

    #[test]
    fn bound_gasket_k10() {
        let consts = derive_constants(&sierpinski(1.0 / 27.0).unwrap()).unwrap();
        let (eps, b) = packing_error_bound(&consts, 10).unwrap();
        assert_eq!(b.q, 1);
        assert!((b.big_q - 1.05265).abs() < 1e-5);
        assert_eq!(sig6(eps), "1.28830e-14");
    }

    #[test]
    fn bound_cantor_045_k20() {
        let consts = derive_constants(&cantor(0.45).unwrap()).unwrap();
        let (eps, b) = packing_error_bound(&consts, 20).unwrap();
        assert_eq!(b.q, 3);
        assert!((b.big_q - 1.35502).abs() < 1e-5);
        assert_eq!(sig6(eps), "3.98266e-6");
    }

    #[test]
    fn infeasible_window_is_rejected() {
        let consts = derive_constants(&cantor(0.45).unwrap()).unwrap();
        assert!(matches!(
            packing_error_bound(&consts, 2),
            Err(Error::WindowInfeasible { k: 2 })
        ));
    }

    #[test]
    fn cantor_quarter_exact_recovery() {
        let sys = cantor(0.25).unwrap();
        let est = estimate_packing(&sys, 3, DEFAULT_POINT_BUDGET).unwrap();
        assert!((est.value - 2.449489742783).abs() < 5e-13, "got {}", est.value);
    }

    #[test]
    fn planar_quarter_value_is_six() {
        let sys = planar_cantor(0.25).unwrap();
        let est = estimate_packing(&sys, 3, DEFAULT_POINT_BUDGET).unwrap();
        assert!((est.value - 6.0).abs() < 1e-12, "got {}", est.value);
    }

    #[test]
    fn gasket_042_level_five() {
        let sys = sierpinski(0.42).unwrap();
        let est = estimate_packing(&sys, 5, DEFAULT_POINT_BUDGET).unwrap();
        assert!((est.value - 3.67050829).abs() < 5e-9, "got {}", est.value);
        // The maximizing ball sits at a gasket vertex; the three vertices are
        // equivalent under the set's symmetry group, so any of them may win.
        let c = &est.witness_center.coords;
        let vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
        assert!(
            vertices.iter().any(|v| (c[0] - v[0]).abs() < 5e-9 && (c[1] - v[1]).abs() < 5e-9),
            "center = {c:?}"
        );
        assert!((est.witness_radius - 0.26055578).abs() < 5e-9);
        // Interval endpoints are reported with outward rounding.
        assert_eq!((est.interval.0 * 1e8).floor() / 1e8, 2.00793066);
        assert_eq!((est.interval.1 * 1e8).ceil() / 1e8, 5.33308593);
    }

    #[test]
    fn witness_reproduces_value() {
        for sys in [cantor(0.45).unwrap(), sierpinski(0.42).unwrap()] {
            let est = estimate_packing(&sys, 6, DEFAULT_POINT_BUDGET).unwrap();
            let consts = derive_constants(&sys).unwrap();
            let h = (2.0 * est.witness_radius).powf(consts.s) / est.witness_mass;
            assert_eq!(h, est.value);
            assert!(est.witness_radius >= est.bound.window_lo);
            assert!(est.witness_radius <= est.bound.window_hi);
            assert!(est.witness_mass >= consts.r_min.powf(est.bound.q as f64 * consts.s));
            assert_eq!(est.interval, (est.value - est.epsilon, est.value + est.epsilon));
        }
    }

    #[test]
    fn bound_shrinks_by_contraction_ratio() {
        let consts = derive_constants(&cantor(0.45).unwrap()).unwrap();
        let (e10, _) = packing_error_bound(&consts, 10).unwrap();
        let (e11, _) = packing_error_bound(&consts, 11).unwrap();
        let ratio = e11 / e10;
        assert!((ratio - 0.45).abs() < 0.05 * 0.45, "ratio {ratio}");
    }
}
