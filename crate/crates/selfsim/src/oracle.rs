//! Brute-force reference estimators: the same definitions computed
//! literally over all point pairs, with no spatial index and no
//! pruning, single threaded. Shares only the map and cloud types with
//! the fast paths; everything else is reimplemented so that agreement
//! is meaningful.

use std::time::Instant;

use crate::cloud::{build_cloud, PointCloud};
use crate::error::{Error, Result};
use crate::estimate::{BoundInputs, MeasureEstimate, MeasureKind, Witness};
use crate::ifs::{derive_constants, DerivedConstants, IfSystem};

const POINT_CAP: u64 = 10_000;
const TIE_TOL: f64 = 1e-12;

fn capped_cloud(system: &IfSystem, consts: &DerivedConstants, k: u32) -> Result<PointCloud> {
    let needed = (system.len() as u128).pow(k);
    if needed > POINT_CAP as u128 {
        return Err(Error::TooLarge {
            level: k,
            needed,
            cap: POINT_CAP,
        });
    }
    build_cloud(system, consts.s, k, POINT_CAP)
}

/// All partners of one center, ascending by (distance, index).
fn sorted_partners(cloud: &PointCloud, center: usize) -> Vec<(f64, usize)> {
    let dim = cloud.dim();
    let x = cloud.point(center);
    let mut out = Vec::with_capacity(cloud.len() - 1);
    for p in 0..cloud.len() {
        if p == center {
            continue;
        }
        let y = cloud.point(p);
        let mut d2 = 0.0;
        for t in 0..dim {
            let d = x[t] - y[t];
            d2 += d * d;
        }
        out.push((d2.sqrt(), p));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

/// Tie groups as half-open ranges into the sorted partner list.
fn tie_ranges(partners: &[(f64, usize)]) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < partners.len() {
        let anchor = partners[start].0;
        let mut end = start + 1;
        while end < partners.len() && partners[end].0 - anchor <= TIE_TOL * partners[end].0.max(1.0)
        {
            end += 1;
        }
        ranges.push((start, end));
        start = end;
    }
    ranges
}

struct Best {
    h: f64,
    center: usize,
    partner: usize,
    radius: f64,
    mass: f64,
}

fn finish(
    cloud: &PointCloud,
    kind: MeasureKind,
    best: Best,
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
        value: best.h,
        epsilon,
        interval: (best.h - epsilon, best.h + epsilon),
        witness_center: witness(best.center),
        witness_partner: witness(best.partner),
        witness_radius: best.radius,
        witness_mass: best.mass,
        bound,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Literal maximization of (2d)^s / open-ball mass over every center
/// and every admissible pair distance.
pub fn brute_packing(system: &IfSystem, k: u32) -> Result<MeasureEstimate> {
    let started = Instant::now();
    let consts = derive_constants(system)?;
    let rk = consts.r_max.powi(k as i32);
    let window_lo = consts.c_lo - 2.0 * consts.diam_hi * rk - 2.0 * consts.diam_hi * rk * consts.r_max;
    let window_hi = consts.c_hi / consts.r_min;
    if consts.c_lo - 3.0 * consts.diam_hi * rk - 2.0 * consts.diam_hi * rk * consts.r_max <= 0.0 {
        return Err(Error::WindowInfeasible { k });
    }
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
    let bound = BoundInputs {
        q,
        big_q,
        window_lo,
        window_hi,
    };

    let cloud = capped_cloud(system, &consts, k)?;
    let mut best: Option<Best> = None;
    for center in 0..cloud.len() {
        let partners = sorted_partners(&cloud, center);
        let mut mass = cloud.weight(center);
        let mut pos = 0;
        for (start, end) in tie_ranges(&partners) {
            while pos < start {
                mass += cloud.weight(partners[pos].1);
                pos += 1;
            }
            let d = partners[start].0;
            if d < window_lo || d > window_hi {
                continue;
            }
            let h = (2.0 * d).powf(s) / mass;
            let partner = partners[start].1;
            let replace = best.as_ref().map_or(true, |b| {
                h > b.h || (h == b.h && (center, partner) < (b.center, b.partner))
            });
            if replace {
                best = Some(Best {
                    h,
                    center,
                    partner,
                    radius: d,
                    mass,
                });
            }
            let _ = end;
        }
    }
    let best = best.ok_or(Error::NoAdmissible(0))?;
    Ok(finish(&cloud, MeasureKind::Packing, best, epsilon, bound, started))
}

/// Literal minimization of (2d)^s / closed-ball mass over every center
/// and every radius whose ball reaches another first-level cylinder.
pub fn brute_centered(system: &IfSystem, k: u32) -> Result<MeasureEstimate> {
    let started = Instant::now();
    let consts = derive_constants(system)?;
    let mut q: u32 = 1;
    let mut t = consts.diam_hi * consts.r_max;
    while t > consts.c_lo {
        t *= consts.r_max;
        q += 1;
    }
    let s = consts.s;
    let big_q = if s >= 1.0 {
        consts.diam_hi.powf(s - 1.0)
    } else {
        consts.c_lo.powf(s - 1.0)
    };
    let epsilon = s * 2f64.powf(s + 1.0) * consts.diam_hi * big_q / consts.r_min.powf(s * q as f64)
        * consts.r_max.powi(k as i32);
    let bound = BoundInputs {
        q,
        big_q,
        window_lo: consts.c_lo,
        window_hi: consts.diam_hi,
    };

    let cloud = capped_cloud(system, &consts, k)?;
    let mut best: Option<Best> = None;
    for center in 0..cloud.len() {
        let letter = cloud.first_letter(center);
        let partners = sorted_partners(&cloud, center);
        let ranges = tie_ranges(&partners);
        let j0 = match ranges
            .iter()
            .position(|&(a, b)| partners[a..b].iter().any(|&(_, p)| cloud.first_letter(p) != letter))
        {
            Some(j) => j,
            None => continue,
        };
        let mut mass = cloud.weight(center);
        let mut pos = 0;
        for (j, &(start, end)) in ranges.iter().enumerate() {
            while pos < end {
                mass += cloud.weight(partners[pos].1);
                pos += 1;
            }
            if j < j0 {
                continue;
            }
            let d = partners[start].0;
            let h = (2.0 * d).powf(s) / mass;
            let partner = partners[start].1;
            let replace = best.as_ref().map_or(true, |b| {
                h < b.h || (h == b.h && (center, partner) < (b.center, b.partner))
            });
            if replace {
                best = Some(Best {
                    h,
                    center,
                    partner,
                    radius: d,
                    mass,
                });
            }
        }
    }
    let best = best.ok_or(Error::NoAdmissible(0))?;
    Ok(finish(
        &cloud,
        MeasureKind::CenteredHausdorff,
        best,
        epsilon,
        bound,
        started,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chausdorff::estimate_centered;
    use crate::cloud::DEFAULT_POINT_BUDGET;
    use crate::ifs::{cantor, planar_cantor, sierpinski};
    use crate::packing::estimate_packing;

    fn assert_same(a: &MeasureEstimate, b: &MeasureEstimate) {
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.epsilon.to_bits(), b.epsilon.to_bits());
        assert_eq!(a.witness_center.index, b.witness_center.index);
        assert_eq!(a.witness_partner.index, b.witness_partner.index);
        assert_eq!(a.witness_radius.to_bits(), b.witness_radius.to_bits());
        assert_eq!(a.witness_mass.to_bits(), b.witness_mass.to_bits());
    }

    #[test]
    fn packing_matches_fast_path_bitwise() {
        for sys in [cantor(0.25).unwrap(), cantor(0.35).unwrap(), sierpinski(0.42).unwrap()] {
            for k in 4..=5 {
                let slow = brute_packing(&sys, k).unwrap();
                let fast = estimate_packing(&sys, k, DEFAULT_POINT_BUDGET).unwrap();
                assert_same(&slow, &fast);
            }
        }
    }

    #[test]
    fn centered_matches_fast_path_bitwise() {
        for sys in [cantor(0.45).unwrap(), sierpinski(0.3).unwrap(), planar_cantor(0.2).unwrap()] {
            for k in 3..=4 {
                let slow = brute_centered(&sys, k).unwrap();
                let fast = estimate_centered(&sys, k, DEFAULT_POINT_BUDGET).unwrap();
                assert_same(&slow, &fast);
            }
        }
    }

    #[test]
    fn gasket_third_value_is_four() {
        let est = brute_packing(&sierpinski(1.0 / 3.0).unwrap(), 4).unwrap();
        assert!((est.value - 4.0).abs() <= est.epsilon);
    }

    #[test]
    fn planar_02_table_value() {
        let est = brute_packing(&planar_cantor(0.2).unwrap(), 4).unwrap();
        assert!((est.value - 5.996245070706).abs() <= est.epsilon);
    }

    #[test]
    fn cantor_third_centered_value() {
        let est = brute_centered(&cantor(1.0 / 3.0).unwrap(), 5).unwrap();
        assert!((est.value - 1.199023144561).abs() <= est.epsilon);
    }

    #[test]
    fn gasket_0278_centered_value() {
        let est = brute_centered(&sierpinski(0.278).unwrap(), 5).unwrap();
        assert!((est.value - 1.561597393347).abs() <= est.epsilon);
    }

    #[test]
    fn point_cap_is_enforced() {
        assert!(matches!(
            brute_packing(&cantor(0.25).unwrap(), 14),
            Err(Error::TooLarge { level: 14, .. })
        ));
    }
}
