//! Fixed-radius neighbor enumeration over a hash-grid index: for each
//! center, the distances to other cloud points inside a radius window,
//! sorted ascending and merged into tie groups.

use std::collections::HashMap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

pub const DEFAULT_TIE_TOL: f64 = 1e-12;

/// Uniform grid over the cloud's bounding box; bucket key is the
/// integer lattice cell of a point's coordinates.
pub struct SpatialIndex {
    cell_size: f64,
    dim: usize,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl SpatialIndex {
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn bucket(&self, cell: &[i64]) -> Option<&[usize]> {
        self.buckets.get(cell).map(|v| v.as_slice())
    }
}

fn cell_of(coords: &[f64], cell_size: f64) -> Vec<i64> {
    coords
        .iter()
        .map(|&x| (x / cell_size).floor() as i64)
        .collect()
}

pub fn build_index(cloud: &PointCloud, cell_size: f64) -> SpatialIndex {
    assert!(cell_size > 0.0, "cell_size must be positive");
    let dim = cloud.dim();
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for i in 0..cloud.len() {
        buckets.entry(cell_of(cloud.point(i), cell_size)).or_default().push(i);
    }
    SpatialIndex {
        cell_size,
        dim,
        buckets,
    }
}

/// One partner of a center, before tie grouping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRecord {
    pub partner: usize,
    pub dist: f64,
    pub weight: f64,
}

/// A run of records whose distances agree within the tie tolerance.
#[derive(Debug, Clone, Copy)]
pub struct TieGroup {
    /// Half-open record range [start, end).
    pub start: usize,
    pub end: usize,
    /// Representative distance: the minimum of the group.
    pub dist: f64,
    /// Smallest partner index in the group (argmin of dist, then index).
    pub min_partner: usize,
    /// True iff some member's first code letter differs from the center's.
    pub cross: bool,
}

impl TieGroup {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Window query result for one center.
pub struct RankedList {
    pub records: Vec<DistanceRecord>,
    pub groups: Vec<TieGroup>,
}

/// Sort key packing a nonnegative distance and a partner index; for
/// nonnegative floats the bit pattern orders like the value, so plain
/// integer order equals (distance, partner index) order.
pub(crate) fn pack_key(dist: f64, partner: usize) -> u128 {
    ((dist.to_bits() as u128) << 64) | partner as u128
}

pub(crate) fn key_dist(key: u128) -> f64 {
    f64::from_bits((key >> 64) as u64)
}

pub(crate) fn key_partner(key: u128) -> usize {
    key as u64 as usize
}

pub(crate) fn collect_keys_into(
    index: &SpatialIndex,
    cloud: &PointCloud,
    center_index: usize,
    d_lo: f64,
    d_hi: f64,
    keys: &mut Vec<u128>,
) {
    keys.clear();
    let dim = index.dim;
    let center = cloud.point(center_index);
    let cs = index.cell_size;
    let lo: Vec<i64> = center.iter().map(|&x| ((x - d_hi) / cs).floor() as i64).collect();
    let hi: Vec<i64> = center.iter().map(|&x| ((x + d_hi) / cs).floor() as i64).collect();

    let mut cell = lo.clone();
    'cells: loop {
        if let Some(bucket) = index.buckets.get(&cell) {
            for &p in bucket {
                if p == center_index {
                    continue;
                }
                let q = cloud.point(p);
                let mut d2 = 0.0;
                for t in 0..dim {
                    let d = center[t] - q[t];
                    d2 += d * d;
                }
                let dist = d2.sqrt();
                if dist >= d_lo && dist <= d_hi {
                    keys.push(pack_key(dist, p));
                }
            }
        }
        // Odometer increment over the cell box.
        for t in 0..dim {
            if cell[t] < hi[t] {
                cell[t] += 1;
                continue 'cells;
            }
            cell[t] = lo[t];
        }
        break;
    }
}

/// Keep the `max_records` smallest keys plus any tail entries within the
/// tie margin of the last kept distance, so no tie group anchored in the
/// kept prefix loses members. The kept set is a contiguous prefix of the
/// sorted full list.
pub(crate) fn truncate_keys(keys: &mut Vec<u128>, max_records: usize, d_hi: f64, tie_tol: f64) {
    if max_records == 0 {
        keys.clear();
        return;
    }
    if keys.len() <= max_records {
        return;
    }
    keys.select_nth_unstable(max_records - 1);
    let d_keep = key_dist(keys[max_records - 1]) + 2.0 * tie_tol * d_hi.max(1.0);
    // Everything before the selection point is already <= d_keep; pull
    // in tail elements still within the tie margin.
    let mut kept = max_records;
    for i in max_records..keys.len() {
        if key_dist(keys[i]) <= d_keep {
            keys[kept] = keys[i];
            kept += 1;
        }
    }
    keys.truncate(kept);
}

fn keys_to_list(
    cloud: &PointCloud,
    center_index: usize,
    keys: &[u128],
    tie_tol: f64,
) -> RankedList {
    let records: Vec<DistanceRecord> = keys
        .iter()
        .map(|&key| {
            let partner = key_partner(key);
            DistanceRecord {
                partner,
                dist: key_dist(key),
                weight: cloud.weight(partner),
            }
        })
        .collect();
    let groups = group_ties(cloud, center_index, &records, tie_tol);
    RankedList { records, groups }
}

/// All partners y != center with d_lo <= |x-y| <= d_hi, ascending by
/// (distance, partner index), merged into tie groups. Only grid cells
/// intersecting the ball of radius d_hi are scanned.
pub fn ranked_distances(
    index: &SpatialIndex,
    cloud: &PointCloud,
    center_index: usize,
    d_lo: f64,
    d_hi: f64,
    tie_tol: f64,
) -> RankedList {
    debug_assert!(0.0 <= d_lo && d_lo <= d_hi);
    let mut keys = Vec::new();
    collect_keys_into(index, cloud, center_index, d_lo, d_hi, &mut keys);
    keys.sort_unstable();
    keys_to_list(cloud, center_index, &keys, tie_tol)
}

/// Like `ranked_distances`, but keeps only the `max_records` nearest
/// partners, extended so that no tie group anchored inside the kept
/// prefix is cut short. The result is a contiguous prefix of the full
/// ranked list: records, masses, and groups anchored within it agree
/// bit for bit with the untruncated query.
pub fn ranked_distances_pruned(
    index: &SpatialIndex,
    cloud: &PointCloud,
    center_index: usize,
    d_lo: f64,
    d_hi: f64,
    tie_tol: f64,
    max_records: usize,
) -> RankedList {
    debug_assert!(0.0 <= d_lo && d_lo <= d_hi);
    let mut keys = Vec::new();
    collect_keys_into(index, cloud, center_index, d_lo, d_hi, &mut keys);
    truncate_keys(&mut keys, max_records, d_hi, tie_tol);
    keys.sort_unstable();
    keys_to_list(cloud, center_index, &keys, tie_tol)
}

fn group_ties(
    cloud: &PointCloud,
    center_index: usize,
    records: &[DistanceRecord],
    tie_tol: f64,
) -> Vec<TieGroup> {
    let center_letter = cloud.first_letter(center_index);
    let mut groups: Vec<TieGroup> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let anchor = records[start].dist;
        let mut end = start + 1;
        while end < records.len() {
            let d = records[end].dist;
            if d - anchor <= tie_tol * d.abs().max(1.0) {
                end += 1;
            } else {
                break;
            }
        }
        let cross = records[start..end]
            .iter()
            .any(|r| cloud.first_letter(r.partner) != center_letter);
        groups.push(TieGroup {
            start,
            end,
            dist: anchor,
            min_partner: records[start].partner,
            cross,
        });
        start = end;
    }
    groups
}

/// Mass of the open ball at the j-th distinct radius: partner weights
/// strictly before tie group j, folded left in record order.
pub fn cumulative_mass_below(ranked: &RankedList, j: usize) -> Result<f64> {
    let group = ranked.groups.get(j).ok_or(Error::IndexOutOfRange {
        index: j,
        len: ranked.groups.len(),
    })?;
    Ok(fold_mass(0.0, &ranked.records[..group.start]))
}

/// Left-fold partner weights onto an initial mass; record order is the
/// summation tree, shared with the brute-force reference so the two
/// agree bit for bit.
pub fn fold_mass(init: f64, records: &[DistanceRecord]) -> f64 {
    records.iter().fold(init, |acc, r| acc + r.weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{build_cloud, DEFAULT_POINT_BUDGET};
    use crate::ifs::{cantor, planar_cantor, sierpinski, similarity_dimension, IfSystem};

    fn cloud_for(system: &IfSystem, k: u32) -> PointCloud {
        let s = similarity_dimension(system);
        build_cloud(system, s, k, DEFAULT_POINT_BUDGET).unwrap()
    }

    #[test]
    fn buckets_cantor_level_two() {
        let sys = cantor(0.25).unwrap();
        let cloud = cloud_for(&sys, 2);
        let index = build_index(&cloud, 0.5);
        assert_eq!(index.bucket(&[0]), Some(&[0usize, 1][..]));
        assert_eq!(index.bucket(&[1]), Some(&[2usize][..]));
        assert_eq!(index.bucket(&[2]), Some(&[3usize][..]));
        assert_eq!(index.bucket(&[7]), None);
    }

    #[test]
    fn bucket_membership_matches_floor_division() {
        let sys = sierpinski(0.3).unwrap();
        let cloud = cloud_for(&sys, 5);
        let cs = 0.17;
        let index = build_index(&cloud, cs);
        for i in 0..cloud.len() {
            let cell = cell_of(cloud.point(i), cs);
            assert!(index.bucket(&cell).unwrap().contains(&i));
        }
    }

    #[test]
    fn window_query_cantor_example() {
        let sys = cantor(0.25).unwrap();
        let cloud = cloud_for(&sys, 2);
        let index = build_index(&cloud, 0.5);
        let ranked = ranked_distances(&index, &cloud, 0, 0.3, 2.0, DEFAULT_TIE_TOL);
        let dists: Vec<f64> = ranked.records.iter().map(|r| r.dist).collect();
        assert_eq!(dists, vec![0.75, 1.0]);
        assert!(ranked.records.iter().all(|r| (r.weight - 0.25).abs() < 1e-15));
        assert_eq!(ranked.groups.len(), 2);
    }

    #[test]
    fn zero_window_is_empty() {
        let sys = cantor(0.25).unwrap();
        let cloud = cloud_for(&sys, 3);
        let index = build_index(&cloud, 0.25);
        let ranked = ranked_distances(&index, &cloud, 2, 0.0, 0.0, DEFAULT_TIE_TOL);
        assert!(ranked.records.is_empty() && ranked.groups.is_empty());
    }

    fn brute(
        cloud: &PointCloud,
        center: usize,
        d_lo: f64,
        d_hi: f64,
    ) -> Vec<(f64, usize)> {
        let dim = cloud.dim();
        let mut out = Vec::new();
        for p in 0..cloud.len() {
            if p == center {
                continue;
            }
            let mut d2 = 0.0;
            for t in 0..dim {
                let d = cloud.point(center)[t] - cloud.point(p)[t];
                d2 += d * d;
            }
            let dist = d2.sqrt();
            if dist >= d_lo && dist <= d_hi {
                out.push((dist, p));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    #[test]
    fn full_window_matches_brute_force() {
        let systems = [
            cantor(0.25).unwrap(),
            cantor(0.45).unwrap(),
            sierpinski(1.0 / 3.0).unwrap(),
            planar_cantor(0.2).unwrap(),
        ];
        for sys in &systems {
            for k in [2u32, 4, 6] {
                if (sys.len() as u64).pow(k) > 5000 {
                    continue;
                }
                let cloud = cloud_for(sys, k);
                let index = build_index(&cloud, 0.3);
                for center in 0..cloud.len() {
                    let ranked =
                        ranked_distances(&index, &cloud, center, 0.0, 2.0, DEFAULT_TIE_TOL);
                    let got: Vec<(f64, usize)> =
                        ranked.records.iter().map(|r| (r.dist, r.partner)).collect();
                    assert_eq!(got, brute(&cloud, center, 0.0, 2.0));
                }
            }
        }
    }

    #[test]
    fn partial_window_matches_brute_force() {
        let sys = planar_cantor(0.3).unwrap();
        let cloud = cloud_for(&sys, 5);
        let index = build_index(&cloud, 0.11);
        for center in (0..cloud.len()).step_by(37) {
            let ranked = ranked_distances(&index, &cloud, center, 0.2, 0.55, DEFAULT_TIE_TOL);
            let got: Vec<(f64, usize)> =
                ranked.records.iter().map(|r| (r.dist, r.partner)).collect();
            assert_eq!(got, brute(&cloud, center, 0.2, 0.55));
        }
    }

    #[test]
    fn tie_groups_are_disjoint_and_sorted() {
        let sys = planar_cantor(0.25).unwrap();
        let cloud = cloud_for(&sys, 4);
        let index = build_index(&cloud, 0.2);
        for center in 0..cloud.len() {
            let ranked = ranked_distances(&index, &cloud, center, 0.0, 2.0, DEFAULT_TIE_TOL);
            let mut expect_start = 0;
            for w in ranked.groups.windows(2) {
                assert!(w[1].dist - w[0].dist > DEFAULT_TIE_TOL * w[1].dist.max(1.0));
            }
            for g in &ranked.groups {
                assert_eq!(g.start, expect_start);
                assert!(g.end > g.start);
                assert_eq!(g.dist, ranked.records[g.start].dist);
                assert_eq!(g.min_partner, ranked.records[g.start].partner);
                expect_start = g.end;
            }
            assert_eq!(expect_start, ranked.records.len());
        }
    }

    #[test]
    fn symmetric_configuration_groups_ties() {
        // Corners of the square see two partners at equal distance.
        let sys = planar_cantor(0.25).unwrap();
        let cloud = cloud_for(&sys, 1);
        let index = build_index(&cloud, 1.0);
        let ranked = ranked_distances(&index, &cloud, 0, 0.0, 2.0, DEFAULT_TIE_TOL);
        assert_eq!(ranked.groups.len(), 2);
        assert_eq!(ranked.groups[0].len(), 2);
        assert_eq!(ranked.groups[0].dist, 1.0);
        assert_eq!(ranked.groups[1].len(), 1);
        assert!((ranked.groups[1].dist - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn open_ball_mass_examples() {
        let sys = cantor(0.25).unwrap();
        let cloud = cloud_for(&sys, 4);
        let index = build_index(&cloud, 0.25);
        let ranked = ranked_distances(&index, &cloud, 0, 0.0, 2.0, DEFAULT_TIE_TOL);
        assert_eq!(cumulative_mass_below(&ranked, 0).unwrap(), 0.0);
        // Equal ratios: mass below group j counts strictly closer points.
        for (j, g) in ranked.groups.iter().enumerate() {
            let got = cumulative_mass_below(&ranked, j).unwrap();
            let expect = g.start as f64 / 16.0;
            assert!((got - expect).abs() < 1e-15);
        }
        assert!(matches!(
            cumulative_mass_below(&ranked, ranked.groups.len()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn open_ball_mass_is_monotone_and_bounded() {
        let sys = sierpinski(0.42).unwrap();
        let cloud = cloud_for(&sys, 5);
        let index = build_index(&cloud, 0.3);
        for center in (0..cloud.len()).step_by(17) {
            let ranked = ranked_distances(&index, &cloud, center, 0.0, 2.0, DEFAULT_TIE_TOL);
            let mut prev = 0.0;
            for j in 0..ranked.groups.len() {
                let mass = cumulative_mass_below(&ranked, j).unwrap();
                assert!(mass >= prev && mass <= 1.0);
                prev = mass;
            }
        }
    }

    #[test]
    fn cross_flag_marks_other_first_cylinders() {
        let sys = cantor(0.25).unwrap();
        let cloud = cloud_for(&sys, 2);
        let index = build_index(&cloud, 0.5);
        // Center 0: partner 0.25 shares the first letter, 0.75 and 1 do not.
        let ranked = ranked_distances(&index, &cloud, 0, 0.0, 2.0, DEFAULT_TIE_TOL);
        let flags: Vec<bool> = ranked.groups.iter().map(|g| g.cross).collect();
        assert_eq!(flags, vec![false, true, true]);
    }
}
