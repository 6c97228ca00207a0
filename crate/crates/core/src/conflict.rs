//! Collision-location sets and critical zones for ordered vehicle pairs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{swept_obb, Obb, PathSpec, VehicleFootprint};
use crate::uncertainty::OffsetEnvelope;

pub type VehicleId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Cav,
    Hdv,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CrossingOrder {
    pub order: Vec<VehicleId>,
}

impl CrossingOrder {
    pub fn new(order: Vec<VehicleId>, ids: &[VehicleId]) -> Result<Self> {
        let mut a = order.clone();
        let mut b = ids.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err(Error::Scenario(format!(
                "crossing order {order:?} is not a permutation of vehicle ids {ids:?}"
            )));
        }
        Ok(CrossingOrder { order })
    }

    pub fn rank(&self, id: VehicleId) -> Option<usize> {
        self.order.iter().position(|&o| o == id)
    }
}

#[derive(Clone, Debug)]
pub struct RouteInfo<'a> {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub path_id: &'a str,
}

/// Ordered (leader, follower) pairs that need collision constraints.
pub fn pair_filter(order: &CrossingOrder, routes: &[RouteInfo]) -> Vec<(VehicleId, VehicleId)> {
    let by_id: HashMap<VehicleId, &RouteInfo> = routes.iter().map(|r| (r.id, r)).collect();
    let seq: Vec<&RouteInfo> = order
        .order
        .iter()
        .filter_map(|id| by_id.get(id).copied())
        .collect();
    let mut pairs = Vec::new();
    for a in 0..seq.len() {
        for b in a + 1..seq.len() {
            let (i, j) = (seq[a], seq[b]);
            if i.kind == VehicleKind::Hdv && j.kind == VehicleKind::Hdv {
                continue;
            }
            let blocked = seq[a + 1..b]
                .iter()
                .any(|m| m.path_id == i.path_id || m.path_id == j.path_id);
            if !blocked {
                pairs.push((i.id, j.id));
            }
        }
    }
    pairs
}

/// The region a vehicle may occupy along its path: projection grid plus lateral offset interval.
#[derive(Clone, Debug)]
pub struct Corridor<'a> {
    pub path: &'a PathSpec,
    pub grid: Vec<f64>,
    pub xi_lo: Vec<f64>,
    pub xi_hi: Vec<f64>,
    pub footprint: VehicleFootprint,
}

/// Grid of multiples of `step` from the sample at or below `p_start` to the path end.
pub fn aligned_grid(path: &PathSpec, p_start: f64, step: f64) -> Vec<f64> {
    let k0 = ((p_start.max(0.0) + 1e-9) / step).floor() as usize;
    let kn = ((path.length + 1e-9) / step).floor() as usize;
    let mut g: Vec<f64> = (k0..=kn).map(|k| k as f64 * step).collect();
    if g.is_empty() || path.length - g[g.len() - 1] > 1e-9 {
        g.push(path.length);
    }
    g
}

impl<'a> Corridor<'a> {
    /// CAVs follow their reference path exactly.
    pub fn cav(path: &'a PathSpec, p_start: f64, step: f64, footprint: VehicleFootprint) -> Self {
        let grid = aligned_grid(path, p_start, step);
        let n = grid.len();
        Corridor {
            path,
            grid,
            xi_lo: vec![0.0; n],
            xi_hi: vec![0.0; n],
            footprint,
        }
    }

    pub fn hdv(
        path: &'a PathSpec,
        env: &OffsetEnvelope,
        step: f64,
        footprint: VehicleFootprint,
    ) -> Self {
        let grid = aligned_grid(path, env.grid[0], step);
        let (xi_lo, xi_hi) = grid.iter().map(|&p| env.bounds_at(p)).unzip();
        Corridor {
            path,
            grid,
            xi_lo,
            xi_hi,
            footprint,
        }
    }

    /// A known offset profile, e.g. a realized trajectory.
    pub fn with_offsets(
        path: &'a PathSpec,
        p_start: f64,
        step: f64,
        footprint: VehicleFootprint,
        xi: impl Fn(f64) -> f64,
    ) -> Self {
        let grid = aligned_grid(path, p_start, step);
        let xi_lo: Vec<f64> = grid.iter().map(|&p| xi(p)).collect();
        Corridor {
            path,
            grid,
            xi_hi: xi_lo.clone(),
            xi_lo,
            footprint,
        }
    }

    pub fn boxes(&self) -> Vec<Obb> {
        (0..self.grid.len())
            .map(|k| {
                swept_obb(
                    self.path,
                    self.grid[k],
                    self.xi_lo[k],
                    self.xi_hi[k],
                    &self.footprint,
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionLocationSet {
    pub pair: (VehicleId, VehicleId),
    pub grid_leader: Vec<f64>,
    pub grid_follower: Vec<f64>,
    /// (leader index, follower index), sorted.
    pub cells: Vec<(usize, usize)>,
}

impl CollisionLocationSet {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_p(&self, c: (usize, usize)) -> (f64, f64) {
        (self.grid_leader[c.0], self.grid_follower[c.1])
    }
}

pub fn collision_locations(
    pair: (VehicleId, VehicleId),
    leader: &Corridor,
    follower: &Corridor,
) -> CollisionLocationSet {
    let a = leader.boxes();
    let b = follower.boxes();
    let mut cells = Vec::new();
    // cheap rejection against the follower corridor's bounding rectangle
    let (mut x0, mut y0, mut x1, mut y1) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for o in &b {
        let r = o.circumradius();
        x0 = x0.min(o.center.0 - r);
        x1 = x1.max(o.center.0 + r);
        y0 = y0.min(o.center.1 - r);
        y1 = y1.max(o.center.1 + r);
    }
    for (i, oa) in a.iter().enumerate() {
        let r = oa.circumradius();
        if oa.center.0 + r < x0
            || oa.center.0 - r > x1
            || oa.center.1 + r < y0
            || oa.center.1 - r > y1
        {
            continue;
        }
        for (j, ob) in b.iter().enumerate() {
            if crate::geometry::obb_overlap(oa, ob) {
                cells.push((i, j));
            }
        }
    }
    CollisionLocationSet {
        pair,
        grid_leader: leader.grid.clone(),
        grid_follower: follower.grid.clone(),
        cells,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalZone {
    pub pair: (VehicleId, VehicleId),
    pub p_out: f64,
    pub p_in: f64,
}

/// Fixed points of the exit map f and entrance map g, with dominated points removed.
pub fn critical_zones(cls: &CollisionLocationSet) -> Vec<CriticalZone> {
    if cls.cells.is_empty() {
        return Vec::new();
    }
    let n1 = cls.grid_leader.len();
    let n2 = cls.grid_follower.len();
    let mut f: Vec<Option<usize>> = vec![None; n2];
    let mut g: Vec<Option<usize>> = vec![None; n1];
    for &(i, j) in &cls.cells {
        f[j] = Some(f[j].map_or(i, |v| v.max(i)));
        g[i] = Some(g[i].map_or(j, |v| v.min(j)));
    }
    let mut fixed: Vec<(usize, usize)> = (0..n2)
        .filter_map(|j| f[j].and_then(|i| (g[i] == Some(j)).then_some((i, j))))
        .collect();
    // keep the Pareto front: larger exit and smaller entrance dominate
    fixed.sort_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
    let mut front: Vec<(usize, usize)> = Vec::new();
    let mut best_out: Option<usize> = None;
    for z in fixed {
        if best_out.map_or(true, |b| z.0 > b) {
            front.push(z);
            best_out = Some(z.0);
        }
    }
    front
        .into_iter()
        .map(|(i, j)| CriticalZone {
            pair: cls.pair,
            p_out: cls.grid_leader[i],
            p_in: cls.grid_follower[j],
        })
        .collect()
}

pub fn coverage_check(cls: &CollisionLocationSet, zones: &[CriticalZone]) -> bool {
    cls.cells.iter().all(|&c| {
        let (p1, p2) = cls.cell_p(c);
        zones.iter().any(|z| z.p_out >= p1 && z.p_in <= p2)
    })
}

/// Every zone is needed: dropping any one leaves some cell uncovered.
pub fn non_redundant(cls: &CollisionLocationSet, zones: &[CriticalZone]) -> bool {
    (0..zones.len()).all(|k| {
        let rest: Vec<CriticalZone> = zones
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, z)| *z)
            .collect();
        !coverage_check(cls, &rest)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneReport {
    pub leader: VehicleId,
    pub follower: VehicleId,
    pub p_out: f64,
    pub p_in: f64,
    pub band_leader: (f64, f64),
    pub band_follower: (f64, f64),
}

pub fn zone_report(cls: &CollisionLocationSet, zones: &[CriticalZone]) -> Vec<ZoneReport> {
    if cls.cells.is_empty() {
        return Vec::new();
    }
    let (mut a0, mut a1, mut b0, mut b1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &c in &cls.cells {
        let (p1, p2) = cls.cell_p(c);
        a0 = a0.min(p1);
        a1 = a1.max(p1);
        b0 = b0.min(p2);
        b1 = b1.max(p2);
    }
    zones
        .iter()
        .map(|z| ZoneReport {
            leader: z.pair.0,
            follower: z.pair.1,
            p_out: z.p_out,
            p_in: z.p_in,
            band_leader: (a0, a1),
            band_follower: (b0, b1),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(v: &[u32]) -> CrossingOrder {
        CrossingOrder::new(v.to_vec(), v).unwrap()
    }

    #[test]
    fn same_path_chain_keeps_only_neighbours() {
        let routes = [
            RouteInfo {
                id: 1,
                kind: VehicleKind::Cav,
                path_id: "S-straight",
            },
            RouteInfo {
                id: 2,
                kind: VehicleKind::Cav,
                path_id: "S-straight",
            },
            RouteInfo {
                id: 3,
                kind: VehicleKind::Cav,
                path_id: "S-straight",
            },
        ];
        assert_eq!(
            pair_filter(&order(&[1, 2, 3]), &routes),
            vec![(1, 2), (2, 3)]
        );
    }

    #[test]
    fn hdv_pairs_excluded() {
        let routes = [
            RouteInfo {
                id: 1,
                kind: VehicleKind::Hdv,
                path_id: "S-straight",
            },
            RouteInfo {
                id: 2,
                kind: VehicleKind::Hdv,
                path_id: "E-straight",
            },
            RouteInfo {
                id: 3,
                kind: VehicleKind::Cav,
                path_id: "N-left",
            },
        ];
        assert_eq!(
            pair_filter(&order(&[1, 2, 3]), &routes),
            vec![(1, 3), (2, 3)]
        );
    }

    #[test]
    fn order_must_be_permutation() {
        assert!(CrossingOrder::new(vec![1, 2, 2], &[1, 2, 3]).is_err());
    }

    fn cls(cells: &[(usize, usize)], n: usize) -> CollisionLocationSet {
        let grid: Vec<f64> = (0..n).map(|k| k as f64).collect();
        CollisionLocationSet {
            pair: (1, 2),
            grid_leader: grid.clone(),
            grid_follower: grid,
            cells: cells.to_vec(),
        }
    }

    #[test]
    fn singleton_set_is_its_own_zone() {
        let c = cls(&[(3, 4)], 6);
        let z = critical_zones(&c);
        assert_eq!(z.len(), 1);
        assert_eq!((z[0].p_out, z[0].p_in), (3.0, 4.0));
    }

    #[test]
    fn deleting_a_zone_breaks_coverage() {
        let c = cls(&[(1, 1), (2, 1), (2, 2), (3, 2), (4, 3)], 6);
        let z = critical_zones(&c);
        assert!(coverage_check(&c, &z));
        assert!(non_redundant(&c, &z));
        assert!(z.len() >= 2);
        assert!(!coverage_check(&c, &z[1..]));
    }

    #[test]
    fn empty_set_is_covered() {
        assert!(coverage_check(&cls(&[], 3), &[]));
    }
}
