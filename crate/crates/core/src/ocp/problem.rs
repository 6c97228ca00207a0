//! Per-iteration optimal control problem and its QP assembly.

use serde::{Deserialize, Serialize};

use super::cost::{CostKind, CostWeights};
use super::limits::{linearized_control_bounds, CavLimits, SampleGrid};
use super::qp::{CavLayout, QuadBuilder, Row, RowKind, SpatialQp};
use crate::conflict::{CriticalZone, VehicleId, VehicleKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CavCost {
    SpeedTracking { z_ref: Vec<f64>, z_ref_steady: f64 },
    TravelTime,
}

impl CavCost {
    pub fn kind(&self) -> CostKind {
        match self {
            CavCost::SpeedTracking { .. } => CostKind::SpeedTracking,
            CavCost::TravelTime => CostKind::TravelTime,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavOcp {
    pub id: VehicleId,
    pub grid: SampleGrid,
    pub z0: f64,
    /// Control applied just before the horizon starts.
    pub u_prev: f64,
    /// Lower lethargy bound per sample (inverse speed limit).
    pub z_min: Vec<f64>,
    /// Lower lethargy bounds inside intervals, where the speed limit changes.
    #[serde(default)]
    pub speed_rows: Vec<SpeedRow>,
    pub z_max: f64,
    pub limits: CavLimits,
    pub cost: CavCost,
    pub weights: CostWeights,
}

/// `z(k) + s·u(k) ≥ z_min`: the lethargy at offset `s` into interval `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub k: usize,
    pub s: f64,
    pub z_min: f64,
}

/// A travel time: a CAV decision variable at a position or a known constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeRef {
    Cav { cav: usize, p: f64 },
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionRow {
    pub zone: CriticalZone,
    pub leader_kind: VehicleKind,
    pub follower_kind: VehicleKind,
    pub leader: TimeRef,
    pub follower: TimeRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcpProblem {
    pub cavs: Vec<CavOcp>,
    pub rows: Vec<CollisionRow>,
    pub t_des: f64,
    pub q_s: f64,
    #[serde(default)]
    pub q_s_l1: f64,
    /// Control bounds also imposed with the lethargy at each interval's end.
    pub end_point_bounds: bool,
}

/// Coefficients of the travel time at `p` within the grid, using the within-interval
/// quadratic `t_k + s·z_k + s²/2·u_k`.
pub fn time_at(grid: &SampleGrid, lay: &CavLayout, p: f64) -> Vec<(usize, f64)> {
    let rel = (p - grid.p0).max(0.0);
    let k = ((rel / grid.dp).floor() as usize).min(grid.k - 1);
    let s = rel - k as f64 * grid.dp;
    if s <= 0.0 {
        return vec![(lay.t(k), 1.0)];
    }
    vec![(lay.t(k), 1.0), (lay.z(k), s), (lay.u(k), 0.5 * s * s)]
}

impl OcpProblem {
    pub fn layouts(&self) -> Vec<CavLayout> {
        let mut off = 0;
        self.cavs
            .iter()
            .map(|c| {
                let l = CavLayout {
                    offset: off,
                    k: c.grid.k,
                };
                off += l.len();
                l
            })
            .collect()
    }

    pub fn slack_weight(&self) -> f64 {
        self.q_s * self.rows.len() as f64
    }

    pub fn slack_weight_l1(&self) -> f64 {
        self.q_s_l1 * self.rows.len() as f64
    }

    /// Builds the convex subproblem with control bounds linearized about `z_lin`.
    pub fn assemble(&self, z_lin: &[Vec<f64>]) -> SpatialQp {
        let lays = self.layouts();
        let n_cav: usize = lays.iter().map(|l| l.len()).sum();
        let n = n_cav + self.rows.len();
        let mut qb = QuadBuilder::new(n);
        let mut eq = Vec::new();
        let mut ineq = Vec::new();
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];

        for (ci, (c, l)) in self.cavs.iter().zip(&lays).enumerate() {
            let (k, dp) = (c.grid.k, c.grid.dp);
            eq.push(Row {
                coefs: vec![(l.t(0), 1.0)],
                rhs: 0.0,
                kind: RowKind::InitialTime { cav: ci },
            });
            eq.push(Row {
                coefs: vec![(l.z(0), 1.0)],
                rhs: c.z0,
                kind: RowKind::InitialLethargy { cav: ci },
            });
            for i in 0..k {
                eq.push(Row {
                    coefs: vec![
                        (l.t(i + 1), 1.0),
                        (l.t(i), -1.0),
                        (l.z(i), -dp),
                        (l.u(i), -0.5 * dp * dp),
                    ],
                    rhs: 0.0,
                    kind: RowKind::DynTime { cav: ci, k: i },
                });
                eq.push(Row {
                    coefs: vec![(l.z(i + 1), 1.0), (l.z(i), -1.0), (l.u(i), -dp)],
                    rhs: 0.0,
                    kind: RowKind::DynLethargy { cav: ci, k: i },
                });
            }
            for i in 1..=k {
                lower[l.t(i)] = 0.0;
                lower[l.z(i)] = c.z_min[i];
                upper[l.z(i)] = c.z_max;
            }
            for r in &c.speed_rows {
                ineq.push(Row {
                    coefs: vec![(l.z(r.k), -1.0), (l.u(r.k), -r.s)],
                    rhs: -r.z_min,
                    kind: RowKind::SpeedCap { cav: ci, k: r.k },
                });
            }
            let zl = &z_lin[ci];
            for i in 0..k {
                let ats: &[usize] = if self.end_point_bounds {
                    &[i, i + 1]
                } else {
                    &[i]
                };
                for &at in ats {
                    let (lo, hi) = linearized_control_bounds(zl[at], &c.limits);
                    // u ≥ c0 + cz·z  →  −u + cz·z ≤ −c0
                    ineq.push(Row {
                        coefs: vec![(l.u(i), -1.0), (l.z(at), lo.cz)],
                        rhs: -lo.c0,
                        kind: RowKind::ControlLower { cav: ci, k: i, at },
                    });
                    ineq.push(Row {
                        coefs: vec![(l.u(i), 1.0), (l.z(at), -hi.cz)],
                        rhs: hi.c0,
                        kind: RowKind::ControlUpper { cav: ci, k: i, at },
                    });
                }
            }
            let w = &c.weights;
            for i in 0..k {
                qb.add_square(&[(l.u(i), 1.0)], 0.0, w.r);
                if i == 0 {
                    qb.add_square(&[(l.u(0), 1.0)], -c.u_prev, w.e);
                } else {
                    qb.add_square(&[(l.u(i), 1.0), (l.u(i - 1), -1.0)], 0.0, w.e);
                }
            }
            match &c.cost {
                CavCost::SpeedTracking {
                    z_ref,
                    z_ref_steady,
                } => {
                    for i in 0..=k {
                        qb.add_square(&[(l.z(i), 1.0)], -z_ref[i], w.q1);
                    }
                    qb.add_square(&[(l.z(k), 1.0)], -z_ref_steady, w.riccati_p);
                }
                CavCost::TravelTime => qb.add_linear(l.t(k), w.q2),
            }
        }

        let ws = self.slack_weight();
        let ws1 = self.slack_weight_l1();
        let mut slack = Vec::with_capacity(self.rows.len());
        for (ri, row) in self.rows.iter().enumerate() {
            let s = n_cav + ri;
            slack.push(s);
            lower[s] = -self.t_des;
            upper[s] = 0.0;
            qb.add_square(&[(s, 1.0)], 0.0, ws);
            // slack is nonpositive, so |s| = −s
            if ws1 > 0.0 {
                qb.add_linear(s, -ws1);
            }
            let mut coefs = vec![(s, 1.0)];
            let mut rhs = -self.t_des;
            for (tr, sign) in [(row.leader, 1.0), (row.follower, -1.0)] {
                match tr {
                    TimeRef::Cav { cav, p } => {
                        for (i, a) in time_at(&self.cavs[cav].grid, &lays[cav], p) {
                            coefs.push((i, sign * a));
                        }
                    }
                    TimeRef::Fixed(t) => rhs -= sign * t,
                }
            }
            ineq.push(Row {
                coefs,
                rhs,
                kind: RowKind::Collision { row: ri },
            });
        }

        let (hess, lin, constant) = qb.finish();
        SpatialQp {
            n,
            cavs: lays,
            slack,
            hess,
            lin,
            constant,
            eq,
            ineq,
            lower,
            upper,
        }
    }
}
