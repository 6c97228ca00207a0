//! Episode logs and the time functions reconstructed from them.

use serde::{Deserialize, Serialize};

use super::cav::ExecSegment;
use super::hdv::RealizedPath;
use crate::conflict::{VehicleId, VehicleKind};
use crate::geometry::PathSpec;
use crate::solver::SolveStatus;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub a: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleLog {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub path_id: String,
    pub p_start: f64,
    pub samples: Vec<TraceSample>,
    /// Executed constant-control intervals (CAVs only).
    pub segments: Vec<ExecSegment>,
    /// Time the CAV passed its final position.
    pub finish_time: Option<f64>,
    /// Realized offset path (HDVs only).
    pub realized: Option<RealizedPath>,
}

impl VehicleLog {
    /// Time at which the vehicle's projection reached `p`. Past the logged
    /// range the last speed is held; `None` before the start or if stopped.
    pub fn time_at(&self, p: f64) -> Option<f64> {
        if p < self.p_start - 1e-9 {
            return None;
        }
        if self.kind == VehicleKind::Cav && !self.segments.is_empty() {
            let i = self.segments.partition_point(|s| s.p1 < p);
            if i < self.segments.len() {
                return Some(self.segments[i].time_at(p.max(self.segments[i].p0)));
            }
            let last = self.segments.last().unwrap();
            let z = last.lethargy_at(last.p1);
            return Some(last.t1() + (p - last.p1) * z);
        }
        let s = &self.samples;
        let i = s.partition_point(|q| q.p < p);
        if i == 0 {
            return Some(s[0].t);
        }
        if i < s.len() {
            let (a, b) = (&s[i - 1], &s[i]);
            let f = if b.p > a.p {
                (p - a.p) / (b.p - a.p)
            } else {
                1.0
            };
            return Some(a.t + f * (b.t - a.t));
        }
        let last = s.last().unwrap();
        (last.v > 1e-3).then(|| last.t + (p - last.p) / last.v)
    }

    /// (projection, speed, acceleration) at absolute time `t`.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        if self.kind == VehicleKind::Cav && !self.segments.is_empty() {
            let i = self.segments.partition_point(|s| s.t1() < t);
            if i < self.segments.len() {
                let s = &self.segments[i];
                let p = s.p_at_time(t.max(s.t0));
                let z = s.lethargy_at(p);
                return (p, 1.0 / z, -s.u / (z * z * z));
            }
            let last = self.segments.last().unwrap();
            let z = last.lethargy_at(last.p1);
            return (last.p1 + (t - last.t1()) / z, 1.0 / z, 0.0);
        }
        let s = &self.samples;
        let i = s.partition_point(|q| q.t < t);
        if i == 0 {
            return (s[0].p, s[0].v, s[0].a);
        }
        if i < s.len() {
            let (a, b) = (&s[i - 1], &s[i]);
            let f = (t - a.t) / (b.t - a.t);
            return (a.p + f * (b.p - a.p), a.v + f * (b.v - a.v), b.a);
        }
        let last = s.last().unwrap();
        (last.p + (t - last.t) * last.v, last.v, 0.0)
    }

    pub fn offset_at(&self, p: f64) -> f64 {
        self.realized
            .as_ref()
            .map_or(0.0, |r| r.xi_at(p.min(r.length)))
    }

    /// Pose (x, y, heading) at time `t`.
    pub fn pose_at(&self, path: &PathSpec, t: f64) -> (f64, f64, f64) {
        let (p, _, _) = self.state_at(t);
        let (x, y) = path.offset_point(p, self.offset_at(p));
        (x, y, path.heading(p))
    }

    /// Furthest projection covered by the log.
    pub fn p_end(&self) -> f64 {
        let seg = self.segments.last().map_or(f64::NEG_INFINITY, |s| s.p1);
        self.samples.last().map_or(seg, |s| s.p.max(seg))
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iter: usize,
    pub time: f64,
    pub active_cavs: usize,
    /// QP variable count per active CAV.
    pub vars: Vec<(VehicleId, usize)>,
    /// Control intervals executed per active CAV.
    pub steps: Vec<(VehicleId, usize)>,
    pub rows: usize,
    pub dropped_rows: usize,
    pub scp_iterations: usize,
    pub qp_time: f64,
    pub objective: f64,
    pub max_slack: f64,
    /// Largest |slack| over rows that hold without it.
    pub inactive_slack: f64,
    pub kkt: f64,
    pub status: SolveStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stc: Option<StcComparison>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StcComparison {
    pub objective: f64,
    pub time: f64,
    pub iterations: usize,
    pub deviation: f64,
}

/// A travel-time bound used in a constraint, to be compared with the realized arrival.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub time: f64,
    pub hdv: VehicleId,
    pub p: f64,
    /// Absolute time bound.
    pub bound: f64,
    pub upper: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub scenario: String,
    pub dt: f64,
    pub t_des: f64,
    pub vehicles: Vec<VehicleLog>,
    pub iterations: Vec<IterationStats>,
    pub envelope_checks: Vec<EnvelopeCheck>,
    /// Notes on dropped or uncontrollable constraints and clamped observations.
    pub notes: Vec<String>,
    pub completed: bool,
}

impl EpisodeLog {
    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleLog> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn cavs(&self) -> impl Iterator<Item = &VehicleLog> {
        self.vehicles.iter().filter(|v| v.kind == VehicleKind::Cav)
    }

    pub fn max_slack(&self) -> f64 {
        self.iterations.iter().fold(0.0, |m, i| m.max(i.max_slack))
    }

    /// Sum over CAVs of the time needed to reach the end of the path.
    pub fn total_travel_time(&self) -> Option<f64> {
        self.cavs().map(|v| v.finish_time).sum()
    }
}
