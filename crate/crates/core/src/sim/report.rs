//! Post-episode analysis: realized time gaps, collision scan and invariant checks.

use serde::{Deserialize, Serialize};

use super::log::{EpisodeLog, VehicleLog};
use crate::conflict::{
    collision_locations, critical_zones, pair_filter, Corridor, RouteInfo, VehicleId, VehicleKind,
};
use crate::geometry::{footprint_obb, obb_overlap, PathSpec};
use crate::ocp::{point_speed_cap, CavLimits};
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub leader: VehicleId,
    pub follower: VehicleId,
    pub leader_kind: VehicleKind,
    pub follower_kind: VehicleKind,
    /// The two paths share an approach lane or an exit lane.
    pub overlapping: bool,
    pub min_gap: f64,
    pub p_out: f64,
    pub p_in: f64,
    /// (follower entry time, gap) for every realized zone.
    pub series: Vec<(f64, f64)>,
}

impl PairGap {
    pub fn is_cav_cav(&self) -> bool {
        self.leader_kind == VehicleKind::Cav && self.follower_kind == VehicleKind::Cav
    }

    pub fn involves_hdv(&self) -> bool {
        self.leader_kind == VehicleKind::Hdv || self.follower_kind == VehicleKind::Hdv
    }
}

fn corridor_of<'a>(
    path: &'a PathSpec,
    log: &VehicleLog,
    step: f64,
    fp: crate::geometry::VehicleFootprint,
) -> Corridor<'a> {
    Corridor::with_offsets(path, log.p_start, step, fp, |p| log.offset_at(p))
}

fn paths_overlap(a: &PathSpec, b: &PathSpec, tol: f64) -> bool {
    let d = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).hypot(p.1 - q.1);
    d(a.start_point(), b.start_point()) < tol || d(a.end_point(), b.end_point()) < tol
}

/// Minimum realized time gap per ordered pair, using zones built from the realized paths.
pub fn time_gap_report(sc: &Scenario, log: &EpisodeLog) -> Vec<PairGap> {
    let f = &sc.file;
    let routes: Vec<RouteInfo> = f
        .vehicles
        .iter()
        .map(|v| RouteInfo {
            id: v.id,
            kind: v.kind,
            path_id: &v.path,
        })
        .collect();
    let step = f.intersection.sample_step;
    let mut out = Vec::new();
    for (a, b) in pair_filter(&sc.order, &routes) {
        let (Some(la), Some(lb)) = (log.vehicle(a), log.vehicle(b)) else {
            continue;
        };
        let (pa, pb) = (
            sc.intersection.path(&la.path_id).unwrap(),
            sc.intersection.path(&lb.path_id).unwrap(),
        );
        let cls = collision_locations(
            (a, b),
            &corridor_of(pa, la, step, f.footprint),
            &corridor_of(pb, lb, step, f.footprint),
        );
        let zones = critical_zones(&cls);
        if zones.is_empty() {
            continue;
        }
        let mut best: Option<(f64, f64, f64)> = None;
        let mut series = Vec::new();
        for z in &zones {
            // undecided until the follower has entered; a leader still short of its
            // exit then gives an (extrapolated) negative gap
            if lb.p_end() < z.p_in {
                continue;
            }
            let (Some(t_out), Some(t_in)) = (
                la.time_at(z.p_out.max(la.p_start)),
                lb.time_at(z.p_in.max(lb.p_start)),
            ) else {
                continue;
            };
            let gap = t_in - t_out;
            series.push((t_in, gap));
            if best.map_or(true, |b| gap < b.0) {
                best = Some((gap, z.p_out, z.p_in));
            }
        }
        let Some((min_gap, p_out, p_in)) = best else {
            continue;
        };
        out.push(PairGap {
            leader: a,
            follower: b,
            leader_kind: la.kind,
            follower_kind: lb.kind,
            overlapping: paths_overlap(pa, pb, 0.5 * f.intersection.lane_width),
            min_gap,
            p_out,
            p_in,
            series,
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub t: f64,
    pub a: VehicleId,
    pub b: VehicleId,
}

/// Brute-force OBB check between every CAV and every other vehicle, every `dt` seconds,
/// while both are inside the control area.
pub fn collision_scan(
    sc: &Scenario,
    log: &EpisodeLog,
    dt: f64,
    with_margins: bool,
) -> Vec<Overlap> {
    let fp = if with_margins {
        sc.file.footprint
    } else {
        sc.file.footprint.physical()
    };
    let t_end = log
        .vehicles
        .iter()
        .map(|v| v.end_time())
        .fold(0.0, f64::max);
    let paths: Vec<&PathSpec> = log
        .vehicles
        .iter()
        .map(|v| sc.intersection.path(&v.path_id).unwrap())
        .collect();
    let n = (t_end / dt).floor() as usize;
    let mut out = Vec::new();
    for k in 0..=n {
        let t = k as f64 * dt;
        let boxes: Vec<Option<crate::geometry::Obb>> = log
            .vehicles
            .iter()
            .zip(&paths)
            .map(|(v, path)| {
                let (p, _, _) = v.state_at(t);
                (p <= path.length).then(|| footprint_obb(path, p, v.offset_at(p), &fp))
            })
            .collect();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if log.vehicles[i].kind != VehicleKind::Cav
                    && log.vehicles[j].kind != VehicleKind::Cav
                {
                    continue;
                }
                if let (Some(a), Some(b)) = (&boxes[i], &boxes[j]) {
                    if obb_overlap(a, b) {
                        out.push(Overlap {
                            t,
                            a: log.vehicles[i].id,
                            b: log.vehicles[j].id,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Largest violation of the CAV speed and acceleration limits over executed segments.
pub fn limit_violation(sc: &Scenario, log: &EpisodeLog, lim: &CavLimits) -> (f64, f64) {
    let (mut dv, mut da) = (0.0f64, 0.0f64);
    for v in log.cavs() {
        let path = sc.intersection.path(&v.path_id).unwrap();
        for s in &v.segments {
            let inner = path
                .breakpoints()
                .iter()
                .copied()
                .filter(|&b| b > s.p0 && b < s.p1);
            for p in (0..=4)
                .map(|m| s.p0 + (s.p1 - s.p0) * m as f64 / 4.0)
                .chain(inner)
            {
                let z = s.lethargy_at(p);
                dv = dv.max(1.0 / z - point_speed_cap(lim, path, p));
                let a = -s.u / (z * z * z);
                da = da.max(a - lim.a_max).max(lim.a_min - a);
            }
        }
    }
    (dv, da)
}

/// Largest violation of the exact control bounds by executed controls.
pub fn exact_bound_violation(log: &EpisodeLog, lim: &CavLimits) -> f64 {
    let mut worst = 0.0f64;
    for v in log.cavs() {
        for s in &v.segments {
            for z in [s.z0, s.lethargy_at(s.p1)] {
                let (lo, hi) = crate::ocp::exact_control_bounds(z, lim);
                worst = worst.max(lo - s.u).max(s.u - hi);
            }
        }
    }
    worst
}

/// Largest relative mismatch between the time-domain reconstruction of each
/// executed segment and the spatial plan (speed 1/z, acceleration −u/z³).
pub fn round_trip_error(log: &EpisodeLog) -> f64 {
    let mut worst = 0.0f64;
    for v in log.cavs() {
        for s in &v.segments {
            let dur = s.t1() - s.t0;
            for m in 0..=4 {
                let tau = dur * m as f64 / 4.0;
                let p = s.p_at_time(s.t0 + tau);
                let z = s.lethargy_at(p);
                // closed-form derivatives of p(τ) = 2τ / (z0 + sqrt(z0² + 2uτ))
                let w = (s.z0 * s.z0 + 2.0 * s.u * tau).sqrt();
                let v_rec = 1.0 / w;
                let a_rec = -s.u / (w * w * w);
                let a_plan = -s.u / (z * z * z);
                worst = worst.max(((v_rec - 1.0 / z) * z).abs());
                if a_plan != 0.0 {
                    worst = worst.max(((a_rec - a_plan) / a_plan).abs());
                }
            }
        }
    }
    worst
}

/// Largest amount by which a realized HDV arrival falls outside the envelope bound used.
pub fn envelope_violation(log: &EpisodeLog) -> f64 {
    let mut worst = 0.0f64;
    for c in &log.envelope_checks {
        let Some(v) = log.vehicle(c.hdv) else {
            continue;
        };
        let Some(t) = v.time_at(c.p) else {
            if c.upper {
                worst = f64::INFINITY;
            }
            continue;
        };
        let d = if c.upper { t - c.bound } else { c.bound - t };
        worst = worst.max(d);
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub completed: bool,
    pub iterations: usize,
    pub min_gap_cav_cav: Option<f64>,
    pub min_gap_cav_hdv: Option<f64>,
    /// Smallest gap over pairs on overlapping paths.
    pub min_gap_following: Option<f64>,
    pub total_travel_time: Option<f64>,
    pub max_slack: f64,
    pub max_inactive_slack: f64,
    /// Wall-clock QP times; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub qp_time_mean: f64,
    #[serde(skip)]
    pub qp_time_max: f64,
    pub overlaps: usize,
    pub speed_violation: f64,
    pub accel_violation: f64,
    pub exact_bound_violation: f64,
    pub envelope_violation: f64,
    pub round_trip_error: f64,
    pub stc_deviation_max: Option<f64>,
    pub gaps: Vec<PairGap>,
}

impl EpisodeSummary {
    pub fn from_log(sc: &Scenario, log: &EpisodeLog) -> EpisodeSummary {
        let gaps = time_gap_report(sc, log);
        let min = |it: &mut dyn Iterator<Item = f64>| {
            it.fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.min(g))))
        };
        let lim = sc.file.cav_limits;
        let (dv, da) = limit_violation(sc, log, &lim);
        let qp: Vec<f64> = log.iterations.iter().map(|i| i.qp_time).collect();
        EpisodeSummary {
            scenario: log.scenario.clone(),
            completed: log.completed,
            iterations: log.iterations.len(),
            min_gap_cav_cav: min(&mut gaps.iter().filter(|g| g.is_cav_cav()).map(|g| g.min_gap)),
            min_gap_cav_hdv: min(&mut gaps.iter().filter(|g| g.involves_hdv()).map(|g| g.min_gap)),
            min_gap_following: min(&mut gaps.iter().filter(|g| g.overlapping).map(|g| g.min_gap)),
            total_travel_time: log.total_travel_time(),
            max_slack: log.max_slack(),
            max_inactive_slack: log
                .iterations
                .iter()
                .fold(0.0, |m, i| m.max(i.inactive_slack)),
            qp_time_mean: if qp.is_empty() {
                0.0
            } else {
                qp.iter().sum::<f64>() / qp.len() as f64
            },
            qp_time_max: qp.iter().copied().fold(0.0, f64::max),
            overlaps: collision_scan(sc, log, 0.05, true).len(),
            speed_violation: dv.max(0.0),
            accel_violation: da.max(0.0),
            exact_bound_violation: exact_bound_violation(log, &lim).max(0.0),
            envelope_violation: envelope_violation(log).max(0.0),
            round_trip_error: round_trip_error(log),
            stc_deviation_max: log
                .iterations
                .iter()
                .filter_map(|i| i.stc.map(|s| s.deviation))
                .reduce(f64::max),
            gaps,
        }
    }

    /// Safety invariants: completion, no overlaps, limits respected, and the
    /// gap requirement (t_des minus grid tolerance when slack stayed inactive, positive otherwise).
    pub fn safety_ok(&self, t_des: f64) -> bool {
        self.completed && self.invariants_ok(t_des)
    }

    /// The safety invariants without requiring the episode to have finished.
    pub fn invariants_ok(&self, t_des: f64) -> bool {
        let slack_active = self.max_slack > 1e-6;
        let gap_floor = if slack_active { 0.0 } else { t_des - 0.05 };
        let gaps_ok = self.gaps.iter().all(|g| {
            if g.is_cav_cav() {
                g.min_gap >= gap_floor
            } else {
                g.min_gap > 0.0
            }
        });
        self.overlaps == 0
            && gaps_ok
            && self.speed_violation <= 1e-6
            && self.accel_violation <= 1e-6
            && self.exact_bound_violation <= 1e-8
    }
}
