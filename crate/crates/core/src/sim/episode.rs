//! The receding-horizon loop closed against the simulated vehicles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cav::apply_and_advance;
use super::hdv::{offset_profile, HdvPlant, HdvState, LeaderInfo, OffsetRealization, RealizedPath};
use super::log::{
    EnvelopeCheck, EpisodeLog, IterationStats, StcComparison, TraceSample, VehicleLog,
};
use crate::conflict::{
    aligned_grid, collision_locations, critical_zones, pair_filter, CollisionLocationSet, Corridor,
    RouteInfo, VehicleId, VehicleKind,
};
use crate::error::{Error, Result};
use crate::geometry::PathSpec;
use crate::ocp::{
    interior_speed_caps, max_speed, point_speed_cap, CavCost, CavLimits, CavOcp, CollisionRow,
    CostKind, CostWeights, OcpProblem, SampleGrid, SpeedRow, TimeRef,
};
use crate::scenario::Scenario;
use crate::solver::{
    initial_linearization, kinematic_lethargy, restoration_linearization, scp_solve, CavTrajectory,
    ScpMode, SolveSettings,
};
use crate::uncertainty::{
    travel_time_envelope, update_from_observation, HdvUncertainty, TravelTimeEnvelope,
};
use crate::units::kmh;

/// Fraction of the braking limit used by linearization profiles (acceleration uses the full limit).
const PROFILE_FRACTION: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeOptions {
    /// Seed for random offset realizations; defaults to the scenario seed.
    pub seed: Option<u64>,
    /// Offset realization override for every HDV.
    pub realization: Option<OffsetRealization>,
    /// Also solve every iteration to convergence and record the deviation.
    pub compare_stc: bool,
    /// Fixed number of samples in each CAV's first horizon (the step is derived from it).
    pub horizon_samples: Option<usize>,
    /// Stop after this many MPC iterations.
    pub max_iterations: Option<usize>,
    pub mode: Option<ScpMode>,
    pub cost: Option<CostKind>,
    pub dynamic_sampling: Option<bool>,
}

struct CavRt<'a> {
    id: VehicleId,
    path: &'a PathSpec,
    p: f64,
    z: f64,
    u_prev: f64,
    v_ref: f64,
    dp: Option<f64>,
    prev: Option<CavTrajectory>,
    done: bool,
    log: VehicleLog,
}

struct HdvRt<'a> {
    id: VehicleId,
    path: &'a PathSpec,
    plant: HdvPlant,
    state: HdvState,
    unc: HdvUncertainty,
    p: f64,
    /// Observed (projection, offset) history.
    seen: Vec<(f64, f64)>,
    log: VehicleLog,
}

impl HdvRt<'_> {
    fn pose(&self) -> (f64, f64, f64) {
        let xi = self.plant.realized.xi_at(self.p.min(self.path.length));
        let (x, y) = self.path.offset_point(self.p, xi);
        (x, y, self.path.heading(self.p))
    }

    fn push_sample(&mut self, t: f64) {
        let (x, y, _) = self.pose();
        self.log.samples.push(TraceSample {
            t,
            p: self.p,
            v: self.state.v,
            a: self.state.a,
            x,
            y,
        });
    }
}

/// Position of a vehicle along `path` (projection beyond the end continues on the exit line).
fn along(path: &PathSpec, pt: (f64, f64), hint: f64) -> Option<(f64, f64, f64)> {
    let (ex, ey, eh) = path.pose(path.length);
    let (dx, dy) = (pt.0 - ex, pt.1 - ey);
    let ahead = dx * eh.cos() + dy * eh.sin();
    if ahead > 0.0 {
        return Some((path.length + ahead, -dx * eh.sin() + dy * eh.cos(), eh));
    }
    let pr = path.project(pt, Some(hint)).ok()?;
    Some((pr.p_tilde, pr.offset, path.heading(pr.p_tilde)))
}

fn wrap(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

/// Nearest vehicle ahead in the same lane and direction.
fn find_leader(
    me: usize,
    hdvs: &[HdvRt],
    poses: &[(VehicleId, (f64, f64, f64), f64)],
    lane_width: f64,
    length: f64,
) -> Option<LeaderInfo> {
    let h = &hdvs[me];
    let mut best: Option<LeaderInfo> = None;
    for &(id, (x, y, psi), v) in poses {
        if id == h.id {
            continue;
        }
        let Some((p, off, tangent)) = along(h.path, (x, y), h.p + 10.0) else {
            continue;
        };
        let ahead = p - h.p;
        if ahead <= 0.0
            || ahead > 120.0
            || off.abs() > 0.5 * lane_width + 0.5
            || wrap(psi - tangent).abs() > 0.5
        {
            continue;
        }
        let gap = ahead - length;
        if best.map_or(true, |b| gap < b.gap) {
            best = Some(LeaderInfo { gap, speed: v });
        }
    }
    best
}

fn follower_start(p: f64, step: f64) -> f64 {
    // first grid point at or after p
    p + step * (1.0 - 1e-9)
}

/// Restricts a cached location set to cells whose follower position is still ahead.
fn restrict_follower(cls: &CollisionLocationSet, p0: f64) -> CollisionLocationSet {
    CollisionLocationSet {
        pair: cls.pair,
        grid_leader: cls.grid_leader.clone(),
        grid_follower: cls.grid_follower.clone(),
        cells: cls
            .cells
            .iter()
            .copied()
            .filter(|&(_, j)| cls.grid_follower[j] >= p0 - 1e-9)
            .collect(),
    }
}

/// Corridor of an HDV as a leader: observed offsets behind, envelope ahead.
fn hdv_leader_corridor<'a>(
    h: &'a HdvRt,
    start: f64,
    step: f64,
    fp: crate::geometry::VehicleFootprint,
) -> Corridor<'a> {
    let grid = aligned_grid(h.path, start, step);
    let kp: Vec<f64> = h.seen.iter().map(|s| s.0).collect();
    let kx: Vec<f64> = h.seen.iter().map(|s| s.1).collect();
    let (mut lo, mut hi) = (
        Vec::with_capacity(grid.len()),
        Vec::with_capacity(grid.len()),
    );
    for &p in &grid {
        if p < h.p {
            let x = crate::uncertainty::interp_grid(&kp, &kx, p);
            lo.push(x);
            hi.push(x);
        } else {
            let (a, b) = h.unc.offset_env.bounds_at(p);
            lo.push(a);
            hi.push(b);
        }
    }
    Corridor {
        path: h.path,
        grid,
        xi_lo: lo,
        xi_hi: hi,
        footprint: fp,
    }
}

fn hdv_follower_corridor<'a>(
    h: &'a HdvRt,
    step: f64,
    fp: crate::geometry::VehicleFootprint,
) -> Corridor<'a> {
    let grid = aligned_grid(h.path, follower_start(h.p, step), step);
    let (lo, hi) = grid.iter().map(|&p| h.unc.offset_env.bounds_at(p)).unzip();
    Corridor {
        path: h.path,
        grid,
        xi_lo: lo,
        xi_hi: hi,
        footprint: fp,
    }
}

enum Who {
    Cav(usize),
    Hdv(usize),
}

pub fn run_episode(sc: &Scenario) -> Result<EpisodeLog> {
    run_episode_with(sc, &EpisodeOptions::default())
}

pub fn run_episode_with(sc: &Scenario, opts: &EpisodeOptions) -> Result<EpisodeLog> {
    let f = &sc.file;
    let mut cfg = f.mpc.clone();
    if let Some(m) = opts.mode {
        cfg.solver.mode = m;
    }
    if let Some(c) = opts.cost {
        cfg.cost = c;
    }
    if let Some(d) = opts.dynamic_sampling {
        cfg.dynamic_sampling = d;
    }
    let seed = opts.seed.unwrap_or(f.seed);
    let step = f.intersection.sample_step;
    let fp = f.footprint;
    let lim = f.cav_limits;
    let mut notes = Vec::new();

    let mut cavs: Vec<CavRt> = Vec::new();
    let mut hdvs: Vec<HdvRt> = Vec::new();
    let mut who = Vec::new();
    for v in &f.vehicles {
        let path = sc.path_of(v);
        let v0 = kmh(v.v0_kmh);
        let log = VehicleLog {
            id: v.id,
            kind: v.kind,
            path_id: v.path.clone(),
            p_start: v.p0,
            samples: Vec::new(),
            segments: Vec::new(),
            finish_time: None,
            realized: None,
        };
        match v.kind {
            VehicleKind::Cav => {
                let z = 1.0 / v0;
                let dp = opts
                    .horizon_samples
                    .map(|n| ((path.length - v.p0) / n as f64).max(1e-3));
                who.push((v.id, Who::Cav(cavs.len())));
                cavs.push(CavRt {
                    id: v.id,
                    path,
                    p: v.p0,
                    z,
                    u_prev: -v.a0 * z * z * z,
                    v_ref: v.v_ref(),
                    dp,
                    prev: None,
                    done: false,
                    log,
                });
            }
            VehicleKind::Hdv => {
                let h = v.hdv.as_ref().expect("validated HDV");
                let params = sc.hdv_params(v).expect("validated HDV");
                let (unc, warn) = HdvUncertainty::new(path, params, v.p0, h.xi0, v0)?;
                if let Some(w) = warn {
                    notes.push(format!(
                        "vehicle {}: initial offset {} clamped to {}",
                        v.id, w.observed, w.clamped
                    ));
                }
                let kind = opts.realization.unwrap_or(h.realization);
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (v.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let knots = offset_profile(&unc.offset_env, kind, &mut rng);
                let realized = RealizedPath::new(path, &knots);
                let plant = HdvPlant {
                    realized: realized.clone(),
                    speed: h.speed.clone(),
                    v_free: h.v_free_kmh.map_or(v0, kmh),
                    a_c_hat: h.uncertainty.a_c_max_hat,
                    a_min: h.a_min,
                    a_max: h.a_max,
                };
                let mut log = log;
                log.realized = Some(realized);
                let xi = plant.realized.xi_at(v.p0);
                who.push((v.id, Who::Hdv(hdvs.len())));
                hdvs.push(HdvRt {
                    id: v.id,
                    path,
                    plant,
                    state: HdvState {
                        s: 0.0,
                        v: v0,
                        a: v.a0,
                    },
                    unc,
                    p: v.p0,
                    seen: vec![(v.p0, xi)],
                    log,
                });
            }
        }
    }
    let routes: Vec<RouteInfo> = f
        .vehicles
        .iter()
        .map(|v| RouteInfo {
            id: v.id,
            kind: v.kind,
            path_id: &v.path,
        })
        .collect();
    let pairs = pair_filter(&sc.order, &routes);
    let find = |id: VehicleId| {
        who.iter()
            .find(|w| w.0 == id)
            .map(|w| &w.1)
            .expect("known id")
    };

    // CAV–CAV collision sets never change; compute them once
    let mut cached: Vec<Option<CollisionLocationSet>> = Vec::with_capacity(pairs.len());
    for &(a, b) in &pairs {
        cached.push(match (find(a), find(b)) {
            (Who::Cav(i), Who::Cav(j)) => {
                let (ci, cj) = (&cavs[*i], &cavs[*j]);
                let lc = Corridor::cav(ci.path, ci.p, step, fp);
                let fc = Corridor::cav(cj.path, follower_start(cj.p, step), step, fp);
                Some(collision_locations((a, b), &lc, &fc))
            }
            _ => None,
        });
    }

    for c in &mut cavs {
        let (x, y) = c.path.offset_point(c.p, 0.0);
        c.log.samples.push(TraceSample {
            t: 0.0,
            p: c.p,
            v: 1.0 / c.z,
            a: -c.u_prev / c.z.powi(3),
            x,
            y,
        });
    }
    for h in &mut hdvs {
        h.push_sample(0.0);
    }

    let mut iterations = Vec::new();
    let mut checks = Vec::new();
    let mut t_now = 0.0;
    let mut iter = 0usize;
    let max_iters = opts.max_iterations.unwrap_or(usize::MAX);
    while cavs.iter().any(|c| !c.done) && t_now < cfg.max_time - 1e-9 && iter < max_iters {
        // observe HDVs and re-anchor their uncertainty
        let mut envs: Vec<TravelTimeEnvelope> = Vec::with_capacity(hdvs.len());
        for h in &mut hdvs {
            if iter > 0 && h.p < h.path.length {
                let (x, y, _) = h.pose();
                let (unc, warn) =
                    update_from_observation(&h.unc, (x, y), h.state.v, h.path, Some(h.p))?;
                if let Some(w) = warn {
                    notes.push(format!(
                        "t={t_now:.2}: vehicle {} offset {} clamped to {}",
                        h.id, w.observed, w.clamped
                    ));
                }
                h.unc = unc;
                h.seen.push((h.unc.p0, h.unc.offset_env.xi_init));
            }
            envs.push(travel_time_envelope(h.path, &h.unc, h.state.v));
        }

        let active: Vec<usize> = (0..cavs.len()).filter(|&i| !cavs[i].done).collect();
        let slot = |ci: usize| active.iter().position(|&a| a == ci);

        // constraint rows
        let mut rows = Vec::new();
        let mut dropped = 0usize;
        let mut row_checks = Vec::new();
        for (pi, &(a, b)) in pairs.iter().enumerate() {
            let (la, fb) = (find(a), find(b));
            if let Who::Cav(j) = fb {
                if cavs[*j].done {
                    continue;
                }
            }
            let cls = match (&cached[pi], la, fb) {
                (Some(c), _, Who::Cav(j)) => restrict_follower(c, cavs[*j].p),
                (_, Who::Cav(i), Who::Hdv(j)) => {
                    let ci = &cavs[*i];
                    let lc = Corridor::cav(ci.path, ci.log.p_start, step, fp);
                    collision_locations((a, b), &lc, &hdv_follower_corridor(&hdvs[*j], step, fp))
                }
                (_, Who::Hdv(i), Who::Cav(j)) => {
                    let cj = &cavs[*j];
                    let lc = hdv_leader_corridor(&hdvs[*i], hdvs[*i].log.p_start, step, fp);
                    collision_locations(
                        (a, b),
                        &lc,
                        &Corridor::cav(cj.path, follower_start(cj.p, step), step, fp),
                    )
                }
                _ => continue,
            };
            for z in critical_zones(&cls) {
                let leader = match la {
                    Who::Cav(i) => {
                        let c = &cavs[*i];
                        if !c.done && z.p_out >= c.p - 1e-9 {
                            TimeRef::Cav {
                                cav: slot(*i).unwrap(),
                                p: z.p_out.max(c.p),
                            }
                        } else {
                            TimeRef::Fixed(c.log.time_at(z.p_out).unwrap_or(0.0) - t_now)
                        }
                    }
                    Who::Hdv(i) => {
                        let h = &hdvs[*i];
                        if z.p_out >= h.p {
                            let t = envs[*i].t_max_at(z.p_out);
                            row_checks.push(EnvelopeCheck {
                                time: t_now,
                                hdv: h.id,
                                p: z.p_out,
                                bound: t_now + t,
                                upper: true,
                            });
                            TimeRef::Fixed(t)
                        } else {
                            TimeRef::Fixed(h.log.time_at(z.p_out).unwrap_or(0.0) - t_now)
                        }
                    }
                };
                let follower = match fb {
                    Who::Cav(j) => TimeRef::Cav {
                        cav: slot(*j).unwrap(),
                        p: z.p_in.max(cavs[*j].p),
                    },
                    Who::Hdv(j) => {
                        let t = envs[*j].t_min_at(z.p_in);
                        row_checks.push(EnvelopeCheck {
                            time: t_now,
                            hdv: hdvs[*j].id,
                            p: z.p_in,
                            bound: t_now + t,
                            upper: false,
                        });
                        TimeRef::Fixed(t)
                    }
                };
                match (leader, follower) {
                    (TimeRef::Fixed(tl), TimeRef::Fixed(tf)) => {
                        dropped += 1;
                        if tf - tl < cfg.t_des - 1e-9 {
                            notes.push(format!("t={t_now:.2}: pair ({a},{b}) zone ({:.1},{:.1}) has no controllable vehicle", z.p_out, z.p_in));
                        }
                        continue;
                    }
                    (TimeRef::Fixed(tl), _) if tl + cfg.t_des <= 0.0 => {
                        dropped += 1;
                        continue;
                    }
                    _ => {}
                }
                let kind = |w: &Who| {
                    if matches!(w, Who::Cav(_)) {
                        VehicleKind::Cav
                    } else {
                        VehicleKind::Hdv
                    }
                };
                rows.push(CollisionRow {
                    zone: z,
                    leader_kind: kind(la),
                    follower_kind: kind(fb),
                    leader,
                    follower,
                });
            }
        }
        checks.extend(row_checks);

        // per-CAV optimal control problems
        let mut ocps = Vec::with_capacity(active.len());
        let mut z_lin = Vec::with_capacity(active.len());
        for &ci in &active {
            let c = &cavs[ci];
            let z_mean_prev = c
                .prev
                .as_ref()
                .map(|t| t.z.iter().sum::<f64>() / t.z.len() as f64)
                .unwrap_or(1.0 / c.v_ref);
            let dp = match c.dp {
                Some(d) => d,
                None if cfg.dynamic_sampling => cfg.dp.max(0.2 / z_mean_prev),
                None => cfg.dp,
            };
            let grid = SampleGrid::new(c.p, c.path.length, dp);
            let ps = grid.samples();
            let z_min: Vec<f64> = ps
                .iter()
                .map(|&p| 1.0 / point_speed_cap(&lim, c.path, p))
                .collect();
            let speed_rows: Vec<SpeedRow> = (0..grid.k)
                .flat_map(|k| {
                    interior_speed_caps(&lim, c.path, ps[k], ps[k + 1])
                        .into_iter()
                        .map(move |(s, v)| SpeedRow {
                            k,
                            s,
                            z_min: 1.0 / v,
                        })
                })
                .collect();
            let v_ref_k: Vec<f64> = z_min.iter().map(|zm| c.v_ref.min(1.0 / zm)).collect();
            let zl = match c.prev.as_ref().filter(|_| cfg.solver.warm_start) {
                Some(t) => ps
                    .iter()
                    .map(|&p| t.lethargy_at(p.min(t.grid.end())))
                    .collect::<Vec<f64>>(),
                None => {
                    let vmax: Vec<f64> = ps.iter().map(|&p| max_speed(&lim, c.path, p)).collect();
                    let z = initial_linearization(cfg.cost, &v_ref_k, &vmax);
                    let target: Vec<f64> = z
                        .iter()
                        .zip(&z_min)
                        .map(|(z, zm)| 1.0 / z.max(*zm))
                        .collect();
                    kinematic_lethargy(
                        &target,
                        1.0 / c.z,
                        grid.dp,
                        lim.a_max,
                        PROFILE_FRACTION * -lim.a_min,
                    )
                }
            };
            let z_mean = zl.iter().sum::<f64>() / zl.len() as f64;
            let cost = match cfg.cost {
                CostKind::SpeedTracking => CavCost::SpeedTracking {
                    z_ref: v_ref_k.iter().map(|v| 1.0 / v).collect(),
                    z_ref_steady: 1.0 / c.v_ref,
                },
                CostKind::TravelTime => CavCost::TravelTime,
            };
            ocps.push(CavOcp {
                id: c.id,
                grid,
                z0: c.z,
                u_prev: c.u_prev,
                z_min,
                speed_rows,
                z_max: 1.0 / lim.v_floor,
                limits: lim,
                cost,
                weights: CostWeights::new(&cfg.weights, z_mean, dp),
            });
            z_lin.push(zl);
        }
        let problem = OcpProblem {
            cavs: ocps,
            rows,
            t_des: cfg.t_des,
            q_s: cfg.weights.q_s,
            q_s_l1: cfg.weights.q_s_l1,
            end_point_bounds: cfg.end_point_bounds,
        };
        let settings = if iter == 0 && cfg.solver.converge_first {
            SolveSettings {
                mode: ScpMode::Stc,
                ..cfg.solver
            }
        } else {
            cfg.solver
        };
        let mut first = scp_solve(&problem, z_lin.clone(), &settings);
        if matches!(first, Err(Error::Infeasible { .. })) {
            let rank: Vec<usize> = problem
                .cavs
                .iter()
                .map(|c| sc.order.rank(c.id).unwrap_or(usize::MAX))
                .collect();
            if restore_linearization(&problem, &mut z_lin, &rank, &lim, lim.v_floor) {
                notes.push(format!(
                    "t={t_now:.2}: infeasible linearization, retried about braking profiles"
                ));
                first = scp_solve(&problem, z_lin.clone(), &settings);
            }
        }
        let res = first.map_err(|e| match e {
            Error::Infeasible { status, row, dump } => Error::Infeasible {
                status: format!("{status} at t={t_now:.2}"),
                row: describe_row(&problem, &row),
                dump,
            },
            e => e,
        })?;
        let stc = if opts.compare_stc {
            let s = SolveSettings {
                mode: ScpMode::Stc,
                ..cfg.solver
            };
            let r = scp_solve(&problem, z_lin, &s)?;
            let dev = (res.objective - r.objective).abs() / r.objective.abs().max(1e-12);
            Some(StcComparison {
                objective: r.objective,
                time: r.qp_solve_time,
                iterations: r.scp_iterations,
                deviation: dev,
            })
        } else {
            None
        };

        // slack on rows that would hold without it
        let mut inactive_slack: f64 = 0.0;
        for (ri, row) in problem.rows.iter().enumerate() {
            let val = |r: TimeRef| match r {
                TimeRef::Cav { cav, p } => res.trajectories[cav].time_at(p),
                TimeRef::Fixed(t) => t,
            };
            if val(row.leader) - val(row.follower) + cfg.t_des < -1e-6 {
                inactive_slack = inactive_slack.max(res.slack[ri].abs());
            }
        }

        // apply the plans
        let mut steps = Vec::with_capacity(active.len());
        for (slot_i, &ci) in active.iter().enumerate() {
            let traj = &res.trajectories[slot_i];
            let c = &mut cavs[ci];
            let adv = apply_and_advance(traj, cfg.dt, t_now);
            steps.push((c.id, adv.n));
            for seg in &adv.segments {
                let (x, y) = c.path.offset_point(seg.p0, 0.0);
                if seg.t0 > c.log.samples.last().map_or(f64::NEG_INFINITY, |s| s.t) {
                    c.log.samples.push(TraceSample {
                        t: seg.t0,
                        p: seg.p0,
                        v: 1.0 / seg.z0,
                        a: -seg.u / seg.z0.powi(3),
                        x,
                        y,
                    });
                }
            }
            c.log.segments.extend(adv.segments.iter().copied());
            c.p = adv.p;
            c.z = adv.z;
            c.u_prev = adv.u_last;
            if adv.finished {
                c.done = true;
                let last = adv.segments.last().unwrap();
                let (x, y) = c.path.offset_point(last.p1, 0.0);
                c.log.samples.push(TraceSample {
                    t: last.t1(),
                    p: last.p1,
                    v: 1.0 / adv.z,
                    a: 0.0,
                    x,
                    y,
                });
                c.log.finish_time = c.log.time_at(c.path.length);
            }
            c.prev = Some(traj.clone());
        }

        iterations.push(IterationStats {
            iter,
            time: t_now,
            active_cavs: active.len(),
            vars: problem
                .cavs
                .iter()
                .map(|c| (c.id, 3 * c.grid.k + 2))
                .collect(),
            steps,
            rows: problem.rows.len(),
            dropped_rows: dropped,
            scp_iterations: res.scp_iterations,
            qp_time: res.qp_solve_time,
            objective: res.objective,
            max_slack: res.max_slack(),
            inactive_slack,
            kkt: res.history.iter().map(|h| h.kkt.max()).fold(0.0, f64::max),
            status: res.status,
            stc,
        });

        step_hdvs(sc, &mut hdvs, &cavs, t_now, cfg.dt);
        t_now += cfg.dt;
        iter += 1;
    }
    let completed = cavs.iter().all(|c| c.done);
    if opts.max_iterations.is_none() {
        // let HDVs clear the area so every gap can be measured
        while hdvs.iter().any(|h| h.p < h.path.length) && t_now < cfg.max_time + 30.0 {
            step_hdvs(sc, &mut hdvs, &cavs, t_now, cfg.dt);
            t_now += cfg.dt;
        }
    }

    let mut vehicles: Vec<VehicleLog> = Vec::with_capacity(f.vehicles.len());
    for v in &f.vehicles {
        let log = match find(v.id) {
            Who::Cav(i) => cavs[*i].log.clone(),
            Who::Hdv(i) => hdvs[*i].log.clone(),
        };
        vehicles.push(log);
    }
    Ok(EpisodeLog {
        scenario: f.name.clone(),
        dt: cfg.dt,
        t_des: cfg.t_des,
        vehicles,
        iterations,
        envelope_checks: checks,
        notes,
        completed,
    })
}

fn step_hdvs(sc: &Scenario, hdvs: &mut [HdvRt], cavs: &[CavRt], t_now: f64, dt: f64) {
    let mut poses: Vec<(VehicleId, (f64, f64, f64), f64)> =
        Vec::with_capacity(cavs.len() + hdvs.len());
    for c in cavs {
        let (p, v, _) = c.log.state_at(t_now);
        let (x, y, psi) = c.path.pose(p);
        poses.push((c.id, (x, y, psi), v));
    }
    for h in hdvs.iter() {
        poses.push((h.id, h.pose(), h.state.v));
    }
    let length = sc.file.footprint.length;
    let leaders: Vec<Option<LeaderInfo>> = (0..hdvs.len())
        .map(|i| find_leader(i, hdvs, &poses, sc.file.intersection.lane_width, length))
        .collect();
    for (h, lead) in hdvs.iter_mut().zip(leaders) {
        let (st, trace) = h.plant.step(h.path, h.state, lead, t_now, dt);
        for (t, s) in trace {
            h.state = s;
            h.p = h.plant.realized.p_of_s(s.s);
            h.push_sample(t);
        }
        h.state = st;
    }
}

/// Appends the vehicle pair and zone to a `Collision { row: i }` description.
fn describe_row(problem: &OcpProblem, row: &str) -> String {
    let idx = row
        .strip_prefix("Collision { row: ")
        .and_then(|r| r.strip_suffix(" }"))
        .and_then(|r| r.parse::<usize>().ok());
    let Some(r) = idx.and_then(|i| problem.rows.get(i)) else {
        return row.to_string();
    };
    let side = |t: &TimeRef| match *t {
        TimeRef::Cav { cav, p } => format!("CAV {} at p={p:.1}", problem.cavs[cav].id),
        TimeRef::Fixed(t) => format!("fixed {t:.2} s"),
    };
    format!(
        "{row}: {} {:?} -> {} {:?}, leader {}, follower {}",
        r.zone.pair.0,
        r.leader_kind,
        r.zone.pair.1,
        r.follower_kind,
        side(&r.leader),
        side(&r.follower)
    )
}

/// Travel time along a lethargy profile sampled on `grid`, with each interval's
/// lethargy varying linearly.
fn profile_time(grid: &SampleGrid, z: &[f64], p: f64) -> f64 {
    let rel = (p - grid.p0).max(0.0);
    let k = ((rel / grid.dp).floor() as usize).min(grid.k - 1);
    let mut t: f64 = (0..k).map(|i| 0.5 * grid.dp * (z[i] + z[i + 1])).sum();
    let s = (rel - k as f64 * grid.dp).min(grid.dp);
    let u = (z[k + 1] - z[k]) / grid.dp;
    t += s * z[k] + 0.5 * s * s * u;
    t
}

/// Re-linearizes, in crossing order, every CAV that cannot meet its rows at the current
/// linearization, about a brake-then-hold profile that does. Returns whether anything changed.
fn restore_linearization(
    problem: &OcpProblem,
    z_lin: &mut [Vec<f64>],
    rank: &[usize],
    lim: &CavLimits,
    v_floor: f64,
) -> bool {
    let (acc, dec) = (lim.a_max, PROFILE_FRACTION * -lim.a_min);
    let mut idx: Vec<usize> = (0..problem.cavs.len()).collect();
    idx.sort_by_key(|&i| rank[i]);
    let mut changed = false;
    for ci in idx {
        let ocp = &problem.cavs[ci];
        let reqs: Vec<(f64, f64)> = problem
            .rows
            .iter()
            .filter_map(|r| {
                let TimeRef::Cav { cav, p } = r.follower else {
                    return None;
                };
                if cav != ci {
                    return None;
                }
                let tl = match r.leader {
                    TimeRef::Fixed(t) => t,
                    TimeRef::Cav { cav: l, p: pl } => {
                        profile_time(&problem.cavs[l].grid, &z_lin[l], pl)
                    }
                };
                Some((p - ocp.grid.p0, tl + problem.t_des))
            })
            .collect();
        let dist: Vec<f64> = ocp.grid.samples().iter().map(|p| p - ocp.grid.p0).collect();
        let current = reqs
            .iter()
            .all(|&(s, t)| profile_time(&ocp.grid, &z_lin[ci], ocp.grid.p0 + s) >= t);
        if current {
            continue;
        }
        if let Some(z) = restoration_linearization(&dist, ocp.z0, &reqs, dec, v_floor) {
            let target: Vec<f64> = z
                .iter()
                .zip(&ocp.z_min)
                .map(|(z, zm)| 1.0 / z.max(*zm).min(ocp.z_max))
                .collect();
            z_lin[ci] = kinematic_lethargy(&target, 1.0 / ocp.z0, ocp.grid.dp, acc, dec);
            changed = true;
        }
    }
    changed
}
