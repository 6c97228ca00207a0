//! WebAssembly bindings for the browser demo. Every call takes the scenario as TOML text
//! and returns JSON, so the page can edit scenarios without a round trip through files.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use spatial_mpc::conflict::{collision_locations, coverage_check, critical_zones, Corridor};
use spatial_mpc::ocp::CostKind;
use spatial_mpc::scenario::{Scenario, SCENARIO_1, SCENARIO_2};
use spatial_mpc::sim::{run_episode_with, EpisodeOptions, EpisodeSummary, OffsetRealization};

#[derive(Serialize)]
struct PathLine {
    id: String,
    points: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct Geometry {
    lane_width: f64,
    central_half_width: f64,
    control_radius: f64,
    paths: Vec<PathLine>,
}

#[derive(Serialize)]
struct Vehicle {
    id: u32,
    cav: bool,
    path: String,
    finish_time: Option<f64>,
}

#[derive(Serialize)]
struct Gap {
    leader: u32,
    follower: u32,
    min_gap: f64,
}

#[derive(Serialize)]
struct Simulation {
    dt: f64,
    length: f64,
    width: f64,
    vehicles: Vec<Vehicle>,
    /// Per frame, `[x, y, heading]` per vehicle, or null once it left the area.
    frames: Vec<Vec<Option<[f64; 3]>>>,
    /// Speed per frame and vehicle (m/s).
    speeds: Vec<Vec<f64>>,
    gaps: Vec<Gap>,
    iterations: usize,
    total_travel_time: Option<f64>,
    max_slack: f64,
    safe: bool,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct Zone {
    p_out: f64,
    p_in: f64,
    out_xy: [f64; 2],
    in_xy: [f64; 2],
}

#[derive(Serialize)]
struct Zones {
    cells: usize,
    covered: bool,
    /// Colliding positions on the leader and follower paths.
    leader_band: Vec<[f64; 2]>,
    follower_band: Vec<[f64; 2]>,
    zones: Vec<Zone>,
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn scenario(text: &str) -> Result<Scenario, String> {
    Scenario::parse(text).map_err(|e| e.to_string())
}

/// TOML text of a bundled scenario.
pub fn bundled_text(name: &str) -> Result<String, String> {
    match name {
        "scenario1" => Ok(SCENARIO_1.into()),
        "scenario2" => Ok(SCENARIO_2.into()),
        _ => Err(format!("unknown scenario '{name}'")),
    }
}

pub fn geometry_json(text: &str) -> Result<String, String> {
    let sc = scenario(text)?;
    let i = &sc.file.intersection;
    let paths = sc
        .intersection
        .paths
        .iter()
        .map(|p| PathLine {
            id: p.path_id.clone(),
            points: p.samples.iter().map(|s| [s.x, s.y]).collect(),
        })
        .collect();
    json(&Geometry {
        lane_width: i.lane_width,
        central_half_width: i.central_half_width,
        control_radius: i.control_radius,
        paths,
    })
}

/// Runs one closed-loop episode and samples it every `frame_dt` seconds.
pub fn simulate_json(text: &str, cost: &str, realization: &str, frame_dt: f64) -> Result<String, String> {
    let sc = scenario(text)?;
    let cost = match cost {
        "speed" => Some(CostKind::SpeedTracking),
        "time" => Some(CostKind::TravelTime),
        _ => None,
    };
    let realization = match realization {
        "ccw" => Some(OffsetRealization::CcwBoundary),
        "cw" => Some(OffsetRealization::CwBoundary),
        "random" => Some(OffsetRealization::Random),
        "reference" => Some(OffsetRealization::Reference),
        _ => None,
    };
    let opts = EpisodeOptions {
        cost,
        realization,
        ..Default::default()
    };
    let log = run_episode_with(&sc, &opts).map_err(|e| e.to_string())?;
    let s = EpisodeSummary::from_log(&sc, &log);
    let paths: Vec<_> = log
        .vehicles
        .iter()
        .map(|v| sc.intersection.path(&v.path_id).unwrap())
        .collect();
    let t_end = log.vehicles.iter().map(|v| v.end_time()).fold(0.0, f64::max);
    let frame_dt = frame_dt.max(0.02);
    let n = (t_end / frame_dt).ceil() as usize;
    let mut frames = Vec::with_capacity(n + 1);
    let mut speeds = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * frame_dt;
        let mut f = Vec::with_capacity(paths.len());
        let mut sp = Vec::with_capacity(paths.len());
        for (v, path) in log.vehicles.iter().zip(&paths) {
            let (p, speed, _) = v.state_at(t);
            f.push((p <= path.length).then(|| {
                let (x, y, h) = v.pose_at(path, t);
                [x, y, h]
            }));
            sp.push(speed);
        }
        frames.push(f);
        speeds.push(sp);
    }
    let fp = sc.file.footprint;
    json(&Simulation {
        dt: frame_dt,
        length: fp.length,
        width: fp.width,
        vehicles: log
            .vehicles
            .iter()
            .map(|v| Vehicle {
                id: v.id,
                cav: v.kind == spatial_mpc::conflict::VehicleKind::Cav,
                path: v.path_id.clone(),
                finish_time: v.finish_time,
            })
            .collect(),
        frames,
        speeds,
        gaps: s
            .gaps
            .iter()
            .map(|g| Gap {
                leader: g.leader,
                follower: g.follower,
                min_gap: g.min_gap,
            })
            .collect(),
        iterations: s.iterations,
        total_travel_time: s.total_travel_time,
        max_slack: s.max_slack,
        safe: s.safety_ok(log.t_des),
        notes: log.notes.clone(),
    })
}

/// Collision locations and critical zones of two CAVs on the given paths.
pub fn zones_json(text: &str, leader: &str, follower: &str, leader_start: f64, follower_start: f64) -> Result<String, String> {
    let sc = scenario(text)?;
    let find = |id: &str| {
        sc.intersection
            .path(id)
            .ok_or_else(|| format!("unknown path '{id}'"))
    };
    let (pl, pf) = (find(leader)?, find(follower)?);
    let step = sc.file.intersection.sample_step;
    let fp = sc.file.footprint;
    let a = Corridor::cav(pl, leader_start, step, fp);
    let b = Corridor::cav(pf, follower_start, step, fp);
    let cls = collision_locations((1, 2), &a, &b);
    let zones = critical_zones(&cls);
    let point = |path: &spatial_mpc::geometry::PathSpec, p: f64| {
        let (x, y) = path.offset_point(p, 0.0);
        [x, y]
    };
    let mut lp: Vec<f64> = cls.cells.iter().map(|c| cls.cell_p(*c).0).collect();
    let mut fpp: Vec<f64> = cls.cells.iter().map(|c| cls.cell_p(*c).1).collect();
    for v in [&mut lp, &mut fpp] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    json(&Zones {
        cells: cls.cells.len(),
        covered: coverage_check(&cls, &zones),
        leader_band: lp.iter().map(|&p| point(pl, p)).collect(),
        follower_band: fpp.iter().map(|&p| point(pf, p)).collect(),
        zones: zones
            .iter()
            .map(|z| Zone {
                p_out: z.p_out,
                p_in: z.p_in,
                out_xy: point(pl, z.p_out),
                in_xy: point(pf, z.p_in),
            })
            .collect(),
    })
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bundledScenario)]
pub fn bundled_scenario(name: &str) -> Result<String, JsError> {
    js(bundled_text(name))
}

#[wasm_bindgen]
pub fn geometry(text: &str) -> Result<String, JsError> {
    js(geometry_json(text))
}

#[wasm_bindgen]
pub fn simulate(text: &str, cost: &str, realization: &str, frame_dt: f64) -> Result<String, JsError> {
    js(simulate_json(text, cost, realization, frame_dt))
}

#[wasm_bindgen(js_name = criticalZones)]
pub fn critical_zones_js(
    text: &str,
    leader: &str,
    follower: &str,
    leader_start: f64,
    follower_start: f64,
) -> Result<String, JsError> {
    js(zones_json(text, leader, follower, leader_start, follower_start))
}
