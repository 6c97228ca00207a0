//! Worked examples with independently derived expected values.

mod common;

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatial_mpc::conflict::{
    collision_locations, coverage_check, critical_zones, non_redundant, Corridor, VehicleKind,
};
use spatial_mpc::geometry::{build_four_way_intersection, obb_overlap, obb_separation, Obb};
use spatial_mpc::ocp::{
    discrete_dynamics, exact_control_bounds, linearized_control_bounds, max_speed_profile,
    riccati_terminal_weight, weights_from_temporal, CavLimits, CollisionRow, CostKind, Row,
    RowKind, SampleGrid, SpatialQp, SpatialState, TimeRef,
};
use spatial_mpc::sim::{apply_and_advance, car_following_accel, control_steps, CarFollowing, LeaderInfo};
use spatial_mpc::solver::{initial_linearization, solve_qp, CavTrajectory, SolveSettings, SolveStatus};
use spatial_mpc::uncertainty::{
    build_offset_envelope, estimate_speed_envelope, travel_time_envelope, BoundProfile, HdvParams,
    HdvUncertainty, OmegaModel,
};
use spatial_mpc::units::{kmh, to_kmh};

fn four_way() -> spatial_mpc::geometry::IntersectionSpec {
    build_four_way_intersection(4.0, 15.0, 90.0, 1.0).unwrap()
}

#[test]
fn straight_paths_are_diameters() {
    let spec = four_way();
    for id in ["S-straight", "E-straight", "N-straight", "W-straight"] {
        let p = spec.path(id).unwrap();
        assert!((p.length - 180.0).abs() < 1e-9, "{id}: {}", p.length);
        assert!(p.samples.iter().all(|s| s.kappa == 0.0));
    }
    // every path: arc-length consistent samples starting and ending on the boundary circle
    for p in &spec.paths {
        for w in p.samples.windows(2) {
            let d = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            // chord of an arc is shorter than the arc by at most ds³κ²/24
            assert!((d - (w[1].p - w[0].p)).abs() < 1e-3, "{}", p.path_id);
        }
        for (x, y) in [p.start_point(), p.end_point()] {
            assert!((x.hypot(y) - 90.0).abs() < 0.05, "{} ({x}, {y})", p.path_id);
        }
    }
}

#[test]
fn projection_round_trip() {
    let spec = four_way();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in &spec.paths {
        for _ in 0..200 {
            let pt = rng.gen_range(1.0..p.length - 1.0);
            let xi = rng.gen_range(-1.5..1.5);
            let q = p.offset_point(pt, xi);
            let back = p.project(q, Some(pt)).unwrap();
            assert!((back.p_tilde - pt).abs() <= 1e-4, "{} p {pt} -> {}", p.path_id, back.p_tilde);
            assert!((back.offset - xi).abs() <= 1e-4, "{} xi {xi} -> {}", p.path_id, back.offset);
        }
    }
}

#[test]
fn left_turn_offsets_sit_on_concentric_circles() {
    let spec = four_way();
    let p = spec.path("S-left").unwrap();
    let r = 17.0;
    let (a, b) = p.curved_range().unwrap();
    let (x, y, psi) = p.pose(a);
    // counterclockwise arc: the centre is to the left of the start pose
    let c = (x - r * psi.sin(), y + r * psi.cos());
    for i in 0..=20 {
        let s = a + (b - a) * i as f64 / 20.0;
        for xi in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            let q = p.offset_point(s, xi);
            let d = (q.0 - c.0).hypot(q.1 - c.1);
            assert!((d - (r - xi)).abs() < 1e-9, "s {s} xi {xi}: {d}");
        }
    }
    assert!((b - a - r * FRAC_PI_2).abs() < 1e-9);
}

fn segments_cross(p: (f64, f64), q: (f64, f64), r: (f64, f64), s: (f64, f64)) -> bool {
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let (d1, d2) = (cross(r, s, p), cross(r, s, q));
    let (d3, d4) = (cross(p, q, r), cross(p, q, s));
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0
}

fn inside(b: &Obb, pt: (f64, f64)) -> bool {
    let c = b.corners();
    let mut sign = 0.0f64;
    for i in 0..4 {
        let (a, e) = (c[i], c[(i + 1) % 4]);
        let x = (e.0 - a.0) * (pt.1 - a.1) - (e.1 - a.1) * (pt.0 - a.0);
        if sign == 0.0 {
            sign = x.signum();
        } else if x * sign < 0.0 {
            return false;
        }
    }
    true
}

/// Polygon oracle: two rectangles intersect iff an edge pair crosses or one holds a corner of the other.
fn polygons_intersect(a: &Obb, b: &Obb) -> bool {
    let (ca, cb) = (a.corners(), b.corners());
    for i in 0..4 {
        for j in 0..4 {
            if segments_cross(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]) {
                return true;
            }
        }
    }
    inside(a, cb[0]) || inside(b, ca[0])
}

#[test]
fn sat_matches_polygon_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    let mut hits = 0;
    for _ in 0..1000 {
        let mut gen = || Obb {
            center: (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)),
            heading: rng.gen_range(-3.2..3.2),
            half_extents: (rng.gen_range(0.3..3.0), rng.gen_range(0.3..1.5)),
        };
        let (a, b) = (gen(), gen());
        if obb_separation(&a, &b).abs() <= 1e-6 {
            continue;
        }
        checked += 1;
        let o = obb_overlap(&a, &b);
        hits += o as usize;
        assert_eq!(o, polygons_intersect(&a, &b), "{a:?} {b:?}");
    }
    assert!(checked > 990 && hits > 100 && hits < checked - 100);
}

#[test]
fn yaw_ramp_saturates_near_43_m() {
    let path = common::straight(100.0);
    let yaw = 2f64.to_radians();
    let env = build_offset_envelope(
        &path,
        0.0,
        0.0,
        (&BoundProfile::Constant(-yaw), &BoundProfile::Constant(yaw)),
        (&BoundProfile::Constant(-1.5), &BoundProfile::Constant(1.5)),
    )
    .unwrap();
    let p_sat = 1.5 / yaw.tan();
    assert!((p_sat - 42.955).abs() < 1e-3);
    for (k, &p) in env.grid.iter().enumerate() {
        let expect = (p * yaw.tan()).min(1.5);
        assert!((env.xi_max[k] - expect).abs() < 1e-12, "p {p}");
        assert!((env.xi_min[k] + expect).abs() < 1e-12, "p {p}");
    }
}

fn params(gamma_min: f64, gamma_max: f64, alpha: f64, omega: OmegaModel) -> HdvParams {
    HdvParams {
        gamma_min,
        gamma_max,
        alpha,
        a_c_max_hat: 2.0,
        yaw_min: BoundProfile::Constant(-0.5),
        yaw_max: BoundProfile::Constant(0.5),
        physical_min: BoundProfile::Constant(-1.0),
        physical_max: BoundProfile::Constant(1.0),
        omega,
    }
}

#[test]
fn braking_envelope_floors_after_stop_distance() {
    let path = common::straight(100.0);
    let prm = params(-3.5, 1.0, 0.1, OmegaModel::default());
    let (unc, _) = HdvUncertainty::new(&path, prm, 0.0, 0.0, 10.0).unwrap();
    let sp = estimate_speed_envelope(&path, &unc, 10.0, 0.0);
    let stop = 100.0 / 7.0;
    for p in [0.0f64, 2.0, 5.0, 10.0, 14.0] {
        let expect = (100.0 - 7.0 * p).sqrt().max(0.1);
        assert!((sp.v_lo_at(p) - expect).abs() < 1e-12, "p {p}");
    }
    for p in [stop + 0.75, 20.0, 60.0] {
        assert_eq!(sp.v_lo_at(p), 0.1, "p {p}");
    }
}

#[test]
fn travel_distance_deviation_shifts_arrival() {
    // ±2 m of travel-distance deviation at a constant 10 m/s moves arrival by ±0.2 s
    let path = common::straight(100.0);
    let prm = params(0.0, 0.0, 0.1, OmegaModel::EnvelopeWidth { scale: 1.0 });
    let (unc, _) = HdvUncertainty::new(&path, prm, 0.0, 0.0, 10.0).unwrap();
    let env = travel_time_envelope(&path, &unc, 10.0);
    for p in [10.0, 50.0, 90.0] {
        assert_eq!(unc.omega_at(p), (-2.0, 2.0));
        assert!((env.t_max_at(p) - (p / 10.0 + 0.2)).abs() < 1e-12);
        assert!((env.t_min_at(p) - (p / 10.0 - 0.2)).abs() < 1e-12);
    }
}

#[test]
fn curve_speed_limits() {
    let lim = CavLimits::default();
    let spec = four_way();
    let kmh_at = |id: &str| {
        let p = spec.path(id).unwrap();
        let v = max_speed_profile(&lim, p);
        let (a, b) = p.curved_range().unwrap();
        let i = p.samples.iter().position(|s| s.p > 0.5 * (a + b)).unwrap();
        (to_kmh(v[0]), to_kmh(v[i]))
    };
    let (straight, left) = kmh_at("S-left");
    let (_, right) = kmh_at("S-right");
    assert!((straight - 50.0).abs() < 1e-12);
    // radii 17 m and 13 m: κ = 0.0588 and 0.0769
    assert!((left - 21.0).abs() < 0.05, "{left}");
    assert!((right - 18.4).abs() < 0.05, "{right}");
}

#[test]
fn spatial_dynamics_step() {
    let s = discrete_dynamics(SpatialState { t: 0.0, z: 0.1 }, 0.01, 1.0).unwrap();
    assert!((s.t - 0.105).abs() < 1e-15 && (s.z - 0.11).abs() < 1e-15);
    let mut s = SpatialState { t: 0.0, z: 0.1 };
    for _ in 0..37 {
        s = discrete_dynamics(s, 0.0, 1.0).unwrap();
    }
    assert!((s.t - 3.7).abs() < 1e-12);
    assert!(discrete_dynamics(SpatialState { t: 0.0, z: 0.1 }, -0.2, 1.0).is_err());
}

#[test]
fn control_bound_examples() {
    let lim = CavLimits::default();
    let (lo, hi) = exact_control_bounds(0.1, &lim);
    assert!((lo + 0.002).abs() < 1e-15 && (hi - 0.0035).abs() < 1e-15);
    for zl in [0.05, 0.072, 0.09, 0.5, 2.0] {
        let (l, h) = linearized_control_bounds(zl, &lim);
        let z = 2.0 / 3.0 * zl;
        assert!(l.eval(z).abs() < 1e-15 && h.eval(z).abs() < 1e-15);
        let (el, eh) = exact_control_bounds(zl, &lim);
        assert!((l.eval(zl) - el).abs() < 1e-15 && (h.eval(zl) - eh).abs() < 1e-15);
    }
}

#[test]
fn riccati_weight_and_value_iteration() {
    let p = riccati_terminal_weight(1.0, 1.0, 1.0);
    assert!((p - 1.618034).abs() < 1e-6);
    assert!((p - (0.5 + 1.25f64.sqrt())).abs() < 1e-15);
    // value iteration of the scalar Riccati recursion for z⁺ = z + dp·u
    let (q1, r, dp) = (1.0, 1.0, 1.0);
    let mut v = 0.0;
    for _ in 0..200 {
        v = q1 + v - v * v * dp * dp / (r + v * dp * dp);
    }
    assert!((v - p).abs() < 1e-12);
}

#[test]
fn temporal_weight_mapping() {
    let (q1, r, e) = weights_from_temporal(1.0, 1.0, 0.5, 0.1, 1.0);
    assert!((q1 - 1000.0).abs() < 1e-9);
    assert!((r - 1e5).abs() < 1e-6);
    assert!((e - 5e6).abs() < 1e-3);
}

#[test]
fn hand_built_qp() {
    let qp = SpatialQp {
        n: 2,
        hess: vec![(0, 0, 2.0), (1, 1, 2.0)],
        lin: vec![-2.0, -4.0],
        constant: 5.0,
        ineq: vec![Row {
            coefs: vec![(0, 1.0), (1, 1.0)],
            rhs: 1.0,
            kind: RowKind::Generic,
        }],
        lower: vec![f64::NEG_INFINITY; 2],
        upper: vec![f64::INFINITY; 2],
        ..Default::default()
    };
    let s = solve_qp(&qp, &SolveSettings::default()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!(s.x[0].abs() < 1e-8 && (s.x[1] - 1.0).abs() < 1e-8, "{:?}", s.x);
}

#[test]
fn equality_qp_matches_linear_solve() {
    use nalgebra::{DMatrix, DVector};
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 6;
    let m = 3;
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &g * g.transpose() + DMatrix::identity(n, n);
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let mut hess = Vec::new();
    for i in 0..n {
        for j in i..n {
            hess.push((i, j, h[(i, j)]));
        }
    }
    let eq = (0..m)
        .map(|i| Row {
            coefs: (0..n).map(|j| (j, a[(i, j)])).collect(),
            rhs: b[i],
            kind: RowKind::Generic,
        })
        .collect();
    let qp = SpatialQp {
        n,
        hess,
        lin: q.iter().copied().collect(),
        eq,
        lower: vec![f64::NEG_INFINITY; n],
        upper: vec![f64::INFINITY; n],
        ..Default::default()
    };
    let s = solve_qp(&qp, &SolveSettings::default()).unwrap();
    // [H Aᵀ; A 0] [x; y] = [−q; b]
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&h);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(&a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&q));
    rhs.rows_mut(n, m).copy_from(&b);
    let sol = k.lu().solve(&rhs).unwrap();
    for i in 0..n {
        assert!((s.x[i] - sol[i]).abs() < 1e-8, "x{i}: {} vs {}", s.x[i], sol[i]);
    }
}

#[test]
fn initial_linearization_examples() {
    let v_ref = vec![kmh(40.0); 5];
    let v_max = vec![kmh(50.0); 5];
    let zs = initial_linearization(CostKind::SpeedTracking, &v_ref, &v_max);
    assert!(zs.iter().all(|z| (z - 0.09).abs() < 1e-12));
    let zt = initial_linearization(CostKind::TravelTime, &v_ref, &v_max);
    assert!(zt.iter().all(|z| (z - 0.072).abs() < 1e-12));
}

#[test]
fn control_steps_at_constant_speed() {
    let k = 20;
    let traj = CavTrajectory {
        id: 1,
        grid: SampleGrid::new(0.0, k as f64, 1.0),
        t: (0..=k).map(|i| i as f64 * 0.1).collect(),
        z: vec![0.1; k + 1],
        u: vec![0.0; k],
    };
    assert_eq!(control_steps(&traj, 0.5), 5);
    let adv = apply_and_advance(&traj, 0.5, 0.0);
    assert!((adv.p - 5.0).abs() < 1e-12);
}

#[test]
fn constant_acceleration_plan() {
    // a = 1 m/s² from 10 m/s: v² = 100 + 2s, so z(s) = (100 + 2s)^(-1/2)
    let dp = 1e-3;
    let k = 10_000;
    let zf = |s: f64| (100.0 + 2.0 * s).powf(-0.5);
    let z: Vec<f64> = (0..=k).map(|i| zf(i as f64 * dp)).collect();
    let u: Vec<f64> = (0..k).map(|i| (z[i + 1] - z[i]) / dp).collect();
    let mut t = vec![0.0];
    for i in 0..k {
        t.push(t[i] + dp * z[i] + 0.5 * dp * dp * u[i]);
    }
    let traj = CavTrajectory {
        id: 1,
        grid: SampleGrid::new(0.0, k as f64 * dp, dp),
        t,
        z,
        u,
    };
    let adv = apply_and_advance(&traj, 0.5, 0.0);
    assert!((adv.p - 5.125).abs() < 1e-6, "{}", adv.p);
    assert!((1.0 / adv.z - 10.5).abs() < 1e-6, "{}", 1.0 / adv.z);
}

#[test]
fn car_following_example() {
    let cf = CarFollowing::default();
    assert_eq!((cf.c1, cf.c2, cf.d0, cf.t_gap), (0.23, 0.07, 2.0, 1.4));
    let a = car_following_accel(&cf, 10.0, Some(LeaderInfo { gap: 10.0, speed: 10.0 }), 10.0);
    assert!((a + 1.38).abs() < 1e-12);
    let eq = car_following_accel(&cf, 10.0, Some(LeaderInfo { gap: 16.0, speed: 10.0 }), 3.0);
    assert!(eq.abs() < 1e-12);
}

#[test]
fn hdv_leader_row_folds_the_bound() {
    let mut problem = common::single_cav(40, 1.0, 10.0, false, 500.0);
    let zone = spatial_mpc::conflict::CriticalZone {
        pair: (4, 1),
        p_out: 12.0,
        p_in: 20.0,
    };
    problem.rows.push(CollisionRow {
        zone,
        leader_kind: VehicleKind::Hdv,
        follower_kind: VehicleKind::Cav,
        leader: TimeRef::Fixed(9.0),
        follower: TimeRef::Cav { cav: 0, p: 20.0 },
    });
    let z_lin = vec![vec![0.1; 41]];
    let qp = problem.assemble(&z_lin);
    let row = qp
        .ineq
        .iter()
        .find(|r| matches!(r.kind, RowKind::Collision { .. }))
        .unwrap();
    // λ − t(20) ≤ −10.1, i.e. t(20) ≥ 10.1 + λ with λ ∈ [−1.1, 0]
    assert!((row.rhs + 10.1).abs() < 1e-12);
    let lay = qp.cavs[0];
    assert!(row.coefs.contains(&(lay.t(20), -1.0)));
    assert!(row.coefs.contains(&(qp.slack[0], 1.0)));
    assert_eq!((qp.lower[qp.slack[0]], qp.upper[qp.slack[0]]), (-1.1, 0.0));
}

#[test]
fn following_band_edge_is_the_zone_set() {
    let spec = four_way();
    let path = spec.path("W-straight").unwrap();
    let fp = spatial_mpc::geometry::VehicleFootprint::default();
    let leader = Corridor::cav(path, 40.0, 1.0, fp);
    let follower = Corridor::cav(path, 0.0, 1.0, fp);
    let cls = collision_locations((1, 2), &leader, &follower);
    // boxes overlap iff the arc gap is at most the full margined length
    let reach = 2.0 * fp.half_extents().0;
    for &(i, j) in &cls.cells {
        let (a, b) = cls.cell_p((i, j));
        assert!((a - b).abs() <= reach + 1e-9);
    }
    let zones = critical_zones(&cls);
    assert!(coverage_check(&cls, &zones) && non_redundant(&cls, &zones));
    // one zone per follower sample along the band's leading edge
    for z in &zones {
        let edge = (z.p_in + reach).floor().min(180.0);
        assert!((z.p_out - edge).abs() < 1e-9, "{z:?}");
    }
    let first = zones.iter().map(|z| z.p_in).fold(f64::INFINITY, f64::min);
    assert!((first - (40.0 - reach).ceil()).abs() < 1e-9);
    assert_eq!(zones.len(), (180.0 - first) as usize - (reach.floor() as usize) + 1);
}
