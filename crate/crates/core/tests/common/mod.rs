#![allow(dead_code)]

use spatial_mpc::geometry::{PathSpec, Primitive};
use spatial_mpc::ocp::{
    CavCost, CavLimits, CavOcp, CostWeights, OcpProblem, SampleGrid, WeightConfig,
};
use spatial_mpc::units::kmh;

/// Straight eastbound path from the origin with the urban 50 km/h limit.
pub fn straight(length: f64) -> PathSpec {
    let seg = Primitive {
        x0: 0.0,
        y0: 0.0,
        psi0: 0.0,
        length,
        curvature: 0.0,
    };
    PathSpec::from_primitives("straight", vec![seg], 1.0, kmh(50.0)).unwrap()
}

/// One CAV on a straight road, `k` intervals of `dp`, starting at speed `v0`.
pub fn single_cav(k: usize, dp: f64, v0: f64, travel_time: bool, q2: f64) -> OcpProblem {
    let lim = CavLimits::default();
    let grid = SampleGrid::new(0.0, k as f64 * dp, dp);
    let v_ref = v0;
    let cost = if travel_time {
        CavCost::TravelTime
    } else {
        CavCost::SpeedTracking {
            z_ref: vec![1.0 / v_ref; grid.k + 1],
            z_ref_steady: 1.0 / v_ref,
        }
    };
    let cfg = WeightConfig {
        q2,
        ..WeightConfig::default()
    };
    OcpProblem {
        cavs: vec![CavOcp {
            id: 1,
            grid,
            z0: 1.0 / v0,
            u_prev: 0.0,
            z_min: vec![1.0 / kmh(50.0); grid.k + 1],
            speed_rows: Vec::new(),
            z_max: 1.0 / lim.v_floor,
            limits: lim,
            cost,
            weights: CostWeights::new(&cfg, 1.0 / v0, dp),
        }],
        rows: Vec::new(),
        t_des: 1.1,
        q_s: cfg.q_s,
        q_s_l1: cfg.q_s_l1,
        end_point_bounds: true,
    }
}

/// Dense Hessian from the stored upper triangle.
pub fn dense_hessian(n: usize, upper: &[(usize, usize, f64)]) -> nalgebra::DMatrix<f64> {
    let mut h = nalgebra::DMatrix::zeros(n, n);
    for &(i, j, v) in upper {
        h[(i, j)] += v;
        if i != j {
            h[(j, i)] += v;
        }
    }
    h
}
