//! Discretized spatial-domain optimal control problem.

mod cost;
mod limits;
mod problem;
mod qp;

pub use cost::{
    riccati_terminal_weight, weights_from_temporal, CostKind, CostWeights, WeightConfig,
};
pub use limits::{
    discrete_dynamics, exact_control_bounds, interior_speed_caps, interval_speed_cap,
    linearized_control_bounds, max_speed, max_speed_profile, point_speed_cap, AffineBound,
    CavLimits, SampleGrid, SpatialState,
};
pub use problem::{time_at, CavCost, CavOcp, CollisionRow, OcpProblem, SpeedRow, TimeRef};
pub use qp::{CavLayout, QuadBuilder, Row, RowKind, SpatialQp};
