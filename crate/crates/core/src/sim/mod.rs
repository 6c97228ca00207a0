//! Closed-loop simulation: CAV and HDV plants, the MPC loop and episode reports.

mod cav;
mod episode;
mod hdv;
mod log;
mod report;

pub use cav::{apply_and_advance, control_steps, distance_for_time, CavAdvance, ExecSegment};
pub use episode::{run_episode, run_episode_with, EpisodeOptions};
pub use hdv::{
    car_following_accel, offset_profile, random_offset_profile, CarFollowing, HdvPlant, HdvState,
    LeaderInfo, OffsetRealization, RealizedPath, ScriptPhase, SpeedSource, HDV_SUBSTEPS,
};
pub use log::{EnvelopeCheck, EpisodeLog, IterationStats, StcComparison, TraceSample, VehicleLog};
pub use report::{
    collision_scan, envelope_violation, exact_bound_violation, limit_violation, round_trip_error,
    time_gap_report, EpisodeSummary, Overlap, PairGap,
};
