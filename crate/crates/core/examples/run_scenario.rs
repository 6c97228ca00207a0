//! Runs a bundled scenario and prints the episode summary.
//!
//! `cargo run --release --example run_scenario -- scenario1|file.toml [realization] [cost]`

use spatial_mpc::ocp::CostKind;
use spatial_mpc::scenario::{Scenario, ScenarioFile};
use spatial_mpc::sim::{run_episode_with, EpisodeOptions, EpisodeSummary, OffsetRealization};

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> spatial_mpc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("scenario1", |s| s.as_str());
    let sc = if name.ends_with(".toml") {
        Scenario::new(ScenarioFile::load(std::path::Path::new(name))?)?
    } else {
        Scenario::bundled(name)?
    };
    let realization = match args.get(2).map(|s| s.as_str()) {
        Some("ccw") => Some(OffsetRealization::CcwBoundary),
        Some("cw") => Some(OffsetRealization::CwBoundary),
        Some("random") => Some(OffsetRealization::Random),
        _ => None,
    };
    let opts = EpisodeOptions {
        realization,
        cost: match args.get(3).map(|s| s.as_str()) {
            Some("time") => Some(CostKind::TravelTime),
            Some("speed") => Some(CostKind::SpeedTracking),
            _ => None,
        },
        ..Default::default()
    };
    let log = run_episode_with(&sc, &opts)?;
    let s = EpisodeSummary::from_log(&sc, &log);
    for g in &s.gaps {
        println!(
            "gap {}->{}: {:.3} s at ({:.0}, {:.0}){}",
            g.leader,
            g.follower,
            g.min_gap,
            g.p_out,
            g.p_in,
            if g.overlapping { " overlapping" } else { "" }
        );
    }
    for v in log.cavs() {
        println!("CAV {} finished at {:?}", v.id, v.finish_time);
    }
    for n in log.notes.iter().take(10) {
        println!("note: {n}");
    }
    println!(
        "iterations {} completed {} max slack {:.4} inactive slack {:.2e}",
        s.iterations, s.completed, s.max_slack, s.max_inactive_slack
    );
    println!(
        "overlaps {} speed viol {:.2e} accel viol {:.2e} exact viol {:.2e}",
        s.overlaps, s.speed_violation, s.accel_violation, s.exact_bound_violation
    );
    println!(
        "envelope viol {:.2e} round trip {:.2e}",
        s.envelope_violation, s.round_trip_error
    );
    println!(
        "qp time mean {:.4} max {:.4} total travel {:?}",
        s.qp_time_mean, s.qp_time_max, s.total_travel_time
    );
    println!("safety {}", s.safety_ok(log.t_des));
    Ok(())
}
