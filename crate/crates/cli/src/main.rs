//! `smpc`: run, batch, sweep and validate intersection scenarios.
//!
//! Exit status is 0 only when every episode kept the safety invariants, 2 when an
//! invariant was violated and 1 on bad input or a solver failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spatial_mpc::batch::{run_batch, sweep_horizon, sweep_table, BatchStats};
use spatial_mpc::io::{
    fmt12, report_summary, write_episode, write_failure_dump, write_gaps_csv, write_paths_csv,
    GeometryDocument, RunReport,
};
use spatial_mpc::ocp::CostKind;
use spatial_mpc::scenario::{Scenario, ScenarioFile};
use spatial_mpc::sim::{run_episode_with, EpisodeOptions, EpisodeSummary, OffsetRealization};
use spatial_mpc::solver::ScpMode;

#[derive(Parser)]
#[command(name = "smpc", version, about = "Spatial-domain MPC for automated vehicles at an unsignalized intersection")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one closed-loop episode.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        realization: Option<Realization>,
        /// Also solve every update to convergence and report the deviation.
        #[arg(long)]
        compare_stc: bool,
    },
    /// Run episodes with randomized HDV offset paths.
    Batch {
        #[command(flatten)]
        common: Common,
        /// Number of episodes (defaults to the scenario's batch count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// RTI and STC solve times and deviation across control horizons.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        horizons: Vec<usize>,
        /// Stop each episode after this many MPC updates.
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Check scenario files and their round trip through the schema.
    Validate { scenarios: Vec<String> },
    /// Write the intersection geometry and sampled paths.
    ExportGeometry {
        scenario: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `scenario1` / `scenario2` for the bundled ones.
    scenario: String,
    #[arg(long, value_enum)]
    cost: Option<Cost>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    dynamic_sampling: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports and CSV series.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cost {
    Speed,
    Time,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Rti,
    Stc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Realization {
    Reference,
    Ccw,
    Cw,
    Random,
}

type Res<T> = Result<T, String>;

fn load(name: &str) -> Res<Scenario> {
    let r = if Path::new(name).exists() || name.ends_with(".toml") {
        ScenarioFile::load(Path::new(name)).and_then(Scenario::new)
    } else {
        Scenario::bundled(name)
    };
    r.map_err(|e| format!("{name}: {e}"))
}

impl Common {
    fn options(&self) -> EpisodeOptions {
        EpisodeOptions {
            seed: self.seed,
            cost: self.cost.map(|c| match c {
                Cost::Speed => CostKind::SpeedTracking,
                Cost::Time => CostKind::TravelTime,
            }),
            mode: self.mode.map(|m| match m {
                Mode::Rti => ScpMode::Rti,
                Mode::Stc => ScpMode::Stc,
            }),
            dynamic_sampling: self.dynamic_sampling.then_some(true),
            ..Default::default()
        }
    }

    fn labels(&self, sc: &Scenario) -> (String, String) {
        let m = &sc.file.mpc;
        let cost = match self.options().cost.unwrap_or(m.cost) {
            CostKind::SpeedTracking => "speed_tracking",
            CostKind::TravelTime => "travel_time",
        };
        let mode = match self.options().mode.unwrap_or(m.solver.mode) {
            ScpMode::Rti => "rti",
            ScpMode::Stc => "stc",
        };
        (cost.into(), mode.into())
    }
}

fn write_text(path: &Path, text: &str) -> Res<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| e.to_string())?;
    }
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_summary(s: &EpisodeSummary, t_des: f64) {
    for g in &s.gaps {
        println!(
            "  gap {:>2} -> {:<2} {:>8.3} s  zone ({:.1}, {:.1}){}",
            g.leader,
            g.follower,
            g.min_gap,
            g.p_out,
            g.p_in,
            if g.overlapping { "  overlapping" } else { "" }
        );
    }
    let opt = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.3}"));
    println!("  total travel time   {}", opt(s.total_travel_time));
    println!("  min gap cav-cav     {}", opt(s.min_gap_cav_cav));
    println!("  min gap cav-hdv     {}", opt(s.min_gap_cav_hdv));
    println!("  max slack           {:.3e}", s.max_slack);
    println!("  overlaps            {}", s.overlaps);
    println!(
        "  limit violations    speed {:.1e}  accel {:.1e}  exact bounds {:.1e}",
        s.speed_violation, s.accel_violation, s.exact_bound_violation
    );
    println!("  envelope violation  {:.1e}", s.envelope_violation);
    println!("  round trip error    {:.1e}", s.round_trip_error);
    if let Some(d) = s.stc_deviation_max {
        println!("  max STC deviation   {:.4} %", 100.0 * d);
    }
    println!(
        "  qp time             mean {:.4} s  max {:.4} s",
        s.qp_time_mean, s.qp_time_max
    );
    println!(
        "  safety              {}",
        if s.safety_ok(t_des) { "ok" } else { "VIOLATED" }
    );
}

fn cmd_run(common: &Common, realization: Option<Realization>, compare_stc: bool) -> Res<bool> {
    let sc = load(&common.scenario)?;
    let opts = EpisodeOptions {
        realization: realization.map(|r| match r {
            Realization::Reference => OffsetRealization::Reference,
            Realization::Ccw => OffsetRealization::CcwBoundary,
            Realization::Cw => OffsetRealization::CwBoundary,
            Realization::Random => OffsetRealization::Random,
        }),
        compare_stc,
        ..common.options()
    };
    let log = match run_episode_with(&sc, &opts) {
        Ok(l) => l,
        Err(e) => {
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            return Err(match write_failure_dump(&dir, &e) {
                Ok(Some(p)) => format!("{e}\nQP dump written to {}", p.display()),
                _ => e.to_string(),
            });
        }
    };
    let s = EpisodeSummary::from_log(&sc, &log);
    let (cost, mode) = common.labels(&sc);
    println!("{} ({cost}, {mode}): {} MPC updates", sc.file.name, s.iterations);
    print_summary(&s, log.t_des);
    let safe = s.safety_ok(log.t_des);
    if let Some(dir) = &common.out {
        write_episode(dir, &log, &s).map_err(|e| e.to_string())?;
        let report = RunReport {
            scenario: sc.file.name.clone(),
            cost,
            mode,
            safe,
            batch: None,
            episodes: vec![report_summary(&s)],
        };
        write_text(&dir.join("report.toml"), &report.to_toml().map_err(|e| e.to_string())?)?;
        println!("wrote {}", dir.display());
    }
    Ok(safe)
}

fn cmd_batch(common: &Common, count: Option<usize>) -> Res<bool> {
    let sc = load(&common.scenario)?;
    let count = count
        .or(sc.file.batch.as_ref().map(|b| b.count))
        .unwrap_or(100);
    let seed = common.seed.unwrap_or(sc.file.seed);
    let eps = run_batch(&sc, count, seed, &common.options());
    let t_des = sc.file.mpc.t_des;
    let stats = BatchStats::from_episodes(&eps, t_des);
    let (cost, mode) = common.labels(&sc);
    println!(
        "{} ({cost}, {mode}): {} episodes, {} safe, {} failed, {} overlaps, max slack {:.3e}",
        sc.file.name, stats.episodes, stats.safe, stats.failed, stats.overlaps, stats.max_slack
    );
    for e in &eps {
        if let Err(msg) = &e.outcome {
            println!("  episode {} (seed {}) failed: {msg}", e.index, e.seed);
        }
    }
    for p in &stats.gaps {
        println!(
            "  gap {:>2} -> {:<2} min {:.3}  median {:.3}  max {:.3}",
            p.leader, p.follower, p.gap.min, p.gap.median, p.gap.max
        );
    }
    if let Some(t) = stats.travel_time {
        println!(
            "  total travel time min {:.3}  mean {:.3}  max {:.3}",
            t.min, t.mean, t.max
        );
    }
    let safe = stats.all_safe();
    if let Some(dir) = &common.out {
        let report = RunReport {
            scenario: sc.file.name.clone(),
            cost,
            mode,
            safe,
            batch: Some(stats),
            episodes: eps
                .iter()
                .filter_map(|e| e.outcome.as_ref().ok())
                .map(|(_, s)| report_summary(s))
                .collect(),
        };
        write_text(&dir.join("report.toml"), &report.to_toml().map_err(|e| e.to_string())?)?;
        let mut gaps = Vec::new();
        let mut timing = String::from("episode,seed,qp_time_mean,qp_time_max\n");
        for e in &eps {
            if let Ok((_, s)) = &e.outcome {
                gaps.extend(s.gaps.iter().cloned().map(|mut g| {
                    g.series.clear();
                    g
                }));
                timing += &format!(
                    "{},{},{},{}\n",
                    e.index,
                    e.seed,
                    fmt12(s.qp_time_mean),
                    fmt12(s.qp_time_max)
                );
            }
        }
        let f = fs::File::create(dir.join("gaps.csv")).map_err(|e| e.to_string())?;
        write_gaps_csv(&gaps, f).map_err(|e| e.to_string())?;
        write_text(&dir.join("timing.csv"), &timing)?;
        println!("wrote {}", dir.display());
    }
    Ok(safe)
}

fn cmd_sweep(common: &Common, horizons: &[usize], max_iterations: Option<usize>) -> Res<bool> {
    if let Some(h) = horizons.iter().find(|&&h| !(100..=800).contains(&h)) {
        return Err(format!("horizon {h} outside 100..=800 samples"));
    }
    let sc = load(&common.scenario)?;
    let opts = EpisodeOptions {
        max_iterations,
        ..common.options()
    };
    let rows = sweep_horizon(&sc, horizons, &opts).map_err(|e| e.to_string())?;
    let table = sweep_table(&rows);
    print!("{table}");
    if let Some(dir) = &common.out {
        write_text(&dir.join("sweep.txt"), &table)?;
    }
    Ok(rows.iter().all(|r| r.safe))
}

fn cmd_validate(names: &[String]) -> Res<bool> {
    if names.is_empty() {
        return Err("no scenarios given".into());
    }
    for n in names {
        let sc = load(n)?;
        let text = sc.file.to_toml().map_err(|e| e.to_string())?;
        let back = ScenarioFile::parse(&text).map_err(|e| e.to_string())?;
        if back != sc.file {
            return Err(format!("{n}: scenario does not round-trip"));
        }
        println!(
            "{n}: ok ({} vehicles, order {:?})",
            sc.file.vehicles.len(),
            sc.file.order
        );
    }
    Ok(true)
}

fn cmd_export(name: &str, out: Option<&Path>) -> Res<bool> {
    let sc = load(name)?;
    let doc = GeometryDocument::of(&sc)
        .to_toml()
        .map_err(|e| e.to_string())?;
    match out {
        None => print!("{doc}"),
        Some(dir) => {
            write_text(&dir.join("geometry.toml"), &doc)?;
            let f = fs::File::create(dir.join("paths.csv")).map_err(|e| e.to_string())?;
            write_paths_csv(&sc, f).map_err(|e| e.to_string())?;
            println!("wrote {}", dir.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Run {
            common,
            realization,
            compare_stc,
        } => cmd_run(common, *realization, *compare_stc),
        Cmd::Batch { common, count } => cmd_batch(common, *count),
        Cmd::Sweep {
            common,
            horizons,
            max_iterations,
        } => cmd_sweep(common, horizons, *max_iterations),
        Cmd::Validate { scenarios } => cmd_validate(scenarios),
        Cmd::ExportGeometry { scenario, out } => cmd_export(scenario, out.as_deref()),
    };
    match r {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("safety invariants violated");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
