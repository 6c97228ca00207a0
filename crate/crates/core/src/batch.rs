//! Batches of episodes with randomized HDV offset paths, and the horizon sweep.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conflict::VehicleId;
use crate::scenario::Scenario;
use crate::sim::{run_episode_with, EpisodeLog, EpisodeOptions, EpisodeSummary, OffsetRealization};
use crate::solver::ScpMode;

/// Seed of the `i`-th batch episode.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Copy of `sc` whose listed HDVs (all HDVs when empty) draw random offset paths.
pub fn randomized(sc: &Scenario, ids: &[VehicleId]) -> Scenario {
    let mut out = sc.clone();
    for v in &mut out.file.vehicles {
        if let Some(h) = v.hdv.as_mut() {
            if ids.is_empty() || ids.contains(&v.id) {
                h.realization = OffsetRealization::Random;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct BatchEpisode {
    pub index: usize,
    pub seed: u64,
    pub outcome: Result<(EpisodeLog, EpisodeSummary), String>,
}

/// Runs `count` episodes of `sc` with HDV paths drawn from `seed`; results are in index order
/// and do not depend on thread scheduling.
pub fn run_batch(
    sc: &Scenario,
    count: usize,
    seed: u64,
    base: &EpisodeOptions,
) -> Vec<BatchEpisode> {
    let ids = sc
        .file
        .batch
        .as_ref()
        .map(|b| b.randomize.clone())
        .unwrap_or_default();
    let sc = randomized(sc, &ids);
    let one = |i: usize| {
        let s = episode_seed(seed, i);
        let opts = EpisodeOptions {
            seed: Some(s),
            ..base.clone()
        };
        let outcome = run_episode_with(&sc, &opts)
            .map(|log| {
                let sum = EpisodeSummary::from_log(&sc, &log);
                (log, sum)
            })
            .map_err(|e| e.to_string());
        BatchEpisode {
            index: i,
            seed: s,
            outcome,
        }
    };
    #[cfg(feature = "parallel")]
    let out = (0..count).into_par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let out = (0..count).map(one).collect();
    out
}

/// Five-number summary for box plots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |f: f64| {
            let x = f * (v.len() - 1) as f64;
            let (i, r) = (x.floor() as usize, x.fract());
            if i + 1 < v.len() {
                v[i] + r * (v[i + 1] - v[i])
            } else {
                v[i]
            }
        };
        Some(Spread {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpread {
    pub leader: VehicleId,
    pub follower: VehicleId,
    pub gap: Spread,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub episodes: usize,
    pub failed: usize,
    pub safe: usize,
    pub overlaps: usize,
    pub max_slack: f64,
    pub max_speed_violation: f64,
    pub max_accel_violation: f64,
    pub max_envelope_violation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub travel_time: Option<Spread>,
    /// Minimum gap of every pair across episodes (box-plot data).
    pub gaps: Vec<PairSpread>,
}

impl BatchStats {
    pub fn from_episodes(eps: &[BatchEpisode], t_des: f64) -> BatchStats {
        let ok: Vec<&EpisodeSummary> = eps
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok().map(|o| &o.1))
            .collect();
        let fold = |f: fn(&EpisodeSummary) -> f64| ok.iter().map(|s| f(s)).fold(0.0, f64::max);
        let mut pairs: Vec<(VehicleId, VehicleId)> = Vec::new();
        for s in &ok {
            for g in &s.gaps {
                if !pairs.contains(&(g.leader, g.follower)) {
                    pairs.push((g.leader, g.follower));
                }
            }
        }
        pairs.sort_unstable();
        let gaps = pairs
            .into_iter()
            .filter_map(|(l, f)| {
                let v: Vec<f64> = ok
                    .iter()
                    .flat_map(|s| s.gaps.iter())
                    .filter(|g| g.leader == l && g.follower == f)
                    .map(|g| g.min_gap)
                    .collect();
                Spread::of(&v).map(|gap| PairSpread {
                    leader: l,
                    follower: f,
                    gap,
                })
            })
            .collect();
        let travel: Vec<f64> = ok.iter().filter_map(|s| s.total_travel_time).collect();
        BatchStats {
            episodes: eps.len(),
            failed: eps.len() - ok.len(),
            safe: ok.iter().filter(|s| s.safety_ok(t_des)).count(),
            overlaps: ok.iter().map(|s| s.overlaps).sum(),
            max_slack: fold(|s| s.max_slack),
            max_speed_violation: fold(|s| s.speed_violation),
            max_accel_violation: fold(|s| s.accel_violation),
            max_envelope_violation: fold(|s| s.envelope_violation),
            travel_time: Spread::of(&travel),
            gaps,
        }
    }

    pub fn all_safe(&self) -> bool {
        self.failed == 0 && self.safe == self.episodes
    }
}

/// One row of the RTI/STC timing table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub horizon: usize,
    pub iterations: usize,
    pub rti_time: Spread,
    pub stc_time: Spread,
    pub stc_iterations_min: usize,
    pub stc_iterations_max: usize,
    /// Relative objective deviation of RTI from STC, per MPC iteration.
    pub deviation: Spread,
    pub safe: bool,
}

/// Runs an RTI episode per horizon (samples in each CAV's first horizon), solving every
/// MPC update to convergence alongside from the same state and linearization.
pub fn sweep_horizon(
    sc: &Scenario,
    horizons: &[usize],
    base: &EpisodeOptions,
) -> crate::Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(horizons.len());
    for &n in horizons {
        let opts = EpisodeOptions {
            compare_stc: true,
            horizon_samples: Some(n),
            mode: Some(ScpMode::Rti),
            ..base.clone()
        };
        let log = run_episode_with(sc, &opts)?;
        let sum = EpisodeSummary::from_log(sc, &log);
        let stc: Vec<_> = log.iterations.iter().filter_map(|i| i.stc).collect();
        let rti: Vec<f64> = log.iterations.iter().map(|i| i.qp_time).collect();
        let st: Vec<f64> = stc.iter().map(|s| s.time).collect();
        let dev: Vec<f64> = stc.iter().map(|s| s.deviation).collect();
        let (Some(rti_time), Some(stc_time), Some(deviation)) =
            (Spread::of(&rti), Spread::of(&st), Spread::of(&dev))
        else {
            continue;
        };
        rows.push(SweepRow {
            horizon: n,
            iterations: log.iterations.len(),
            rti_time,
            stc_time,
            stc_iterations_min: stc.iter().map(|s| s.iterations).min().unwrap_or(0),
            stc_iterations_max: stc.iter().map(|s| s.iterations).max().unwrap_or(0),
            deviation,
            safe: sum.invariants_ok(log.t_des),
        });
    }
    Ok(rows)
}

/// The sweep as a plain-text table.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "horizon  iters  stc_time_min  stc_time_max  stc_iters  rti_time_min  rti_time_max  rti_time_mean  stc_time_mean  dev_min_%  dev_max_%\n",
    );
    for r in rows {
        s += &format!(
            "{:>7}  {:>5}  {:>12.4}  {:>12.4}  {:>4}/{:<4}  {:>12.4}  {:>12.4}  {:>13.4}  {:>13.4}  {:>9.4}  {:>9.4}\n",
            r.horizon,
            r.iterations,
            r.stc_time.min,
            r.stc_time.max,
            r.stc_iterations_min,
            r.stc_iterations_max,
            r.rti_time.min,
            r.rti_time.max,
            r.rti_time.mean,
            r.stc_time.mean,
            100.0 * r.deviation.min,
            100.0 * r.deviation.max,
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_quartiles() {
        let s = Spread::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.mean, 3.0);
        assert!(Spread::of(&[]).is_none());
    }

    #[test]
    fn seeds_are_distinct() {
        let s: Vec<u64> = (0..100).map(|i| episode_seed(7, i)).collect();
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), s.len());
    }
}
