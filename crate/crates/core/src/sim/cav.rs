//! CAV plant: executes the optimized spatial control profile for one period.

use serde::{Deserialize, Serialize};

use crate::solver::CavTrajectory;

/// One executed interval of constant spatial control.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecSegment {
    pub p0: f64,
    pub p1: f64,
    /// Absolute time at `p0`.
    pub t0: f64,
    pub z0: f64,
    pub u: f64,
}

impl ExecSegment {
    pub fn time_at(&self, p: f64) -> f64 {
        let s = p - self.p0;
        self.t0 + s * self.z0 + 0.5 * s * s * self.u
    }

    pub fn lethargy_at(&self, p: f64) -> f64 {
        self.z0 + (p - self.p0) * self.u
    }

    pub fn t1(&self) -> f64 {
        self.time_at(self.p1)
    }

    /// Position reached at absolute time `t` (within the segment).
    pub fn p_at_time(&self, t: f64) -> f64 {
        self.p0 + distance_for_time(self.z0, self.u, t - self.t0).min(self.p1 - self.p0)
    }
}

/// Distance `s ≥ 0` solving `s·z + s²/2·u = tau`, in the cancellation-free form.
pub fn distance_for_time(z: f64, u: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let disc = (z * z + 2.0 * u * tau).max(0.0);
    2.0 * tau / (z + disc.sqrt())
}

/// Number of control intervals entered within `dt`: the largest `n` whose
/// starting sample is reached strictly before `dt`.
pub fn control_steps(traj: &CavTrajectory, dt: f64) -> usize {
    let mut n = 0;
    for k in 0..traj.grid.k {
        if traj.t[k] < dt - 1e-9 {
            n = k + 1;
        } else {
            break;
        }
    }
    n.max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavAdvance {
    pub n: usize,
    pub p: f64,
    pub z: f64,
    /// Control of the interval the vehicle is in at the end of the period.
    pub u_last: f64,
    pub segments: Vec<ExecSegment>,
    /// The vehicle passed the end of the horizon within the period.
    pub finished: bool,
    /// Time (relative to the period start) at which the grid end was reached.
    pub finish_time: Option<f64>,
}

/// Executes the first `dt` seconds of `traj`, starting at absolute time `t_abs`.
///
/// The planned controls are integrated from the plan's initial lethargy, so the
/// executed segments chain exactly and do not inherit solver round-off in `t`.
pub fn apply_and_advance(traj: &CavTrajectory, dt: f64, t_abs: f64) -> CavAdvance {
    let n = control_steps(traj, dt);
    let g = &traj.grid;
    let mut segments = Vec::with_capacity(n);
    let (mut t, mut z) = (0.0, traj.z[0]);
    for k in 0..g.k {
        let p0 = g.p(k);
        let u = traj.u[k];
        let seg = ExecSegment {
            p0,
            p1: g.p(k + 1),
            t0: t_abs + t,
            z0: z,
            u,
        };
        let t_next = t + g.dp * z + 0.5 * g.dp * g.dp * u;
        if t_next < dt {
            segments.push(seg);
            t = t_next;
            z += g.dp * u;
        } else {
            let s = distance_for_time(z, u, dt - t).min(g.dp);
            segments.push(ExecSegment { p1: p0 + s, ..seg });
            return CavAdvance {
                n,
                p: p0 + s,
                z: z + s * u,
                u_last: u,
                segments,
                finished: false,
                finish_time: None,
            };
        }
    }
    // the horizon end was reached before dt
    CavAdvance {
        n,
        p: g.p(g.k),
        z,
        u_last: traj.u[g.k - 1],
        segments,
        finished: true,
        finish_time: Some(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::SampleGrid;

    fn constant(v: f64, k: usize) -> CavTrajectory {
        let grid = SampleGrid::new(0.0, k as f64, 1.0);
        CavTrajectory {
            id: 1,
            grid,
            t: (0..=k).map(|i| i as f64 / v).collect(),
            z: vec![1.0 / v; k + 1],
            u: vec![0.0; k],
        }
    }

    #[test]
    fn constant_speed_covers_v_dt() {
        let tr = constant(10.0, 50);
        let a = apply_and_advance(&tr, 0.5, 0.0);
        assert!((a.p - 5.0).abs() < 1e-12);
        assert_eq!(a.n, 5);
        assert_eq!(control_steps(&tr, 0.5), 5);
        assert!(!a.finished);
    }

    #[test]
    fn partial_interval() {
        let tr = constant(10.0, 50);
        let a = apply_and_advance(&tr, 0.55, 0.0);
        assert!((a.p - 5.5).abs() < 1e-12);
        assert_eq!(a.n, 6);
    }

    #[test]
    fn inverse_of_time_quadratic() {
        let (z, u) = (0.1, -0.002);
        let s = distance_for_time(z, u, 0.37);
        assert!((s * z + 0.5 * s * s * u - 0.37).abs() < 1e-14);
    }

    #[test]
    fn short_horizon_finishes() {
        let tr = constant(10.0, 3);
        let a = apply_and_advance(&tr, 0.5, 2.0);
        assert!(a.finished);
        assert!((a.finish_time.unwrap() - 0.3).abs() < 1e-12);
        assert!((a.segments[2].t1() - 2.3).abs() < 1e-12);
    }
}
