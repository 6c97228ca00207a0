//! Human-driven vehicle plant: realized offset path plus a speed law.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::PathSpec;
use crate::uncertainty::{hdv_speed_cap, interp_grid, OffsetEnvelope};

/// Fine step (m) of the realized path tables.
const TABLE_STEP: f64 = 0.1;

/// A concrete lateral offset profile and its arc-length table.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedPath {
    pub p: Vec<f64>,
    pub xi: Vec<f64>,
    pub s: Vec<f64>,
    pub length: f64,
}

impl RealizedPath {
    /// Tabulates the offset curve from `knots` (projection, offset) starting at `knots[0].0`.
    pub fn new(path: &PathSpec, knots: &[(f64, f64)]) -> Self {
        let p_start = knots[0].0;
        let kp: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let kx: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let n = (((path.length - p_start) / TABLE_STEP).ceil() as usize).max(1);
        let h = (path.length - p_start) / n as f64;
        let p: Vec<f64> = (0..=n).map(|i| p_start + i as f64 * h).collect();
        let xi: Vec<f64> = p.iter().map(|&q| interp_grid(&kp, &kx, q)).collect();
        let mut s = vec![0.0; p.len()];
        let mut prev = path.offset_point(p[0], xi[0]);
        for i in 1..p.len() {
            // sub-sampled chords so arcs are measured accurately
            let mut acc = 0.0;
            for m in 1..=4 {
                let q = p[i - 1] + h * m as f64 / 4.0;
                let pt = path.offset_point(q, interp_grid(&kp, &kx, q));
                acc += (pt.0 - prev.0).hypot(pt.1 - prev.1);
                prev = pt;
            }
            s[i] = s[i - 1] + acc;
        }
        RealizedPath {
            length: path.length,
            p,
            xi,
            s,
        }
    }

    pub fn start(&self) -> f64 {
        self.p[0]
    }

    pub fn xi_at(&self, p: f64) -> f64 {
        interp_grid(&self.p, &self.xi, p)
    }

    /// Projection reached after realized arc length `s`; beyond the table the path continues straight.
    pub fn p_of_s(&self, s: f64) -> f64 {
        let end = *self.s.last().unwrap();
        if s >= end {
            return self.length + (s - end);
        }
        interp_grid(&self.s, &self.p, s)
    }

    pub fn s_of_p(&self, p: f64) -> f64 {
        let end = *self.s.last().unwrap();
        if p >= self.length {
            return end + (p - self.length);
        }
        interp_grid(&self.p, &self.s, p)
    }

    pub fn position(&self, path: &PathSpec, s: f64) -> (f64, f64, f64) {
        let p = self.p_of_s(s);
        let xi = self.xi_at(p.min(self.length));
        let (x, y) = path.offset_point(p, xi);
        (x, y, path.heading(p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetRealization {
    Reference,
    /// Along the counterclockwise (upper offset) envelope edge.
    CcwBoundary,
    /// Along the clockwise (lower offset) envelope edge.
    CwBoundary,
    Random,
}

/// Offset knots for a realization kind inside an envelope.
pub fn offset_profile(
    env: &OffsetEnvelope,
    kind: OffsetRealization,
    rng: &mut impl Rng,
) -> Vec<(f64, f64)> {
    let g = &env.grid;
    match kind {
        OffsetRealization::Reference => g
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, 0.0f64.clamp(env.xi_min[k], env.xi_max[k])))
            .collect(),
        OffsetRealization::CcwBoundary => {
            g.iter().copied().zip(env.xi_max.iter().copied()).collect()
        }
        OffsetRealization::CwBoundary => {
            g.iter().copied().zip(env.xi_min.iter().copied()).collect()
        }
        OffsetRealization::Random => random_offset_profile(env, rng),
    }
}

/// Clipped smooth random walk: the slope wanders inside the yaw bounds and the
/// offset is clipped to the envelope.
pub fn random_offset_profile(env: &OffsetEnvelope, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let g = &env.grid;
    let mut out = Vec::with_capacity(g.len());
    let mut xi = env.xi_init;
    let lo0 = env.yaw_min[0].tan();
    let hi0 = env.yaw_max[0].tan();
    let mut slope = rng.gen_range(lo0.min(hi0)..=hi0.max(lo0));
    out.push((g[0], xi));
    for k in 1..g.len() {
        let (tlo, thi) = (env.yaw_min[k].tan(), env.yaw_max[k].tan());
        let span = (thi - tlo).max(1e-12);
        slope = (slope + 0.15 * span * rng.gen_range(-1.0..=1.0)).clamp(tlo, thi);
        let h = g[k] - g[k - 1];
        xi = (xi + h * slope).clamp(env.xi_min[k], env.xi_max[k]);
        out.push((g[k], xi));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptPhase {
    pub duration: f64,
    pub a_start: f64,
    pub a_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarFollowing {
    pub c1: f64,
    pub c2: f64,
    pub d0: f64,
    pub t_gap: f64,
    /// Gain towards the free-flow speed when no leader is present.
    #[serde(default = "default_free_gain")]
    pub free_gain: f64,
    /// Deceleration level at which the driver starts braking for a curve.
    #[serde(default = "default_curve_brake")]
    pub curve_brake: f64,
}

fn default_free_gain() -> f64 {
    0.3
}

fn default_curve_brake() -> f64 {
    0.8
}

impl Default for CarFollowing {
    fn default() -> Self {
        CarFollowing {
            c1: 0.23,
            c2: 0.07,
            d0: 2.0,
            t_gap: 1.4,
            free_gain: 0.3,
            curve_brake: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedSource {
    CarFollowing(CarFollowing),
    Scripted { phases: Vec<ScriptPhase> },
}

impl SpeedSource {
    /// Scripted acceleration at episode time `t`; zero after the script ends.
    pub fn scripted_accel(phases: &[ScriptPhase], t: f64) -> f64 {
        let mut t0 = 0.0;
        for ph in phases {
            if t < t0 + ph.duration {
                let f = if ph.duration > 0.0 {
                    (t - t0) / ph.duration
                } else {
                    0.0
                };
                return ph.a_start + (ph.a_end - ph.a_start) * f;
            }
            t0 += ph.duration;
        }
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderInfo {
    /// Bumper-to-bumper spacing (m).
    pub gap: f64,
    pub speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HdvState {
    /// Realized arc length traveled since the episode start position.
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HdvPlant {
    pub realized: RealizedPath,
    pub speed: SpeedSource,
    pub v_free: f64,
    pub a_c_hat: f64,
    pub a_min: f64,
    pub a_max: f64,
}

pub const HDV_SUBSTEPS: usize = 10;

/// Car-following acceleration.
pub fn car_following_accel(
    cf: &CarFollowing,
    v: f64,
    leader: Option<LeaderInfo>,
    v_free: f64,
) -> f64 {
    match leader {
        Some(l) => cf.c1 * (l.gap - cf.d0 - cf.t_gap * v) + cf.c2 * (l.speed - v),
        None => cf.free_gain * (v_free - v),
    }
}

impl HdvPlant {
    fn curve_limit(&self, path: &PathSpec, cf: &CarFollowing, p: f64, v: f64) -> f64 {
        let mut a = f64::INFINITY;
        let mut d = 0.0;
        while d <= 80.0 {
            let q = p + d;
            if q > path.length {
                break;
            }
            let cap = hdv_speed_cap(path, self.a_c_hat, q);
            if v > cap {
                let need = if d < 0.5 {
                    2.0 * (cap - v)
                } else {
                    -(v * v - cap * cap) / (2.0 * d)
                };
                if need < -cf.curve_brake || d < 0.5 {
                    a = a.min(need);
                }
            }
            d += 1.0;
        }
        a
    }

    /// Advances one period `dt` with `HDV_SUBSTEPS` forward-Euler substeps.
    pub fn step(
        &self,
        path: &PathSpec,
        st: HdvState,
        leader: Option<LeaderInfo>,
        t_now: f64,
        dt: f64,
    ) -> (HdvState, Vec<(f64, HdvState)>) {
        let h = dt / HDV_SUBSTEPS as f64;
        let mut s = st;
        let mut lead = leader;
        let mut trace = Vec::with_capacity(HDV_SUBSTEPS);
        for i in 0..HDV_SUBSTEPS {
            let t = t_now + i as f64 * h;
            let mut a = match &self.speed {
                SpeedSource::Scripted { phases } => SpeedSource::scripted_accel(phases, t),
                SpeedSource::CarFollowing(cf) => {
                    let p = self.realized.p_of_s(s.s);
                    car_following_accel(cf, s.v, lead, self.v_free)
                        .min(self.curve_limit(path, cf, p, s.v))
                }
            };
            a = a.clamp(self.a_min, self.a_max);
            if s.v + a * h < 0.0 {
                a = -s.v / h;
            }
            let v_next = s.v + a * h;
            let ds = 0.5 * (s.v + v_next) * h;
            if let Some(l) = lead.as_mut() {
                l.gap += l.speed * h - ds;
            }
            s = HdvState {
                s: s.s + ds,
                v: v_next,
                a,
            };
            trace.push((t + h, s));
        }
        (s, trace)
    }
}
