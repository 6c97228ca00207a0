//! Spatial-domain dynamics, speed limits and control bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PathSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavLimits {
    pub a_min: f64,
    pub a_max: f64,
    pub a_c_max: f64,
    pub v_floor: f64,
}

impl Default for CavLimits {
    fn default() -> Self {
        CavLimits {
            a_min: -3.5,
            a_max: 2.0,
            a_c_max: 2.0,
            v_floor: 0.5,
        }
    }
}

impl CavLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_min < 0.0 && self.a_max > 0.0 && self.a_c_max > 0.0 && self.v_floor > 0.0) {
            return Err(Error::Scenario(
                "CAV limits need a_min < 0 < a_max, a_c_max > 0, v_floor > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Legal and centripetal speed limit at a single point of the path.
pub fn max_speed(limits: &CavLimits, path: &PathSpec, p: f64) -> f64 {
    let p = p.clamp(0.0, path.length);
    let k = path.curvature_at(p);
    let vc = if k > 0.0 {
        (limits.a_c_max / k).sqrt()
    } else {
        f64::INFINITY
    };
    path.v_lim_at(p).min(vc)
}

/// Speed limit at `p`, taking the lower side where the limit changes at `p`.
pub fn point_speed_cap(limits: &CavLimits, path: &PathSpec, p: f64) -> f64 {
    let e = 1e-9;
    max_speed(limits, path, p)
        .min(max_speed(limits, path, p - e))
        .min(max_speed(limits, path, p + e))
}

/// `(offset from a, cap)` for every path breakpoint strictly inside `(a, b)`.
pub fn interior_speed_caps(limits: &CavLimits, path: &PathSpec, a: f64, b: f64) -> Vec<(f64, f64)> {
    path.breakpoints()
        .iter()
        .filter(|&&bp| bp > a + 1e-9 && bp < b - 1e-9)
        .map(|&bp| (bp - a, point_speed_cap(limits, path, bp)))
        .collect()
}

/// Speed limit at every path sample.
pub fn max_speed_profile(limits: &CavLimits, path: &PathSpec) -> Vec<f64> {
    path.samples
        .iter()
        .map(|s| max_speed(limits, path, s.p))
        .collect()
}

/// Smallest speed limit over `[a, b]`, including interior curvature breakpoints.
pub fn interval_speed_cap(limits: &CavLimits, path: &PathSpec, a: f64, b: f64) -> f64 {
    let mut v = max_speed(limits, path, a).min(max_speed(limits, path, b));
    v = v.min(max_speed(limits, path, 0.5 * (a + b)));
    for &bp in path.breakpoints() {
        if bp > a && bp < b {
            v = v.min(max_speed(limits, path, bp));
        }
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialState {
    pub t: f64,
    pub z: f64,
}

pub fn discrete_dynamics(s: SpatialState, u: f64, dp: f64) -> Result<SpatialState> {
    let next = SpatialState {
        t: s.t + dp * s.z + 0.5 * dp * dp * u,
        z: s.z + dp * u,
    };
    if next.z <= 0.0 {
        return Err(Error::InvalidStep(next.z));
    }
    Ok(next)
}

pub fn exact_control_bounds(z: f64, limits: &CavLimits) -> (f64, f64) {
    let z3 = z * z * z;
    (-limits.a_max * z3, -limits.a_min * z3)
}

/// Affine bound `c0 + cz·z` on the control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineBound {
    pub c0: f64,
    pub cz: f64,
}

impl AffineBound {
    pub fn eval(&self, z: f64) -> f64 {
        self.c0 + self.cz * z
    }
}

/// First-order bounds about `z_lin`; they lie inside the exact bounds wherever `z > 2/3·z_lin`.
pub fn linearized_control_bounds(z_lin: f64, limits: &CavLimits) -> (AffineBound, AffineBound) {
    let zl2 = z_lin * z_lin;
    let lo = AffineBound {
        c0: 2.0 * limits.a_max * zl2 * z_lin,
        cz: -3.0 * limits.a_max * zl2,
    };
    let hi = AffineBound {
        c0: 2.0 * limits.a_min * zl2 * z_lin,
        cz: -3.0 * limits.a_min * zl2,
    };
    (lo, hi)
}

/// Uniform spatial grid from `p0` to `pf + epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub p0: f64,
    pub pf: f64,
    pub dp: f64,
    pub epsilon: f64,
    /// Number of intervals.
    pub k: usize,
}

impl SampleGrid {
    pub fn new(p0: f64, pf: f64, dp: f64) -> Self {
        let span = (pf - p0).max(0.0);
        let mut k = (span / dp).ceil() as usize;
        if k as f64 * dp - span > dp - 1e-9 {
            k -= 1;
        }
        let k = k.max(1);
        let epsilon = (k as f64 * dp - span).max(0.0);
        SampleGrid {
            p0,
            pf,
            dp,
            epsilon,
            k,
        }
    }

    pub fn p(&self, i: usize) -> f64 {
        self.p0 + i as f64 * self.dp
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..=self.k).map(|i| self.p(i)).collect()
    }

    pub fn end(&self) -> f64 {
        self.p(self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dynamics_examples() {
        let s = discrete_dynamics(SpatialState { t: 0.0, z: 0.1 }, 0.0, 1.0).unwrap();
        assert_eq!((s.t, s.z), (0.1, 0.1));
        let s = discrete_dynamics(SpatialState { t: 0.0, z: 0.1 }, 0.01, 1.0).unwrap();
        assert!((s.t - 0.105).abs() < 1e-15 && (s.z - 0.11).abs() < 1e-15);
        assert!(discrete_dynamics(SpatialState { t: 0.0, z: 0.1 }, -0.2, 1.0).is_err());
    }

    #[test]
    fn exact_bounds_example() {
        let (lo, hi) = exact_control_bounds(0.1, &CavLimits::default());
        assert!((lo + 0.002).abs() < 1e-15 && (hi - 0.0035).abs() < 1e-15);
    }

    #[test]
    fn linearized_bounds_at_the_point_are_exact() {
        let l = CavLimits::default();
        let (lo, hi) = linearized_control_bounds(0.09, &l);
        let (elo, ehi) = exact_control_bounds(0.09, &l);
        assert!((lo.eval(0.09) - elo).abs() < 1e-15 && (hi.eval(0.09) - ehi).abs() < 1e-15);
        assert!(lo.eval(0.06).abs() < 1e-15 && hi.eval(0.06).abs() < 1e-15);
    }

    #[test]
    fn grid_epsilon() {
        let g = SampleGrid::new(10.3, 180.0, 1.0);
        assert_eq!(g.k, 170);
        assert!((g.epsilon - 0.3).abs() < 1e-9);
        let g = SampleGrid::new(10.0, 180.0, 1.0);
        assert_eq!((g.k, g.epsilon), (170, 0.0));
    }
}
