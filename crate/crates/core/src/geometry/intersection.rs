//! Four-way single-lane intersection with twelve straight/left/right paths.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::path::{PathSpec, Primitive};
use crate::error::{Error, Result};
use crate::units::kmh;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionParams {
    pub lane_width: f64,
    pub central_half_width: f64,
    pub control_radius: f64,
    pub sample_step: f64,
    #[serde(default = "default_speed_limit")]
    pub speed_limit_kmh: f64,
}

fn default_speed_limit() -> f64 {
    50.0
}

impl Default for IntersectionParams {
    fn default() -> Self {
        IntersectionParams {
            lane_width: 4.0,
            central_half_width: 15.0,
            control_radius: 90.0,
            sample_step: 1.0,
            speed_limit_kmh: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSpec {
    pub paths: Vec<PathSpec>,
    pub lane_width: f64,
    pub central_area_half_width: f64,
    pub control_radius: f64,
    pub center: (f64, f64),
}

impl IntersectionSpec {
    pub fn path(&self, id: &str) -> Option<&PathSpec> {
        self.paths.iter().find(|p| p.path_id == id)
    }

    pub fn path_ids(&self) -> Vec<&str> {
        self.paths.iter().map(|p| p.path_id.as_str()).collect()
    }
}

/// Approach arms, named by the side vehicles come from.
pub const APPROACHES: [(&str, f64); 4] = [
    ("S", FRAC_PI_2),
    ("E", std::f64::consts::PI),
    ("N", -FRAC_PI_2),
    ("W", 0.0),
];
pub const MOVEMENTS: [&str; 3] = ["straight", "left", "right"];

pub fn build_four_way_intersection(
    lane_width: f64,
    central_half_width: f64,
    control_radius: f64,
    sample_step: f64,
) -> Result<IntersectionSpec> {
    build_intersection(&IntersectionParams {
        lane_width,
        central_half_width,
        control_radius,
        sample_step,
        speed_limit_kmh: 50.0,
    })
}

pub fn build_intersection(prm: &IntersectionParams) -> Result<IntersectionSpec> {
    let (w, c, d, step) = (
        prm.lane_width,
        prm.central_half_width,
        prm.control_radius,
        prm.sample_step,
    );
    if !(w > 0.0 && c > 0.0 && d > 0.0 && step > 0.0 && prm.speed_limit_kmh > 0.0) {
        return Err(Error::Geometry(
            "intersection arguments must be positive".into(),
        ));
    }
    if step > 1.0 {
        return Err(Error::Geometry("sample step must not exceed 1 m".into()));
    }
    if w / 2.0 >= c {
        return Err(Error::Geometry(
            "right-turn radius would be non-positive: lane too wide for central area".into(),
        ));
    }
    if c >= d {
        return Err(Error::Geometry(
            "central area reaches beyond the control boundary".into(),
        ));
    }
    let v_lim = kmh(prm.speed_limit_kmh);
    let mut paths = Vec::with_capacity(12);
    for (arm, psi) in APPROACHES {
        let (dir, right) = ((psi.cos(), psi.sin()), (psi.sin(), -psi.cos()));
        let x0 = -d * dir.0 + 0.5 * w * right.0;
        let y0 = -d * dir.1 + 0.5 * w * right.1;
        for mv in MOVEMENTS {
            let lead = Primitive {
                x0,
                y0,
                psi0: psi,
                length: d - c,
                curvature: 0.0,
            };
            let segments = match mv {
                "straight" => vec![Primitive {
                    length: 2.0 * d,
                    ..lead
                }],
                _ => {
                    let (radius, sign) = if mv == "left" {
                        (c + 0.5 * w, 1.0)
                    } else {
                        (c - 0.5 * w, -1.0)
                    };
                    let (ax, ay, apsi) = lead.end_pose();
                    let arc = Primitive {
                        x0: ax,
                        y0: ay,
                        psi0: apsi,
                        length: radius * FRAC_PI_2,
                        curvature: sign / radius,
                    };
                    let (bx, by, bpsi) = arc.end_pose();
                    let tail = Primitive {
                        x0: bx,
                        y0: by,
                        psi0: bpsi,
                        length: d - c,
                        curvature: 0.0,
                    };
                    vec![lead, arc, tail]
                }
            };
            paths.push(PathSpec::from_primitives(
                format!("{arm}-{mv}"),
                segments,
                step,
                v_lim,
            )?);
        }
    }
    Ok(IntersectionSpec {
        paths,
        lane_width: w,
        central_area_half_width: c,
        control_radius: d,
        center: (0.0, 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_paths_with_expected_lengths() {
        let spec = build_four_way_intersection(4.0, 15.0, 90.0, 1.0).unwrap();
        assert_eq!(spec.paths.len(), 12);
        let s = spec.path("S-straight").unwrap();
        assert!((s.length - 180.0).abs() < 1e-12);
        assert_eq!(s.samples.len(), 181);
        let l = spec.path("S-left").unwrap();
        assert!((l.length - (150.0 + 17.0 * FRAC_PI_2)).abs() < 1e-9);
        let (x, y) = l.end_point();
        assert!((x + 90.0).abs() < 1e-9 && (y - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_oversized_lane() {
        assert!(build_four_way_intersection(40.0, 15.0, 90.0, 1.0).is_err());
        assert!(build_four_way_intersection(4.0, 15.0, 90.0, 2.0).is_err());
    }
}
