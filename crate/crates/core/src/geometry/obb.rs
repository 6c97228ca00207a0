//! Oriented bounding boxes and the separating axis test.

use serde::{Deserialize, Serialize};

use super::path::PathSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleFootprint {
    pub length: f64,
    pub width: f64,
    pub margin_long: f64,
    pub margin_lat: f64,
}

impl Default for VehicleFootprint {
    fn default() -> Self {
        VehicleFootprint {
            length: 4.5,
            width: 2.0,
            margin_long: 0.5,
            margin_lat: 0.25,
        }
    }
}

impl VehicleFootprint {
    pub fn half_extents(&self) -> (f64, f64) {
        (
            (self.length + 2.0 * self.margin_long) / 2.0,
            (self.width + 2.0 * self.margin_lat) / 2.0,
        )
    }

    /// The same body without safety margins.
    pub fn physical(&self) -> VehicleFootprint {
        VehicleFootprint {
            margin_long: 0.0,
            margin_lat: 0.0,
            ..*self
        }
    }

    pub fn is_valid(&self) -> bool {
        self.length > 0.0 && self.width > 0.0 && self.margin_long >= 0.0 && self.margin_lat >= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: (f64, f64),
    pub heading: f64,
    pub half_extents: (f64, f64),
}

impl Obb {
    pub fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.heading.sin_cos();
        [(c, s), (-s, c)]
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let [u, v] = self.axes();
        let (a, b) = self.half_extents;
        let (cx, cy) = self.center;
        [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)].map(|(i, j)| {
            (
                cx + i * a * u.0 + j * b * v.0,
                cy + i * a * u.1 + j * b * v.1,
            )
        })
    }

    fn radius_on(&self, axis: (f64, f64)) -> f64 {
        let [u, v] = self.axes();
        self.half_extents.0 * (u.0 * axis.0 + u.1 * axis.1).abs()
            + self.half_extents.1 * (v.0 * axis.0 + v.1 * axis.1).abs()
    }

    pub fn circumradius(&self) -> f64 {
        self.half_extents.0.hypot(self.half_extents.1)
    }

    pub fn contains(&self, pt: (f64, f64)) -> bool {
        let [u, v] = self.axes();
        let (dx, dy) = (pt.0 - self.center.0, pt.1 - self.center.1);
        (dx * u.0 + dy * u.1).abs() <= self.half_extents.0
            && (dx * v.0 + dy * v.1).abs() <= self.half_extents.1
    }
}

/// Largest separation over the four candidate axes; positive means disjoint.
pub fn obb_separation(a: &Obb, b: &Obb) -> f64 {
    let d = (b.center.0 - a.center.0, b.center.1 - a.center.1);
    let mut sep = f64::NEG_INFINITY;
    for axis in a.axes().into_iter().chain(b.axes()) {
        let dist = (d.0 * axis.0 + d.1 * axis.1).abs();
        sep = sep.max(dist - a.radius_on(axis) - b.radius_on(axis));
    }
    sep
}

/// Closed-set overlap: touching boxes overlap.
pub fn obb_overlap(a: &Obb, b: &Obb) -> bool {
    let dx = b.center.0 - a.center.0;
    let dy = b.center.1 - a.center.1;
    let r = a.circumradius() + b.circumradius();
    if dx * dx + dy * dy > r * r {
        return false;
    }
    obb_separation(a, b) <= 0.0
}

pub fn footprint_obb(path: &PathSpec, p_tilde: f64, xi: f64, fp: &VehicleFootprint) -> Obb {
    let (x, y, psi) = path.pose(p_tilde);
    Obb {
        center: (x - xi * psi.sin(), y + xi * psi.cos()),
        heading: psi,
        half_extents: fp.half_extents(),
    }
}

/// Union of footprints for every offset in `[xi_lo, xi_hi]` at one projection.
///
/// Translating a box along its own lateral axis sweeps exactly a box, so the
/// union over an offset interval is a single wider box.
pub fn swept_obb(
    path: &PathSpec,
    p_tilde: f64,
    xi_lo: f64,
    xi_hi: f64,
    fp: &VehicleFootprint,
) -> Obb {
    let mut obb = footprint_obb(path, p_tilde, 0.5 * (xi_lo + xi_hi), fp);
    obb.half_extents.1 += 0.5 * (xi_hi - xi_lo);
    obb
}
