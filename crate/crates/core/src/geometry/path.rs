//! Arc-length parameterized reference paths built from constant-curvature pieces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A straight line (`curvature == 0`) or circular arc starting at a pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub x0: f64,
    pub y0: f64,
    pub psi0: f64,
    pub length: f64,
    /// Signed curvature, positive turns counterclockwise.
    pub curvature: f64,
}

impl Primitive {
    pub fn pose(&self, s: f64) -> (f64, f64, f64) {
        let k = self.curvature;
        let psi = self.psi0 + k * s;
        if k.abs() < 1e-12 {
            (
                self.x0 + s * self.psi0.cos(),
                self.y0 + s * self.psi0.sin(),
                psi,
            )
        } else {
            (
                self.x0 + (psi.sin() - self.psi0.sin()) / k,
                self.y0 - (psi.cos() - self.psi0.cos()) / k,
                psi,
            )
        }
    }

    pub fn end_pose(&self) -> (f64, f64, f64) {
        self.pose(self.length)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub p: f64,
    pub x: f64,
    pub y: f64,
    pub kappa: f64,
    pub psi: f64,
    pub v_lim: f64,
}

/// A reference path sampled uniformly in arc length.
///
/// Samples are what the planner grids on; pose queries between samples use the
/// exact primitives so projection round trips stay well below the grid spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub path_id: String,
    pub samples: Vec<PathSample>,
    pub length: f64,
    pub segments: Vec<Primitive>,
    seg_start: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub p_tilde: f64,
    pub offset: f64,
}

/// Window (m) around a hint inside which projection candidates are preferred.
pub const HINT_WINDOW: f64 = 15.0;

impl PathSpec {
    pub fn from_primitives(
        path_id: impl Into<String>,
        segments: Vec<Primitive>,
        step: f64,
        v_lim: f64,
    ) -> Result<Self> {
        if !(step > 0.0) || segments.is_empty() || !(v_lim > 0.0) {
            return Err(Error::Geometry(
                "invalid path construction arguments".into(),
            ));
        }
        let mut seg_start = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for s in &segments {
            if !(s.length > 0.0) {
                return Err(Error::Geometry("segment with non-positive length".into()));
            }
            seg_start.push(acc);
            acc += s.length;
        }
        let mut path = PathSpec {
            path_id: path_id.into(),
            samples: Vec::new(),
            length: acc,
            segments,
            seg_start,
        };
        let n = (acc / step + 1e-9).floor() as usize;
        let mut ps: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        if acc - ps[n] > 1e-9 {
            ps.push(acc);
        } else {
            ps[n] = acc;
        }
        path.samples = ps
            .into_iter()
            .map(|p| {
                let (x, y, psi) = path.pose(p);
                PathSample {
                    p,
                    x,
                    y,
                    kappa: path.curvature_at(p),
                    psi,
                    v_lim,
                }
            })
            .collect();
        Ok(path)
    }

    fn segment_index(&self, p: f64) -> usize {
        match self.seg_start.partition_point(|&s| s <= p) {
            0 => 0,
            i => i - 1,
        }
    }

    /// Pose (x, y, psi) at arc length `p`; beyond the ends the path continues straight.
    pub fn pose(&self, p: f64) -> (f64, f64, f64) {
        if p <= 0.0 {
            let (x, y, psi) = self.segments[0].pose(0.0);
            return (x + p * psi.cos(), y + p * psi.sin(), psi);
        }
        if p >= self.length {
            let (x, y, psi) = self.segments.last().unwrap().end_pose();
            let d = p - self.length;
            return (x + d * psi.cos(), y + d * psi.sin(), psi);
        }
        let i = self.segment_index(p);
        self.segments[i].pose(p - self.seg_start[i])
    }

    pub fn heading(&self, p: f64) -> f64 {
        self.pose(p).2
    }

    /// Signed curvature; at a junction the larger magnitude wins.
    pub fn signed_curvature_at(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, self.length);
        let i = self.segment_index(p);
        let mut k = self.segments[i].curvature;
        for (j, &s) in self.seg_start.iter().enumerate().skip(1) {
            if (p - s).abs() < 1e-9 {
                for c in [self.segments[j - 1].curvature, self.segments[j].curvature] {
                    if c.abs() > k.abs() {
                        k = c;
                    }
                }
            }
        }
        k
    }

    pub fn curvature_at(&self, p: f64) -> f64 {
        self.signed_curvature_at(p).abs()
    }

    pub fn v_lim_at(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, self.length);
        let i = self
            .samples
            .partition_point(|s| s.p <= p)
            .clamp(1, self.samples.len())
            - 1;
        self.samples[i].v_lim
    }

    /// Interior points where curvature changes.
    pub fn breakpoints(&self) -> &[f64] {
        &self.seg_start[1..]
    }

    /// Range of arc length spent on curved segments, if any.
    pub fn curved_range(&self) -> Option<(f64, f64)> {
        let mut r: Option<(f64, f64)> = None;
        for (i, s) in self.segments.iter().enumerate() {
            if s.curvature != 0.0 {
                let a = self.seg_start[i];
                let b = a + s.length;
                r = Some(match r {
                    None => (a, b),
                    Some((lo, hi)) => (lo.min(a), hi.max(b)),
                });
            }
        }
        r
    }

    pub fn start_point(&self) -> (f64, f64) {
        (self.samples[0].x, self.samples[0].y)
    }

    pub fn end_point(&self) -> (f64, f64) {
        let s = self.samples.last().unwrap();
        (s.x, s.y)
    }

    /// Refine a projection estimate by Newton on the orthogonality residual.
    fn refine(&self, point: (f64, f64), mut p: f64) -> (f64, f64, f64) {
        for _ in 0..50 {
            let (x, y, psi) = self.pose(p);
            let (dx, dy) = (point.0 - x, point.1 - y);
            let (c, s) = (psi.cos(), psi.sin());
            let f = c * dx + s * dy;
            let xi = -s * dx + c * dy;
            let k = if p > 0.0 && p < self.length {
                self.signed_curvature_at(p)
            } else {
                0.0
            };
            let mut fp = k * xi - 1.0;
            if fp.abs() < 1e-3 {
                fp = -1.0;
            }
            let next = (p - f / fp).clamp(0.0, self.length);
            let done = (next - p).abs() < 1e-13;
            p = next;
            if done {
                break;
            }
        }
        let (x, y, psi) = self.pose(p);
        let (dx, dy) = (point.0 - x, point.1 - y);
        let xi = -psi.sin() * dx + psi.cos() * dy;
        (p, xi, dx.hypot(dy))
    }

    /// Projection of a planar point onto the path.
    ///
    /// Local minima of the sampled distance are refined; if two of them are
    /// equally close the hint decides, and without a hint this is an error.
    pub fn project(&self, point: (f64, f64), hint: Option<f64>) -> Result<Projection> {
        let d: Vec<f64> = self
            .samples
            .iter()
            .map(|s| (point.0 - s.x).hypot(point.1 - s.y))
            .collect();
        let n = d.len();
        let mut cands: Vec<(f64, f64, f64)> = Vec::new();
        for i in 0..n {
            let left = i == 0 || d[i] <= d[i - 1];
            let right = i + 1 == n || d[i] <= d[i + 1];
            if left && right {
                let c = self.refine(point, self.samples[i].p);
                if !cands.iter().any(|o| (o.0 - c.0).abs() < 1e-6) {
                    cands.push(c);
                }
            }
        }
        cands.sort_by(|a, b| a.2.total_cmp(&b.2));
        let best = cands[0];
        let tied: Vec<_> = cands
            .iter()
            .copied()
            .filter(|c| c.2 <= best.2 + 1e-6)
            .collect();
        let chosen = match hint {
            Some(h) => {
                let near = cands
                    .iter()
                    .filter(|c| (c.0 - h).abs() <= HINT_WINDOW)
                    .min_by(|a, b| a.2.total_cmp(&b.2));
                match near {
                    Some(c) => *c,
                    None => *tied
                        .iter()
                        .min_by(|a, b| (a.0 - h).abs().total_cmp(&(b.0 - h).abs()))
                        .unwrap(),
                }
            }
            None => {
                if tied.len() > 1 {
                    return Err(Error::AmbiguousProjection {
                        path: self.path_id.clone(),
                        x: point.0,
                        y: point.1,
                    });
                }
                best
            }
        };
        Ok(Projection {
            p_tilde: chosen.0,
            offset: chosen.1,
        })
    }

    /// Point at lateral offset `xi` (positive to the left) from the path at `p_tilde`.
    pub fn offset_point(&self, p_tilde: f64, xi: f64) -> (f64, f64) {
        let (x, y, psi) = self.pose(p_tilde);
        (x - xi * psi.sin(), y + xi * psi.cos())
    }
}

/// Free-function form of [`PathSpec::project`].
pub fn project_to_path(
    path: &PathSpec,
    point: (f64, f64),
    hint: Option<f64>,
) -> Result<Projection> {
    path.project(point, hint)
}

/// Free-function form of [`PathSpec::offset_point`].
pub fn offset_point(path: &PathSpec, p_tilde: f64, xi: f64) -> (f64, f64) {
    path.offset_point(p_tilde, xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_north() -> PathSpec {
        let seg = Primitive {
            x0: 0.0,
            y0: 0.0,
            psi0: std::f64::consts::FRAC_PI_2,
            length: 100.0,
            curvature: 0.0,
        };
        PathSpec::from_primitives("n", vec![seg], 1.0, 10.0).unwrap()
    }

    #[test]
    fn on_path_point_projects_to_itself() {
        let p = straight_north();
        let (x, y) = p.offset_point(30.0, 0.0);
        let pr = p.project((x, y), None).unwrap();
        assert!((pr.p_tilde - 30.0).abs() < 1e-9 && pr.offset.abs() < 1e-9);
    }

    #[test]
    fn left_offset_is_positive() {
        let p = straight_north();
        let pr = p.project((-0.5, 40.0), None).unwrap();
        assert!((pr.offset - 0.5).abs() < 1e-12);
        assert!((pr.p_tilde - 40.0).abs() < 1e-12);
    }

    #[test]
    fn east_heading_offset_moves_north() {
        let seg = Primitive {
            x0: 0.0,
            y0: 0.0,
            psi0: 0.0,
            length: 10.0,
            curvature: 0.0,
        };
        let p = PathSpec::from_primitives("e", vec![seg], 1.0, 10.0).unwrap();
        let (x, y) = p.offset_point(3.0, 1.0);
        assert!((x - 3.0).abs() < 1e-12 && (y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_hits_the_end() {
        let seg = Primitive {
            x0: 0.0,
            y0: 0.0,
            psi0: 0.0,
            length: 10.5,
            curvature: 0.0,
        };
        let p = PathSpec::from_primitives("e", vec![seg], 1.0, 10.0).unwrap();
        assert_eq!(p.samples.len(), 12);
        assert_eq!(p.samples.last().unwrap().p, 10.5);
    }
}
