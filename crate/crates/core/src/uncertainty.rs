//! HDV path and speed uncertainty: offset envelopes, travel-distance deviation
//! bounds, speed envelopes and travel-time envelopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PathSpec;

/// Piecewise-linear function of projection distance, held constant outside its knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundProfile {
    Constant(f64),
    Knots(Vec<(f64, f64)>),
}

impl BoundProfile {
    pub fn eval(&self, p: f64) -> f64 {
        match self {
            BoundProfile::Constant(v) => *v,
            BoundProfile::Knots(k) => interp(k, p),
        }
    }

    /// Ramp between a lane value and a (usually wider) central-area value.
    ///
    /// The ramp begins where the path enters the central area and has slope
    /// `slope`, so the profile never changes faster than the yaw envelope allows.
    pub fn lane_and_central(
        path: &PathSpec,
        central_half_width: f64,
        lane: f64,
        central: f64,
        slope: f64,
    ) -> Self {
        let (a, b) = central_range(path, central_half_width);
        let full = (central - lane).abs() / slope.max(1e-9);
        let r = full.min(0.5 * (b - a));
        let c = if full > 0.0 {
            lane + (central - lane) * r / full
        } else {
            central
        };
        BoundProfile::Knots(vec![(a, lane), (a + r, c), (b - r, c), (b, lane)])
    }
}

/// Arc-length interval of a path inside the square central area.
pub fn central_range(path: &PathSpec, central_half_width: f64) -> (f64, f64) {
    let inside = |p: f64| {
        let (x, y, _) = path.pose(p);
        x.abs() <= central_half_width + 1e-9 && y.abs() <= central_half_width + 1e-9
    };
    let ps: Vec<f64> = path.samples.iter().map(|s| s.p).collect();
    let first = ps.iter().copied().find(|&p| inside(p));
    let last = ps.iter().rev().copied().find(|&p| inside(p));
    match (first, last) {
        (Some(a), Some(b)) => (a, b),
        _ => (path.length / 2.0, path.length / 2.0),
    }
}

fn interp(k: &[(f64, f64)], p: f64) -> f64 {
    if k.is_empty() {
        return 0.0;
    }
    if p <= k[0].0 {
        return k[0].1;
    }
    if p >= k[k.len() - 1].0 {
        return k[k.len() - 1].1;
    }
    let i = k.partition_point(|q| q.0 <= p) - 1;
    let (a, b) = (k[i], k[i + 1]);
    if b.0 - a.0 <= 0.0 {
        return b.1;
    }
    a.1 + (b.1 - a.1) * (p - a.0) / (b.0 - a.0)
}

/// Linear interpolation on a sorted grid, holding end values.
pub fn interp_grid(grid: &[f64], vals: &[f64], p: f64) -> f64 {
    let n = grid.len();
    if p <= grid[0] {
        return vals[0];
    }
    if p >= grid[n - 1] {
        return vals[n - 1];
    }
    let i = grid.partition_point(|&g| g <= p) - 1;
    let h = grid[i + 1] - grid[i];
    if h <= 0.0 {
        return vals[i + 1];
    }
    vals[i] + (vals[i + 1] - vals[i]) * (p - grid[i]) / h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetEnvelope {
    pub grid: Vec<f64>,
    pub xi_min: Vec<f64>,
    pub xi_max: Vec<f64>,
    pub xi_init: f64,
    pub yaw_min: Vec<f64>,
    pub yaw_max: Vec<f64>,
    pub physical_min: Vec<f64>,
    pub physical_max: Vec<f64>,
}

impl OffsetEnvelope {
    pub fn bounds_at(&self, p: f64) -> (f64, f64) {
        (
            interp_grid(&self.grid, &self.xi_min, p),
            interp_grid(&self.grid, &self.xi_max, p),
        )
    }

    pub fn width_at(&self, p: f64) -> f64 {
        let (a, b) = self.bounds_at(p);
        b - a
    }
}

/// Grid starting at `p0` followed by every path sample beyond it.
pub fn grid_from(path: &PathSpec, p0: f64) -> Vec<f64> {
    let p0 = p0.clamp(0.0, path.length);
    let mut g = vec![p0];
    g.extend(path.samples.iter().map(|s| s.p).filter(|&p| p > p0 + 1e-9));
    if g.len() == 1 {
        g.push(path.length.max(p0 + 1e-9));
    }
    g
}

pub fn build_offset_envelope(
    path: &PathSpec,
    p0: f64,
    xi_init: f64,
    yaw_bounds: (&BoundProfile, &BoundProfile),
    physical_bounds: (&BoundProfile, &BoundProfile),
) -> Result<OffsetEnvelope> {
    let grid = grid_from(path, p0);
    let ev = |b: &BoundProfile| grid.iter().map(|&p| b.eval(p)).collect::<Vec<_>>();
    let (yaw_min, yaw_max) = (ev(yaw_bounds.0), ev(yaw_bounds.1));
    let (physical_min, physical_max) = (ev(physical_bounds.0), ev(physical_bounds.1));
    if xi_init < physical_min[0] - 1e-12 || xi_init > physical_max[0] + 1e-12 {
        return Err(Error::Uncertainty(format!(
            "initial offset {xi_init:.4} outside physical bounds [{:.4}, {:.4}]",
            physical_min[0], physical_max[0]
        )));
    }
    let n = grid.len();
    let (mut xi_min, mut xi_max) = (vec![xi_init; n], vec![xi_init; n]);
    let (mut up, mut lo) = (0.0, 0.0);
    for k in 1..n {
        let h = grid[k] - grid[k - 1];
        up += 0.5 * h * (yaw_max[k - 1].tan() + yaw_max[k].tan());
        lo += 0.5 * h * (yaw_min[k - 1].tan() + yaw_min[k].tan());
        xi_max[k] = physical_max[k].min(xi_init + up);
        xi_min[k] = physical_min[k].max(xi_init + lo);
        if xi_min[k] > xi_max[k] {
            let m = 0.5 * (xi_min[k] + xi_max[k]);
            xi_min[k] = m;
            xi_max[k] = m;
        }
    }
    Ok(OffsetEnvelope {
        grid,
        xi_min,
        xi_max,
        xi_init,
        yaw_min,
        yaw_max,
        physical_min,
        physical_max,
    })
}

/// How travel-distance deviation bounds are derived from the offset envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaModel {
    /// `±scale·(xi_max − xi_min)` at each projection.
    EnvelopeWidth { scale: f64 },
    /// Integrated bounds on the realized arc-length rate `sqrt((1 − κξ)² + ξ'²)`.
    Geometric,
}

impl Default for OmegaModel {
    fn default() -> Self {
        OmegaModel::EnvelopeWidth { scale: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdvParams {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub alpha: f64,
    pub a_c_max_hat: f64,
    pub yaw_min: BoundProfile,
    pub yaw_max: BoundProfile,
    pub physical_min: BoundProfile,
    pub physical_max: BoundProfile,
    #[serde(default)]
    pub omega: OmegaModel,
}

impl HdvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_min <= 0.0 && self.gamma_max >= 0.0) {
            return Err(Error::Uncertainty(
                "require gamma_min <= 0 <= gamma_max".into(),
            ));
        }
        if !(self.alpha > 0.0) || !(self.a_c_max_hat > 0.0) {
            return Err(Error::Uncertainty(
                "alpha and a_c_max_hat must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HdvUncertainty {
    pub params: HdvParams,
    pub p0: f64,
    pub v0: f64,
    pub offset_env: OffsetEnvelope,
    pub omega_min: Vec<f64>,
    pub omega_max: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClampWarning {
    pub observed: f64,
    pub clamped: f64,
}

impl HdvUncertainty {
    pub fn new(
        path: &PathSpec,
        params: HdvParams,
        p0: f64,
        xi0: f64,
        v0: f64,
    ) -> Result<(Self, Option<ClampWarning>)> {
        params.validate()?;
        let (lo, hi) = (params.physical_min.eval(p0), params.physical_max.eval(p0));
        let xi = xi0.clamp(lo, hi);
        let warn = ((xi - xi0).abs() > 1e-9).then_some(ClampWarning {
            observed: xi0,
            clamped: xi,
        });
        let env = build_offset_envelope(
            path,
            p0,
            xi,
            (&params.yaw_min, &params.yaw_max),
            (&params.physical_min, &params.physical_max),
        )?;
        let (omega_min, omega_max) = omega_bounds(path, &env, params.omega);
        Ok((
            HdvUncertainty {
                params,
                p0: env.grid[0],
                v0: v0.max(0.0),
                offset_env: env,
                omega_min,
                omega_max,
            },
            warn,
        ))
    }

    pub fn gamma_min(&self) -> f64 {
        self.params.gamma_min
    }

    pub fn gamma_max(&self) -> f64 {
        self.params.gamma_max
    }

    pub fn omega_at(&self, p: f64) -> (f64, f64) {
        let g = &self.offset_env.grid;
        (
            interp_grid(g, &self.omega_min, p),
            interp_grid(g, &self.omega_max, p),
        )
    }
}

pub fn omega_bounds(
    path: &PathSpec,
    env: &OffsetEnvelope,
    model: OmegaModel,
) -> (Vec<f64>, Vec<f64>) {
    let n = env.grid.len();
    match model {
        OmegaModel::EnvelopeWidth { scale } => {
            let w: Vec<f64> = (0..n)
                .map(|k| scale * (env.xi_max[k] - env.xi_min[k]))
                .collect();
            (w.iter().map(|v| -v).collect(), w)
        }
        OmegaModel::Geometric => {
            // rate bounds evaluated on each interval's worst case
            let mut om_lo = vec![0.0; n];
            let mut om_hi = vec![0.0; n];
            for k in 1..n {
                let (a, b) = (env.grid[k - 1], env.grid[k]);
                let h = b - a;
                let xlo = env.xi_min[k - 1].min(env.xi_min[k]);
                let xhi = env.xi_max[k - 1].max(env.xi_max[k]);
                let tan = env.yaw_min[k - 1]
                    .abs()
                    .max(env.yaw_max[k - 1].abs())
                    .max(env.yaw_min[k].abs())
                    .max(env.yaw_max[k].abs())
                    .tan();
                let (mut fmax, mut fmin) = (0.0f64, f64::INFINITY);
                for p in [a + 1e-7 * h, 0.5 * (a + b), b - 1e-7 * h] {
                    let ks = path.signed_curvature_at(p);
                    let (f1, f2) = (1.0 - ks * xlo, 1.0 - ks * xhi);
                    fmax = fmax.max(f1.abs()).max(f2.abs());
                    fmin = fmin.min(if f1 * f2 <= 0.0 {
                        0.0
                    } else {
                        f1.abs().min(f2.abs())
                    });
                }
                let rate_hi = (fmax * fmax + tan * tan).sqrt().max(1.0);
                let rate_lo = fmin.min(1.0);
                om_hi[k] = om_hi[k - 1] + h * (rate_hi - 1.0);
                om_lo[k] = om_lo[k - 1] + h * (rate_lo - 1.0);
            }
            (om_lo, om_hi)
        }
    }
}

/// Upper speed estimate from reference geometry and assumed centripetal limit.
pub fn hdv_speed_cap(path: &PathSpec, a_c_hat: f64, p: f64) -> f64 {
    let p = p.min(path.length);
    let k = path.curvature_at(p);
    let vc = if k > 0.0 {
        (a_c_hat / k).sqrt()
    } else {
        f64::INFINITY
    };
    path.v_lim_at(p).min(vc)
}

/// Per-interval refinement of the path grid used for the travel-time integrals.
pub const SUBSTEPS: usize = 4;

/// Lower/upper speed envelopes along traveled distance with cumulative inverse-speed integrals.
///
/// Nodes come in (left, right) pairs at curvature breakpoints so that the
/// integrand's jumps are represented exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedEnvelope {
    pub p0: f64,
    pub grid: Vec<f64>,
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    cum_lo: Vec<f64>,
    cum_hi: Vec<f64>,
}

fn speed_profile(
    path: &PathSpec,
    params: &HdvParams,
    v0: f64,
    p0: f64,
    beta: f64,
    gamma: f64,
    p: f64,
    k: f64,
) -> f64 {
    let vbar = (2.0 * gamma * (p - p0) + v0 * v0).max(0.0).sqrt();
    let vc = if k > 0.0 {
        (params.a_c_max_hat / k).sqrt()
    } else {
        f64::INFINITY
    };
    let cap = beta * path.v_lim_at(p.min(path.length)).min(vc);
    vbar.max(params.alpha).min(cap)
}

pub fn estimate_speed_envelope(
    path: &PathSpec,
    unc: &HdvUncertainty,
    v0: f64,
    p0: f64,
) -> SpeedEnvelope {
    let prm = &unc.params;
    let beta = (v0 / hdv_speed_cap(path, prm.a_c_max_hat, p0)).max(1.0);
    let mut knots: Vec<f64> = grid_from(path, p0);
    knots.extend(
        path.breakpoints()
            .iter()
            .copied()
            .filter(|&b| b > p0 + 1e-9),
    );
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut grid = Vec::new();
    let (mut v_lo, mut v_hi) = (Vec::new(), Vec::new());
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let k = path.curvature_at(0.5 * (a + b));
        for s in 0..=SUBSTEPS {
            let p = a + (b - a) * s as f64 / SUBSTEPS as f64;
            grid.push(p);
            v_lo.push(speed_profile(path, prm, v0, p0, beta, prm.gamma_min, p, k));
            v_hi.push(speed_profile(path, prm, v0, p0, beta, prm.gamma_max, p, k));
        }
    }
    if grid.is_empty() {
        // at or past the path end
        let k = path.curvature_at(p0.min(path.length));
        grid.push(p0);
        v_lo.push(speed_profile(path, prm, v0, p0, beta, prm.gamma_min, p0, k));
        v_hi.push(speed_profile(path, prm, v0, p0, beta, prm.gamma_max, p0, k));
    }
    let cum = |v: &[f64]| {
        let mut c = vec![0.0; v.len()];
        for i in 1..v.len() {
            c[i] = c[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (1.0 / v[i - 1] + 1.0 / v[i]);
        }
        c
    };
    let (cum_lo, cum_hi) = (cum(&v_lo), cum(&v_hi));
    SpeedEnvelope {
        p0,
        grid,
        v_lo,
        v_hi,
        cum_lo,
        cum_hi,
    }
}

impl SpeedEnvelope {
    fn integral(&self, v: &[f64], cum: &[f64], p: f64) -> f64 {
        let g = &self.grid;
        if p <= g[0] {
            return 0.0;
        }
        let n = g.len();
        if p >= g[n - 1] {
            return cum[n - 1];
        }
        let i = g.partition_point(|&x| x <= p) - 1;
        let h = g[i + 1] - g[i];
        if h <= 0.0 {
            return cum[i];
        }
        let s = p - g[i];
        let (fa, fb) = (1.0 / v[i], 1.0 / v[i + 1]);
        let fs = fa + (fb - fa) * s / h;
        cum[i] + 0.5 * s * (fa + fs)
    }

    /// ∫ 1/v_lo from p0 to p.
    pub fn time_lo_speed(&self, p: f64) -> f64 {
        self.integral(&self.v_lo, &self.cum_lo, p)
    }

    /// ∫ 1/v_hi from p0 to p.
    pub fn time_hi_speed(&self, p: f64) -> f64 {
        self.integral(&self.v_hi, &self.cum_hi, p)
    }

    pub fn v_lo_at(&self, p: f64) -> f64 {
        interp_grid(&self.grid, &self.v_lo, p)
    }

    pub fn v_hi_at(&self, p: f64) -> f64 {
        interp_grid(&self.grid, &self.v_hi, p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TravelTimeEnvelope {
    pub grid: Vec<f64>,
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
    speed: SpeedEnvelope,
    omega_grid: Vec<f64>,
    omega_min: Vec<f64>,
    omega_max: Vec<f64>,
    length: f64,
}

impl TravelTimeEnvelope {
    pub fn t_max_at(&self, p_tilde: f64) -> f64 {
        let om = interp_grid(&self.omega_grid, &self.omega_max, p_tilde);
        self.speed
            .time_lo_speed((p_tilde + om).clamp(self.speed.p0, self.length))
    }

    pub fn t_min_at(&self, p_tilde: f64) -> f64 {
        let om = interp_grid(&self.omega_grid, &self.omega_min, p_tilde);
        self.speed
            .time_hi_speed((p_tilde + om).clamp(self.speed.p0, self.length))
    }

    pub fn speed(&self) -> &SpeedEnvelope {
        &self.speed
    }
}

pub fn travel_time_envelope(path: &PathSpec, unc: &HdvUncertainty, v0: f64) -> TravelTimeEnvelope {
    let speed = estimate_speed_envelope(path, unc, v0, unc.p0);
    let mut env = TravelTimeEnvelope {
        grid: unc.offset_env.grid.clone(),
        t_min: Vec::new(),
        t_max: Vec::new(),
        speed,
        omega_grid: unc.offset_env.grid.clone(),
        omega_min: unc.omega_min.clone(),
        omega_max: unc.omega_max.clone(),
        length: path.length,
    };
    env.t_min = env.grid.iter().map(|&p| env.t_min_at(p)).collect();
    env.t_max = env.grid.iter().map(|&p| env.t_max_at(p)).collect();
    env
}

/// Re-anchor the uncertainty description at a new observation.
pub fn update_from_observation(
    unc: &HdvUncertainty,
    observed: (f64, f64),
    v_obs: f64,
    path: &PathSpec,
    hint: Option<f64>,
) -> Result<(HdvUncertainty, Option<ClampWarning>)> {
    let pr = path.project(observed, hint.or(Some(unc.p0)))?;
    HdvUncertainty::new(path, unc.params.clone(), pr.p_tilde, pr.offset, v_obs)
}
