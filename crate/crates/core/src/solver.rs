//! QP solve contract and the sequential convex programming loop.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::conflict::VehicleId;
use crate::error::{Error, Result};
use crate::ocp::{CostKind, OcpProblem, SampleGrid, SpatialQp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScpMode {
    Rti,
    Stc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSettings {
    pub mode: ScpMode,
    pub qp_tolerance: f64,
    pub scp_tolerance: f64,
    pub max_scp_iters: usize,
    pub warm_start: bool,
    /// In RTI mode, solve the first MPC update to convergence to seed later linearizations.
    #[serde(default = "yes")]
    pub converge_first: bool,
}

fn yes() -> bool {
    true
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            mode: ScpMode::Rti,
            qp_tolerance: 1e-8,
            scp_tolerance: 1e-6,
            max_scp_iters: 100,
            warm_start: true,
            converge_first: true,
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.qp_tolerance > 0.0 && self.scp_tolerance > 0.0) || self.max_scp_iters == 0 {
            return Err(Error::Scenario(
                "solver tolerances must be positive and max_scp_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Solved, but the KKT residual is above the requested tolerance.
    Inaccurate,
    MaxIters,
    Infeasible,
}

/// Scaled KKT residuals of a primal-dual pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers in the order: equalities, inequalities, finite bounds.
    pub y: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: u32,
    pub solve_time: f64,
    pub kkt: KktResiduals,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Stacked {
    a_rows: Vec<usize>,
    a_cols: Vec<usize>,
    a_vals: Vec<f64>,
    b: Vec<f64>,
    n_eq: usize,
}

fn stack(qp: &SpatialQp) -> Stacked {
    let mut st = Stacked {
        a_rows: Vec::new(),
        a_cols: Vec::new(),
        a_vals: Vec::new(),
        b: Vec::new(),
        n_eq: qp.eq.len(),
    };
    let mut m = 0;
    for r in qp.eq.iter().chain(&qp.ineq) {
        for &(i, a) in &r.coefs {
            st.a_rows.push(m);
            st.a_cols.push(i);
            st.a_vals.push(a);
        }
        st.b.push(r.rhs);
        m += 1;
    }
    for i in 0..qp.n {
        if qp.upper[i].is_finite() {
            st.a_rows.push(m);
            st.a_cols.push(i);
            st.a_vals.push(1.0);
            st.b.push(qp.upper[i]);
            m += 1;
        }
        if qp.lower[i].is_finite() {
            st.a_rows.push(m);
            st.a_cols.push(i);
            st.a_vals.push(-1.0);
            st.b.push(-qp.lower[i]);
            m += 1;
        }
    }
    st
}

pub fn kkt_residuals(qp: &SpatialQp, x: &[f64], y: &[f64]) -> KktResiduals {
    let st = stack(qp);
    let m = st.b.len();
    let mut ax = vec![0.0; m];
    let mut aty = vec![0.0; qp.n];
    for k in 0..st.a_vals.len() {
        ax[st.a_rows[k]] += st.a_vals[k] * x[st.a_cols[k]];
        aty[st.a_cols[k]] += st.a_vals[k] * y[st.a_rows[k]];
    }
    let px = qp.hess_mul(x);
    let grad: Vec<f64> = (0..qp.n).map(|i| px[i] + qp.lin[i] + aty[i]).collect();
    let mut prim = 0.0f64;
    let mut comp = 0.0f64;
    for r in 0..m {
        let res = ax[r] - st.b[r];
        if r < st.n_eq {
            prim = prim.max(res.abs());
        } else {
            prim = prim.max(res.max(0.0));
            prim = prim.max((-y[r]).max(0.0));
            comp = comp.max((res * y[r]).abs());
        }
    }
    let obj = qp.objective(x);
    KktResiduals {
        primal: prim / (1.0 + inf_norm(&st.b).max(inf_norm(&ax))),
        dual: inf_norm(&grad) / (1.0 + inf_norm(&px).max(inf_norm(&qp.lin)).max(inf_norm(&aty))),
        complementarity: comp / (1.0 + obj.abs()),
    }
}

/// Solves one convex QP with the interior-point backend.
pub fn solve_qp(qp: &SpatialQp, settings: &SolveSettings) -> Result<QpSolution> {
    let start = Instant::now();
    let st = stack(qp);
    let m = st.b.len();
    let (pi, (pj, pv)): (Vec<usize>, (Vec<usize>, Vec<f64>)) =
        qp.hess.iter().map(|&(r, c, v)| (r, (c, v))).unzip();
    let p = CscMatrix::new_from_triplets(qp.n, qp.n, pi, pj, pv);
    let a = CscMatrix::new_from_triplets(
        m,
        qp.n,
        st.a_rows.clone(),
        st.a_cols.clone(),
        st.a_vals.clone(),
    );
    let mut cones = Vec::new();
    if st.n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(st.n_eq));
    }
    if m > st.n_eq {
        cones.push(SupportedConeT::NonnegativeConeT(m - st.n_eq));
    }
    let mut cs = DefaultSettings::<f64>::default();
    cs.verbose = false;
    cs.max_iter = 200;
    cs.tol_gap_abs = 1e-10;
    cs.tol_gap_rel = 1e-10;
    cs.tol_feas = 1e-10;
    cs.tol_ktratio = 1e-8;
    cs.reduced_tol_gap_abs = 1e-7;
    cs.reduced_tol_gap_rel = 1e-7;
    cs.reduced_tol_feas = 1e-7;
    cs.presolve_enable = false;
    cs.max_threads = 1;
    let mut solver = DefaultSolver::new(&p, &qp.lin, &a, &st.b, &cones, cs)
        .map_err(|e| Error::Solver(format!("setup failed: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIters,
        SolverStatus::InsufficientProgress => SolveStatus::Inaccurate,
        other => return Err(Error::Solver(format!("backend status {other:?}"))),
    };
    if status == SolveStatus::Infeasible {
        let (_, row) = qp.max_violation(&sol.x);
        return Err(Error::Infeasible {
            status: format!("{:?}", sol.status),
            row,
            dump: Some(Box::new(qp.dump())),
        });
    }
    let x = sol.x.clone();
    let y = sol.z.clone();
    let kkt = kkt_residuals(qp, &x, &y);
    let status = if status == SolveStatus::Optimal && kkt.max() > settings.qp_tolerance {
        SolveStatus::Inaccurate
    } else {
        status
    };
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        y,
        status,
        iterations: sol.iterations,
        solve_time: start.elapsed().as_secs_f64(),
        kkt,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavTrajectory {
    pub id: VehicleId,
    pub grid: SampleGrid,
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

impl CavTrajectory {
    /// Travel time at position `p`, exact for the piecewise-constant control.
    pub fn time_at(&self, p: f64) -> f64 {
        let g = &self.grid;
        let rel = (p - g.p0).max(0.0);
        let k = ((rel / g.dp).floor() as usize).min(g.k - 1);
        let s = rel - k as f64 * g.dp;
        self.t[k] + s * self.z[k] + 0.5 * s * s * self.u[k]
    }

    pub fn lethargy_at(&self, p: f64) -> f64 {
        let g = &self.grid;
        let rel = (p - g.p0).max(0.0);
        let k = ((rel / g.dp).floor() as usize).min(g.k - 1);
        let s = rel - k as f64 * g.dp;
        self.z[k] + s * self.u[k]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: f64,
    pub kkt: KktResiduals,
    pub solve_time: f64,
    pub qp_iterations: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub trajectories: Vec<CavTrajectory>,
    pub slack: Vec<f64>,
    pub objective: f64,
    pub scp_iterations: usize,
    pub qp_solve_time: f64,
    pub status: SolveStatus,
    pub history: Vec<IterationRecord>,
}

impl SolveResult {
    pub fn max_slack(&self) -> f64 {
        self.slack.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

fn extract(problem: &OcpProblem, qp: &SpatialQp, x: &[f64]) -> (Vec<CavTrajectory>, Vec<f64>) {
    let trajs = problem
        .cavs
        .iter()
        .zip(&qp.cavs)
        .map(|(c, l)| CavTrajectory {
            id: c.id,
            grid: c.grid,
            t: (0..=l.k).map(|i| x[l.t(i)]).collect(),
            z: (0..=l.k).map(|i| x[l.z(i)]).collect(),
            u: (0..l.k).map(|i| x[l.u(i)]).collect(),
        })
        .collect();
    (trajs, qp.slack.iter().map(|&s| x[s]).collect())
}

/// Sequential convex programming: one subproblem in RTI mode, iterate to a stable objective in STC mode.
pub fn scp_solve(
    problem: &OcpProblem,
    z_lin0: Vec<Vec<f64>>,
    settings: &SolveSettings,
) -> Result<SolveResult> {
    let mut z_lin = z_lin0;
    let mut history = Vec::new();
    let mut total_time = 0.0;
    let mut last: Option<(Vec<CavTrajectory>, Vec<f64>, f64)> = None;
    let mut status = SolveStatus::MaxIters;
    let max_iters = if settings.mode == ScpMode::Rti {
        1
    } else {
        settings.max_scp_iters
    };
    for it in 1..=max_iters {
        let qp = problem.assemble(&z_lin);
        let sol = solve_qp(&qp, settings)?;
        total_time += sol.solve_time;
        history.push(IterationRecord {
            objective: sol.objective,
            kkt: sol.kkt,
            solve_time: sol.solve_time,
            qp_iterations: sol.iterations,
        });
        let (trajs, slack) = extract(problem, &qp, &sol.x);
        let prev_obj = last.as_ref().map(|l| l.2);
        z_lin = trajs.iter().map(|t| t.z.clone()).collect();
        last = Some((trajs, slack, sol.objective));
        if sol.status != SolveStatus::Optimal {
            status = sol.status;
            if sol.status == SolveStatus::MaxIters {
                break;
            }
        } else {
            status = SolveStatus::Optimal;
        }
        if settings.mode == ScpMode::Rti {
            break;
        }
        if let Some(p) = prev_obj {
            if it >= 2
                && (p - sol.objective).abs()
                    <= settings.scp_tolerance * sol.objective.abs().max(1e-12)
            {
                break;
            }
        }
        if it == max_iters {
            status = SolveStatus::MaxIters;
        }
    }
    let (trajectories, slack, objective) = last.expect("at least one iteration");
    Ok(SolveResult {
        trajectories,
        slack,
        objective,
        scp_iterations: history.len(),
        qp_solve_time: total_time,
        status,
        history,
    })
}

/// Linearization lethargy for the first MPC iteration.
pub fn initial_linearization(kind: CostKind, v_ref: &[f64], v_max: &[f64]) -> Vec<f64> {
    match kind {
        CostKind::SpeedTracking => v_ref.iter().map(|v| 1.0 / v).collect(),
        CostKind::TravelTime => v_max.iter().map(|v| 1.0 / v).collect(),
    }
}

/// Lethargy of the fastest profile below `v_target` (one speed per sample, `dp` apart)
/// that starts at `v0` and changes speed at no more than `a_acc` / `a_dec` (both positive).
/// Where `v0` is above the targets, braking at `a_dec` takes precedence over the targets.
pub fn kinematic_lethargy(v_target: &[f64], v0: f64, dp: f64, a_acc: f64, a_dec: f64) -> Vec<f64> {
    let mut v = v_target.to_vec();
    for k in (0..v.len().saturating_sub(1)).rev() {
        v[k] = v[k].min((v[k + 1] * v[k + 1] + 2.0 * a_dec * dp).sqrt());
    }
    if let Some(first) = v.first_mut() {
        *first = v0;
    }
    for k in 1..v.len() {
        let lo = (v[k - 1] * v[k - 1] - 2.0 * a_dec * dp).max(0.0).sqrt();
        let hi = (v[k - 1] * v[k - 1] + 2.0 * a_acc * dp).sqrt();
        v[k] = v[k].min(hi).max(lo);
    }
    v.iter().map(|v| 1.0 / v).collect()
}

/// Brake-then-hold lethargy profile that reaches each `(distance, time)` requirement
/// no earlier than required. Braking is at `decel` (positive) from `1/z0` down to the
/// largest constant speed in `[v_floor, 1/z0]` that meets every requirement, each
/// capped at the arrival of the slowest such profile.
/// `None` when the vehicle meets them without slowing down.
pub fn restoration_linearization(
    dist: &[f64],
    z0: f64,
    reqs: &[(f64, f64)],
    decel: f64,
    v_floor: f64,
) -> Option<Vec<f64>> {
    let v0 = 1.0 / z0;
    let arrival = |vc: f64, s: f64| {
        let sb = (v0 * v0 - vc * vc) / (2.0 * decel);
        if s <= sb {
            let v = (v0 * v0 - 2.0 * decel * s).max(0.0).sqrt();
            (v0 - v) / decel
        } else {
            (v0 - vc) / decel + (s - sb) / vc
        }
    };
    // requirements slower than the slowest profile can achieve are capped at it
    let reqs: Vec<(f64, f64)> = reqs
        .iter()
        .map(|&(s, t)| (s, t.min(arrival(v_floor, s))))
        .collect();
    let meets = |vc: f64| reqs.iter().all(|&(s, t)| arrival(vc, s) >= t - 1e-12);
    if v0 <= v_floor || meets(v0) {
        return None;
    }
    let (mut lo, mut hi) = (v_floor, v0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if meets(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let vc = lo;
    Some(
        dist.iter()
            .map(|&s| 1.0 / (v0 * v0 - 2.0 * decel * s).max(vc * vc).sqrt())
            .collect(),
    )
}

/// Previous solution shifted by `n` samples, holding the last value, resized to `len`.
pub fn shift_linearization(prev: &[f64], n: usize, len: usize) -> Vec<f64> {
    let last = *prev.last().expect("non-empty profile");
    (0..len)
        .map(|k| prev.get(k + n).copied().unwrap_or(last))
        .collect()
}
