//! Sparse convex QP container: `min ½xᵀHx + qᵀx + c` subject to equality rows,
//! `≤` rows and variable bounds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RowKind {
    InitialTime {
        cav: usize,
    },
    InitialLethargy {
        cav: usize,
    },
    DynTime {
        cav: usize,
        k: usize,
    },
    DynLethargy {
        cav: usize,
        k: usize,
    },
    /// Lower/upper control bound at interval `k`, evaluated with lethargy of sample `at`.
    ControlLower {
        cav: usize,
        k: usize,
        at: usize,
    },
    ControlUpper {
        cav: usize,
        k: usize,
        at: usize,
    },
    Collision {
        row: usize,
    },
    /// Speed limit at a point inside interval `k`.
    SpeedCap {
        cav: usize,
        k: usize,
    },
    Generic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub kind: RowKind,
}

impl Row {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(i, a)| a * x[i]).sum()
    }
}

/// Index map of one CAV's block: t(0..=k), z(0..=k), u(0..k).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavLayout {
    pub offset: usize,
    pub k: usize,
}

impl CavLayout {
    pub fn t(&self, i: usize) -> usize {
        self.offset + i
    }
    pub fn z(&self, i: usize) -> usize {
        self.offset + self.k + 1 + i
    }
    pub fn u(&self, i: usize) -> usize {
        self.offset + 2 * (self.k + 1) + i
    }
    pub fn len(&self) -> usize {
        3 * self.k + 2
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpatialQp {
    pub n: usize,
    pub cavs: Vec<CavLayout>,
    pub slack: Vec<usize>,
    /// Upper triangle (row ≤ col) of the Hessian, duplicates summed.
    pub hess: Vec<(usize, usize, f64)>,
    pub lin: Vec<f64>,
    pub constant: f64,
    pub eq: Vec<Row>,
    pub ineq: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Accumulates quadratic cost terms.
#[derive(Clone, Debug, Default)]
pub struct QuadBuilder {
    pub hess: Vec<(usize, usize, f64)>,
    pub lin: Vec<f64>,
    pub constant: f64,
}

impl QuadBuilder {
    pub fn new(n: usize) -> Self {
        QuadBuilder {
            hess: Vec::new(),
            lin: vec![0.0; n],
            constant: 0.0,
        }
    }

    /// Adds `w·(Σ aᵢxᵢ + c)²`.
    pub fn add_square(&mut self, terms: &[(usize, f64)], c: f64, w: f64) {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for &(i, a) in terms {
            match merged.iter_mut().find(|m| m.0 == i) {
                Some(m) => m.1 += a,
                None => merged.push((i, a)),
            }
        }
        for (a, &(i, ai)) in merged.iter().enumerate() {
            for &(j, aj) in &merged[a..] {
                let (r, s) = if i <= j { (i, j) } else { (j, i) };
                self.hess.push((r, s, 2.0 * w * ai * aj));
            }
            self.lin[i] += 2.0 * w * c * ai;
        }
        self.constant += w * c * c;
    }

    pub fn add_linear(&mut self, i: usize, a: f64) {
        self.lin[i] += a;
    }

    pub fn finish(mut self) -> (Vec<(usize, usize, f64)>, Vec<f64>, f64) {
        self.hess.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.hess.len());
        for (r, c, v) in self.hess {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        (out, self.lin, self.constant)
    }
}

impl SpatialQp {
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for &(r, c, h) in &self.hess {
            v += if r == c {
                0.5 * h * x[r] * x[r]
            } else {
                h * x[r] * x[c]
            };
        }
        v + self.lin.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Hessian-vector product.
    pub fn hess_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, h) in &self.hess {
            y[r] += h * x[c];
            if r != c {
                y[c] += h * x[r];
            }
        }
        y
    }

    /// Largest constraint violation and a description of where it occurs.
    pub fn max_violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::from("none"));
        let mut upd = |v: f64, what: &dyn Fn() -> String| {
            if v > worst.0 {
                worst = (v, what());
            }
        };
        for r in &self.eq {
            let v = (r.eval(x) - r.rhs).abs();
            upd(v, &|| format!("{:?} (equality)", r.kind));
        }
        for r in &self.ineq {
            let v = r.eval(x) - r.rhs;
            upd(v, &|| format!("{:?}", r.kind));
        }
        for i in 0..self.n {
            upd(self.lower[i] - x[i], &|| format!("lower bound of x[{i}]"));
            upd(x[i] - self.upper[i], &|| format!("upper bound of x[{i}]"));
        }
        worst
    }

    /// Canonical plain-text dump.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "spatial-qp v1");
        let _ = writeln!(s, "n {}", self.n);
        for c in &self.cavs {
            let _ = writeln!(s, "cav {} {}", c.offset, c.k);
        }
        for &i in &self.slack {
            let _ = writeln!(s, "slack {i}");
        }
        let _ = writeln!(s, "constant {:e}", self.constant);
        for &(r, c, v) in &self.hess {
            let _ = writeln!(s, "H {r} {c} {v:e}");
        }
        for (i, v) in self.lin.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "q {i} {v:e}");
            }
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_finite() || u.is_finite() {
                let _ = writeln!(s, "bound {i} {l:e} {u:e}");
            }
        }
        for (tag, rows) in [("eq", &self.eq), ("le", &self.ineq)] {
            for r in rows {
                let coefs: Vec<String> =
                    r.coefs.iter().map(|(i, a)| format!("{i}:{a:e}")).collect();
                let _ = writeln!(s, "{tag} {:e} {}", r.rhs, coefs.join(" "));
            }
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<SpatialQp> {
        let bad = |ln: usize, m: &str| Error::Parse(format!("line {}: {m}", ln + 1));
        let num = |ln: usize, t: Option<&str>| -> Result<f64> {
            t.ok_or_else(|| bad(ln, "missing number"))?
                .parse::<f64>()
                .map_err(|_| bad(ln, "bad number"))
        };
        let idx = |ln: usize, t: Option<&str>| -> Result<usize> {
            t.ok_or_else(|| bad(ln, "missing index"))?
                .parse::<usize>()
                .map_err(|_| bad(ln, "bad index"))
        };
        let mut qp = SpatialQp::default();
        for (ln, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            match it.next() {
                None => {}
                Some("spatial-qp") => {}
                Some("n") => {
                    qp.n = idx(ln, it.next())?;
                    qp.lin = vec![0.0; qp.n];
                    qp.lower = vec![f64::NEG_INFINITY; qp.n];
                    qp.upper = vec![f64::INFINITY; qp.n];
                }
                Some("cav") => qp.cavs.push(CavLayout {
                    offset: idx(ln, it.next())?,
                    k: idx(ln, it.next())?,
                }),
                Some("slack") => qp.slack.push(idx(ln, it.next())?),
                Some("constant") => qp.constant = num(ln, it.next())?,
                Some("H") => qp.hess.push((
                    idx(ln, it.next())?,
                    idx(ln, it.next())?,
                    num(ln, it.next())?,
                )),
                Some("q") => {
                    let i = idx(ln, it.next())?;
                    *qp.lin
                        .get_mut(i)
                        .ok_or_else(|| bad(ln, "index out of range"))? = num(ln, it.next())?;
                }
                Some("bound") => {
                    let i = idx(ln, it.next())?;
                    if i >= qp.n {
                        return Err(bad(ln, "index out of range"));
                    }
                    qp.lower[i] = num(ln, it.next())?;
                    qp.upper[i] = num(ln, it.next())?;
                }
                Some(tag @ ("eq" | "le")) => {
                    let rhs = num(ln, it.next())?;
                    let mut coefs = Vec::new();
                    for tok in it {
                        let (a, b) = tok
                            .split_once(':')
                            .ok_or_else(|| bad(ln, "bad coefficient"))?;
                        coefs.push((idx(ln, Some(a))?, num(ln, Some(b))?));
                    }
                    let row = Row {
                        coefs,
                        rhs,
                        kind: RowKind::Generic,
                    };
                    if tag == "eq" {
                        qp.eq.push(row)
                    } else {
                        qp.ineq.push(row)
                    }
                }
                Some(other) => return Err(bad(ln, &format!("unknown record '{other}'"))),
            }
        }
        Ok(qp)
    }
}
