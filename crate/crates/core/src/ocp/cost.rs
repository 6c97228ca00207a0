//! Cost weights and the terminal Riccati weight.

use serde::{Deserialize, Serialize};

/// Terminal weight of the scalar Riccati equation for `z⁺ = z + dp·u`.
pub fn riccati_terminal_weight(q1: f64, r: f64, dp: f64) -> f64 {
    let h = 0.5 * q1;
    h + (h * h + q1 * r / (dp * dp)).sqrt()
}

/// Spatial-domain weights equivalent to temporal weights `w` around lethargy `z_mean`.
pub fn weights_from_temporal(w1: f64, w2: f64, w3: f64, z_mean: f64, dp: f64) -> (f64, f64, f64) {
    let z3 = z_mean.powi(3);
    let z5 = z_mean.powi(5);
    let z7 = z_mean.powi(7);
    (w1 * dp / z3, w2 * dp / z5, w3 / (dp * z7))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    #[serde(alias = "speed")]
    SpeedTracking,
    #[serde(alias = "time")]
    TravelTime,
}

/// Temporal weights and fixed spatial weights read from configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub q2: f64,
    pub q_s: f64,
    /// Weight of the linear |slack| term added to the quadratic slack penalty.
    /// Zero leaves the purely quadratic penalty.
    #[serde(default = "default_q_s_l1")]
    pub q_s_l1: f64,
}

fn default_q_s_l1() -> f64 {
    10000.0
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            w1: 1.0,
            w2: 1.0,
            w3: 0.5,
            q2: 500.0,
            q_s: 10000.0,
            q_s_l1: default_q_s_l1(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q1: f64,
    pub r: f64,
    pub e: f64,
    pub q2: f64,
    pub q_s: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub riccati_p: f64,
}

impl CostWeights {
    pub fn new(cfg: &WeightConfig, z_mean: f64, dp: f64) -> Self {
        let (q1, r, e) = weights_from_temporal(cfg.w1, cfg.w2, cfg.w3, z_mean, dp);
        CostWeights {
            q1,
            r,
            e,
            q2: cfg.q2,
            q_s: cfg.q_s,
            w1: cfg.w1,
            w2: cfg.w2,
            w3: cfg.w3,
            riccati_p: riccati_terminal_weight(q1, r, dp),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riccati_golden_ratio() {
        assert!((riccati_terminal_weight(1.0, 1.0, 1.0) - 1.618033988749895).abs() < 1e-12);
        assert!((riccati_terminal_weight(3.0, 1e-14, 1.0) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn temporal_weight_mapping() {
        let (q1, r, e) = weights_from_temporal(1.0, 1.0, 0.5, 0.1, 1.0);
        assert!((q1 - 1000.0).abs() < 1e-9);
        assert!((r - 1e5).abs() < 1e-6);
        assert!((e - 5e6).abs() < 1e-3);
        let (q1b, rb, eb) = weights_from_temporal(1.0, 1.0, 0.5, 0.1, 2.0);
        assert!((q1b - 2.0 * q1).abs() < 1e-9 && (rb - 2.0 * r).abs() < 1e-6);
        assert!((eb - 0.5 * e).abs() < 1e-3);
    }
}
