/// km/h to m/s.
pub fn kmh(v: f64) -> f64 {
    v / 3.6
}

/// m/s to km/h.
pub fn to_kmh(v: f64) -> f64 {
    v * 3.6
}
