//! Spatial-domain model predictive coordination of automated vehicles crossing an
//! unsignalized intersection together with human-driven vehicles.
//!
//! Vehicles are described along their reference paths by travel time `t(p)` and
//! lethargy `z(p) = 1/v`. Human-driven vehicles enter only through envelopes on their
//! lateral offset, speed and arrival time; collision avoidance is imposed at the
//! critical zones of each ordered pair.

pub mod batch;
pub mod conflict;
pub mod error;
pub mod geometry;
pub mod io;
pub mod ocp;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod uncertainty;
pub mod units;

pub use error::{Error, Result};
