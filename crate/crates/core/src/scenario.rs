//! Scenario files: a TOML document describing the intersection, the vehicles,
//! the crossing order, HDV uncertainty and the MPC configuration.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::conflict::{CrossingOrder, VehicleId, VehicleKind};
use crate::error::{Error, Result};
use crate::geometry::{
    build_intersection, IntersectionParams, IntersectionSpec, PathSpec, VehicleFootprint,
};
use crate::ocp::{CavLimits, CostKind, WeightConfig};
use crate::sim::{OffsetRealization, SpeedSource};
use crate::solver::SolveSettings;
use crate::uncertainty::{BoundProfile, HdvParams, OmegaModel};

pub const SCENARIO_1: &str = include_str!("../scenarios/scenario1.toml");
pub const SCENARIO_2: &str = include_str!("../scenarios/scenario2.toml");

/// A bound given as a constant, explicit knots, or lane/central-area values
/// ramped at the path's entry to and exit from the central area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Constant(f64),
    Knots(Vec<(f64, f64)>),
    LaneCentral { lane: f64, central: f64, slope: f64 },
}

impl BoundSpec {
    pub fn resolve(&self, path: &PathSpec, central_half_width: f64) -> BoundProfile {
        match self {
            BoundSpec::Constant(v) => BoundProfile::Constant(*v),
            BoundSpec::Knots(k) => BoundProfile::Knots(k.clone()),
            BoundSpec::LaneCentral {
                lane,
                central,
                slope,
            } => BoundProfile::lane_and_central(path, central_half_width, *lane, *central, *slope),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySpec {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub alpha: f64,
    pub a_c_max_hat: f64,
    pub yaw_min: BoundSpec,
    pub yaw_max: BoundSpec,
    pub physical_min: BoundSpec,
    pub physical_max: BoundSpec,
    #[serde(default)]
    pub omega: OmegaModel,
}

impl UncertaintySpec {
    pub fn resolve(&self, path: &PathSpec, central_half_width: f64) -> HdvParams {
        HdvParams {
            gamma_min: self.gamma_min,
            gamma_max: self.gamma_max,
            alpha: self.alpha,
            a_c_max_hat: self.a_c_max_hat,
            yaw_min: self.yaw_min.resolve(path, central_half_width),
            yaw_max: self.yaw_max.resolve(path, central_half_width),
            physical_min: self.physical_min.resolve(path, central_half_width),
            physical_max: self.physical_max.resolve(path, central_half_width),
            omega: self.omega,
        }
    }
}

fn default_realization() -> OffsetRealization {
    OffsetRealization::Reference
}

fn default_hdv_a_min() -> f64 {
    -3.5
}

fn default_hdv_a_max() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdvSetup {
    #[serde(default)]
    pub xi0: f64,
    #[serde(default = "default_realization")]
    pub realization: OffsetRealization,
    /// Free-flow speed; defaults to the initial speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_free_kmh: Option<f64>,
    #[serde(default = "default_hdv_a_min")]
    pub a_min: f64,
    #[serde(default = "default_hdv_a_max")]
    pub a_max: f64,
    pub speed: SpeedSource,
    pub uncertainty: UncertaintySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub path: String,
    pub p0: f64,
    pub v0_kmh: f64,
    #[serde(default)]
    pub a0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_ref_kmh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hdv: Option<HdvSetup>,
}

impl VehicleSpec {
    pub fn v_ref(&self) -> f64 {
        crate::units::kmh(self.v_ref_kmh.unwrap_or(self.v0_kmh))
    }
}

fn default_true() -> bool {
    true
}

fn default_max_time() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    pub dt: f64,
    pub dp: f64,
    pub t_des: f64,
    pub cost: CostKind,
    #[serde(default)]
    pub dynamic_sampling: bool,
    /// Control bounds also evaluated at each interval's end sample.
    #[serde(default = "default_true")]
    pub end_point_bounds: bool,
    /// Episode time limit (s).
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub solver: SolveSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            dt: 0.5,
            dp: 1.0,
            t_des: 1.1,
            cost: CostKind::SpeedTracking,
            dynamic_sampling: false,
            end_point_bounds: true,
            max_time: 60.0,
            weights: WeightConfig::default(),
            solver: SolveSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dp > 0.0 && self.t_des > 0.0 && self.max_time > 0.0) {
            return Err(Error::Scenario(
                "mpc: dt, dp, t_des and max_time must be positive".into(),
            ));
        }
        let w = &self.weights;
        if [w.w1, w.w2, w.w3, w.q2, w.q_s, w.q_s_l1]
            .iter()
            .any(|&x| !(x >= 0.0))
        {
            return Err(Error::Scenario(
                "mpc.weights: weights must be non-negative".into(),
            ));
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    pub count: usize,
    /// HDVs whose offset realization is randomized per episode.
    pub randomize: Vec<VehicleId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub order: Vec<VehicleId>,
    #[serde(default)]
    pub intersection: IntersectionParams,
    #[serde(default)]
    pub footprint: VehicleFootprint,
    #[serde(default)]
    pub cav_limits: CavLimits,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSpec>,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<ScenarioFile> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<ScenarioFile> {
        let text = std::fs::read_to_string(path)?;
        ScenarioFile::parse(&text)
    }
}

/// A validated scenario with its constructed geometry.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub intersection: IntersectionSpec,
    pub order: CrossingOrder,
}

impl Scenario {
    pub fn new(file: ScenarioFile) -> Result<Scenario> {
        if file.vehicles.is_empty() {
            return Err(Error::Scenario("vehicle list is empty".into()));
        }
        let intersection = build_intersection(&file.intersection)?;
        let mut seen = HashSet::new();
        for v in &file.vehicles {
            let at = |m: &str| Error::Scenario(format!("vehicle {}: {m}", v.id));
            if !seen.insert(v.id) {
                return Err(at("duplicate id"));
            }
            let path = intersection
                .path(&v.path)
                .ok_or_else(|| at(&format!("unknown path '{}'", v.path)))?;
            if !(v.p0 >= 0.0 && v.p0 <= path.length) {
                return Err(at(&format!(
                    "initial position {} outside [0, {}]",
                    v.p0, path.length
                )));
            }
            match (v.kind, &v.hdv) {
                (VehicleKind::Cav, Some(_)) => {
                    return Err(at("a CAV cannot have an [hdv] section"))
                }
                (VehicleKind::Hdv, None) => return Err(at("an HDV needs an [hdv] section")),
                (VehicleKind::Hdv, Some(h)) => {
                    h.uncertainty
                        .resolve(path, file.intersection.central_half_width)
                        .validate()
                        .map_err(|e| at(&e.to_string()))?;
                    if !(h.a_min < 0.0 && h.a_max > 0.0) {
                        return Err(at("hdv acceleration limits need a_min < 0 < a_max"));
                    }
                    if !(v.v0_kmh >= 0.0) {
                        return Err(at("initial speed must be non-negative"));
                    }
                }
                (VehicleKind::Cav, None) => {
                    if !(v.v0_kmh > 0.0) || !(v.v_ref() > 0.0) {
                        return Err(at("CAV initial and reference speeds must be positive"));
                    }
                }
            }
        }
        let ids: Vec<VehicleId> = file.vehicles.iter().map(|v| v.id).collect();
        let order = CrossingOrder::new(file.order.clone(), &ids)?;
        if !file.footprint.is_valid() {
            return Err(Error::Scenario(
                "footprint dimensions must be positive".into(),
            ));
        }
        file.cav_limits.validate()?;
        file.mpc.validate()?;
        if let Some(b) = &file.batch {
            for id in &b.randomize {
                let v = file.vehicles.iter().find(|v| v.id == *id);
                if v.map(|v| v.kind) != Some(VehicleKind::Hdv) {
                    return Err(Error::Scenario(format!(
                        "batch.randomize: {id} is not an HDV"
                    )));
                }
            }
        }
        Ok(Scenario {
            file,
            intersection,
            order,
        })
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        Scenario::new(ScenarioFile::parse(text)?)
    }

    pub fn bundled(name: &str) -> Result<Scenario> {
        match name {
            "scenario1" | "scenario-1" | "1" => Scenario::parse(SCENARIO_1),
            "scenario2" | "scenario-2" | "2" => Scenario::parse(SCENARIO_2),
            _ => Err(Error::Scenario(format!(
                "no bundled scenario named '{name}'"
            ))),
        }
    }

    pub fn path_of(&self, v: &VehicleSpec) -> &PathSpec {
        self.intersection.path(&v.path).expect("validated path id")
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleSpec> {
        self.file.vehicles.iter().find(|v| v.id == id)
    }

    pub fn hdv_params(&self, v: &VehicleSpec) -> Option<HdvParams> {
        v.hdv.as_ref().map(|h| {
            h.uncertainty
                .resolve(self.path_of(v), self.file.intersection.central_half_width)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_load() {
        let s1 = Scenario::bundled("scenario1").unwrap();
        assert_eq!(s1.file.vehicles.len(), 4);
        assert_eq!(s1.file.order, vec![4, 2, 3, 1]);
        let s2 = Scenario::bundled("scenario2").unwrap();
        assert_eq!(s2.file.vehicles.len(), 8);
        assert_eq!(s2.file.order, vec![3, 6, 8, 1, 2, 5, 7, 4]);
    }

    #[test]
    fn round_trip_is_identity() {
        for text in [SCENARIO_1, SCENARIO_2] {
            let a = ScenarioFile::parse(text).unwrap();
            let b = ScenarioFile::parse(&a.to_toml().unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_vehicle_list_rejected() {
        let mut f = ScenarioFile::parse(SCENARIO_1).unwrap();
        f.vehicles.clear();
        f.order.clear();
        assert!(matches!(Scenario::new(f), Err(Error::Scenario(_))));
    }

    #[test]
    fn order_must_be_permutation() {
        let mut f = ScenarioFile::parse(SCENARIO_1).unwrap();
        f.order = vec![4, 2, 3, 3];
        assert!(Scenario::new(f).is_err());
    }

    #[test]
    fn parse_errors_carry_location() {
        let err =
            ScenarioFile::parse("name = \"x\"\norder = [1]\n[mpc]\ndt = \"fast\"\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }
}
