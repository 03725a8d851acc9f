//! Scenario configuration. A TOML file with one table per section; every
//! key is optional and unknown keys are rejected.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{ControllerConfig, ControllerKind};
use crate::dynamics::{ArrivalMode, RoutingMode};
use crate::error::ConfigError;
use crate::net::GridParams;
use crate::stability::PedAdjustment;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkCfg {
    pub rows: usize,
    pub cols: usize,
    pub link_length: f64,
    pub veh_speed: f64,
    pub ped_speed: f64,
    pub crosswalk_length: f64,
}

impl Default for NetworkCfg {
    fn default() -> Self {
        let g = GridParams::default();
        NetworkCfg {
            rows: g.rows,
            cols: g.cols,
            link_length: g.link_length,
            veh_speed: g.veh_speed,
            ped_speed: g.ped_speed,
            crosswalk_length: g.crosswalk_length,
        }
    }
}

impl NetworkCfg {
    pub fn grid_params(&self) -> GridParams {
        GridParams {
            rows: self.rows,
            cols: self.cols,
            link_length: self.link_length,
            veh_speed: self.veh_speed,
            ped_speed: self.ped_speed,
            crosswalk_length: self.crosswalk_length,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonCfg {
    pub loading_s: f64,
    pub cooldown_s: f64,
}

impl Default for HorizonCfg {
    fn default() -> Self {
        HorizonCfg {
            loading_s: 3600.0,
            cooldown_s: 3600.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TurningCfg {
    pub left: f64,
    pub through: f64,
    pub right: f64,
}

impl Default for TurningCfg {
    fn default() -> Self {
        TurningCfg {
            left: 1.0 / 3.0,
            through: 1.0 / 3.0,
            right: 1.0 / 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DemandCfg {
    /// Vehicles per hour per entry link; one run per level in a sweep.
    pub vph: Vec<f64>,
    pub turning: TurningCfg,
}

impl Default for DemandCfg {
    fn default() -> Self {
        DemandCfg {
            vph: vec![400.0, 500.0, 600.0, 700.0],
            turning: TurningCfg::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PedestrianCfg {
    /// OD weight when both centroids lie in the high-demand region.
    pub p_high: f64,
    /// OD weight for every other pair.
    pub p_low: f64,
    /// Trips per step per OD pair per unit weight.
    pub rate_scale: f64,
    /// High-demand intersection ids; defaults to the western half of the grid.
    pub high_region: Option<Vec<usize>>,
    pub high_label: String,
    pub low_label: String,
}

impl Default for PedestrianCfg {
    fn default() -> Self {
        PedestrianCfg {
            p_high: 0.6,
            p_low: 0.3,
            rate_scale: 0.016,
            high_region: None,
            high_label: "green".into(),
            low_label: "blue".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationCfg {
    /// Mean vehicle saturation flow per movement, vehicles/step.
    pub veh: f64,
    /// Mean pedestrian saturation flow per crosswalk movement, pedestrians/step.
    pub crosswalk: f64,
    /// Coefficient of variation of both draws.
    pub cov: f64,
    pub lost_time_s: f64,
    /// Sidewalk capacity for the report-only screen; absent means unlimited.
    pub sidewalk: Option<f64>,
}

impl Default for SaturationCfg {
    fn default() -> Self {
        SaturationCfg {
            veh: 10.0,
            crosswalk: 20.0,
            cov: 0.1,
            lost_time_s: 4.0,
            sidewalk: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerCfg {
    /// Controller for single runs.
    pub kind: ControllerKind,
    pub lambda: f64,
    pub tau: f64,
    pub sigma: f64,
    /// Controllers included in a sweep.
    pub sweep: Vec<ControllerKind>,
    pub lambdas: Vec<f64>,
    pub taus: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub baseline: ControllerKind,
}

impl Default for ControllerCfg {
    fn default() -> Self {
        ControllerCfg {
            kind: ControllerKind::Pqmp,
            lambda: 0.001,
            tau: 80.0,
            sigma: 0.0,
            sweep: vec![ControllerKind::Pqmp, ControllerKind::Qmp, ControllerKind::Rule],
            lambdas: vec![0.0005, 0.001, 0.002, 0.004, 0.006, 0.008, 0.01, 0.05, 0.1],
            taus: vec![20.0, 40.0, 60.0, 80.0, 100.0],
            sigmas: vec![0.0],
            baseline: ControllerKind::Qmp,
        }
    }
}

impl ControllerCfg {
    pub fn single(&self) -> ControllerConfig {
        ControllerConfig {
            kind: self.kind,
            lambda: self.lambda,
            tau: self.tau,
            sigma: self.sigma,
        }
    }

    /// Every controller setting of a sweep, in a fixed order.
    pub fn settings(&self) -> Vec<ControllerConfig> {
        let mut out = Vec::new();
        for &kind in &self.sweep {
            match kind {
                ControllerKind::Pqmp => {
                    for &l in &self.lambdas {
                        for &s in &self.sigmas {
                            out.push(ControllerConfig::pqmp(l, s));
                        }
                    }
                }
                ControllerKind::Qmp => out.push(ControllerConfig::qmp()),
                ControllerKind::Rule => {
                    for &t in &self.taus {
                        out.push(ControllerConfig::rule(t));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunCfg {
    pub seeds: Vec<u64>,
    pub occupancy: f64,
    pub arrivals: ArrivalMode,
    pub routing: RoutingMode,
    /// Relative growth threshold of the stability classifier.
    pub theta: f64,
    /// Write the chosen phase per intersection per step.
    pub trace: bool,
    pub feasibility_mode: PedAdjustment,
}

impl Default for RunCfg {
    fn default() -> Self {
        RunCfg {
            seeds: (1..=10).collect(),
            occupancy: 1.3,
            arrivals: ArrivalMode::Poisson,
            routing: RoutingMode::Random,
            theta: 0.5,
            trace: false,
            feasibility_mode: PedAdjustment::TimeSharing,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub network: NetworkCfg,
    pub horizon: HorizonCfg,
    pub demand: DemandCfg,
    pub pedestrians: PedestrianCfg,
    pub saturation: SaturationCfg,
    pub controller: ControllerCfg,
    pub run: RunCfg,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON rendering of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn dt(&self) -> f64 {
        self.network.link_length / self.network.veh_speed
    }

    pub fn loading_steps(&self) -> usize {
        (self.horizon.loading_s / self.dt()).round() as usize
    }

    pub fn cooldown_steps(&self) -> usize {
        (self.horizon.cooldown_s / self.dt()).round() as usize
    }

    /// High-demand membership per intersection.
    pub fn high_region(&self) -> Vec<bool> {
        let (rows, cols) = (self.network.rows, self.network.cols);
        match &self.pedestrians.high_region {
            Some(ids) => {
                let mut v = vec![false; rows * cols];
                for &i in ids {
                    if i < v.len() {
                        v[i] = true;
                    }
                }
                v
            }
            None => (0..rows * cols).map(|i| i % cols < cols / 2).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        crate::net::Network::grid(self.network.grid_params())?;
        let h = &self.horizon;
        if !(h.loading_s > 0.0 && h.loading_s.is_finite()) {
            return Err(invalid("horizon.loading_s must be positive"));
        }
        if !(h.cooldown_s >= 0.0 && h.cooldown_s.is_finite()) {
            return Err(invalid("horizon.cooldown_s must be nonnegative"));
        }
        if self.loading_steps() == 0 {
            return Err(invalid("loading period shorter than one step"));
        }
        let d = &self.demand;
        if d.vph.is_empty() {
            return Err(invalid("demand.vph must not be empty"));
        }
        if d.vph.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid("demand.vph entries must be nonnegative"));
        }
        let t = &d.turning;
        for (name, v) in [("left", t.left), ("through", t.through), ("right", t.right)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("demand.turning.{name} outside [0, 1]")));
            }
        }
        if (t.left + t.through + t.right - 1.0).abs() > 1e-9 {
            return Err(invalid("demand.turning shares must sum to 1"));
        }
        let p = &self.pedestrians;
        for (name, v) in [("p_high", p.p_high), ("p_low", p.p_low)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("pedestrians.{name} outside [0, 1]")));
            }
        }
        if !(p.rate_scale >= 0.0 && p.rate_scale.is_finite()) {
            return Err(invalid("pedestrians.rate_scale must be nonnegative"));
        }
        if let Some(ids) = &p.high_region {
            let n = self.network.rows * self.network.cols;
            if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
                return Err(invalid(format!("pedestrians.high_region: no intersection {bad}")));
            }
        }
        if p.high_label == p.low_label {
            return Err(invalid("pedestrian region labels must differ"));
        }
        let s = &self.saturation;
        for (name, v) in [("veh", s.veh), ("crosswalk", s.crosswalk)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("saturation.{name} must be positive")));
            }
        }
        if !(s.cov >= 0.0 && s.cov.is_finite()) {
            return Err(invalid("saturation.cov must be nonnegative"));
        }
        if !(s.lost_time_s >= 0.0 && s.lost_time_s <= self.dt()) {
            return Err(invalid("saturation.lost_time_s must lie in [0, step length]"));
        }
        if let Some(c) = s.sidewalk {
            if c <= 0.0 || c.is_nan() {
                return Err(invalid("saturation.sidewalk must be positive"));
            }
        }
        let c = &self.controller;
        c.single().validate().map_err(invalid)?;
        if c.sweep.is_empty() {
            return Err(invalid("controller.sweep must not be empty"));
        }
        for (name, empty) in [
            ("lambdas", c.lambdas.is_empty()),
            ("taus", c.taus.is_empty()),
            ("sigmas", c.sigmas.is_empty()),
        ] {
            if empty {
                return Err(invalid(format!("controller.{name} must not be empty")));
            }
        }
        for s in c.settings() {
            s.validate().map_err(invalid)?;
        }
        let r = &self.run;
        if r.seeds.is_empty() {
            return Err(invalid("run.seeds must not be empty"));
        }
        if r.seeds.iter().collect::<HashSet<_>>().len() != r.seeds.len() {
            return Err(invalid("run.seeds must be distinct"));
        }
        if !(r.occupancy > 0.0 && r.occupancy.is_finite()) {
            return Err(invalid("run.occupancy must be positive"));
        }
        if !(r.theta > 0.0 && r.theta.is_finite()) {
            return Err(invalid("run.theta must be positive"));
        }
        if self.loading_steps() < 20 {
            return Err(invalid("loading period must span at least 20 steps"));
        }
        Ok(())
    }
}
