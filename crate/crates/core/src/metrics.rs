//! Delay accounting by queue sampling: every entity still queued after a
//! step's service is charged one step of delay at the intersection holding
//! the queue. Sidewalk walking is free-flow and never charged.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dynamics::StepOutcome;
use crate::error::MetricsError;
use crate::net::{CW_PER_INTERSECTION, VEH_PER_INTERSECTION};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DelayLedger {
    /// Vehicle delay per intersection, seconds.
    pub veh_delay_s: Vec<f64>,
    /// Crosswalk pedestrian delay per intersection, seconds.
    pub ped_delay_s: Vec<f64>,
    pub veh_entered: u64,
    pub veh_exited: u64,
    pub ped_generated: u64,
    pub ped_crossings: u64,
    pub ped_exited: u64,
}

impl DelayLedger {
    pub fn new(n_intersections: usize) -> Self {
        DelayLedger {
            veh_delay_s: vec![0.0; n_intersections],
            ped_delay_s: vec![0.0; n_intersections],
            ..DelayLedger::default()
        }
    }

    /// Adds one step: `dt * (queue before service - served)` per movement.
    pub fn accumulate(&mut self, out: &StepOutcome, dt: f64) {
        for (m, (&x, &y)) in out.veh_before.iter().zip(&out.veh_served).enumerate() {
            self.veh_delay_s[m / VEH_PER_INTERSECTION] += dt * f64::from(x - y);
        }
        for (k, (&x, &y)) in out.cw_before.iter().zip(&out.cw_served).enumerate() {
            self.ped_delay_s[k / CW_PER_INTERSECTION] += dt * f64::from(x - y);
        }
        self.veh_entered += out.veh_entered;
        self.veh_exited += out.veh_exited;
        self.ped_generated += out.ped_generated;
        self.ped_crossings += out.cw_served.iter().map(|&c| u64::from(c)).sum::<u64>();
        self.ped_exited += out.ped_exited;
    }

    /// Adds another ledger over the same network.
    pub fn merge(&mut self, other: &DelayLedger) {
        for (a, b) in self.veh_delay_s.iter_mut().zip(&other.veh_delay_s) {
            *a += b;
        }
        for (a, b) in self.ped_delay_s.iter_mut().zip(&other.ped_delay_s) {
            *a += b;
        }
        self.veh_entered += other.veh_entered;
        self.veh_exited += other.veh_exited;
        self.ped_generated += other.ped_generated;
        self.ped_crossings += other.ped_crossings;
        self.ped_exited += other.ped_exited;
    }

    pub fn veh_delay_h(&self) -> f64 {
        self.veh_delay_s.iter().sum::<f64>() / 3600.0
    }

    pub fn ped_delay_h(&self) -> f64 {
        self.ped_delay_s.iter().sum::<f64>() / 3600.0
    }

    pub fn person_delay_h(&self, occupancy: f64) -> f64 {
        person_delay(self.veh_delay_h(), self.ped_delay_h(), occupancy)
    }

    /// Minutes of delay per vehicle that entered.
    pub fn avg_veh_delay_min(&self) -> f64 {
        per_entity_minutes(self.veh_delay_h(), self.veh_entered)
    }

    /// Minutes of crosswalk delay per generated pedestrian trip.
    pub fn avg_ped_delay_min(&self) -> f64 {
        per_entity_minutes(self.ped_delay_h(), self.ped_generated)
    }
}

fn per_entity_minutes(hours: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        hours * 60.0 / n as f64
    }
}

pub fn person_delay(veh_h: f64, ped_h: f64, occupancy: f64) -> f64 {
    occupancy * veh_h + ped_h
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RegionDelay {
    pub veh_delay_h: f64,
    pub ped_delay_h: f64,
}

/// Label per intersection; `None` marks an unlabeled intersection.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMap {
    pub labels: Vec<Option<String>>,
}

impl RegionMap {
    pub fn single(n: usize, label: &str) -> Self {
        RegionMap {
            labels: vec![Some(label.to_string()); n],
        }
    }

    /// Two-region map: `high[i]` selects `high_label`.
    pub fn two(high: &[bool], high_label: &str, low_label: &str) -> Self {
        RegionMap {
            labels: high
                .iter()
                .map(|&h| Some(if h { high_label } else { low_label }.to_string()))
                .collect(),
        }
    }

    /// Distinct labels in sorted order.
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.labels.iter().flatten().cloned().collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Delay totals per region label.
pub fn regional_split(
    ledger: &DelayLedger,
    map: &RegionMap,
) -> Result<BTreeMap<String, RegionDelay>, MetricsError> {
    let mut out: BTreeMap<String, RegionDelay> = BTreeMap::new();
    for i in 0..ledger.veh_delay_s.len() {
        let label = map
            .labels
            .get(i)
            .and_then(|l| l.as_ref())
            .ok_or(MetricsError::Unlabeled(i))?;
        let e = out.entry(label.clone()).or_default();
        e.veh_delay_h += ledger.veh_delay_s[i] / 3600.0;
        e.ped_delay_h += ledger.ped_delay_s[i] / 3600.0;
    }
    Ok(out)
}
