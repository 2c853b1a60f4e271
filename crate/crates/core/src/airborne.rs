//! Airborne transmission: contact detection within a radius, per-contact
//! infection probability, PCR testing with contact tracing, quarantine and
//! vaccination.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::environment::{NodeId, VehicleId};
use crate::progression::DiseaseState;
use crate::rng::{Domain, Streams};
use crate::{Error, Result};

pub const DEFAULT_K: f64 = 0.3;
pub const CONTACT_RADIUS_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentImmunity {
    pub s_age: f64,
    pub alpha_vacc: f64,
    pub alpha_hyg: f64,
    pub gamma_vacc: f64,
    pub gamma_hyg: f64,
}

impl AgentImmunity {
    pub fn validate(&self) -> Result<()> {
        let f = [self.s_age, self.alpha_vacc, self.alpha_hyg, self.gamma_vacc, self.gamma_hyg];
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidInput(format!("immunity field outside [0, 1]: {self:?}")));
        }
        if self.protection() > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("weighted protection exceeds 1: {self:?}")));
        }
        Ok(())
    }

    pub fn protection(&self) -> f64 {
        self.alpha_vacc * self.gamma_vacc + self.alpha_hyg * self.gamma_hyg
    }
}

/// `ρ = S_age · k · (1 − α_vacc γ_vacc − α_hyg γ_hyg)`, floored at zero.
pub fn infection_prob(receiver: &AgentImmunity, k: f64) -> f64 {
    (receiver.s_age * k * (1.0 - receiver.protection())).clamp(0.0, 1.0)
}

/// Vaccination boost, clamped at full immunity.
pub fn boost(gamma_vacc: f64, amount: f64) -> f64 {
    (gamma_vacc + amount).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SusceptibilityBand {
    pub min_age: u32,
    pub max_age: u32,
    pub s_age: f64,
}

pub fn s_age(bands: &[SusceptibilityBand], age: u32) -> Option<f64> {
    bands.iter().find(|b| (b.min_age..=b.max_age).contains(&age)).map(|b| b.s_age)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContactPlace {
    Location(NodeId),
    Vehicle(VehicleId),
}

impl std::fmt::Display for ContactPlace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ContactPlace::Location(n) => write!(f, "loc:{}", n.0),
            ContactPlace::Vehicle(v) => v.fmt(f),
        }
    }
}

impl Serialize for ContactPlace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contact {
    pub minute: u64,
    pub place: ContactPlace,
    pub transmitter: usize,
    pub receiver: usize,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Infectious,
    Susceptible,
    Other,
}

/// Uniform placement within a `w × h` footprint, keyed by agent and minute.
pub fn sample_position(streams: &Streams, agent: usize, minute: u64, footprint: [f64; 2]) -> [f64; 2] {
    let bits = streams.hash(Domain::Position, &[agent as u64, minute]);
    let u = crate::rng::unit_f64(bits);
    let v = crate::rng::unit_f64(crate::rng::splitmix64(bits));
    [u * footprint[0], v * footprint[1]]
}

/// Infectious → susceptible pairs closer than `radius`, as
/// `(transmitter, receiver, distance)` in occupant order.
pub fn detect_contacts(occupants: &[(usize, [f64; 2], Role)], radius: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (tx, p, r) in occupants {
        if *r != Role::Infectious {
            continue;
        }
        for (rx, q, s) in occupants {
            if *s != Role::Susceptible {
                continue;
            }
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            if d <= radius {
                out.push((*tx, *rx, d));
            }
        }
    }
    out
}

/// The uniform variate shared by every scenario for one directed contact
/// in one minute (common random numbers).
pub fn transmission_draw(streams: &Streams, receiver: usize, transmitter: usize, minute: u64) -> f64 {
    streams.uniform(Domain::Transmission, &[receiver as u64, transmitter as u64, minute])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialMode {
    /// One trial per directed contact per minute.
    #[default]
    PerMinute,
    /// One trial per uninterrupted contact episode.
    PerEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransmissionParams {
    pub k: f64,
    pub radius_m: f64,
    pub trials: TrialMode,
}

impl Default for TransmissionParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            radius_m: CONTACT_RADIUS_M,
            trials: TrialMode::PerMinute,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestingPolicy {
    pub start_day: u32,
    pub every_days: u32,
    /// Test everyone with symptoms.
    pub symptomatic: bool,
    /// Additional random share of the population tested.
    pub random_fraction: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub trace: bool,
    pub trace_window_days: u32,
    pub quarantine_days: u32,
}

impl Default for TestingPolicy {
    fn default() -> Self {
        Self {
            start_day: 0,
            every_days: 1,
            symptomatic: true,
            random_fraction: 0.0,
            sensitivity: 1.0,
            specificity: 1.0,
            trace: true,
            trace_window_days: 5,
            quarantine_days: 14,
        }
    }
}

impl TestingPolicy {
    pub fn validate(&self) -> Result<()> {
        let p = [self.random_fraction, self.sensitivity, self.specificity];
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) || self.every_days == 0 {
            return Err(Error::config("scenario", "testing: probabilities must lie in [0, 1] and every_days ≥ 1"));
        }
        Ok(())
    }

    pub fn is_test_day(&self, day: u32) -> bool {
        day >= self.start_day && (day - self.start_day) % self.every_days == 0
    }

    pub fn should_test(&self, state: DiseaseState, u: f64) -> bool {
        (self.symptomatic && state.is_symptomatic()) || u < self.random_fraction
    }
}

/// PCR outcome from a uniform draw `u`.
pub fn pcr_result(state: DiseaseState, policy: &TestingPolicy, u: f64) -> bool {
    if state.is_infected() {
        u < policy.sensitivity
    } else {
        u >= policy.specificity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaccinationEvent {
    /// Fixed day; alternative to `trigger_infected_pct`.
    pub day: Option<u32>,
    /// Fires once, on the first day the infected share exceeds this.
    pub trigger_infected_pct: Option<f64>,
    /// Home zones targeted; empty for all.
    #[serde(default)]
    pub zones: Vec<String>,
    /// Occupation classes targeted; empty for all.
    #[serde(default)]
    pub classes: Vec<String>,
    pub boost: f64,
}

impl VaccinationEvent {
    pub fn validate(&self) -> Result<()> {
        if !(self.boost > 0.0 && self.boost <= 1.0) {
            return Err(Error::config("scenario", format!("vaccination boost {} outside (0, 1]", self.boost)));
        }
        if self.day.is_some() == self.trigger_infected_pct.is_some() {
            return Err(Error::config("scenario", "vaccination needs exactly one of day or trigger_infected_pct"));
        }
        Ok(())
    }
}

/// Keeps classes at home for a stretch of days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassQuarantine {
    pub day: Option<u32>,
    pub trigger_infected_pct: Option<f64>,
    pub classes: Vec<String>,
    pub duration_days: u32,
}

impl ClassQuarantine {
    pub fn validate(&self) -> Result<()> {
        if self.day.is_some() == self.trigger_infected_pct.is_some() {
            return Err(Error::config("scenario", "class quarantine needs exactly one of day or trigger_infected_pct"));
        }
        Ok(())
    }
}

/// Fires once: on its fixed day, or the first day the infected share
/// exceeds the threshold.
pub fn trigger_due(day_field: Option<u32>, pct: Option<f64>, day: u32, infected_pct: f64) -> bool {
    match (day_field, pct) {
        (Some(d), _) => d == day,
        (None, Some(p)) => infected_pct > p,
        _ => false,
    }
}

/// Rolling per-agent record of contacts for tracing.
#[derive(Debug, Default)]
pub struct ContactLog {
    entries: HashMap<usize, VecDeque<(u64, usize)>>,
}

impl ContactLog {
    pub fn record(&mut self, minute: u64, a: usize, b: usize) {
        self.entries.entry(a).or_default().push_back((minute, b));
        self.entries.entry(b).or_default().push_back((minute, a));
    }

    /// Drops entries before `minute`.
    pub fn prune(&mut self, minute: u64) {
        self.entries.retain(|_, q| {
            while q.front().is_some_and(|&(m, _)| m < minute) {
                q.pop_front();
            }
            !q.is_empty()
        });
    }

    pub fn partners(&self, agent: usize, since: u64) -> BTreeSet<usize> {
        self.entries
            .get(&agent)
            .map(|q| q.iter().filter(|&&(m, _)| m >= since).map(|&(_, o)| o).collect())
            .unwrap_or_default()
    }
}
