//! Markov disease progression with branching transitions and log-normal
//! dwell times, plus the daily hospitalization check.
//!
//! Hospitalization is an overlay flag rather than a Markov state: a
//! hospitalized agent keeps progressing through its clinical states while
//! being isolated from contacts and patches.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, MINUTES_PER_DAY};

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiseaseState {
    Susceptible,
    Exposed,
    Asymptomatic,
    Mild,
    Severe,
    Critical,
    Recovered,
    Dead,
}

impl DiseaseState {
    pub const ALL: [DiseaseState; 8] = [
        DiseaseState::Susceptible,
        DiseaseState::Exposed,
        DiseaseState::Asymptomatic,
        DiseaseState::Mild,
        DiseaseState::Severe,
        DiseaseState::Critical,
        DiseaseState::Recovered,
        DiseaseState::Dead,
    ];

    pub fn is_absorbing(self) -> bool {
        matches!(self, DiseaseState::Recovered | DiseaseState::Dead)
    }

    pub fn is_infectious(self) -> bool {
        matches!(
            self,
            DiseaseState::Asymptomatic | DiseaseState::Mild | DiseaseState::Severe | DiseaseState::Critical
        )
    }

    pub fn is_symptomatic(self) -> bool {
        matches!(self, DiseaseState::Mild | DiseaseState::Severe | DiseaseState::Critical)
    }

    /// Exposed or infectious.
    pub fn is_infected(self) -> bool {
        self == DiseaseState::Exposed || self.is_infectious()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DiseaseState::Susceptible => "susceptible",
            DiseaseState::Exposed => "exposed",
            DiseaseState::Asymptomatic => "asymptomatic",
            DiseaseState::Mild => "mild",
            DiseaseState::Severe => "severe",
            DiseaseState::Critical => "critical",
            DiseaseState::Recovered => "recovered",
            DiseaseState::Dead => "dead",
        }
    }
}

impl fmt::Display for DiseaseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub from: DiseaseState,
    pub to: DiseaseState,
    pub prob: f64,
    pub median_days: f64,
    pub sigma_log: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AgeBand {
    pub min_age: u32,
    /// Inclusive.
    pub max_age: u32,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HospitalPolicy {
    pub p_mild: f64,
    pub p_severe: f64,
    /// Defaults to `p_severe`.
    pub p_critical: Option<f64>,
    /// Concurrent beds; unbounded when absent.
    pub capacity: Option<usize>,
}

impl Default for HospitalPolicy {
    fn default() -> Self {
        Self {
            p_mild: 0.0,
            p_severe: 0.0,
            p_critical: None,
            capacity: None,
        }
    }
}

impl HospitalPolicy {
    pub fn probability(&self, state: DiseaseState) -> f64 {
        match state {
            DiseaseState::Mild => self.p_mild,
            DiseaseState::Severe => self.p_severe,
            DiseaseState::Critical => self.p_critical.unwrap_or(self.p_severe),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiseaseTable {
    pub bands: Vec<AgeBand>,
    #[serde(default)]
    pub hospitalization: HospitalPolicy,
}

/// Disease name → age bands → transitions.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(transparent)]
pub struct ProgressionTable {
    pub diseases: BTreeMap<String, DiseaseTable>,
}

impl ProgressionTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        let t: Self = toml::from_str(text).map_err(|e| Error::config("progression", e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn disease(&self, name: &str) -> Result<&DiseaseTable> {
        self.diseases
            .get(name)
            .ok_or_else(|| Error::config("progression", format!("no disease named {name:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in &self.diseases {
            d.validate().map_err(|m| Error::config("progression", format!("{name}: {m}")))?;
        }
        Ok(())
    }
}

impl DiseaseTable {
    fn validate(&self) -> std::result::Result<(), String> {
        let h = &self.hospitalization;
        for p in [h.p_mild, h.p_severe, h.p_critical.unwrap_or(0.0)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("hospitalization probability {p} outside [0, 1]"));
            }
        }
        if self.bands.is_empty() {
            return Err("no age bands".into());
        }
        let mut bands: Vec<&AgeBand> = self.bands.iter().collect();
        bands.sort_by_key(|b| b.min_age);
        for w in bands.windows(2) {
            if w[1].min_age <= w[0].max_age {
                return Err(format!("age bands {}-{} and {}-{} overlap", w[0].min_age, w[0].max_age, w[1].min_age, w[1].max_age));
            }
        }
        for b in &self.bands {
            let at = |m: String| format!("band {}-{}: {m}", b.min_age, b.max_age);
            if b.max_age < b.min_age {
                return Err(at("max_age below min_age".into()));
            }
            let mut sums: BTreeMap<DiseaseState, f64> = BTreeMap::new();
            for t in &b.transitions {
                if t.from.is_absorbing() || t.from == DiseaseState::Susceptible {
                    return Err(at(format!("no transition may leave {}", t.from)));
                }
                if t.to == t.from || t.to == DiseaseState::Susceptible {
                    return Err(at(format!("invalid transition {} -> {}", t.from, t.to)));
                }
                if !(0.0..=1.0).contains(&t.prob) {
                    return Err(at(format!("{} -> {}: probability {} outside [0, 1]", t.from, t.to, t.prob)));
                }
                if !(t.median_days > 0.0 && t.median_days.is_finite()) || !(t.sigma_log > 0.0 && t.sigma_log.is_finite()) {
                    return Err(at(format!("{} -> {}: median and sigma_log must be positive", t.from, t.to)));
                }
                *sums.entry(t.from).or_default() += t.prob;
            }
            if !sums.contains_key(&DiseaseState::Exposed) {
                return Err(at("no transitions out of exposed".into()));
            }
            for (s, p) in &sums {
                if (p - 1.0).abs() > PROB_TOL {
                    return Err(at(format!("probabilities out of {s} sum to {p}")));
                }
            }
            for t in b.transitions.iter().filter(|t| t.prob > 0.0) {
                if !t.to.is_absorbing() && !sums.contains_key(&t.to) {
                    return Err(at(format!("state {} is entered but never left", t.to)));
                }
            }
        }
        Ok(())
    }

    pub fn band(&self, age: u32) -> Option<&AgeBand> {
        self.bands.iter().find(|b| (b.min_age..=b.max_age).contains(&age))
    }

    /// Every state some transition may lead to, plus susceptible/exposed.
    pub fn edges(&self) -> Vec<(DiseaseState, DiseaseState)> {
        let mut e: Vec<_> = self.bands.iter().flat_map(|b| b.transitions.iter().map(|t| (t.from, t.to))).collect();
        e.sort();
        e.dedup();
        e
    }
}

/// Log-normal dwell time in whole minutes (at least one).
pub fn lognormal_minutes<R: Rng + ?Sized>(median_days: f64, sigma_log: f64, rng: &mut R) -> u64 {
    let z: f64 = StandardNormal.sample(rng);
    let days = median_days * (sigma_log * z).exp();
    ((days * MINUTES_PER_DAY as f64).ceil() as u64).max(1)
}

/// Draws the branch out of `state` and its dwell time in minutes. `None`
/// for absorbing or susceptible states.
pub fn sample_transition<R: Rng + ?Sized>(
    state: DiseaseState,
    age: u32,
    table: &DiseaseTable,
    rng: &mut R,
) -> Result<Option<(DiseaseState, u64)>> {
    if state.is_absorbing() || state == DiseaseState::Susceptible {
        return Ok(None);
    }
    let band = table
        .band(age)
        .ok_or_else(|| Error::InvalidInput(format!("no age band covers age {age}")))?;
    let out: Vec<&Transition> = band.transitions.iter().filter(|t| t.from == state).collect();
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no transitions out of {state} for age {age}")));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = *out.last().unwrap();
    for t in &out {
        acc += t.prob;
        if u < acc {
            pick = t;
            break;
        }
    }
    Ok(Some((pick.to, lognormal_minutes(pick.median_days, pick.sigma_log, rng))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AgentDisease {
    pub state: DiseaseState,
    pub entered_at: u64,
    /// Minute and target of the next transition.
    pub scheduled: Option<(u64, DiseaseState)>,
    pub hospitalized: bool,
    pub transitions: u32,
}

impl Default for AgentDisease {
    fn default() -> Self {
        Self {
            state: DiseaseState::Susceptible,
            entered_at: 0,
            scheduled: None,
            hospitalized: false,
            transitions: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TransitionEvent {
    pub agent: usize,
    pub minute: u64,
    pub from: DiseaseState,
    pub to: DiseaseState,
}

impl AgentDisease {
    /// Enters `state` at `now` and schedules the next transition.
    pub fn enter<R: Rng + ?Sized>(&mut self, state: DiseaseState, now: u64, age: u32, table: &DiseaseTable, rng: &mut R) -> Result<()> {
        self.state = state;
        self.entered_at = now;
        self.scheduled = sample_transition(state, age, table, rng)?.map(|(to, d)| (now + d, to));
        if state.is_absorbing() {
            self.hospitalized = false;
        }
        Ok(())
    }

    /// Applies the scheduled transition if it is due.
    pub fn step<R: Rng + ?Sized>(&mut self, agent: usize, now: u64, age: u32, table: &DiseaseTable, rng: &mut R) -> Result<Option<TransitionEvent>> {
        match self.scheduled {
            Some((at, to)) if now >= at => {
                let from = self.state;
                self.transitions += 1;
                self.enter(to, at, age, table, rng)?;
                Ok(Some(TransitionEvent {
                    agent,
                    minute: at,
                    from,
                    to,
                }))
            }
            _ => Ok(None),
        }
    }
}

/// Day-start hospitalization decision from a uniform draw `u`.
pub fn hospitalize_check(disease: &AgentDisease, policy: &HospitalPolicy, u: f64) -> bool {
    disease.hospitalized || (disease.state.is_symptomatic() && u < policy.probability(disease.state))
}
