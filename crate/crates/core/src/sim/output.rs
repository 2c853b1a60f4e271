//! Event records, daily state counts and output writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::progression::DiseaseState;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cause {
    Contact {
        transmitter: usize,
        place: String,
        distance_m: f64,
    },
    Patch {
        patch: usize,
    },
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarantineReason {
    Positive,
    Traced,
    Class,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Seed {
        minute: u64,
        agent: usize,
        state: DiseaseState,
    },
    Contact {
        minute: u64,
        place: String,
        transmitter: usize,
        receiver: usize,
        distance_m: f64,
    },
    Exposure {
        minute: u64,
        agent: usize,
        cause: Cause,
    },
    Transition {
        minute: u64,
        agent: usize,
        from: DiseaseState,
        to: DiseaseState,
    },
    Hospitalization {
        minute: u64,
        agent: usize,
        state: DiseaseState,
    },
    Discharge {
        minute: u64,
        agent: usize,
        state: DiseaseState,
    },
    Test {
        minute: u64,
        agent: usize,
        positive: bool,
    },
    Quarantine {
        minute: u64,
        agent: usize,
        until_day: u32,
        reason: QuarantineReason,
        #[serde(skip_serializing_if = "Option::is_none")]
        source: Option<usize>,
    },
    Vaccination {
        minute: u64,
        boost: f64,
        classes: Vec<String>,
        zones: Vec<String>,
        agents: usize,
    },
    VectorControl {
        minute: u64,
        zone: String,
        weekly_exposed: u32,
        factor: f64,
        vectors_before: f64,
        vectors_after: f64,
    },
    DaySummary {
        day: u32,
        denied_boardings: u64,
        private_fallbacks: u64,
        trajectory_fallbacks: u64,
        unbound_places: u64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StateCounts {
    pub s: usize,
    pub e: usize,
    pub i_asym: usize,
    pub i_mild: usize,
    pub i_sev: usize,
    pub i_crit: usize,
    pub hosp: usize,
    pub r: usize,
    pub d: usize,
}

impl StateCounts {
    pub const HEADER: [&'static str; 9] = ["S", "E", "I_asym", "I_mild", "I_sev", "I_crit", "Hosp", "R", "D"];

    /// Hospitalized agents count only in `hosp`.
    pub fn add(&mut self, state: DiseaseState, hospitalized: bool) {
        if hospitalized {
            self.hosp += 1;
            return;
        }
        match state {
            DiseaseState::Susceptible => self.s += 1,
            DiseaseState::Exposed => self.e += 1,
            DiseaseState::Asymptomatic => self.i_asym += 1,
            DiseaseState::Mild => self.i_mild += 1,
            DiseaseState::Severe => self.i_sev += 1,
            DiseaseState::Critical => self.i_crit += 1,
            DiseaseState::Recovered => self.r += 1,
            DiseaseState::Dead => self.d += 1,
        }
    }

    pub fn values(&self) -> [usize; 9] {
        [self.s, self.e, self.i_asym, self.i_mild, self.i_sev, self.i_crit, self.hosp, self.r, self.d]
    }

    pub fn total(&self) -> usize {
        self.values().iter().sum()
    }

    /// Infectious agents, hospitalized included.
    pub fn infectious(&self) -> usize {
        self.i_asym + self.i_mild + self.i_sev + self.i_crit + self.hosp
    }
}

/// Destinations for the four output streams.
pub struct Sink {
    pub states: Box<dyn Write + Send + Sync>,
    pub events: Box<dyn Write + Send + Sync>,
    pub patches: Box<dyn Write + Send + Sync>,
    pub agents: Box<dyn Write + Send + Sync>,
}

impl Sink {
    pub fn discard() -> Self {
        Self {
            states: Box::new(std::io::sink()),
            events: Box::new(std::io::sink()),
            patches: Box::new(std::io::sink()),
            agents: Box::new(std::io::sink()),
        }
    }

    pub fn to_dir(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| -> Result<Box<dyn Write + Send + Sync>> {
            let p = dir.join(name);
            Ok(Box::new(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?)))
        };
        Ok(Self {
            states: open("states.csv")?,
            events: open("events.jsonl")?,
            patches: open("patches.csv")?,
            agents: open("agents.jsonl")?,
        })
    }

    pub fn event(&mut self, e: &Event) -> Result<()> {
        serde_json::to_writer(&mut self.events, e)?;
        self.events.write_all(b"\n").map_err(|e| Error::io("events.jsonl", e))
    }

    pub fn flush(&mut self) -> Result<()> {
        for w in [&mut self.states, &mut self.events, &mut self.patches, &mut self.agents] {
            w.flush().map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }
}
