//! The minute loop: daily timetables and routes, contacts and airborne
//! transmission every minute, vector patches every five minutes.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use super::output::{Cause, Event, QuarantineReason, Sink, StateCounts};
use super::population::{generate_population, Agent};
use super::scenario::{Pathway, Scenario};
use crate::airborne::{
    boost, detect_contacts, infection_prob, pcr_result, sample_position, transmission_draw, trigger_due, ContactLog,
    ContactPlace, Role, TrialMode,
};
use crate::environment::{plan_day_route, reorder_errands, Position, Segment, TransportBook, VehicleId};
use crate::environment::NodeId;
use crate::mobility::{LocationCode, Place};
use crate::progression::{hospitalize_check, DiseaseState};
use crate::rng::{Domain, Streams};
use crate::trajectory::{DayType, MatrixKey, ProbabilityMatrices};
use crate::vectorborne::{human_force, incubation_days, infection_probability, total_bites, PatchState};
use crate::{Error, Result, MINUTES_PER_DAY};

const DAY: u32 = MINUTES_PER_DAY as u32;
/// Disease-update cadence for the vector pathway, minutes.
pub const VECTOR_STEP_MIN: u32 = 5;

#[derive(Debug, Clone, Serialize)]
pub struct DayRecord {
    pub day: u32,
    pub totals: StateCounts,
    pub by_class: Vec<StateCounts>,
    pub new_exposures: u64,
    pub vectors: f64,
    pub infected_vectors: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExposureRecord {
    pub minute: u64,
    pub agent: usize,
    pub transmitter: Option<usize>,
    pub patch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlRecord {
    pub day: u32,
    pub zone: String,
    pub weekly_exposed: u32,
    pub applied: bool,
    pub vectors_before: f64,
    pub vectors_after: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub classes: Vec<String>,
    pub population: usize,
    pub days: Vec<DayRecord>,
    pub seeds: Vec<usize>,
    pub exposures: Vec<ExposureRecord>,
    pub controls: Vec<ControlRecord>,
    pub contacts: u64,
    pub tests: u64,
    pub quarantines: u64,
    pub denied_boardings: u64,
    pub private_fallbacks: u64,
    pub trajectory_fallbacks: u64,
    pub unbound_places: u64,
    pub clamped_patch_steps: u64,
    pub hot_band_flags: u64,
    /// Smallest vector count seen in any patch at any step.
    pub min_patch_value: f64,
    pub final_states: Vec<DiseaseState>,
}

impl RunSummary {
    pub fn peak_infectious(&self) -> (u32, usize) {
        self.days
            .iter()
            .map(|d| (d.day, d.totals.infectious()))
            .fold((0, 0), |best, x| if x.1 > best.1 { x } else { best })
    }

    pub fn peak_exposed(&self) -> (u32, usize) {
        self.days
            .iter()
            .map(|d| (d.day, d.totals.e))
            .fold((0, 0), |best, x| if x.1 > best.1 { x } else { best })
    }

    /// Agents infected at any point, seeds included.
    pub fn cumulative_infections(&self) -> usize {
        self.final_states.iter().filter(|s| **s != DiseaseState::Susceptible).count()
    }
}

/// Runs a scenario, streaming outputs to `sink`.
pub fn run(scn: &Scenario, sink: &mut Sink) -> Result<RunSummary> {
    let mut e = Engine::new(scn, sink)?;
    let out = e.run_all();
    e.sink.flush()?;
    out
}

pub fn run_to_dir(scn: &Scenario, dir: &std::path::Path) -> Result<RunSummary> {
    let mut sink = Sink::to_dir(dir)?;
    run(scn, &mut sink)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Where {
    Gone,
    Hospital,
    /// Quarantined at home: counts toward the home patch, makes no contacts.
    Isolated(NodeId),
    At(NodeId),
    Transit,
    Aboard(VehicleId),
}

struct Engine<'a> {
    scn: &'a Scenario,
    streams: Streams,
    agents: Vec<Agent>,
    sink: &'a mut Sink,
    summary: RunSummary,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    plans: Vec<Vec<Segment>>,
    cursor: Vec<usize>,
    isolated: Vec<bool>,
    matrices: Vec<[&'a ProbabilityMatrices; 2]>,
    matrix_index: Vec<usize>,
    by_code_city: HashMap<(LocationCode, NodeId), Vec<NodeId>>,
    by_code: HashMap<LocationCode, Vec<NodeId>>,
    book: TransportBook,
    contact_log: ContactLog,
    prev_pairs: HashSet<(usize, usize)>,
    patches: Vec<PatchState>,
    weekly_exposed: BTreeMap<NodeId, u32>,
    controlled_today: Vec<bool>,
    vector_step: u64,
    fired_vaccination: Vec<bool>,
    fired_quarantine: Vec<bool>,
    hospitalized: usize,
    new_exposures: u64,
    recorded: Vec<Vec<(u32, Vec<Segment>)>>,
}

impl<'a> Engine<'a> {
    fn new(scn: &'a Scenario, sink: &'a mut Sink) -> Result<Self> {
        let cfg = &scn.config;
        let env = &scn.env;
        let streams = Streams::new(cfg.seed);
        let agents = generate_population(scn, &streams)?;
        let n = agents.len();

        let mut matrices = Vec::new();
        let mut slot = BTreeMap::new();
        let mut matrix_index = Vec::with_capacity(n);
        for a in &agents {
            let idx = *slot.entry((a.class, a.subclass)).or_insert_with(|| {
                let get = |day_type| {
                    let key = MatrixKey {
                        class: cfg.population[a.class].class.clone(),
                        subclass: a.subclass,
                        day_type,
                    };
                    &scn.matrices[&key]
                };
                matrices.push([get(DayType::Weekday), get(DayType::Weekend)]);
                matrices.len() - 1
            });
            matrix_index.push(idx);
        }

        let mut by_code_city: HashMap<(LocationCode, NodeId), Vec<NodeId>> = HashMap::new();
        let mut by_code: HashMap<LocationCode, Vec<NodeId>> = HashMap::new();
        for &loc in &env.locations {
            let code = env.node(loc).code.expect("locations carry codes");
            by_code.entry(code).or_default().push(loc);
            if let Some(city) = env.city_of(loc) {
                by_code_city.entry((code, city)).or_default().push(loc);
            }
        }

        let patches = env
            .patches
            .iter()
            .map(|_| PatchState {
                s: 0.0,
                e: 0.0,
                i: 0.0,
                k_v: 0.0,
                nu: 0.0,
            })
            .collect();

        Ok(Self {
            scn,
            streams,
            sink,
            summary: RunSummary {
                classes: cfg.population.iter().map(|c| c.class.clone()).collect(),
                population: n,
                min_patch_value: f64::INFINITY,
                ..Default::default()
            },
            heap: BinaryHeap::new(),
            plans: vec![Vec::new(); n],
            cursor: vec![0; n],
            isolated: vec![false; n],
            matrices,
            matrix_index,
            by_code_city,
            by_code,
            book: TransportBook::default(),
            contact_log: ContactLog::default(),
            prev_pairs: HashSet::new(),
            patches,
            weekly_exposed: BTreeMap::new(),
            controlled_today: vec![false; env.patches.len()],
            vector_step: 0,
            fired_vaccination: vec![false; cfg.vaccination.len()],
            fired_quarantine: vec![false; cfg.class_quarantine.len()],
            hospitalized: 0,
            new_exposures: 0,
            recorded: if cfg.output.trajectories { vec![Vec::new(); n] } else { Vec::new() },
            agents,
        })
    }

    fn run_all(&mut self) -> Result<RunSummary> {
        self.write_headers()?;
        self.seed()?;
        if self.scn.config.vector.is_some() {
            self.init_vectors()?;
        }
        for day in 0..self.scn.config.duration_days {
            self.day_start(day)?;
            for m in 0..DAY {
                let now = day as u64 * DAY as u64 + m as u64;
                self.progress(now)?;
                if self.scn.config.pathway == Pathway::Airborne {
                    self.airborne(now, m)?;
                }
                if self.scn.config.vector.is_some() && m % VECTOR_STEP_MIN == VECTOR_STEP_MIN - 1 {
                    self.vector(now, m)?;
                }
            }
            self.day_end(day)?;
        }
        self.write_agents()?;
        self.summary.final_states = self.agents.iter().map(|a| a.disease.state).collect();
        Ok(std::mem::take(&mut self.summary))
    }

    fn write_headers(&mut self) -> Result<()> {
        let io = |e| Error::io("<output>", e);
        writeln!(self.sink.states, "day,class,{}", StateCounts::HEADER.join(",")).map_err(io)?;
        writeln!(self.sink.patches, "day,patch,zone,S_v,E_v,I_v,T_k,nu,control").map_err(io)
    }

    fn event(&mut self, e: Event) -> Result<()> {
        self.sink.event(&e)
    }

    fn enter(&mut self, a: usize, state: DiseaseState, now: u64) -> Result<()> {
        let agent = &mut self.agents[a];
        let mut rng = self.streams.rng(Domain::Progression, &[a as u64, agent.history.len() as u64]);
        agent.disease.enter(state, now, agent.age, &self.scn.disease, &mut rng)?;
        agent.history.push((now, state));
        if let Some((t, _)) = agent.disease.scheduled {
            self.heap.push(Reverse((t, a)));
        }
        Ok(())
    }

    fn seed(&mut self) -> Result<()> {
        let Some(spec) = self.scn.config.seeding.clone() else {
            return Ok(());
        };
        let pool: Vec<usize> = self
            .agents
            .iter()
            .filter(|a| spec.classes.is_empty() || spec.classes.contains(&self.scn.config.population[a.class].class))
            .map(|a| a.id)
            .collect();
        if spec.count > pool.len() {
            return Err(Error::config("scenario", format!("cannot seed {} of {} eligible agents", spec.count, pool.len())));
        }
        let mut rng = self.streams.rng(Domain::Seeding, &[0]);
        let mut chosen: Vec<usize> = sample(&mut rng, pool.len(), spec.count).into_iter().map(|i| pool[i]).collect();
        chosen.sort_unstable();
        for a in chosen {
            self.seed_agent(a, spec.state)?;
        }
        Ok(())
    }

    fn seed_agent(&mut self, a: usize, state: DiseaseState) -> Result<()> {
        self.enter(a, state, 0)?;
        self.summary.seeds.push(a);
        self.event(Event::Seed {
            minute: 0,
            agent: a,
            state,
        })
    }

    fn init_vectors(&mut self) -> Result<()> {
        let env = &self.scn.env;
        let seeding = self.scn.config.vector.as_ref().expect("checked").seeding.clone();
        let [lo, hi] = env.kv_range;
        for (p, st) in self.patches.iter_mut().enumerate() {
            let k_v = lo + self.streams.uniform(Domain::VectorInit, &[p as u64, 0]) * (hi - lo);
            *st = PatchState {
                s: k_v,
                e: 0.0,
                i: 0.0,
                k_v,
                nu: 0.0,
            };
        }
        let zone = seeding.zone.as_deref().and_then(|z| env.by_name(z));
        let mut homes: Vec<NodeId> = self
            .agents
            .iter()
            .filter(|a| zone.is_none_or(|z| a.home_zone == z))
            .map(|a| a.home)
            .collect();
        homes.sort_unstable();
        homes.dedup();
        let mut rng = self.streams.rng(Domain::VectorInit, &[u64::MAX]);
        let picked: Vec<NodeId> = sample(&mut rng, homes.len(), seeding.homes.min(homes.len()))
            .into_iter()
            .map(|i| homes[i])
            .collect();
        let mut touched = vec![false; self.patches.len()];
        for (h, &home) in picked.iter().enumerate() {
            let residents: Vec<usize> = self.agents.iter().filter(|a| a.home == home).map(|a| a.id).collect();
            let want = 1 + (self.streams.hash(Domain::VectorInit, &[u64::MAX - 1, h as u64]) % seeding.max_exposed_per_home.max(1) as u64) as usize;
            let mut chosen: Vec<usize> = sample(&mut rng, residents.len(), want.min(residents.len()))
                .into_iter()
                .map(|i| residents[i])
                .collect();
            chosen.sort_unstable();
            for a in chosen {
                if self.agents[a].disease.state == DiseaseState::Susceptible {
                    self.seed_agent(a, DiseaseState::Exposed)?;
                }
            }
            let c = env.node(home).center.expect("locations have centres");
            let mut near: Vec<(f64, usize)> = env
                .patches
                .iter()
                .map(|p| {
                    let m = [p.rect.origin[0] + p.rect.size[0] / 2.0, p.rect.origin[1] + p.rect.size[1] / 2.0];
                    ((m[0] - c[0]).hypot(m[1] - c[1]), p.id)
                })
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, p) in near.iter().take(seeding.nearest_patches) {
                if std::mem::replace(&mut touched[p], true) {
                    continue;
                }
                let span = seeding.max_infected_vectors as u64 + 1;
                let iv = (self.streams.hash(Domain::VectorInit, &[p as u64, 1]) % span) as f64;
                let st = &mut self.patches[p];
                let iv = iv.min(st.s);
                st.s -= iv;
                st.i += iv;
            }
        }
        Ok(())
    }

    fn temperature(&self, patch: usize, day: u32) -> f64 {
        let fixed = self.scn.config.vector.as_ref().and_then(|v| v.temperature_c);
        fixed.unwrap_or_else(|| self.scn.env.temperature(patch, day))
    }

    fn infected_pct(&self) -> f64 {
        let n = self.agents.iter().filter(|a| a.disease.state.is_infected()).count();
        100.0 * n as f64 / self.agents.len() as f64
    }

    fn quarantine(&mut self, a: usize, day: u32, days: u32, reason: QuarantineReason, source: Option<usize>) -> Result<()> {
        let agent = &mut self.agents[a];
        if !agent.alive() || agent.quarantined_until > day {
            return Ok(());
        }
        agent.quarantined_until = day + days;
        agent.quarantines += 1;
        self.summary.quarantines += 1;
        let until_day = agent.quarantined_until;
        self.event(Event::Quarantine {
            minute: day as u64 * DAY as u64,
            agent: a,
            until_day,
            reason,
            source,
        })
    }

    fn day_start(&mut self, day: u32) -> Result<()> {
        let cfg = &self.scn.config;
        let env = &self.scn.env;
        let now = day as u64 * DAY as u64;
        self.new_exposures = 0;

        let policy = &self.scn.disease.hospitalization;
        for a in 0..self.agents.len() {
            let d = self.agents[a].disease;
            if d.hospitalized || !d.state.is_symptomatic() {
                continue;
            }
            if policy.capacity.is_some_and(|c| self.hospitalized >= c) {
                break;
            }
            let u = self.streams.uniform(Domain::Hospitalization, &[a as u64, day as u64]);
            if hospitalize_check(&d, policy, u) {
                self.agents[a].disease.hospitalized = true;
                self.hospitalized += 1;
                self.event(Event::Hospitalization {
                    minute: now,
                    agent: a,
                    state: d.state,
                })?;
            }
        }

        let pct = self.infected_pct();
        for (i, v) in cfg.vaccination.iter().enumerate() {
            if self.fired_vaccination[i] || !trigger_due(v.day, v.trigger_infected_pct, day, pct) {
                continue;
            }
            self.fired_vaccination[i] = true;
            let zones: Vec<NodeId> = v.zones.iter().filter_map(|z| env.by_name(z)).collect();
            let mut count = 0;
            for a in self.agents.iter_mut() {
                let class_ok = v.classes.is_empty() || v.classes.contains(&cfg.population[a.class].class);
                if a.alive() && class_ok && (zones.is_empty() || zones.contains(&a.home_zone)) {
                    a.immunity.gamma_vacc = boost(a.immunity.gamma_vacc, v.boost);
                    count += 1;
                }
            }
            self.sink.event(&Event::Vaccination {
                minute: now,
                boost: v.boost,
                classes: v.classes.clone(),
                zones: v.zones.clone(),
                agents: count,
            })?;
        }

        for (i, q) in cfg.class_quarantine.iter().enumerate() {
            if self.fired_quarantine[i] || !trigger_due(q.day, q.trigger_infected_pct, day, pct) {
                continue;
            }
            self.fired_quarantine[i] = true;
            let members: Vec<usize> = self
                .agents
                .iter()
                .filter(|a| q.classes.contains(&cfg.population[a.class].class))
                .map(|a| a.id)
                .collect();
            for a in members {
                self.quarantine(a, day, q.duration_days, QuarantineReason::Class, None)?;
            }
        }

        if let Some(t) = cfg.testing.as_ref().filter(|t| t.is_test_day(day)) {
            let since = now.saturating_sub(t.trace_window_days as u64 * DAY as u64);
            self.contact_log.prune(since);
            for a in 0..self.agents.len() {
                let ag = &self.agents[a];
                if !ag.alive() || ag.disease.hospitalized || ag.quarantined_until > day {
                    continue;
                }
                let state = ag.disease.state;
                if !t.should_test(state, self.streams.uniform(Domain::Testing, &[a as u64, day as u64, 0])) {
                    continue;
                }
                let positive = pcr_result(state, t, self.streams.uniform(Domain::Testing, &[a as u64, day as u64, 1]));
                self.summary.tests += 1;
                self.event(Event::Test {
                    minute: now,
                    agent: a,
                    positive,
                })?;
                if positive {
                    self.quarantine(a, day, t.quarantine_days, QuarantineReason::Positive, None)?;
                    if t.trace {
                        for p in self.contact_log.partners(a, since) {
                            self.quarantine(p, day, t.quarantine_days, QuarantineReason::Traced, Some(a))?;
                        }
                    }
                }
            }
        }

        if let Some(vs) = &cfg.vector {
            self.controlled_today.iter_mut().for_each(|c| *c = false);
            if let Some(ctrl) = vs.control.filter(|c| day > 0 && day % c.every_days == 0) {
                for &zone in &env.zones {
                    let cells: Vec<usize> = env.patches_in_zone(zone).map(|p| p.id).collect();
                    if cells.is_empty() {
                        continue;
                    }
                    let weekly = self.weekly_exposed.get(&zone).copied().unwrap_or(0);
                    let before: f64 = cells.iter().map(|&p| self.patches[p].n()).sum();
                    let factor = ctrl.factor(weekly);
                    if let Some(f) = factor {
                        for &p in &cells {
                            self.patches[p].scale(f);
                            self.controlled_today[p] = true;
                        }
                    }
                    let after: f64 = cells.iter().map(|&p| self.patches[p].n()).sum();
                    let name = env.node(zone).name.clone();
                    if let Some(f) = factor {
                        self.sink.event(&Event::VectorControl {
                            minute: now,
                            zone: name.clone(),
                            weekly_exposed: weekly,
                            factor: f,
                            vectors_before: before,
                            vectors_after: after,
                        })?;
                    }
                    self.summary.controls.push(ControlRecord {
                        day,
                        zone: name,
                        weekly_exposed: weekly,
                        applied: factor.is_some(),
                        vectors_before: before,
                        vectors_after: after,
                    });
                }
                self.weekly_exposed.clear();
            }
            for p in 0..self.patches.len() {
                let u = self.streams.uniform(Domain::Incubation, &[p as u64, day as u64]);
                let (days, hot) = incubation_days(self.temperature(p, day), u);
                self.patches[p].nu = 1.0 / days;
                self.summary.hot_band_flags += hot as u64;
            }
        }

        for a in 0..self.agents.len() {
            let ag = &self.agents[a];
            self.isolated[a] = !ag.alive() || ag.disease.hospitalized || ag.quarantined_until > day;
        }
        self.plan_day(day)
    }

    fn plan_day(&mut self, day: u32) -> Result<()> {
        let cfg = &self.scn.config;
        let env = &self.scn.env;
        let dt = match cfg.day_type(day) {
            DayType::Weekday => 0,
            DayType::Weekend => 1,
        };
        let this = &*self;
        let stays: Vec<(Vec<(NodeId, u32, u32)>, u64, u64)> = (0..this.agents.len())
            .into_par_iter()
            .map(|a| {
                let ag = &this.agents[a];
                if this.isolated[a] {
                    return (vec![(ag.home, 0, DAY)], 0, 0);
                }
                let m = this.matrices[this.matrix_index[a]][dt];
                let mut rng = this.streams.rng(Domain::Trajectory, &[a as u64, day as u64]);
                let traj = m.generate(&mut rng);
                let mut unbound = 0;
                let bound: Vec<(Option<NodeId>, u32, u32)> = traj
                    .stays
                    .iter()
                    .map(|s| {
                        let node = this.bind(ag, m.locations[s.location]);
                        if node.is_none() && matches!(m.locations[s.location], Place::Code(_)) {
                            unbound += 1;
                        }
                        (node, s.start as u32, s.duration as u32)
                    })
                    .collect();
                let mut stays = merge_stays(&bound, ag.home);
                if cfg.reorder_errands {
                    stays = reorder_errands(env, &stays);
                }
                (stays, traj.fallbacks as u64, unbound)
            })
            .collect();

        self.book.new_day(day);
        let (denied, fallbacks) = (self.book.denied_boardings, self.book.fallbacks);
        for (a, (stays, traj_fb, unbound)) in stays.into_iter().enumerate() {
            self.summary.trajectory_fallbacks += traj_fb;
            self.summary.unbound_places += unbound;
            let pref = self.agents[a].public_transport;
            let streams = &self.streams;
            let (segments, _) = plan_day_route(env, &mut self.book, &stays, |leg| {
                streams.uniform(Domain::Transport, &[a as u64, day as u64, leg as u64]) < pref
            });
            if !self.recorded.is_empty() {
                self.recorded[a].push((day, segments.clone()));
            }
            self.plans[a] = segments;
            self.cursor[a] = 0;
        }
        self.summary.denied_boardings = self.book.denied_boardings;
        self.summary.private_fallbacks = self.book.fallbacks;
        let day_denied = self.book.denied_boardings - denied;
        let day_fallbacks = self.book.fallbacks - fallbacks;
        self.prev_pairs.clear();
        self.event(Event::DaySummary {
            day,
            denied_boardings: day_denied,
            private_fallbacks: day_fallbacks,
            trajectory_fallbacks: self.summary.trajectory_fallbacks,
            unbound_places: self.summary.unbound_places,
        })
    }

    /// Home and work codes resolve to the agent's own places; other codes
    /// to a fixed per-agent pick, preferring the home city.
    fn bind(&self, a: &Agent, place: Place) -> Option<NodeId> {
        let Place::Code(code) = place else {
            return None;
        };
        let env = &self.scn.env;
        if env.node(a.home).code == Some(code) {
            return Some(a.home);
        }
        if let Some(w) = a.work.filter(|&w| env.node(w).code == Some(code)) {
            return Some(w);
        }
        let cands = self.by_code_city.get(&(code, a.home_city)).or_else(|| self.by_code.get(&code))?;
        let h = self.streams.hash(Domain::Binding, &[a.id as u64, code.value() as u64]);
        Some(cands[(h % cands.len() as u64) as usize])
    }

    fn locate(&mut self, a: usize, m: u32) -> Where {
        let ag = &self.agents[a];
        if !ag.alive() {
            return Where::Gone;
        }
        if ag.disease.hospitalized {
            return Where::Hospital;
        }
        if self.isolated[a] {
            return Where::Isolated(ag.home);
        }
        let plan = &self.plans[a];
        let c = &mut self.cursor[a];
        while *c + 1 < plan.len() && plan[*c].end <= m {
            *c += 1;
        }
        match plan.get(*c).map(|s| s.pos) {
            Some(Position::At(n)) => Where::At(n),
            Some(Position::Transit) => Where::Transit,
            Some(Position::Aboard(v)) => Where::Aboard(v),
            None => Where::Isolated(ag.home),
        }
    }

    fn footprint(&self, place: ContactPlace) -> [f64; 2] {
        let env = &self.scn.env;
        match place {
            ContactPlace::Location(n) => env.node(n).footprint.unwrap_or([20.0, 20.0]),
            ContactPlace::Vehicle(VehicleId::Bus { line, .. }) => env.lines[line].footprint,
            ContactPlace::Vehicle(VehicleId::Taxi { .. }) => env.taxi.map(|t| t.footprint).unwrap_or([2.0, 2.0]),
        }
    }

    fn progress(&mut self, now: u64) -> Result<()> {
        while let Some(&Reverse((t, a))) = self.heap.peek() {
            if t > now {
                break;
            }
            self.heap.pop();
            if self.agents[a].disease.scheduled.map(|s| s.0) != Some(t) {
                continue;
            }
            let agent = &mut self.agents[a];
            let was_hospitalized = agent.disease.hospitalized;
            let mut rng = self.streams.rng(Domain::Progression, &[a as u64, agent.history.len() as u64]);
            let Some(ev) = agent.disease.step(a, now, agent.age, &self.scn.disease, &mut rng)? else {
                continue;
            };
            agent.history.push((ev.minute, ev.to));
            let discharged = was_hospitalized && !agent.disease.hospitalized;
            if let Some((t2, _)) = agent.disease.scheduled {
                self.heap.push(Reverse((t2, a)));
            }
            self.event(Event::Transition {
                minute: ev.minute,
                agent: a,
                from: ev.from,
                to: ev.to,
            })?;
            if discharged {
                self.hospitalized -= 1;
                self.event(Event::Discharge {
                    minute: ev.minute,
                    agent: a,
                    state: ev.to,
                })?;
            }
        }
        Ok(())
    }

    fn expose(&mut self, a: usize, now: u64, cause: Cause) -> Result<()> {
        self.enter(a, DiseaseState::Exposed, now)?;
        self.new_exposures += 1;
        let (transmitter, patch) = match &cause {
            Cause::Contact { transmitter, .. } => (Some(*transmitter), None),
            Cause::Patch { patch } => (None, Some(*patch)),
        };
        self.summary.exposures.push(ExposureRecord {
            minute: now,
            agent: a,
            transmitter,
            patch,
        });
        self.event(Event::Exposure { minute: now, agent: a, cause })
    }

    fn airborne(&mut self, now: u64, m: u32) -> Result<()> {
        let mut groups: HashMap<ContactPlace, (Vec<usize>, Vec<usize>)> = HashMap::new();
        for a in 0..self.agents.len() {
            if !self.agents[a].disease.state.is_infectious() {
                continue;
            }
            if let Some(p) = contact_place(self.locate(a, m)) {
                groups.entry(p).or_default().0.push(a);
            }
        }
        if groups.is_empty() {
            self.prev_pairs.clear();
            return Ok(());
        }
        for a in 0..self.agents.len() {
            if self.agents[a].disease.state != DiseaseState::Susceptible {
                continue;
            }
            if let Some(g) = contact_place(self.locate(a, m)).and_then(|p| groups.get_mut(&p)) {
                g.1.push(a);
            }
        }
        let mut places: Vec<ContactPlace> = groups.iter().filter(|(_, g)| !g.1.is_empty()).map(|(p, _)| *p).collect();
        places.sort_unstable();

        let params = self.scn.config.transmission;
        let trace = self.scn.config.testing.as_ref().is_some_and(|t| t.trace);
        let log_contacts = self.scn.config.output.contacts;
        let mut pairs = HashSet::new();
        for place in places {
            let (inf, sus) = &groups[&place];
            let fp = self.footprint(place);
            let occupants: Vec<(usize, [f64; 2], Role)> = inf
                .iter()
                .map(|&a| (a, sample_position(&self.streams, a, now, fp), Role::Infectious))
                .chain(sus.iter().map(|&a| (a, sample_position(&self.streams, a, now, fp), Role::Susceptible)))
                .collect();
            for (tx, rx, d) in detect_contacts(&occupants, params.radius_m) {
                self.summary.contacts += 1;
                if trace {
                    self.contact_log.record(now, tx, rx);
                }
                if log_contacts {
                    self.event(Event::Contact {
                        minute: now,
                        place: place.to_string(),
                        transmitter: tx,
                        receiver: rx,
                        distance_m: d,
                    })?;
                }
                if self.agents[rx].disease.state != DiseaseState::Susceptible {
                    continue;
                }
                if params.trials == TrialMode::PerEpisode {
                    pairs.insert((tx, rx));
                    if self.prev_pairs.contains(&(tx, rx)) {
                        continue;
                    }
                }
                let rho = infection_prob(&self.agents[rx].immunity, params.k);
                if transmission_draw(&self.streams, rx, tx, now) < rho {
                    self.expose(
                        rx,
                        now,
                        Cause::Contact {
                            transmitter: tx,
                            place: place.to_string(),
                            distance_m: d,
                        },
                    )?;
                }
            }
        }
        self.prev_pairs = pairs;
        Ok(())
    }

    fn vector(&mut self, now: u64, m: u32) -> Result<()> {
        let env = &self.scn.env;
        let params = self.scn.config.vector.as_ref().expect("checked").params;
        let np = self.patches.len();
        let mut n_h = vec![0.0; np];
        let mut i_h = vec![0.0; np];
        let mut at = vec![None; self.agents.len()];
        for a in 0..self.agents.len() {
            let node = match self.locate(a, m) {
                Where::At(n) | Where::Isolated(n) => n,
                _ => continue,
            };
            if let Some(p) = env.patch_of(node) {
                at[a] = Some(p);
                n_h[p] += 1.0;
                if self.agents[a].disease.state.is_infectious() {
                    i_h[p] += 1.0;
                }
            }
        }
        let dt = VECTOR_STEP_MIN as f64 / DAY as f64;
        // Human exposure uses the vector state at the start of the step.
        let p_inf: Vec<f64> = self
            .patches
            .iter()
            .zip(&n_h)
            .map(|(st, &nh)| {
                let nv = st.n();
                let lambda = human_force(total_bites(nv, nh, &params).per_human, st.i, nv, params.beta_hv);
                infection_probability(lambda, dt)
            })
            .collect();
        let clamped: u64 = self
            .patches
            .par_iter_mut()
            .enumerate()
            .map(|(p, st)| st.step(i_h[p], n_h[p], &params, dt) as u64)
            .sum();
        self.summary.clamped_patch_steps += clamped;
        for st in &self.patches {
            self.summary.min_patch_value = self.summary.min_patch_value.min(st.s.min(st.e).min(st.i));
        }
        let step = self.vector_step;
        self.vector_step += 1;
        for a in 0..self.agents.len() {
            let Some(p) = at[a] else { continue };
            if self.agents[a].disease.state != DiseaseState::Susceptible || p_inf[p] <= 0.0 {
                continue;
            }
            if self.streams.uniform(Domain::VectorInfection, &[a as u64, step]) < p_inf[p] {
                *self.weekly_exposed.entry(env.patches[p].zone).or_default() += 1;
                self.expose(a, now, Cause::Patch { patch: p })?;
            }
        }
        Ok(())
    }

    fn day_end(&mut self, day: u32) -> Result<()> {
        let io = |e| Error::io("<output>", e);
        let mut by_class = vec![StateCounts::default(); self.summary.classes.len()];
        let mut totals = StateCounts::default();
        for a in &self.agents {
            by_class[a.class].add(a.disease.state, a.disease.hospitalized);
            totals.add(a.disease.state, a.disease.hospitalized);
        }
        for (name, c) in self.summary.classes.iter().zip(&by_class).chain(std::iter::once((&"all".to_string(), &totals))) {
            let vals: Vec<String> = c.values().iter().map(|v| v.to_string()).collect();
            writeln!(self.sink.states, "{day},{name},{}", vals.join(",")).map_err(io)?;
        }
        let env = &self.scn.env;
        let (mut nv, mut iv) = (0.0, 0.0);
        if self.scn.config.vector.is_some() {
            for (p, st) in self.patches.iter().enumerate() {
                nv += st.n();
                iv += st.i;
                writeln!(
                    self.sink.patches,
                    "{day},{p},{},{},{},{},{},{},{}",
                    env.node(env.patches[p].zone).name,
                    st.s,
                    st.e,
                    st.i,
                    self.temperature(p, day),
                    st.nu,
                    self.controlled_today[p] as u8
                )
                .map_err(io)?;
            }
        }
        self.summary.days.push(DayRecord {
            day,
            totals,
            by_class,
            new_exposures: self.new_exposures,
            vectors: nv,
            infected_vectors: iv,
        });
        Ok(())
    }

    fn write_agents(&mut self) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'r> {
            id: usize,
            class: &'r str,
            subclass: usize,
            age: u32,
            home: &'r str,
            work: Option<&'r str>,
            gamma_vacc: f64,
            state: DiseaseState,
            hospitalized: bool,
            quarantines: u32,
            history: &'r [(u64, DiseaseState)],
            #[serde(skip_serializing_if = "Option::is_none")]
            trajectory: Option<Vec<(u32, Vec<(String, u32, u32)>)>>,
        }
        let env = &self.scn.env;
        let label = |p: Position| match p {
            Position::At(n) => env.node(n).name.clone(),
            Position::Transit => "transit".to_string(),
            Position::Aboard(v) => v.to_string(),
        };
        for a in &self.agents {
            let row = Row {
                id: a.id,
                class: &self.summary.classes[a.class],
                subclass: a.subclass,
                age: a.age,
                home: &env.node(a.home).name,
                work: a.work.map(|w| env.node(w).name.as_str()),
                gamma_vacc: a.immunity.gamma_vacc,
                state: a.disease.state,
                hospitalized: a.disease.hospitalized,
                quarantines: a.quarantines,
                history: &a.history,
                trajectory: self.recorded.get(a.id).map(|days| {
                    days.iter()
                        .map(|(d, segs)| (*d, segs.iter().map(|s| (label(s.pos), s.start, s.end)).collect()))
                        .collect()
                }),
            };
            serde_json::to_writer(&mut self.sink.agents, &row)?;
            self.sink.agents.write_all(b"\n").map_err(|e| Error::io("agents.jsonl", e))?;
        }
        Ok(())
    }
}

fn contact_place(w: Where) -> Option<ContactPlace> {
    match w {
        Where::At(n) => Some(ContactPlace::Location(n)),
        Where::Aboard(v) => Some(ContactPlace::Vehicle(v)),
        _ => None,
    }
}

/// Folds unbound stays (transit, unknown, unresolvable codes) into the
/// preceding stay, or the following one at the start of the day, and joins
/// consecutive stays at the same node. A day with nothing bound is spent at
/// home.
pub fn merge_stays(bound: &[(Option<NodeId>, u32, u32)], home: NodeId) -> Vec<(NodeId, u32, u32)> {
    let mut out: Vec<(NodeId, u32, u32)> = Vec::new();
    let mut lead = 0;
    for &(node, start, dur) in bound {
        match (node, out.last_mut()) {
            (Some(n), Some(last)) if last.0 == n => last.2 += dur,
            (Some(n), _) => {
                let s = if out.is_empty() { start - lead } else { start };
                out.push((n, s, dur + if out.is_empty() { lead } else { 0 }));
            }
            (None, Some(last)) => last.2 += dur,
            (None, None) => lead += dur,
        }
    }
    if out.is_empty() {
        out.push((home, 0, DAY));
    }
    out
}
