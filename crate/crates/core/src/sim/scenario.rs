//! Scenario configuration and its resolution into loaded inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::profiles::ProfileSet;
use crate::airborne::{
    AgentImmunity, ClassQuarantine, SusceptibilityBand, TestingPolicy, TransmissionParams, VaccinationEvent,
};
use crate::environment::{Environment, NodeKind};
use crate::progression::{DiseaseState, DiseaseTable, ProgressionTable};
use crate::trajectory::{parse_matrices, DayType, MatrixKey, ProbabilityMatrices};
use crate::vectorborne::{VectorControlPolicy, VectorParams, VectorSeeding};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pathway {
    Airborne,
    Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub class: String,
    pub count: usize,
    /// Inclusive age range, drawn uniformly.
    pub age: [u32; 2],
    /// Location kind of the home.
    pub home: String,
    /// Location kind of the workplace, if any.
    pub work: Option<String>,
    /// Probability that a leg uses public transport.
    #[serde(default)]
    pub public_transport: f64,
    /// Behavioral sub-class shares; a single sub-class when empty.
    #[serde(default)]
    pub subclass_shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub count: usize,
    /// Classes to draw from; all when empty.
    #[serde(default)]
    pub classes: Vec<String>,
    #[serde(default = "default_seed_state")]
    pub state: DiseaseState,
}

fn default_seed_state() -> DiseaseState {
    DiseaseState::Mild
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImmunityDefaults {
    pub alpha_vacc: f64,
    pub alpha_hyg: f64,
    pub gamma_vacc: f64,
    pub gamma_hyg: f64,
}

impl Default for ImmunityDefaults {
    fn default() -> Self {
        Self {
            alpha_vacc: 0.5,
            alpha_hyg: 0.5,
            gamma_vacc: 0.0,
            gamma_hyg: 0.0,
        }
    }
}

impl ImmunityDefaults {
    pub fn for_age(&self, s_age: f64) -> AgentImmunity {
        AgentImmunity {
            s_age,
            alpha_vacc: self.alpha_vacc,
            alpha_hyg: self.alpha_hyg,
            gamma_vacc: self.gamma_vacc,
            gamma_hyg: self.gamma_hyg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSection {
    #[serde(default)]
    pub params: VectorParams,
    #[serde(default)]
    pub seeding: VectorSeeding,
    pub control: Option<VectorControlPolicy>,
    /// Overrides every patch temperature, °C.
    pub temperature_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// Log every infectious→susceptible contact, not only the causal ones.
    #[serde(default)]
    pub contacts: bool,
    /// Record each agent's daily stays in `agents.jsonl`.
    #[serde(default)]
    pub trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration_days: u32,
    pub pathway: Pathway,
    pub disease: String,
    pub environment: PathBuf,
    pub progression: PathBuf,
    /// Directory of fitted matrix files.
    pub matrices: Option<PathBuf>,
    /// Schedule templates to synthesize matrices from.
    pub profiles: Option<PathBuf>,
    /// Weekday of day 0, Monday = 0.
    #[serde(default)]
    pub start_weekday: u32,
    #[serde(default)]
    pub holidays: Vec<u32>,
    #[serde(default)]
    pub reorder_errands: bool,
    pub population: Vec<ClassSpec>,
    pub seeding: Option<SeedSpec>,
    pub susceptibility: Vec<SusceptibilityBand>,
    #[serde(default)]
    pub immunity: ImmunityDefaults,
    #[serde(default)]
    pub transmission: TransmissionParams,
    pub testing: Option<TestingPolicy>,
    #[serde(default)]
    pub vaccination: Vec<VaccinationEvent>,
    #[serde(default)]
    pub class_quarantine: Vec<ClassQuarantine>,
    pub vector: Option<VectorSection>,
    #[serde(default)]
    pub output: OutputOptions,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("scenario", e.to_string()))
    }

    pub fn day_type(&self, day: u32) -> DayType {
        if self.holidays.contains(&day) {
            DayType::Weekend
        } else {
            DayType::of_day(day + self.start_weekday)
        }
    }

    pub fn population_size(&self) -> usize {
        self.population.iter().map(|c| c.count).sum()
    }
}

/// A scenario with every referenced input loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub env: Environment,
    pub disease: DiseaseTable,
    pub matrices: BTreeMap<MatrixKey, ProbabilityMatrices>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_to_string(path)?;
        let config = ScenarioConfig::from_toml(&text).map_err(|e| relabel(e, path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let at = |p: &Path| base.join(p);
        let env_path = at(&config.environment);
        let env = Environment::from_toml(&crate::error::read_to_string(&env_path)?).map_err(|e| relabel(e, &env_path))?;
        let prog_path = at(&config.progression);
        let table = ProgressionTable::from_toml(&crate::error::read_to_string(&prog_path)?).map_err(|e| relabel(e, &prog_path))?;
        let disease = table.disease(&config.disease).map_err(|e| relabel(e, &prog_path))?.clone();
        let matrices = match (&config.matrices, &config.profiles) {
            (Some(dir), None) => load_matrix_dir(&at(dir))?,
            (None, Some(p)) => {
                let pp = at(p);
                let profiles = ProfileSet::from_toml(&crate::error::read_to_string(&pp)?).map_err(|e| relabel(e, &pp))?;
                profiles
                    .fit(&env.kinds, config.seed)?
                    .into_iter()
                    .map(|m| (m.key.clone(), m))
                    .collect()
            }
            _ => return Err(Error::config(path.display().to_string(), "set exactly one of `matrices` or `profiles`")),
        };
        Self::new(config, env, disease, matrices).map_err(|e| relabel(e, path))
    }

    pub fn new(
        config: ScenarioConfig,
        env: Environment,
        disease: DiseaseTable,
        matrices: BTreeMap<MatrixKey, ProbabilityMatrices>,
    ) -> Result<Self> {
        let s = Self {
            config,
            env,
            disease,
            matrices,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        let bad = |m: String| Error::config("scenario", m);
        if c.duration_days == 0 || c.population_size() == 0 {
            return Err(bad("duration_days and population must be positive".into()));
        }
        let mut classes = BTreeSet::new();
        for spec in &c.population {
            if !classes.insert(spec.class.as_str()) {
                return Err(bad(format!("class {:?} listed twice", spec.class)));
            }
            if spec.age[0] > spec.age[1] {
                return Err(bad(format!("{}: age range reversed", spec.class)));
            }
            if !(0.0..=1.0).contains(&spec.public_transport) {
                return Err(bad(format!("{}: public_transport outside [0, 1]", spec.class)));
            }
            if spec.subclass_shares.iter().any(|s| *s < 0.0)
                || (!spec.subclass_shares.is_empty() && (spec.subclass_shares.iter().sum::<f64>() - 1.0).abs() > 1e-9)
            {
                return Err(bad(format!("{}: subclass shares must be non-negative and sum to 1", spec.class)));
            }
            for kind in std::iter::once(&spec.home).chain(spec.work.iter()) {
                let k = self
                    .env
                    .kind_by_name(kind)
                    .ok_or_else(|| bad(format!("{}: unknown location kind {kind:?}", spec.class)))?;
                if self.env.locations_of_kind(k).is_empty() {
                    return Err(bad(format!("{}: no locations of kind {kind:?}", spec.class)));
                }
            }
            for age in [spec.age[0], spec.age[1]] {
                if self.disease.band(age).is_none() {
                    return Err(bad(format!("{}: no progression band covers age {age}", spec.class)));
                }
            }
            for age in spec.age[0]..=spec.age[1] {
                if self.disease.band(age).is_none() || crate::airborne::s_age(&c.susceptibility, age).is_none() {
                    return Err(bad(format!("{}: age {age} not covered by progression and susceptibility bands", spec.class)));
                }
            }
            for sub in 0..spec.subclass_shares.len().max(1) {
                for day_type in [DayType::Weekday, DayType::Weekend] {
                    let key = MatrixKey {
                        class: spec.class.clone(),
                        subclass: sub,
                        day_type,
                    };
                    if !self.matrices.contains_key(&key) {
                        return Err(bad(format!("no matrices for {} sub-class {sub} on {day_type}s", spec.class)));
                    }
                }
            }
        }
        for b in &c.susceptibility {
            if !(0.0..=1.0).contains(&b.s_age) {
                return Err(bad("susceptibility outside [0, 1]".into()));
            }
            c.immunity.for_age(b.s_age).validate().map_err(|e| bad(e.to_string()))?;
        }
        if !(c.transmission.k > 0.0 && c.transmission.radius_m > 0.0) {
            return Err(bad("transmission k and radius must be positive".into()));
        }
        if let Some(seed) = &c.seeding {
            if seed.classes.iter().any(|k| !classes.contains(k.as_str())) {
                return Err(bad("seeding names an unknown class".into()));
            }
            if seed.state == DiseaseState::Susceptible || seed.state.is_absorbing() {
                return Err(bad("seed state must be exposed or infectious".into()));
            }
        }
        if let Some(t) = &c.testing {
            t.validate()?;
        }
        for v in &c.vaccination {
            v.validate()?;
            self.check_targets(&classes, &v.classes, &v.zones)?;
        }
        for q in &c.class_quarantine {
            q.validate()?;
            self.check_targets(&classes, &q.classes, &[])?;
        }
        if let Some(v) = &c.vector {
            v.params.validate()?;
            if let Some(ctrl) = &v.control {
                ctrl.validate()?;
            }
            if let Some(z) = &v.seeding.zone {
                let id = self.env.by_name(z).ok_or_else(|| bad(format!("vector seeding zone {z:?} unknown")))?;
                if self.env.node(id).kind != NodeKind::Zone {
                    return Err(bad(format!("{z:?} is not a zone")));
                }
            }
        } else if c.pathway == Pathway::Vector {
            return Err(bad("vector pathway needs a [vector] section".into()));
        }
        Ok(())
    }

    fn check_targets(&self, classes: &BTreeSet<&str>, want: &[String], zones: &[String]) -> Result<()> {
        if let Some(k) = want.iter().find(|k| !classes.contains(k.as_str())) {
            return Err(Error::config("scenario", format!("unknown class {k:?}")));
        }
        for z in zones {
            match self.env.by_name(z) {
                Some(id) if self.env.node(id).kind == NodeKind::Zone => {}
                _ => return Err(Error::config("scenario", format!("unknown zone {z:?}"))),
            }
        }
        Ok(())
    }
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Config { msg, .. } => Error::config(path.display().to_string(), msg),
        other => other,
    }
}

pub fn load_matrix_dir(dir: &Path) -> Result<BTreeMap<MatrixKey, ProbabilityMatrices>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mat"))
        .collect();
    paths.sort();
    for p in paths {
        let m = parse_matrices(&crate::error::read_to_string(&p)?).map_err(|e| match e {
            Error::Format { line, msg, .. } => Error::config(p.display().to_string(), format!("line {line}: {msg}")),
            other => other,
        })?;
        out.insert(m.key.clone(), m);
    }
    Ok(out)
}
