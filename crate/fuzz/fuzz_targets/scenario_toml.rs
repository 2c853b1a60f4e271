#![no_main]
use std::collections::BTreeMap;
use std::sync::OnceLock;

use epimob::environment::Environment;
use epimob::progression::{DiseaseTable, ProgressionTable};
use epimob::sim::profiles::ProfileSet;
use epimob::sim::{Scenario, ScenarioConfig};
use epimob::trajectory::{MatrixKey, ProbabilityMatrices};
use libfuzzer_sys::fuzz_target;

type Fixture = (Environment, DiseaseTable, BTreeMap<MatrixKey, ProbabilityMatrices>);

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let env = Environment::from_toml(include_str!("../../scenarios/environment.toml")).unwrap();
        let table = ProgressionTable::from_toml(include_str!("../../scenarios/progression.toml")).unwrap();
        let profiles = ProfileSet::from_toml(include_str!("../../scenarios/profiles.toml")).unwrap();
        let matrices = profiles.fit(&env.kinds, 1).unwrap().into_iter().map(|m| (m.key.clone(), m)).collect();
        (env, table.disease("covid").unwrap().clone(), matrices)
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = ScenarioConfig::from_toml(text) else { return };
    let (env, disease, matrices) = fixture();
    let _ = Scenario::new(config, env.clone(), disease.clone(), matrices.clone());
});
