use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use epimob::progression::DiseaseState;
use epimob::sim::{run, run_to_dir, Scenario, Sink};
use serde_json::Value;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Loads a shipped scenario, shrinks it by `shrink` and runs it for `days`.
fn small(name: &str, shrink: usize, days: u32, tweak: impl FnOnce(&mut epimob::sim::ScenarioConfig)) -> Scenario {
    let s = Scenario::load(&scenario_path(name)).unwrap();
    let mut cfg = s.config.clone();
    for c in &mut cfg.population {
        c.count = c.count.div_ceil(shrink);
    }
    cfg.duration_days = days;
    tweak(&mut cfg);
    Scenario::new(cfg, s.env, s.disease, s.matrices).unwrap()
}

fn run_dir(scn: &Scenario) -> (tempfile::TempDir, epimob::sim::RunSummary) {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_to_dir(scn, dir.path()).unwrap();
    (dir, summary)
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn state(v: &Value) -> DiseaseState {
    serde_json::from_value(v.clone()).unwrap()
}

fn infectious(s: DiseaseState) -> bool {
    matches!(s, DiseaseState::Asymptomatic | DiseaseState::Mild | DiseaseState::Severe | DiseaseState::Critical)
}

/// Replays events.jsonl, checking that every state change follows from
/// the agent's previous state and that contact exposures come from agents
/// infectious at that minute. Returns the replayed final states.
fn replay(events: &[Value], n: usize) -> Vec<DiseaseState> {
    let mut st = vec![DiseaseState::Susceptible; n];
    let mut last_minute = 0;
    for e in events {
        let Some(minute) = e.get("minute").and_then(Value::as_u64) else {
            continue;
        };
        assert!(minute >= last_minute, "events out of order at {e}");
        last_minute = minute;
        let agent = e.get("agent").and_then(Value::as_u64).map(|a| a as usize);
        match e["type"].as_str().unwrap() {
            "seed" => {
                let a = agent.unwrap();
                assert_eq!(st[a], DiseaseState::Susceptible);
                st[a] = state(&e["state"]);
            }
            "exposure" => {
                let a = agent.unwrap();
                assert_eq!(st[a], DiseaseState::Susceptible, "{e}");
                if e["cause"]["kind"] == "contact" {
                    let t = e["cause"]["transmitter"].as_u64().unwrap() as usize;
                    assert!(infectious(st[t]), "transmitter {t} not infectious: {e}");
                    assert!(e["cause"]["distance_m"].as_f64().unwrap() <= 1.0);
                }
                st[a] = DiseaseState::Exposed;
            }
            "transition" => {
                let a = agent.unwrap();
                assert_eq!(st[a], state(&e["from"]), "{e}");
                st[a] = state(&e["to"]);
            }
            _ => {}
        }
    }
    st
}

#[test]
fn airborne_run_is_conserved_and_causal() {
    let scn = small("covid_uncontrolled.toml", 10, 14, |_| {});
    let n = scn.config.population_size();
    let (dir, summary) = run_dir(&scn);

    let states = std::fs::read_to_string(dir.path().join("states.csv")).unwrap();
    let mut lines = states.lines();
    assert_eq!(lines.next().unwrap(), "day,class,S,E,I_asym,I_mild,I_sev,I_crit,Hosp,R,D");
    let mut per_day: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        let total: usize = f[2..].iter().map(|x| x.parse::<usize>().unwrap()).sum();
        let e = per_day.entry(f[0].parse().unwrap()).or_default();
        if f[1] == "all" {
            e.0 = total;
        } else {
            e.1 += total;
        }
    }
    assert_eq!(per_day.len(), 14);
    for (day, (all, classes)) in per_day {
        assert_eq!(all, n, "day {day}");
        assert_eq!(classes, n, "day {day}");
    }

    let events = jsonl(&dir.path().join("events.jsonl"));
    let seeds: Vec<&Value> = events.iter().filter(|e| e["type"] == "seed").collect();
    assert_eq!(seeds.len(), 3);
    let agents = jsonl(&dir.path().join("agents.jsonl"));
    assert_eq!(agents.len(), n);
    for s in &seeds {
        let a = s["agent"].as_u64().unwrap() as usize;
        assert_eq!(agents[a]["class"], "student");
    }
    let replayed = replay(&events, n);
    for (a, row) in agents.iter().enumerate() {
        assert_eq!(row["id"].as_u64().unwrap() as usize, a);
        assert_eq!(state(&row["state"]), replayed[a]);
    }
    let exposures = events.iter().filter(|e| e["type"] == "exposure").count();
    assert_eq!(exposures, summary.exposures.len());
    assert!(exposures > 0, "no transmission in a small seeded run");
    assert_eq!(summary.cumulative_infections(), exposures + 3);
}

#[test]
fn no_seeds_means_no_epidemic() {
    let scn = small("covid_uncontrolled.toml", 20, 5, |c| c.seeding = None);
    let (dir, summary) = run_dir(&scn);
    assert!(summary.exposures.is_empty());
    let last = summary.days.last().unwrap();
    assert_eq!(last.totals.s, scn.config.population_size());
    let events = jsonl(&dir.path().join("events.jsonl"));
    assert!(events.iter().all(|e| e["type"] == "day_summary"));
}

#[test]
fn subclass_shares_are_apportioned() {
    let scn = small("covid_uncontrolled.toml", 1, 1, |c| c.seeding = None);
    let (dir, _) = run_dir(&scn);
    let agents = jsonl(&dir.path().join("agents.jsonl"));
    let count = |class: &str, sub: u64| {
        agents.iter().filter(|a| a["class"] == class && a["subclass"].as_u64() == Some(sub)).count()
    };
    assert_eq!((count("factory", 0), count("factory", 1)), (168, 72));
    assert_eq!((count("medical", 0), count("medical", 1)), (70, 30));
    assert!(agents.iter().filter(|a| a["class"] == "retired").all(|a| a["work"].is_null()));
}

#[test]
fn vector_run_without_human_infection_from_bites() {
    let scn = small("dengue_uncontrolled.toml", 10, 10, |c| {
        c.vector.as_mut().unwrap().params.beta_hv = 0.0;
    });
    let (dir, summary) = run_dir(&scn);
    assert!(summary.exposures.iter().all(|e| e.patch.is_none()));
    assert!(summary.exposures.is_empty());
    assert!(!summary.seeds.is_empty());
    let patches = std::fs::read_to_string(dir.path().join("patches.csv")).unwrap();
    let mut rows = 0;
    for l in patches.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        for x in &f[3..6] {
            assert!(x.parse::<f64>().unwrap() >= 0.0);
        }
        rows += 1;
    }
    assert_eq!(rows, 10 * scn.env.patches.len());
}

#[test]
fn vector_run_is_causal() {
    let scn = small("dengue_uncontrolled.toml", 4, 20, |_| {});
    let n = scn.config.population_size();
    let (dir, summary) = run_dir(&scn);
    let events = jsonl(&dir.path().join("events.jsonl"));
    replay(&events, n);
    assert!(summary.exposures.iter().all(|e| e.patch.is_some() && e.transmitter.is_none()));
    assert!(summary.min_patch_value >= 0.0);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let scn = small("covid_quarantine.toml", 10, 12, |c| {
        c.testing.as_mut().unwrap().start_day = 3;
    });
    let mut outputs = Vec::new();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let dir = tempfile::tempdir().unwrap();
        pool.install(|| run_to_dir(&scn, dir.path())).unwrap();
        let files: Vec<Vec<u8>> = ["states.csv", "events.jsonl", "patches.csv", "agents.jsonl"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn discarded_output_gives_the_same_summary() {
    let scn = small("covid_uncontrolled.toml", 20, 6, |_| {});
    let a = run(&scn, &mut Sink::discard()).unwrap();
    let (_dir, b) = run_dir(&scn);
    assert_eq!(a.days.len(), b.days.len());
    for (x, y) in a.days.iter().zip(&b.days) {
        assert_eq!(x.totals, y.totals);
    }
}

#[test]
fn bad_scenarios_rejected() {
    let s = Scenario::load(&scenario_path("covid_uncontrolled.toml")).unwrap();
    let mut cfg = s.config.clone();
    cfg.population[0].subclass_shares = vec![0.5, 0.6];
    assert!(Scenario::new(cfg, s.env.clone(), s.disease.clone(), s.matrices.clone()).is_err());
    let mut cfg = s.config.clone();
    cfg.population[0].work = Some("castle".into());
    assert!(Scenario::new(cfg, s.env.clone(), s.disease.clone(), s.matrices.clone()).is_err());
    assert!(Scenario::load(Path::new("/nonexistent/scenario.toml")).is_err());
}
