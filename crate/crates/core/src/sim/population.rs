use crate::airborne::{s_age, AgentImmunity};
use crate::environment::NodeId;
use crate::progression::{AgentDisease, DiseaseState};
use crate::rng::{Domain, Streams};
use crate::Result;

use super::scenario::Scenario;

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: usize,
    pub class: usize,
    pub subclass: usize,
    pub age: u32,
    pub home: NodeId,
    pub work: Option<NodeId>,
    pub home_zone: NodeId,
    pub home_city: NodeId,
    pub immunity: AgentImmunity,
    pub public_transport: f64,
    pub disease: AgentDisease,
    /// First day the agent is free again.
    pub quarantined_until: u32,
    pub quarantines: u32,
    pub history: Vec<(u64, DiseaseState)>,
}

impl Agent {
    pub fn alive(&self) -> bool {
        self.disease.state != DiseaseState::Dead
    }
}

/// Largest-remainder apportionment of `count` by `shares`; earlier entries
/// win remainder ties.
pub fn apportion(count: usize, shares: &[f64]) -> Vec<usize> {
    if shares.is_empty() {
        return vec![count];
    }
    let total: f64 = shares.iter().sum();
    let quotas: Vec<f64> = shares.iter().map(|s| count as f64 * s / total).collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut left = count - out.iter().sum::<usize>();
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Agents in class order; sub-classes are contiguous within a class.
pub fn generate_population(scn: &Scenario, streams: &Streams) -> Result<Vec<Agent>> {
    let env = &scn.env;
    let cfg = &scn.config;
    let mut agents = Vec::with_capacity(cfg.population_size());
    for (ci, spec) in cfg.population.iter().enumerate() {
        let homes = env.locations_of_kind(env.kind_by_name(&spec.home).expect("validated"));
        let works = spec
            .work
            .as_ref()
            .map(|w| env.locations_of_kind(env.kind_by_name(w).expect("validated")));
        let split = apportion(spec.count, &spec.subclass_shares);
        for (sub, &n) in split.iter().enumerate() {
            for _ in 0..n {
                let id = agents.len();
                let key = |k: u64| streams.hash(Domain::Population, &[id as u64, k]);
                let span = (spec.age[1] - spec.age[0] + 1) as u64;
                let age = spec.age[0] + (key(0) % span) as u32;
                let home = homes[(key(1) % homes.len() as u64) as usize];
                let work = works.as_ref().map(|w| w[(key(2) % w.len() as u64) as usize]);
                let s = s_age(&cfg.susceptibility, age).expect("validated");
                agents.push(Agent {
                    id,
                    class: ci,
                    subclass: sub,
                    age,
                    home,
                    work,
                    home_zone: env.zone_of(home).expect("locations sit in zones"),
                    home_city: env.city_of(home).expect("locations sit in cities"),
                    immunity: cfg.immunity.for_age(s),
                    public_transport: spec.public_transport,
                    disease: AgentDisease::default(),
                    quarantined_until: 0,
                    quarantines: 0,
                    history: Vec::new(),
                });
            }
        }
    }
    Ok(agents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder() {
        assert_eq!(apportion(100, &[0.7, 0.3]), vec![70, 30]);
        assert_eq!(apportion(10, &[1.0 / 3.0; 3]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[]), vec![7]);
        assert_eq!(apportion(5, &[0.5, 0.5]).iter().sum::<usize>(), 5);
    }
}
