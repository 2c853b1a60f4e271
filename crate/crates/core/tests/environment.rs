use std::collections::HashSet;

use epimob::environment::{plan_day_route, Environment, Mode, NodeId, NodeKind, Position, TransportBook};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn env() -> Environment {
    Environment::from_toml(include_str!("../../../scenarios/environment.toml")).unwrap()
}

fn depth(env: &Environment, mut id: NodeId) -> usize {
    let mut d = 0;
    while let Some(p) = env.node(id).parent {
        id = p;
        d += 1;
    }
    d
}

#[test]
fn region_tree_is_consistent() {
    let env = env();
    assert_eq!(env.cities.len(), 3);
    for &loc in &env.locations {
        let n = env.node(loc);
        assert_eq!(n.kind, NodeKind::Location);
        let zone = env.zone_of(loc).unwrap();
        let zrect = env.node(zone).rect.unwrap();
        let c = n.center.unwrap();
        assert!(zrect.contains(c), "{} outside its zone", n.name);
        let fp = n.footprint.unwrap();
        assert_eq!(fp, env.kinds[n.location_kind.unwrap()].footprint_m);
        let patch = &env.patches[env.patch_of(loc).unwrap()];
        assert_eq!(patch.zone, zone);
        assert!(patch.rect.contains(c));
        let code = n.code.unwrap();
        assert!(env.locations_with_code(code).contains(&loc));
        assert_eq!(code.zone_bits(), env.node(zone).zone_class.unwrap().bits());
        assert_eq!(env.node(env.city_of(loc).unwrap()).kind, NodeKind::City);
    }
    // patches tile each zone exactly
    for &z in &env.zones {
        let area: f64 = env.patches_in_zone(z).map(|p| p.rect.area()).sum();
        let zr = env.node(z).rect.unwrap();
        assert!((area - zr.area()).abs() < 1e-6);
    }
    let homes = env.locations_of_kind(env.kind_by_name("home").unwrap());
    assert_eq!(homes.len(), 500);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn routes_are_tree_paths(i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>()) {
        let env = env();
        let a = NodeId(i.index(env.nodes.len()));
        let b = NodeId(j.index(env.nodes.len()));
        let r = env.route(a, b);
        prop_assert_eq!(r[0], a);
        prop_assert_eq!(*r.last().unwrap(), b);
        for w in r.windows(2) {
            let (x, y) = (env.node(w[0]), env.node(w[1]));
            prop_assert!(x.parent == Some(w[1]) || y.parent == Some(w[0]));
        }
        let uniq: HashSet<NodeId> = r.iter().copied().collect();
        prop_assert_eq!(uniq.len(), r.len());
        // the highest node on the path is the lowest common ancestor
        let top = r.iter().copied().min_by_key(|&n| depth(&env, n)).unwrap();
        prop_assert_eq!(r.len(), depth(&env, a) + depth(&env, b) - 2 * depth(&env, top) + 1);
        prop_assert_eq!(env.travel_minutes(a, b), env.travel_minutes(b, a));
    }

    // Many agents share one booking book: every day plan covers the day
    // without gaps or overlaps, and no bus is ever over capacity.
    #[test]
    fn day_plans_partition_the_day(seed in any::<u64>(), agents in 1usize..60) {
        let env = env();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut book = TransportBook::default();
        book.new_day(0);
        let mut rides = Vec::new();
        for _ in 0..agents {
            let mut t = 0;
            let mut stays = Vec::new();
            while t < 1440 {
                let d = rng.random_range(30..600).min(1440 - t);
                let loc = env.locations[rng.random_range(0..env.locations.len())];
                stays.push((loc, t, d));
                t += d;
            }
            let p = rng.random::<f64>();
            let (segs, legs) = plan_day_route(&env, &mut book, &stays, |_| p < 0.7);
            prop_assert_eq!(segs[0].start, 0);
            prop_assert_eq!(segs.last().unwrap().end, 1440);
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
            prop_assert!(segs.iter().all(|s| s.start < s.end));
            prop_assert_eq!(segs[0].pos, Position::At(stays[0].0));
            for l in &legs {
                prop_assert!(l.depart <= l.arrive);
                if let Mode::Bus { line, trip, board, alight } = l.mode {
                    prop_assert!(l.depart <= board && board < alight && alight <= l.arrive);
                    rides.push((line, trip, board, alight.min(1440)));
                }
            }
        }
        for (line, trip, board, alight) in rides {
            for m in board..alight {
                prop_assert!(book.seats_taken(line, trip, m) <= env.lines[line].capacity);
            }
        }
    }
}

#[test]
fn bus_timetable() {
    let env = env();
    for line in &env.lines {
        for stop in 0..line.stops.len() {
            for t in [0u32, 1, 333, 1439] {
                let trip = line.next_trip(stop, t);
                let at = line.pass_time(trip, stop);
                assert!(at >= t as i64 && at < t as i64 + line.headway as i64);
                assert_eq!(line.position(trip, at), Some(stop));
            }
            let next = (stop + 1) % line.stops.len();
            assert!(line.ride_minutes(stop, next) > 0);
            assert_eq!(line.ride_minutes(stop, stop), line.period);
        }
    }
}

#[test]
fn private_travel_uses_tree_times() {
    let env = env();
    let a = env.locations_of_kind(env.kind_by_name("home").unwrap())[0];
    let b = env.locations_of_kind(env.kind_by_name("field").unwrap())[0];
    assert_ne!(env.city_of(a), env.city_of(b));
    // location-zone-city-root-city-zone-location
    assert_eq!(env.route(a, b).len(), 7);
    assert_eq!(env.travel_minutes(a, b), 5 + 10 + 15 + 15 + 10 + 5);
    let mut book = TransportBook::default();
    let (segs, legs) = plan_day_route(&env, &mut book, &[(a, 0, 600), (b, 600, 840)], |_| false);
    assert_eq!(legs.len(), 1);
    assert_eq!((legs[0].depart, legs[0].arrive), (600, 660));
    assert_eq!(segs[1].pos, Position::Transit);
}

#[test]
fn bad_environments_rejected() {
    assert!(Environment::from_toml("").is_err());
    let text = include_str!("../../../scenarios/environment.toml");
    let dup = text.replacen("name = \"Pallekele\"", "name = \"Kandy\"", 1);
    assert!(Environment::from_toml(&dup).is_err());
}

#[test]
fn public_preference_rides_the_loop_both_ways() {
    let env = env();
    let home = env.locations_of_kind(env.kind_by_name("home").unwrap())[0];
    let school = env.locations_of_kind(env.kind_by_name("school").unwrap())[0];
    assert_eq!(env.city_of(home), env.city_of(school));
    let mut book = TransportBook::default();
    let stays = [(home, 0, 420), (school, 420, 480), (home, 900, 540)];
    let (_, legs) = plan_day_route(&env, &mut book, &stays, |_| true);
    assert_eq!(legs.len(), 2);
    let loop_line = env.lines.iter().position(|l| l.name == "kandy-loop").unwrap();
    for l in &legs {
        assert!(matches!(l.mode, Mode::Bus { line, .. } if line == loop_line), "{l:?}");
        assert!(!l.fallback);
    }
    let (_, legs) = plan_day_route(&env, &mut book, &[(home, 0, 1440)], |_| true);
    assert!(legs.is_empty());
}
