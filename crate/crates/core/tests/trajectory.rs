mod common;

use epimob::mobility::{LocationCode, Place};
use epimob::trajectory::{
    estimate_from_indices, estimate_matrices, parse_matrices, roulette, validate_distribution, write_matrices, DailyTrajectory,
    DayType, DurationModel, EstimateOptions, MatrixKey,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M: usize = 1440;

fn key() -> MatrixKey {
    MatrixKey {
        class: "nurse".into(),
        subclass: 1,
        day_type: DayType::Weekday,
    }
}

fn places(n: usize) -> Vec<Place> {
    (0..n).map(|i| Place::Code(LocationCode::from_value(i as u8).unwrap())).collect()
}

/// Piecewise-constant days with a few random switch points.
fn random_days(seed: u64, n_days: usize, n_loc: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_days)
        .map(|_| {
            let mut cuts: Vec<usize> = (0..rng.random_range(0..6)).map(|_| rng.random_range(1..M)).collect();
            cuts.sort();
            let mut day = Vec::with_capacity(M);
            let mut loc = rng.random_range(0..n_loc);
            for t in 0..M {
                if cuts.binary_search(&t).is_ok() {
                    loc = rng.random_range(0..n_loc);
                }
                day.push(loc);
            }
            day
        })
        .collect()
}

/// Maximal runs `(location, length)` of one day.
fn run_lengths(day: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &l in day {
        match out.last_mut() {
            Some((loc, len)) if *loc == l => *len += 1,
            _ => out.push((l, 1)),
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matrices_match_counting(seed in any::<u64>(), n_days in 1usize..20, n_loc in 1usize..5, alpha in prop_oneof![Just(0.0), 0.0f64..2.0]) {
        let days = random_days(seed, n_days, n_loc);
        let opts = EstimateOptions { alpha, duration_model: DurationModel::Location };
        let m = estimate_from_indices(key(), places(n_loc), &days, &opts).unwrap();
        m.validate().unwrap();
        for t in (0..M).step_by(37) {
            let count = |l: usize| days.iter().filter(|d| d[t] == l).count() as f64;
            for l in 0..n_loc {
                let want = (count(l) + alpha) / (n_days as f64 + alpha * n_loc as f64);
                prop_assert!((m.visit[l][t] - want).abs() < 1e-12);
            }
        }
        let runs: Vec<(usize, usize)> = days.iter().flat_map(|d| run_lengths(d)).collect();
        for l in 0..n_loc {
            let total = runs.iter().filter(|r| r.0 == l).count() as f64;
            for d in [1usize, 2, 60, 500, M] {
                let c = runs.iter().filter(|r| **r == (l, d)).count() as f64;
                let want = if total == 0.0 { 0.0 } else { (c + alpha) / (total + alpha * M as f64) };
                prop_assert!((m.occupancy[l][d - 1] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generated_days_are_well_formed(seed in any::<u64>(), n_days in 1usize..10, n_loc in 1usize..5) {
        let days = random_days(seed, n_days, n_loc);
        let m = estimate_from_indices(key(), places(n_loc), &days, &EstimateOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..5 {
            let tr = m.generate(&mut rng);
            prop_assert_eq!(tr.minutes.len(), M);
            let mut t = 0;
            for s in &tr.stays {
                prop_assert_eq!(s.start, t);
                prop_assert!(s.duration >= 1);
                // a stay only starts where 𝓛 puts mass
                prop_assert!(m.visit[s.location][s.start] > 0.0);
                prop_assert!(tr.minutes[t..t + s.duration].iter().all(|&l| l == s.location));
                t += s.duration;
            }
            prop_assert_eq!(t, M);
        }
    }

    #[test]
    fn text_format_roundtrips(seed in any::<u64>(), n_days in 1usize..6, n_loc in 1usize..4, hourly in any::<bool>()) {
        let days = random_days(seed, n_days, n_loc);
        let opts = EstimateOptions {
            alpha: 0.5,
            duration_model: if hourly { DurationModel::LocationHour } else { DurationModel::Location },
        };
        let m = estimate_from_indices(key(), places(n_loc), &days, &opts).unwrap();
        let back = parse_matrices(&write_matrices(&m)).unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn single_trajectory_against_uniform_has_tv_one_half() {
    let days = vec![vec![0; M], vec![1; M]];
    let m = estimate_from_indices(key(), places(2), &days, &EstimateOptions::default()).unwrap();
    let tr = DailyTrajectory::from_minutes(vec![0; M]);
    let p = validate_distribution(&[tr], &m).unwrap();
    assert!(p.per_minute.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    assert!((p.mean - 0.5).abs() < 1e-12);
}

#[test]
fn tv_agrees_with_reference() {
    let days = random_days(5, 12, 3);
    let m = estimate_from_indices(key(), places(3), &days, &EstimateOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let trs: Vec<DailyTrajectory> = (0..200).map(|_| m.generate(&mut rng)).collect();
    let p = validate_distribution(&trs, &m).unwrap();
    for t in [0, 700, 1439] {
        let emp: Vec<f64> = (0..3).map(|l| trs.iter().filter(|tr| tr.minutes[t] == l).count() as f64 / 200.0).collect();
        let col: Vec<f64> = (0..3).map(|l| m.visit[l][t]).collect();
        assert!((p.per_minute[t] - common::tv(&emp, &col)).abs() < 1e-12);
    }
}

#[test]
fn deterministic_source_is_reproduced_exactly() {
    // every observed day is the same, so every synthetic day must be too
    let day: Vec<usize> = (0..M).map(|t| usize::from((480..960).contains(&t))).collect();
    let m = estimate_from_indices(key(), places(2), &[day.clone(), day.clone()], &EstimateOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        assert_eq!(m.generate(&mut rng).minutes, day);
    }
}

#[test]
fn estimate_from_places_sorts_locations() {
    let p = places(3);
    let day: Vec<Place> = (0..M).map(|t| if t < 700 { p[2] } else { p[0] }).collect();
    let m = estimate_matrices(key(), &[day.as_slice()], &EstimateOptions::default()).unwrap();
    assert_eq!(m.locations, vec![p[0], p[2]]);
    assert_eq!(m.visit[1][0], 1.0);
    assert_eq!(m.occupancy[1][699], 1.0);
}

#[test]
fn bad_inputs_rejected() {
    assert!(estimate_from_indices(key(), places(2), &[], &EstimateOptions::default()).is_err());
    assert!(estimate_from_indices(key(), places(2), &[vec![0; 10]], &EstimateOptions::default()).is_err());
    assert!(estimate_from_indices(key(), places(2), &[vec![3; M]], &EstimateOptions::default()).is_err());
    assert!(parse_matrices("not a matrix file").is_err());
}

#[test]
fn roulette_follows_weights() {
    let w = [0.0, 1.0, 0.0, 3.0];
    assert_eq!(roulette(w.iter().copied(), 0.0), Some(1));
    assert_eq!(roulette(w.iter().copied(), 0.2499), Some(1));
    assert_eq!(roulette(w.iter().copied(), 0.25), Some(3));
    assert_eq!(roulette(w.iter().copied(), 0.9999), Some(3));
    assert_eq!(roulette([0.0, 0.0].into_iter(), 0.5), None);
}

#[test]
fn day_types() {
    assert_eq!(DayType::of_day(0), DayType::Weekday);
    assert_eq!(DayType::of_day(4), DayType::Weekday);
    assert_eq!(DayType::of_day(5), DayType::Weekend);
    assert_eq!(DayType::of_day(13), DayType::Weekend);
}
