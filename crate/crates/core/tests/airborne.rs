use epimob::airborne::{
    boost, detect_contacts, infection_prob, pcr_result, s_age, sample_position, transmission_draw, trigger_due, AgentImmunity,
    ContactLog, Role, SusceptibilityBand, TestingPolicy, DEFAULT_K,
};
use epimob::progression::DiseaseState;
use epimob::rng::Streams;
use proptest::prelude::*;

fn imm(s_age: f64, alpha_vacc: f64, gamma_vacc: f64, alpha_hyg: f64, gamma_hyg: f64) -> AgentImmunity {
    AgentImmunity {
        s_age,
        alpha_vacc,
        alpha_hyg,
        gamma_vacc,
        gamma_hyg,
    }
}

#[test]
fn infection_probability_examples() {
    let rho = infection_prob(&imm(1.0, 0.5, 0.8, 0.5, 0.2), DEFAULT_K);
    assert!((rho - 0.15).abs() < 1e-12);
    for s in [0.2, 0.6, 1.0] {
        assert!((infection_prob(&imm(s, 0.7, 0.0, 0.3, 0.0), DEFAULT_K) - s * 0.3).abs() < 1e-12);
    }
    assert_eq!(infection_prob(&imm(1.0, 0.7, 1.0, 0.3, 1.0), DEFAULT_K), 0.0);
    assert_eq!(boost(0.5, 0.9), 1.0);
    assert!((boost(0.0, 0.9) - 0.9).abs() < 1e-15);
}

#[test]
fn age_bands_lookup() {
    let bands = [
        SusceptibilityBand { min_age: 0, max_age: 17, s_age: 0.6 },
        SusceptibilityBand { min_age: 18, max_age: 59, s_age: 0.8 },
    ];
    assert_eq!(s_age(&bands, 17), Some(0.6));
    assert_eq!(s_age(&bands, 18), Some(0.8));
    assert_eq!(s_age(&bands, 60), None);
}

fn brute_pairs(occ: &[(usize, [f64; 2], Role)], radius: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in occ.iter().filter(|o| o.2 == Role::Infectious) {
        for b in occ.iter().filter(|o| o.2 == Role::Susceptible) {
            let d2 = (a.1[0] - b.1[0]).powi(2) + (a.1[1] - b.1[1]).powi(2);
            if d2 <= radius * radius {
                out.push((a.0, b.0));
            }
        }
    }
    out.sort();
    out
}

proptest! {
    #[test]
    fn protection_never_raises_risk(s in 0.0f64..=1.0, av in 0.0f64..=0.5, gv in 0.0f64..=1.0, ah in 0.0f64..=0.5, gh in 0.0f64..=1.0, k in 0.0f64..=1.0) {
        let base = infection_prob(&imm(s, av, 0.0, ah, 0.0), k);
        let rho = infection_prob(&imm(s, av, gv, ah, gh), k);
        prop_assert!((0.0..=base + 1e-15).contains(&rho));
        prop_assert!((base - s * k).abs() < 1e-12);
    }

    #[test]
    fn contacts_match_pairwise_scan(seed in any::<u64>(), n in 0usize..40, w in 1.0f64..20.0) {
        let streams = Streams::new(seed);
        let occ: Vec<(usize, [f64; 2], Role)> = (0..n)
            .map(|a| {
                let role = match a % 3 { 0 => Role::Infectious, 1 => Role::Susceptible, _ => Role::Other };
                (a, sample_position(&streams, a, 7, [w, w]), role)
            })
            .collect();
        let mut got: Vec<(usize, usize)> = detect_contacts(&occ, 1.0).into_iter().map(|(a, b, d)| {
            assert!(d <= 1.0);
            (a, b)
        }).collect();
        got.sort();
        prop_assert_eq!(got, brute_pairs(&occ, 1.0));
    }

    #[test]
    fn positions_stay_inside_the_footprint(seed in any::<u64>(), agent in 0usize..10_000, minute in 0u64..100_000, w in 0.5f64..300.0, h in 0.5f64..300.0) {
        let s = Streams::new(seed);
        let p = sample_position(&s, agent, minute, [w, h]);
        prop_assert!((0.0..w).contains(&p[0]) && (0.0..h).contains(&p[1]));
        prop_assert_eq!(p, sample_position(&s, agent, minute, [w, h]));
        let u = transmission_draw(&s, agent, agent + 1, minute);
        prop_assert!((0.0..1.0).contains(&u));
    }
}

#[test]
fn no_contacts_beyond_the_radius() {
    let occ = [(0, [0.0, 0.0], Role::Infectious), (1, [1.5, 0.0], Role::Susceptible)];
    assert!(detect_contacts(&occ, 1.0).is_empty());
    let occ = [(0, [0.0, 0.0], Role::Infectious), (1, [0.6, 0.8], Role::Susceptible)];
    assert_eq!(detect_contacts(&occ, 1.0).len(), 1);
    // infectious-infectious and susceptible-susceptible pairs never count
    let occ = [(0, [0.0, 0.0], Role::Infectious), (1, [0.1, 0.0], Role::Infectious), (2, [0.2, 0.0], Role::Other)];
    assert!(detect_contacts(&occ, 1.0).is_empty());
}

#[test]
fn testing_rules() {
    let p = TestingPolicy {
        start_day: 10,
        every_days: 3,
        random_fraction: 0.1,
        sensitivity: 0.9,
        specificity: 0.99,
        ..Default::default()
    };
    assert!(!p.is_test_day(9) && p.is_test_day(10) && !p.is_test_day(11) && p.is_test_day(13));
    assert!(p.should_test(DiseaseState::Mild, 0.9));
    assert!(!p.should_test(DiseaseState::Asymptomatic, 0.5));
    assert!(p.should_test(DiseaseState::Susceptible, 0.05));
    assert!(pcr_result(DiseaseState::Asymptomatic, &p, 0.89));
    assert!(!pcr_result(DiseaseState::Asymptomatic, &p, 0.9));
    assert!(!pcr_result(DiseaseState::Recovered, &p, 0.5));
    assert!(pcr_result(DiseaseState::Susceptible, &p, 0.995));
}

#[test]
fn triggers_fire_on_day_or_share() {
    assert!(trigger_due(Some(4), None, 4, 0.0));
    assert!(!trigger_due(Some(4), None, 5, 50.0));
    assert!(trigger_due(None, Some(5.0), 9, 5.1));
    assert!(!trigger_due(None, Some(5.0), 9, 5.0));
}

#[test]
fn contact_log_window() {
    let mut log = ContactLog::default();
    log.record(10, 1, 2);
    log.record(500, 1, 3);
    log.record(900, 4, 1);
    assert_eq!(log.partners(1, 0).into_iter().collect::<Vec<_>>(), vec![2, 3, 4]);
    assert_eq!(log.partners(1, 400).into_iter().collect::<Vec<_>>(), vec![3, 4]);
    log.prune(600);
    assert_eq!(log.partners(1, 0).into_iter().collect::<Vec<_>>(), vec![4]);
    assert!(log.partners(2, 0).is_empty());
}
