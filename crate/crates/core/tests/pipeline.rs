//! GPS synthesis → stay regions → time-location days → sub-classes.

use epimob::behavior::{discover_all, rand_index, DiscoveryOptions};
use epimob::environment::EnvironmentConfig;
use epimob::mobility::{dbscan, process_dataset, LocalProjection, MobilityParams};
use epimob::sim::profiles::{synth_gps, ProfileSet, SynthOutput};

fn synth(participants_per_group: usize, days: u32, seed: u64) -> SynthOutput {
    let env = EnvironmentConfig::from_toml(include_str!("../../../scenarios/environment.toml")).unwrap();
    let mut prof = ProfileSet::from_toml(include_str!("../../../scenarios/two_shift.toml")).unwrap();
    let spec = prof.synth.as_mut().unwrap();
    spec.days = days;
    for g in &mut spec.participants {
        g.count = participants_per_group;
    }
    synth_gps(&prof, &env.kinds, seed).unwrap()
}

#[test]
fn synthetic_traces_have_fixed_cadence() {
    let out = synth(1, 3, 1);
    assert_eq!(out.participants.len(), 2);
    for pid in out.participants.keys() {
        let trace: Vec<_> = out.points.iter().filter(|p| &p.participant_id == pid).collect();
        assert_eq!(trace.len(), 3 * 288);
        for w in trace.windows(2) {
            assert_eq!((w[1].timestamp - w[0].timestamp).num_minutes(), 5);
        }
    }
}

#[test]
fn anchors_form_separate_stay_regions() {
    let out = synth(1, 3, 2);
    let pid = out.participants.keys().next().unwrap();
    let trace: Vec<_> = out.points.iter().filter(|p| &p.participant_id == pid).collect();
    let proj = LocalProjection::about_centroid(trace.iter().copied());
    let xy: Vec<[f64; 2]> = trace.iter().map(|p| proj.project(p.lat, p.lon)).collect();
    let c = dbscan(&xy, 5.0, 10).unwrap();
    assert!(c.n_clusters >= 2, "{} clusters", c.n_clusters);
}

#[test]
fn labelled_days_match_the_synthetic_truth() {
    let out = synth(2, 4, 3);
    let mob = process_dataset(out.points.clone(), &out.gazetteer, &MobilityParams::default()).unwrap();
    assert_eq!(mob.days.len(), 4 * 4);
    let (mut same, mut total) = (0usize, 0usize);
    for d in &mob.days {
        let truth = &out.truth[&d.participant_id][d.day_index as usize];
        same += d.places.iter().zip(truth).filter(|(a, b)| a == b).count();
        total += truth.len();
    }
    // only minutes around a move may disagree
    assert!(same as f64 / total as f64 > 0.97, "{same}/{total}");
}

#[test]
fn two_shift_groups_are_recovered() {
    let out = synth(4, 7, 4);
    let mob = process_dataset(out.points.clone(), &out.gazetteer, &MobilityParams::default()).unwrap();
    let (labels, reports) = discover_all(&mob.days, &out.participants, &DiscoveryOptions::default()).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].selection.k, 2);
    let (got, want): (Vec<usize>, Vec<usize>) = labels.iter().map(|((p, _), &l)| (l, out.planted[p])).unzip();
    assert_eq!(rand_index(&got, &want), 1.0);
}
