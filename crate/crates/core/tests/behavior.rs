mod common;

use std::collections::BTreeMap;

use epimob::behavior::{
    build_laplacian, discover, kmeans, read_labels_csv, select_mode, sigma_sweep, sorted_eigen, spectral_cluster,
    write_labels_csv, DiscoveryOptions, EigenGapCurve, Mode, SpectralParams,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_days(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(0..4) as f64 * 8.0).collect()).collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_matches_definition(seed in any::<u64>(), n in 2usize..12, sigma in 0.5f64..40.0, mu in 0.0f64..=1.0) {
        let days = random_days(seed, n, 24);
        let l = build_laplacian(&days, &SpectralParams::new(sigma, mu).unwrap());
        let reference = common::reference_laplacian(&days, sigma, mu);
        match l {
            Ok(l) => {
                for i in 0..n {
                    for j in 0..n {
                        prop_assert!((l[(i, j)] - reference[i][j]).abs() < 1e-12);
                    }
                }
            }
            // only possible when a row has no affinity at all
            Err(_) => prop_assert!(reference.iter().any(|r| r.iter().any(|x| !x.is_finite()))),
        }
    }

    #[test]
    fn eigenvalues_match_jacobi_and_lie_in_0_2(seed in any::<u64>(), n in 2usize..14, sigma in 1.0f64..40.0) {
        let days = random_days(seed, n, 24);
        let l = build_laplacian(&days, &SpectralParams::new(sigma, 1.0).unwrap()).unwrap();
        let (vals, vecs) = sorted_eigen(&l).unwrap();
        let oracle = common::jacobi_eigenvalues(&to_rows(&l));
        for (a, b) in vals.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(vals[0] > -1e-9 && vals[n - 1] < 2.0 + 1e-9);
        // columns are eigenvectors of their own eigenvalue
        for c in 0..n {
            let v = vecs.column(c);
            let r = &l * v - v * vals[c];
            prop_assert!(r.norm() < 1e-8);
        }
    }

    // Rescaling every day vector rescales the default grid with it, so the
    // same mode wins at a proportionally scaled σ.
    #[test]
    fn mode_selection_is_scale_invariant(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let (days, _) = common::two_group_days(seed, 6, 30);
        let scaled: Vec<Vec<f64>> = days.iter().map(|d| d.iter().map(|x| x * scale).collect()).collect();
        let a = discover("x", &days, &DiscoveryOptions::default()).unwrap();
        let b = discover("x", &scaled, &DiscoveryOptions::default()).unwrap();
        prop_assert_eq!(a.selection.mode, b.selection.mode);
        prop_assert!((a.selection.gap - b.selection.gap).abs() < 1e-9);
        prop_assert!((b.selection.sigma / a.selection.sigma - scale).abs() < 1e-9 * scale);
    }
}

#[test]
fn two_identical_days_give_the_textbook_laplacian() {
    let days = vec![vec![16.0; 1440], vec![16.0; 1440]];
    let l = build_laplacian(&days, &SpectralParams::new(1.0, 1.0).unwrap()).unwrap();
    for (i, j, want) in [(0, 0, 0.5), (0, 1, -0.5), (1, 0, -0.5), (1, 1, 0.5)] {
        assert!((l[(i, j)] - want).abs() < 1e-15);
    }
    let (vals, _) = sorted_eigen(&l).unwrap();
    assert!(vals[0].abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
}

#[test]
fn truncated_components_show_as_zero_eigenvalues() {
    // three far-apart groups of three identical days
    let mut days = Vec::new();
    for g in 0..3 {
        for _ in 0..3 {
            days.push(vec![g as f64 * 100.0; 10]);
        }
    }
    let p = SpectralParams::new(10.0, 1.0).unwrap().with_truncation(1e-6);
    let (vals, _) = sorted_eigen(&build_laplacian(&days, &p).unwrap()).unwrap();
    let zeros = vals.iter().filter(|v| v.abs() < 1e-9).count();
    assert_eq!(zeros, 3);
}

#[test]
fn clean_two_group_days_pick_mode_two_three() {
    let (days, truth) = common::two_group_days(1, 10, 0);
    let r = discover("nurse", &days, &DiscoveryOptions::default()).unwrap();
    assert_eq!(r.selection.mode, Mode::new(2));
    assert_eq!(r.selection.k, 2);
    assert!((r.selection.gap - 1.0).abs() < 1e-6);
    assert_eq!(common::rand_index(&r.labels, &truth), 1.0);
}

#[test]
fn single_schedule_picks_mode_one_two() {
    let (days, _) = common::two_group_days(2, 12, 20);
    let group0: Vec<Vec<f64>> = days[..12].to_vec();
    let r = discover("office", &group0, &DiscoveryOptions::default()).unwrap();
    assert_eq!(r.selection.mode, Mode::new(1));
    assert!(r.labels.iter().all(|&l| l == 0));
}

// Known limitation: with boundary jitter every day is distinct and at the
// smallest grid scales the kernel isolates days, which drives the 1-2 gap
// close to 1 and beats the two-group gap.
#[test]
fn jittered_two_group_days_favor_mode_one_two() {
    let (days, _) = common::two_group_days(3, 10, 5);
    let r = discover("nurse", &days, &DiscoveryOptions::default()).unwrap();
    assert_eq!(r.selection.mode, Mode::new(1));
}

#[test]
fn discovery_is_invariant_to_day_order() {
    let (days, truth) = common::two_group_days(4, 8, 0);
    let n = days.len();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| days[i].clone()).collect();
    let a = discover("x", &days, &DiscoveryOptions::default()).unwrap();
    let b = discover("x", &shuffled, &DiscoveryOptions::default()).unwrap();
    assert_eq!(a.selection.mode, b.selection.mode);
    assert!((a.selection.gap - b.selection.gap).abs() < 1e-9);
    let b_in_a_order: Vec<usize> = {
        let mut v = vec![0; n];
        for (pos, &i) in perm.iter().enumerate() {
            v[i] = b.labels[pos];
        }
        v
    };
    assert_eq!(common::rand_index(&a.labels, &b_in_a_order), 1.0);
    assert_eq!(common::rand_index(&a.labels, &truth), 1.0);
}

#[test]
fn sweep_reports_one_curve_per_mode() {
    let (days, _) = common::two_group_days(5, 4, 0);
    let modes: Vec<Mode> = (1..=3).map(Mode::new).collect();
    let grid = [10.0, 100.0, 1000.0];
    let s = sigma_sweep(&days, &grid, &modes, 1.0).unwrap();
    assert_eq!(s.curves.len(), 3);
    assert!(s.curves.iter().all(|c| c.gaps.len() == 3 && c.gaps.iter().all(|g| *g >= 0.0)));
    assert!(sigma_sweep(&days, &[2.0, 1.0], &modes, 1.0).is_err());
    assert!(sigma_sweep(&days, &grid, &[Mode::new(8)], 1.0).is_err());
}

#[test]
fn select_mode_breaks_ties_low() {
    let curve = |lower, gaps: Vec<f64>| EigenGapCurve {
        mode: Mode::new(lower),
        sigmas: vec![1.0, 2.0, 3.0],
        gaps,
    };
    let s = select_mode(&[curve(3, vec![0.2, 0.5, 0.5]), curve(2, vec![0.5, f64::NAN, 0.1])]).unwrap();
    assert_eq!((s.mode, s.sigma), (Mode::new(2), 1.0));
    assert!(select_mode(&[curve(1, vec![f64::NAN; 3])]).is_err());
}

#[test]
fn spectral_cluster_recovers_three_groups() {
    let mut days = Vec::new();
    let mut truth = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for g in 0..3 {
        for _ in 0..7 {
            days.push((0..50).map(|_| g as f64 * 30.0 + rng.random_range(0.0..1.0)).collect());
            truth.push(g);
        }
    }
    let c = spectral_cluster(&days, 3, 20.0, 1.0, 0).unwrap();
    assert_eq!(common::rand_index(&c.labels, &truth), 1.0);
    assert_eq!(c.labels[0], 0);
}

#[test]
fn kmeans_on_separated_points() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i / 10) as f64 * 100.0 + (i % 10) as f64 * 0.1]).collect();
    let km = kmeans(&rows, 2, 3, 10, 100).unwrap();
    assert!(km.labels[..10].iter().all(|&l| l == km.labels[0]));
    assert!(km.labels[10..].iter().all(|&l| l == km.labels[10]));
    assert_ne!(km.labels[0], km.labels[10]);
    assert!(kmeans(&rows, 21, 0, 1, 1).is_err());
}

#[test]
fn labels_csv_roundtrip() {
    let labels: BTreeMap<(String, u32), usize> = [(("a".into(), 0), 1), (("a".into(), 1), 0), (("b".into(), 5), 2)].into_iter().collect();
    let mut buf = Vec::new();
    write_labels_csv(&mut buf, &labels).unwrap();
    assert_eq!(read_labels_csv(buf.as_slice()).unwrap(), labels);
}
