//! Independent reference implementations used as test oracles. None of
//! these share code with the library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(n²) DBSCAN: core points by direct counting, clusters by union-find
/// over core-core ε-edges, numbered by lowest core index; border points go
/// to their lowest-index core neighbour.
pub fn brute_dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let near = |i: usize, j: usize| {
        let (a, b) = (points[i], points[j]);
        (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) <= eps * eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut ids = std::collections::HashMap::new();
    let mut labels = vec![None; n];
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let next = ids.len();
            labels[i] = Some(*ids.entry(r).or_insert(next));
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n).find(|&j| core[j] && near(i, j)).and_then(|j| labels[j]);
        }
    }
    labels
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Symmetric normalized Laplacian of a Gaussian kernel, written out
/// directly from the definition.
pub fn reference_laplacian(days: &[Vec<f64>], sigma: f64, mu: f64) -> Vec<Vec<f64>> {
    let n = days.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j {
                mu
            } else {
                let d2: f64 = days[i].iter().zip(&days[j]).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            };
        }
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| (i == j) as u8 as f64 - a[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect()
}

pub struct VectorRates {
    pub psi: f64,
    pub mu: f64,
    pub k: f64,
    pub nu: f64,
    pub sigma_v: f64,
    pub sigma_h: f64,
    pub beta_vh: f64,
    /// Infectious and total humans in the patch, held fixed.
    pub i_h: f64,
    pub n_h: f64,
}

fn sei_rhs(y: [f64; 3], r: &VectorRates) -> [f64; 3] {
    let n = y[0] + y[1] + y[2];
    let h = n * (r.psi - (r.psi - r.mu) * n / r.k);
    // bites per vector per day: σ_h N_h σ_v / (σ_v N + σ_h N_h)
    let denom = r.sigma_v * n + r.sigma_h * r.n_h;
    let bites = if denom > 0.0 { r.sigma_v * r.sigma_h * r.n_h / denom } else { 0.0 };
    let lambda = if r.n_h > 0.0 { bites * r.beta_vh * r.i_h / r.n_h } else { 0.0 };
    [
        h - lambda * y[0] - r.mu * y[0],
        lambda * y[0] - r.nu * y[1] - r.mu * y[1],
        r.nu * y[1] - r.mu * y[2],
    ]
}

/// Classical fourth-order Runge–Kutta for the vector SEI system with a
/// fixed human population.
pub fn rk4_sei(mut y: [f64; 3], r: &VectorRates, dt: f64, steps: usize) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    for _ in 0..steps {
        let k1 = sei_rhs(y, r);
        let k2 = sei_rhs(add(y, k1, dt / 2.0), r);
        let k3 = sei_rhs(add(y, k2, dt / 2.0), r);
        let k4 = sei_rhs(add(y, k3, dt), r);
        for i in 0..3 {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// Closed-form logistic solution of `N' = N(ψ − (ψ−μ)N/K) − μN`, i.e.
/// growth rate r = ψ − μ towards K.
pub fn logistic(n0: f64, psi: f64, mu: f64, k: f64, t: f64) -> f64 {
    let r = psi - mu;
    k / (1.0 + (k / n0 - 1.0) * (-r * t).exp())
}

/// Total-variation distance between two distributions over the same support.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Pair-counting Rand index.
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut agree = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    }
}

/// Random planar point cloud made of a few Gaussian blobs plus uniform
/// background, on a grid fine enough to produce exact-ε ties sometimes.
pub fn point_cloud(seed: u64, n: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<[f64; 2]> = (0..rng.random_range(1..6))
        .map(|_| [rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)])
        .collect();
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.2 {
                [rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)]
            } else {
                let b = blobs[rng.random_range(0..blobs.len())];
                let q = |x: f64| (x * 4.0).round() / 4.0;
                [q(b[0] + rng.random_range(-8.0..8.0)), q(b[1] + rng.random_range(-8.0..8.0))]
            }
        })
        .collect()
}

/// Two groups of day vectors over `{0, 16}` codes: group 0 is at code 16
/// during `[480, 960)`, group 1 during `[0, 480) ∪ [1200, 1440)`. Each day
/// shifts its boundaries by up to `jitter` minutes.
pub fn two_group_days(seed: u64, per_group: usize, jitter: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut days = Vec::new();
    let mut truth = Vec::new();
    for g in 0..2 {
        for _ in 0..per_group {
            let j = |rng: &mut ChaCha8Rng| if jitter == 0 { 0 } else { rng.random_range(0..=jitter) };
            let mut d = vec![0.0; 1440];
            let spans: Vec<(usize, usize)> = if g == 0 {
                vec![(480 + j(&mut rng), 960 + j(&mut rng))]
            } else {
                vec![(0, 480 + j(&mut rng)), (1200 + j(&mut rng), 1440)]
            };
            for (a, b) in spans {
                for x in d.iter_mut().take(b).skip(a) {
                    *x = 16.0;
                }
            }
            days.push(d);
            truth.push(g);
        }
    }
    (days, truth)
}
