//! Behavioral sub-class discovery by spectral clustering of days.
//!
//! Each day is a 1440-dimensional vector of numeric location codes. A
//! Gaussian kernel turns pairwise distances into an affinity matrix whose
//! symmetric normalized Laplacian is swept over a range of kernel scales.
//! The adjacent eigenvalue pair with the largest gap anywhere in the sweep
//! fixes the number of clusters and the scale used to cluster.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::mobility::{ParticipantDay, Place};
use crate::rng::{Domain, Streams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    pub sigma: f64,
    /// Affinity placed on the diagonal.
    pub self_similarity: f64,
    /// Off-diagonal affinities below this are set to zero.
    pub truncate_below: f64,
}

impl SpectralParams {
    pub fn new(sigma: f64, self_similarity: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        if !(0.0..=1.0).contains(&self_similarity) {
            return Err(Error::InvalidInput(format!(
                "self-similarity must lie in [0, 1], got {self_similarity}"
            )));
        }
        Ok(Self {
            sigma,
            self_similarity,
            truncate_below: 0.0,
        })
    }

    pub fn with_truncation(mut self, below: f64) -> Self {
        self.truncate_below = below;
        self
    }
}

pub fn day_vector(places: &[Place]) -> Vec<f64> {
    places.iter().map(|p| p.numeric()).collect()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Kernel value between two days; `diagonal` selects the self-similarity.
pub fn similarity(x_i: &[f64], x_j: &[f64], p: &SpectralParams, diagonal: bool) -> f64 {
    if diagonal {
        p.self_similarity
    } else {
        kernel(squared_distance(x_i, x_j), p)
    }
}

fn kernel(d2: f64, p: &SpectralParams) -> f64 {
    let s = (-d2 / (2.0 * p.sigma * p.sigma)).exp();
    if s < p.truncate_below {
        0.0
    } else {
        s
    }
}

pub fn pairwise_squared_distances(days: &[Vec<f64>]) -> DMatrix<f64> {
    let n = days.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if j > i { squared_distance(&days[i], &days[j]) } else { 0.0 }).collect())
        .collect();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            d2[(i, j)] = rows[i][j];
            d2[(j, i)] = rows[i][j];
        }
    }
    d2
}

pub fn adjacency_from_distances(d2: &DMatrix<f64>, p: &SpectralParams) -> DMatrix<f64> {
    let n = d2.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { p.self_similarity } else { kernel(d2[(i, j)], p) })
}

/// `I - D^{-1/2} A D^{-1/2}` from precomputed squared distances.
pub fn laplacian_from_distances(d2: &DMatrix<f64>, p: &SpectralParams) -> Result<DMatrix<f64>> {
    let n = d2.nrows();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two days".into()));
    }
    let a = adjacency_from_distances(d2, p);
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let deg: f64 = a.row(i).iter().sum();
        if deg <= 0.0 {
            return Err(Error::InvalidInput(format!("day {i} has zero total affinity")));
        }
        inv_sqrt.push(1.0 / deg.sqrt());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * a[(i, j)] * inv_sqrt[j]
    }))
}

pub fn build_laplacian(days: &[Vec<f64>], p: &SpectralParams) -> Result<DMatrix<f64>> {
    check_lengths(days)?;
    laplacian_from_distances(&pairwise_squared_distances(days), p)
}

fn check_lengths(days: &[Vec<f64>]) -> Result<()> {
    if let Some(first) = days.first() {
        if days.iter().any(|d| d.len() != first.len()) {
            return Err(Error::InvalidInput("day vectors differ in length".into()));
        }
    }
    Ok(())
}

/// Eigenvalues ascending with matching eigenvector columns.
pub fn sorted_eigen(l: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::try_new(l.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(l.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Adjacent pair of sorted eigenvalues, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mode {
    pub lower: usize,
    pub upper: usize,
}

impl Mode {
    pub fn new(lower: usize) -> Self {
        Self {
            lower,
            upper: lower + 1,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.lower, self.upper)
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenGapCurve {
    pub mode: Mode,
    pub sigmas: Vec<f64>,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub curves: Vec<EigenGapCurve>,
    /// Sorted eigenvalues per grid point (empty where the solver failed).
    pub eigenvalues: Vec<Vec<f64>>,
    /// Grid points where the eigensolver failed; their gaps are NaN.
    pub failed_sigmas: Vec<f64>,
}

/// Modes 1-2 through 6-7, limited by the number of days.
pub fn default_modes(n_days: usize) -> Vec<Mode> {
    (1..=6).filter(|&x| x < n_days).map(Mode::new).collect()
}

pub fn median_pairwise_distance(d2: &DMatrix<f64>) -> f64 {
    let n = d2.nrows();
    let mut v: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| d2[(i, j)].sqrt())
        .collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

/// `points` log-spaced values spanning `[lo, hi] × scale`.
pub fn log_grid(scale: f64, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let scale = if scale > 0.0 { scale } else { 1.0 };
    if points == 1 {
        return vec![lo * scale];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| scale * (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// 32 log-spaced points over `[0.01, 10]` times the median pairwise distance.
pub fn default_sigma_grid(d2: &DMatrix<f64>) -> Vec<f64> {
    log_grid(median_pairwise_distance(d2), 0.01, 10.0, 32)
}

pub fn sigma_sweep(days: &[Vec<f64>], grid: &[f64], modes: &[Mode], self_similarity: f64) -> Result<SweepResult> {
    check_lengths(days)?;
    sigma_sweep_distances(&pairwise_squared_distances(days), grid, modes, self_similarity)
}

pub fn sigma_sweep_distances(d2: &DMatrix<f64>, grid: &[f64], modes: &[Mode], self_similarity: f64) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("sigma grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("sigma grid must be strictly increasing".into()));
    }
    let n = d2.nrows();
    if let Some(m) = modes.iter().find(|m| m.upper > n || m.lower == 0 || m.upper != m.lower + 1) {
        return Err(Error::InvalidInput(format!("mode {m} is not valid for {n} days")));
    }
    let per_sigma: Vec<Result<Option<Vec<f64>>>> = grid
        .par_iter()
        .map(|&sigma| {
            let p = SpectralParams::new(sigma, self_similarity)?;
            let l = laplacian_from_distances(d2, &p)?;
            Ok(sorted_eigen(&l).ok().map(|(vals, _)| vals))
        })
        .collect();

    let mut eigenvalues = Vec::with_capacity(grid.len());
    let mut failed_sigmas = Vec::new();
    for (r, &sigma) in per_sigma.into_iter().zip(grid) {
        match r? {
            Some(vals) => eigenvalues.push(vals),
            None => {
                log::warn!("eigensolver failed at sigma = {sigma}");
                failed_sigmas.push(sigma);
                eigenvalues.push(Vec::new());
            }
        }
    }
    let curves = modes
        .iter()
        .map(|&mode| EigenGapCurve {
            mode,
            sigmas: grid.to_vec(),
            gaps: eigenvalues
                .iter()
                .map(|vals| {
                    if vals.is_empty() {
                        f64::NAN
                    } else {
                        (vals[mode.upper - 1] - vals[mode.lower - 1]).max(0.0)
                    }
                })
                .collect(),
        })
        .collect();
    Ok(SweepResult {
        curves,
        eigenvalues,
        failed_sigmas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSelection {
    pub mode: Mode,
    /// Number of clusters implied by the mode.
    pub k: usize,
    pub sigma: f64,
    pub gap: f64,
}

/// Picks the largest finite gap over all modes and scales. Ties go to the
/// lower mode, then the smaller scale.
pub fn select_mode(curves: &[EigenGapCurve]) -> Result<ModeSelection> {
    let mut sorted: Vec<&EigenGapCurve> = curves.iter().collect();
    sorted.sort_by_key(|c| c.mode);
    let mut best: Option<ModeSelection> = None;
    for c in sorted {
        let mut idx: Vec<usize> = (0..c.sigmas.len()).collect();
        idx.sort_by(|&a, &b| c.sigmas[a].total_cmp(&c.sigmas[b]));
        for i in idx {
            let g = c.gaps[i];
            if !g.is_finite() {
                continue;
            }
            if best.is_none_or(|b| g > b.gap) {
                best = Some(ModeSelection {
                    mode: c.mode,
                    k: c.mode.lower,
                    sigma: c.sigmas[i],
                    gap: g,
                });
            }
        }
    }
    best.ok_or_else(|| Error::Numerical("no finite eigen gap in any curve".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralClustering {
    pub labels: Vec<usize>,
    /// The eigenvalue at the cut was repeated and the embedding was widened
    /// to the whole eigenspace.
    pub degenerate: bool,
    pub embedding_dim: usize,
    pub eigenvalues: Vec<f64>,
}

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 100;

pub fn spectral_cluster(days: &[Vec<f64>], k: usize, sigma: f64, self_similarity: f64, seed: u64) -> Result<SpectralClustering> {
    check_lengths(days)?;
    spectral_cluster_distances(&pairwise_squared_distances(days), k, sigma, self_similarity, seed)
}

pub fn spectral_cluster_distances(
    d2: &DMatrix<f64>,
    k: usize,
    sigma: f64,
    self_similarity: f64,
    seed: u64,
) -> Result<SpectralClustering> {
    let n = d2.nrows();
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!("cluster count {k} outside [2, {n}]")));
    }
    let p = SpectralParams::new(sigma, self_similarity)?;
    let l = laplacian_from_distances(d2, &p)?;
    let (vals, vecs) = sorted_eigen(&l)?;
    if k == n {
        return Ok(SpectralClustering {
            labels: (0..n).collect(),
            degenerate: false,
            embedding_dim: n,
            eigenvalues: vals,
        });
    }
    let tol = 1e-9 * vals[k - 1].abs().max(1.0);
    let mut dim = k;
    let degenerate = (vals[k] - vals[k - 1]).abs() <= tol;
    if degenerate {
        while dim < n && (vals[dim] - vals[k - 1]).abs() <= tol {
            dim += 1;
        }
        log::warn!("repeated eigenvalue at the cut; using {dim} eigenvectors instead of {k}");
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let row: Vec<f64> = (0..dim).map(|c| vecs[(r, c)]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let km = kmeans(&rows, k, seed, KMEANS_RESTARTS, KMEANS_MAX_ITER)?;
    Ok(SpectralClustering {
        labels: canonical_labels(&km.labels),
        degenerate,
        embedding_dim: dim,
        eigenvalues: vals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
pub fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64, restarts: usize, max_iter: usize) -> Result<KMeans> {
    let n = rows.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("k-means with k = {k} on {n} points")));
    }
    let streams = Streams::new(seed);
    let mut best: Option<KMeans> = None;
    for r in 0..restarts.max(1) {
        let mut rng = streams.rng(Domain::Clustering, &[r as u64]);
        let run = lloyd(rows, kmeans_pp(rows, k, &mut rng), max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn kmeans_pp<R: Rng>(rows: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|x| squared_distance(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(rows[next].clone());
        for (i, x) in rows.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(x, &rows[next]));
        }
    }
    centroids
}

fn lloyd(rows: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeans {
    let k = centroids.len();
    let dim = rows.first().map_or(0, |r| r.len());
    let mut labels = vec![usize::MAX; rows.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, x) in rows.iter().enumerate() {
            let c = nearest(x, &centroids).0;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = rows.iter().zip(&labels).map(|(x, &l)| squared_distance(x, &centroids[l])).sum();
    KMeans {
        labels,
        centroids,
        inertia,
    }
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, squared_distance(x, m)))
        .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
}

/// Renames labels in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Fraction of point pairs on which two partitions agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / (n * (n - 1) / 2) as f64
}

#[derive(Debug, Clone, Copy)]
pub struct DiscoveryOptions {
    pub self_similarity: f64,
    pub seed: u64,
}

impl Default for DiscoveryOptions {
    fn default() -> Self {
        Self {
            self_similarity: 1.0,
            seed: 0,
        }
    }
}

/// Sub-class discovery result for one occupation class.
#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: String,
    pub n_days: usize,
    pub selection: ModeSelection,
    pub degenerate: bool,
    /// Sorted Laplacian eigenvalues at the selected scale.
    pub eigenvalues: Vec<f64>,
    pub failed_sigmas: Vec<f64>,
    pub curves: Vec<EigenGapCurve>,
    #[serde(skip)]
    pub labels: Vec<usize>,
}

/// Sweep, mode selection and clustering for one set of days.
pub fn discover(class: &str, days: &[Vec<f64>], opts: &DiscoveryOptions) -> Result<ClassReport> {
    check_lengths(days)?;
    let n = days.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("class {class} has {n} day(s); need at least 2")));
    }
    let d2 = pairwise_squared_distances(days);
    let grid = default_sigma_grid(&d2);
    let sweep = sigma_sweep_distances(&d2, &grid, &default_modes(n), opts.self_similarity)?;
    let selection = select_mode(&sweep.curves)?;
    let (labels, degenerate, eigenvalues) = if selection.k >= 2 {
        let sc = spectral_cluster_distances(&d2, selection.k, selection.sigma, opts.self_similarity, opts.seed)?;
        (sc.labels, sc.degenerate, sc.eigenvalues)
    } else {
        let l = laplacian_from_distances(&d2, &SpectralParams::new(selection.sigma, opts.self_similarity)?)?;
        (vec![0; n], false, sorted_eigen(&l)?.0)
    };
    Ok(ClassReport {
        class: class.to_string(),
        n_days: n,
        selection,
        degenerate,
        eigenvalues,
        failed_sigmas: sweep.failed_sigmas,
        curves: sweep.curves,
        labels,
    })
}

/// `(participant, day) -> sub-class label` for every class in `occupations`.
pub fn discover_all(
    days: &[ParticipantDay],
    occupations: &BTreeMap<String, String>,
    opts: &DiscoveryOptions,
) -> Result<(BTreeMap<(String, u32), usize>, Vec<ClassReport>)> {
    let mut by_class: BTreeMap<&str, Vec<&ParticipantDay>> = BTreeMap::new();
    for d in days {
        let class = occupations.get(&d.participant_id).ok_or_else(|| {
            Error::InvalidInput(format!("participant {} has no occupation", d.participant_id))
        })?;
        by_class.entry(class).or_default().push(d);
    }
    let mut labels = BTreeMap::new();
    let mut reports = Vec::new();
    for (class, mut members) in by_class {
        members.sort_by(|a, b| (&a.participant_id, a.day_index).cmp(&(&b.participant_id, b.day_index)));
        let vectors: Vec<Vec<f64>> = members.iter().map(|d| day_vector(&d.places)).collect();
        let report = if vectors.len() >= 2 {
            discover(class, &vectors, opts)?
        } else {
            ClassReport {
                class: class.to_string(),
                n_days: vectors.len(),
                selection: ModeSelection {
                    mode: Mode::new(1),
                    k: 1,
                    sigma: f64::NAN,
                    gap: f64::NAN,
                },
                degenerate: true,
                eigenvalues: Vec::new(),
                failed_sigmas: Vec::new(),
                curves: Vec::new(),
                labels: vec![0; vectors.len()],
            }
        };
        for (d, &l) in members.iter().zip(&report.labels) {
            labels.insert((d.participant_id.clone(), d.day_index), l);
        }
        reports.push(report);
    }
    Ok((labels, reports))
}

pub fn write_labels_csv<W: std::io::Write>(writer: W, labels: &BTreeMap<(String, u32), usize>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["participant_id", "day", "cluster_label"])?;
    for ((p, d), l) in labels {
        w.write_record([p.as_str(), &d.to_string(), &l.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<labels output>", e))?;
    Ok(())
}

pub fn read_labels_csv<R: std::io::Read>(reader: R) -> Result<BTreeMap<(String, u32), usize>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let err = || Error::Format {
            what: "cluster label CSV",
            line: row + 2,
            msg: "expected participant_id,day,cluster_label".into(),
        };
        if rec.len() != 3 {
            return Err(err());
        }
        let day = rec[1].parse().map_err(|_| err())?;
        let label = rec[2].parse().map_err(|_| err())?;
        out.insert((rec[0].to_string(), day), label);
    }
    Ok(out)
}
