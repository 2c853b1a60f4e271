use std::collections::{HashMap, VecDeque};

use crate::{Error, Result};

/// Output of [`dbscan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster id per point, `None` for noise.
    pub labels: Vec<Option<usize>>,
    /// Core-point flag per point.
    pub core: Vec<bool>,
    pub n_clusters: usize,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == Some(cluster))
            .collect()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Uniform grid with cell side `eps`; ε-neighbours live in the 3×3 block
/// around a point's cell.
struct Grid<'a> {
    points: &'a [[f64; 2]],
    eps2: f64,
    inv: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [[f64; 2]], eps: f64) -> Self {
        let inv = 1.0 / eps;
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(inv, p)).or_default().push(i);
        }
        Self {
            points,
            eps2: eps * eps,
            inv,
            cells,
        }
    }

    fn key(inv: f64, p: &[f64; 2]) -> (i64, i64) {
        ((p[0] * inv).floor() as i64, (p[1] * inv).floor() as i64)
    }

    /// Calls `f` with every point within `eps` of point `i`, itself included.
    fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize)) {
        let p = self.points[i];
        let (cx, cy) = Self::key(self.inv, &p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &j in bucket {
                        let q = self.points[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 <= self.eps2 {
                            f(j);
                        }
                    }
                }
            }
        }
    }
}

/// Density-based clustering of planar points.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within distance `eps` (inclusive). Clusters are the connected components
/// of core points under ε-adjacency, numbered in order of their
/// lowest-index core point. A non-core point joins the cluster of its
/// lowest-index core neighbour, or is noise if it has none. This makes the
/// labeling a function of the point set and its indexing only.
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Result<Clustering> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("dbscan eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidInput("dbscan min_pts must be at least 1".into()));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInput("dbscan points must be finite".into()));
    }
    let n = points.len();
    let grid = Grid::new(points, eps);

    let core: Vec<bool> = (0..n)
        .map(|i| {
            let mut count = 0;
            grid.for_each_neighbor(i, |_| count += 1);
            count >= min_pts
        })
        .collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut n_clusters = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        labels[seed] = Some(c);
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            grid.for_each_neighbor(i, |j| {
                if core[j] && labels[j].is_none() {
                    labels[j] = Some(c);
                    queue.push_back(j);
                }
            });
        }
    }

    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best: Option<usize> = None;
        grid.for_each_neighbor(i, |j| {
            if core[j] && best.is_none_or(|b| j < b) {
                best = Some(j);
            }
        });
        labels[i] = best.and_then(|j| labels[j]);
    }

    Ok(Clustering {
        labels,
        core,
        n_clusters,
    })
}
