//! DBSCAN over 2-D points with a uniform grid index.
//!
//! Semantics: a point is core when at least `min_samples` points (itself
//! included) lie within Euclidean distance `eps` (inclusive). Clusters are
//! numbered in order of their lowest-indexed core point; a border point
//! joins the lowest-numbered cluster that reaches it.

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DbscanOutcome {
    /// Member indices, ascending, one vector per cluster.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

struct Grid<'a> {
    points: &'a [[f64; 2]],
    cell: f64,
    eps2: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [[f64; 2]], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, cell: eps, eps2: eps * eps, cells }
    }

    fn key(p: &[f64; 2], cell: f64) -> (i64, i64) {
        ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
    }

    fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize) -> bool) {
        let p = self.points[i];
        let (cx, cy) = Self::key(&p, self.cell);
        for gx in cx - 1..=cx + 1 {
            for gy in cy - 1..=cy + 1 {
                let Some(bucket) = self.cells.get(&(gx, gy)) else { continue };
                for &j in bucket {
                    let q = self.points[j];
                    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                    if dx * dx + dy * dy <= self.eps2 && !f(j) {
                        return;
                    }
                }
            }
        }
    }

    fn is_core(&self, i: usize, min_samples: usize) -> bool {
        let mut n = 0;
        self.for_each_neighbor(i, |_| {
            n += 1;
            n < min_samples
        });
        n >= min_samples
    }
}

pub fn dbscan(points: &[[f64; 2]], eps: f64, min_samples: usize) -> DbscanOutcome {
    assert!(eps > 0.0, "eps must be positive");
    let min_samples = min_samples.max(1);
    if points.is_empty() {
        return DbscanOutcome::default();
    }
    let grid = Grid::new(points, eps);
    let core: Vec<bool> = (0..points.len()).map(|i| grid.is_core(i, min_samples)).collect();

    const UNSET: usize = usize::MAX;
    let mut label = vec![UNSET; points.len()];
    let mut n_clusters = 0;
    let mut queue = Vec::new();
    for seed in 0..points.len() {
        if label[seed] != UNSET || !core[seed] {
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        label[seed] = c;
        queue.push(seed);
        while let Some(p) = queue.pop() {
            grid.for_each_neighbor(p, |q| {
                if label[q] == UNSET {
                    label[q] = c;
                    if core[q] {
                        queue.push(q);
                    }
                }
                true
            });
        }
    }

    let mut clusters = vec![Vec::new(); n_clusters];
    let mut noise = Vec::new();
    for (i, &l) in label.iter().enumerate() {
        if l == UNSET {
            noise.push(i);
        } else {
            clusters[l].push(i);
        }
    }
    DbscanOutcome { clusters, noise }
}
