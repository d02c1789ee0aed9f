//! Grid-accelerated DBSCAN.
//!
//! Semantics match the classic sequential algorithm run in input order:
//! a point is core when at least `min_pts` points (itself included) lie
//! within `eps`; clusters are the connected components of core points and
//! are numbered by their lowest core index; a border point joins the
//! lowest-numbered cluster that has a core point within `eps` of it.

use std::collections::HashMap;

use crate::math::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    /// Member indices, ascending; clusters ordered by lowest core index.
    pub clusters: Vec<Vec<usize>>,
    /// Indices that belong to no cluster, ascending.
    pub noise: Vec<usize>,
}

type Cell = (i64, i64, i64);

#[inline]
pub(crate) fn within<T: Real>(a: Vec3<T>, b: Vec3<T>, eps: T) -> bool {
    (a - b).norm_squared() <= eps * eps
}

struct Grid {
    cells: HashMap<Cell, Vec<usize>>,
    keys: Vec<Cell>,
}

impl Grid {
    fn build<T: Real>(points: &[Vec3<T>], eps: T) -> Self {
        // Cell diagonal strictly below eps: points sharing a cell are
        // neighbours, and neighbours are at most two cells apart per axis.
        let size = eps / T::lit(3.0).sqrt() * T::lit(1.0 - 1e-6);
        let origin = points[0];
        let key = |p: Vec3<T>| -> Cell {
            let d = (p - origin) / size;
            (
                d.x.floor().to_i64().expect("finite coordinate"),
                d.y.floor().to_i64().expect("finite coordinate"),
                d.z.floor().to_i64().expect("finite coordinate"),
            )
        };
        let keys: Vec<Cell> = points.iter().map(|p| key(*p)).collect();
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, k) in keys.iter().enumerate() {
            cells.entry(*k).or_default().push(i);
        }
        Self { cells, keys }
    }

    fn neighbours(c: Cell) -> impl Iterator<Item = Cell> {
        (-2..=2).flat_map(move |dx| {
            (-2..=2).flat_map(move |dy| (-2..=2).map(move |dz| (c.0 + dx, c.1 + dy, c.2 + dz)))
        })
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller index as root.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Clusters `points` with radius `eps` (inclusive) and density `min_pts`.
pub fn dbscan<T: Real>(points: &[Vec3<T>], eps: T, min_pts: usize) -> Clustering {
    assert!(eps > T::zero(), "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    if n == 0 {
        return Clustering::default();
    }
    let grid = Grid::build(points, eps);

    let mut core = vec![false; n];
    for i in 0..n {
        let own = &grid.cells[&grid.keys[i]];
        if own.len() >= min_pts {
            core[i] = true;
            continue;
        }
        let mut count = own.len();
        'cells: for c in Grid::neighbours(grid.keys[i]) {
            if c == grid.keys[i] {
                continue;
            }
            if let Some(members) = grid.cells.get(&c) {
                for &j in members {
                    if within(points[i], points[j], eps) {
                        count += 1;
                        if count >= min_pts {
                            break 'cells;
                        }
                    }
                }
            }
        }
        core[i] = count >= min_pts;
    }

    let mut uf = UnionFind::new(n);
    let mut core_cells: Vec<(Cell, Vec<usize>)> = grid
        .cells
        .iter()
        .filter_map(|(k, members)| {
            let cores: Vec<usize> = members.iter().copied().filter(|&i| core[i]).collect();
            (!cores.is_empty()).then_some((*k, cores))
        })
        .collect();
    core_cells.sort_unstable_by_key(|(k, _)| *k);
    let core_lookup: HashMap<Cell, &Vec<usize>> =
        core_cells.iter().map(|(k, v)| (*k, v)).collect();
    for (k, cores) in &core_cells {
        for w in cores.windows(2) {
            uf.union(w[0], w[1]);
        }
        for c in Grid::neighbours(*k) {
            if c <= *k {
                continue;
            }
            let Some(other) = core_lookup.get(&c) else {
                continue;
            };
            if uf.find(cores[0]) == uf.find(other[0]) {
                continue;
            }
            let linked = cores
                .iter()
                .any(|&a| other.iter().any(|&b| within(points[a], points[b], eps)));
            if linked {
                uf.union(cores[0], other[0]);
            }
        }
    }

    // Roots are the lowest core index of each component; order by it.
    let mut cluster_of_root: HashMap<usize, usize> = HashMap::new();
    let mut label = vec![usize::MAX; n];
    for i in 0..n {
        if core[i] {
            let r = uf.find(i);
            let next = cluster_of_root.len();
            label[i] = *cluster_of_root.entry(r).or_insert(next);
        }
    }

    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best = usize::MAX;
        for c in Grid::neighbours(grid.keys[i]) {
            if let Some(cores) = core_lookup.get(&c) {
                for &j in cores.iter() {
                    if label[j] < best && within(points[i], points[j], eps) {
                        best = label[j];
                    }
                }
            }
        }
        label[i] = best;
    }

    let mut clusters = vec![Vec::new(); cluster_of_root.len()];
    let mut noise = Vec::new();
    for (i, &l) in label.iter().enumerate() {
        if l == usize::MAX {
            noise.push(i);
        } else {
            clusters[l].push(i);
        }
    }
    Clustering { clusters, noise }
}

#[cfg(test)]
pub(crate) mod reference {
    //! Textbook O(n²) DBSCAN used as an oracle.
    use super::*;

    pub fn naive_dbscan<T: Real>(points: &[Vec3<T>], eps: T, min_pts: usize) -> Clustering {
        let n = points.len();
        let neighbours: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| within(points[i], points[j], eps)).collect())
            .collect();
        const UNVISITED: isize = -2;
        const NOISE: isize = -1;
        let mut label = vec![UNVISITED; n];
        let mut next = 0isize;
        for i in 0..n {
            if label[i] != UNVISITED {
                continue;
            }
            if neighbours[i].len() < min_pts {
                label[i] = NOISE;
                continue;
            }
            let c = next;
            next += 1;
            label[i] = c;
            let mut queue: std::collections::VecDeque<usize> =
                neighbours[i].iter().copied().collect();
            while let Some(q) = queue.pop_front() {
                if label[q] == NOISE {
                    label[q] = c;
                }
                if label[q] != UNVISITED {
                    continue;
                }
                label[q] = c;
                if neighbours[q].len() >= min_pts {
                    queue.extend(neighbours[q].iter().copied());
                }
            }
        }
        let mut clusters = vec![Vec::new(); next as usize];
        let mut noise = Vec::new();
        for (i, &l) in label.iter().enumerate() {
            if l < 0 {
                noise.push(i);
            } else {
                clusters[l as usize].push(i);
            }
        }
        Clustering { clusters, noise }
    }
}
