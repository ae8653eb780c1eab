use std::collections::HashMap;

use crate::scalar::{total_cmp, Scalar};

use super::cloud::dist2;

type Cell = (i64, i64, i64);

/// Uniform grid bucketing of points for radius and nearest-neighbor queries.
pub struct GridIndex<'a, T> {
    points: &'a [[T; 3]],
    origin: [T; 3],
    cell: T,
    buckets: HashMap<Cell, Vec<usize>>,
    extent: i64,
}

impl<'a, T: Scalar> GridIndex<'a, T> {
    pub fn new(points: &'a [[T; 3]], cell: T) -> Self {
        let mut origin = points.first().copied().unwrap_or([T::zero(); 3]);
        for p in points {
            for a in 0..3 {
                origin[a] = origin[a].min(p[a]);
            }
        }
        let mut idx = GridIndex { points, origin, cell, buckets: HashMap::new(), extent: 0 };
        for (i, p) in points.iter().enumerate() {
            let c = idx.cell_of(p);
            idx.extent = idx.extent.max(c.0.abs()).max(c.1.abs()).max(c.2.abs());
            idx.buckets.entry(c).or_default().push(i);
        }
        idx
    }

    /// Grid sized so that a cell holds roughly `per_cell` points on average.
    pub fn with_density(points: &'a [[T; 3]], per_cell: usize) -> Self {
        let n = points.len().max(1);
        let mut lo = points.first().copied().unwrap_or([T::zero(); 3]);
        let mut hi = lo;
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let ext: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).as_f64()).collect();
        let maxext = ext.iter().copied().fold(0.0, f64::max).max(1e-9);
        // Effective dimension: ignore flat axes when estimating the volume.
        let active: Vec<f64> = ext.iter().copied().filter(|&e| e > maxext * 1e-3).collect();
        let dim = active.len().max(1) as f64;
        let vol: f64 = active.iter().product::<f64>().max(1e-18);
        let cell = (vol * per_cell.max(1) as f64 / n as f64).powf(1.0 / dim).max(maxext * 1e-6);
        Self::new(points, T::of(cell))
    }

    pub fn cell(&self) -> T {
        self.cell
    }

    fn cell_of(&self, p: &[T; 3]) -> Cell {
        let f = |a: usize| ((p[a] - self.origin[a]) / self.cell).floor().to_i64().unwrap_or(0);
        (f(0), f(1), f(2))
    }

    /// Indices within distance `r` of `q` (inclusive), in ascending index order.
    pub fn within(&self, q: &[T; 3], r: T) -> Vec<usize> {
        let c = self.cell_of(q);
        let reach = (r / self.cell).ceil().to_i64().unwrap_or(0);
        let r2 = r * r;
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(b) = self.buckets.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        out.extend(b.iter().copied().filter(|&i| dist2(&self.points[i], q) <= r2));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `points[query]`, excluding itself, ordered by
    /// distance with ties broken by ascending index.
    pub fn knn(&self, query: usize, k: usize) -> Vec<usize> {
        let q = &self.points[query];
        let c = self.cell_of(q);
        let mut cand: Vec<(T, usize)> = Vec::new();
        let max_ring = self.extent * 2 + 2;
        let mut ring = 0i64;
        loop {
            self.visit_ring(c, ring, |i| {
                if i != query {
                    cand.push((dist2(&self.points[i], q), i));
                }
            });
            if cand.len() >= k {
                cand.sort_by(|a, b| total_cmp(&a.0, &b.0).then(a.1.cmp(&b.1)));
                let kth = cand[k - 1].0.sqrt();
                if kth < self.cell * T::of(ring as f64) || ring > max_ring {
                    break;
                }
            } else if ring > max_ring {
                break;
            }
            ring += 1;
        }
        cand.sort_by(|a, b| total_cmp(&a.0, &b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        cand.into_iter().map(|(_, i)| i).collect()
    }

    fn visit_ring(&self, c: Cell, ring: i64, mut f: impl FnMut(usize)) {
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                for dz in -ring..=ring {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    if let Some(b) = self.buckets.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        b.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }
}
