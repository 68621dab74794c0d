//! Exact nearest-neighbor queries.
//!
//! Distances are squared Euclidean, summed in coordinate order, so results are
//! reproducible and ties resolve identically everywhere: candidates are ranked
//! by `(distance, index)`.

use std::cmp::Ordering;

use crate::error::{GeometryError, Result};
use crate::Point;

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

#[inline]
fn rank(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest neighbors of row `query` in the row-major `N x dim`
/// array `points`, excluding the query row itself, sorted by
/// `(distance, index)`.
pub fn knn(points: &[f64], dim: usize, query: usize, k: usize) -> Result<Vec<usize>> {
    let n = points.len() / dim.max(1);
    if query >= n {
        return Err(GeometryError::QueryIndex { index: query, n });
    }
    if k >= n {
        return Err(GeometryError::TooFewPoints { k, n });
    }
    let mut scratch = Vec::with_capacity(n);
    Ok(knn_row(points, dim, n, query, k, &mut scratch))
}

fn knn_row(points: &[f64], dim: usize, n: usize, query: usize, k: usize, best: &mut Vec<(f64, usize)>) -> Vec<usize> {
    let q = &points[query * dim..(query + 1) * dim];
    // `best` stays sorted by rank and holds at most k candidates; scanning j
    // in increasing order means an equal distance never displaces a kept one.
    best.clear();
    for j in 0..n {
        if j == query {
            continue;
        }
        let d = if dim == 3 {
            let r = &points[j * 3..j * 3 + 3];
            let (a, b, c) = (q[0] - r[0], q[1] - r[1], q[2] - r[2]);
            a * a + b * b + c * c
        } else {
            sq_dist(q, &points[j * dim..(j + 1) * dim])
        };
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|c| rank(c, &(d, j)) == Ordering::Less);
        if best.len() == k {
            best.pop();
        }
        best.insert(pos, (d, j));
    }
    best.iter().map(|c| c.1).collect()
}

/// [`knn`] for every row; returns a flat `N * k` index list.
pub fn knn_all(points: &[f64], dim: usize, k: usize) -> Result<Vec<usize>> {
    let n = points.len() / dim.max(1);
    if k == 0 || k >= n {
        return Err(GeometryError::TooFewPoints { k, n });
    }
    let mut out = Vec::with_capacity(n * k);
    let mut scratch = Vec::with_capacity(n);
    for i in 0..n {
        out.extend(knn_row(points, dim, n, i, k, &mut scratch));
    }
    Ok(out)
}

/// Uniform-grid index over 3D points for exact nearest-point queries.
#[derive(Debug, Clone)]
pub struct NearestGrid {
    points: Vec<Point>,
    origin: Point,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl NearestGrid {
    pub fn new(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(GeometryError::Empty("nearest-point grid".into()));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let ext = hi - lo;
        // sized for surface-like sets: a few points per occupied cell
        let mut sorted = [ext.x, ext.y, ext.z];
        sorted.sort_by(f64::total_cmp);
        let area = (sorted[1] * sorted[2]).max(sorted[2] * sorted[2] * 1e-6);
        let mut cell = (2.0 * area / points.len() as f64).sqrt();
        if !(cell > 0.0) {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).min(1 << 10));
        let cell = (0..3).map(|a| ext[a] / dims[a] as f64).fold(cell, f64::max);
        let ncell = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; ncell + 1];
        let cell_of = |p: &Point| -> usize {
            let c = [0, 1, 2].map(|a| (((p[a] - lo[a]) / cell) as usize).min(dims[a] - 1));
            (c[0] * dims[1] + c[1]) * dims[2] + c[2]
        };
        for p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p);
            entries[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Ok(Self {
            points: points.to_vec(),
            origin: lo,
            cell,
            dims,
            starts: counts,
            entries,
        })
    }

    /// Index and squared distance of the nearest indexed point; ties go to
    /// the lowest index.
    pub fn nearest(&self, q: &Point) -> (usize, f64) {
        let center = [0, 1, 2].map(|a| {
            let c = ((q[a] - self.origin[a]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[a] - 1) as i64
        });
        let mut best = (usize::MAX, f64::INFINITY);
        let max_r = *self.dims.iter().max().unwrap() as i64;
        for r in 0..=max_r {
            // everything outside the searched block is at least this far away
            if r > 0 {
                let mut bound = f64::INFINITY;
                for a in 0..3 {
                    let lo = self.origin[a] + (center[a] - (r - 1)) as f64 * self.cell;
                    let hi = self.origin[a] + (center[a] + r) as f64 * self.cell;
                    bound = bound.min(q[a] - lo).min(hi - q[a]);
                }
                if bound > 0.0 && bound * bound > best.1 {
                    break;
                }
            }
            for i in center[0] - r..=center[0] + r {
                if i < 0 || i >= self.dims[0] as i64 {
                    continue;
                }
                for j in center[1] - r..=center[1] + r {
                    if j < 0 || j >= self.dims[1] as i64 {
                        continue;
                    }
                    let on_shell_ij = (i - center[0]).abs() == r || (j - center[1]).abs() == r;
                    for k in center[2] - r..=center[2] + r {
                        if k < 0 || k >= self.dims[2] as i64 {
                            continue;
                        }
                        if !on_shell_ij && (k - center[2]).abs() != r {
                            continue;
                        }
                        let c = (i as usize * self.dims[1] + j as usize) * self.dims[2] + k as usize;
                        for &e in &self.entries[self.starts[c] as usize..self.starts[c + 1] as usize] {
                            let e = e as usize;
                            let d = sq_dist(q.as_slice(), self.points[e].as_slice());
                            if d < best.1 || (d == best.1 && e < best.0) {
                                best = (e, d);
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_example() {
        let pts = [0.0, 1.0, 3.0, 7.0];
        assert_eq!(knn(&pts, 1, 2, 2).unwrap(), vec![1, 0]);
    }

    #[test]
    fn duplicate_of_query_comes_first() {
        let pts = [0.0, 0.0, 5.0, 5.0, 1.0, 1.0, 5.0, 5.0];
        assert_eq!(knn(&pts, 2, 1, 2).unwrap(), vec![3, 2]);
    }

    #[test]
    fn k_must_be_below_n() {
        let pts = [0.0, 1.0, 2.0];
        assert!(matches!(knn(&pts, 1, 0, 3), Err(GeometryError::TooFewPoints { .. })));
        assert!(knn(&pts, 1, 0, 2).is_ok());
    }

    #[test]
    fn lattice_ties_break_by_index() {
        // 3x3 integer lattice; the centre has four neighbours at distance 1
        let mut pts = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                pts.extend_from_slice(&[x as f64, y as f64]);
            }
        }
        assert_eq!(knn(&pts, 2, 4, 4).unwrap(), vec![1, 3, 5, 7]);
    }
}
