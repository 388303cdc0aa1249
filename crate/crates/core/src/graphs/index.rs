//! Uniform grid index over a point buffer with exact ring-expansion queries.

use crate::geometry::{dist, ConvexBody};

/// Hard cap on the number of grid cells.
const MAX_CELLS: usize = 1 << 22;

/// Result of a nearest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub index: usize,
    pub dist: f64,
    /// Another candidate attained exactly the same distance.
    pub tie: bool,
}

/// Event passed to the callback of [`GridIndex::visit_by_rings`].
#[derive(Debug, Clone, Copy)]
pub enum RingEvent {
    /// A point and its distance to the query.
    Point(usize, f64),
    /// A ring was completed; lower bound for all unvisited points.
    Done(f64),
}

/// Grid over the bounding box of a window, holding indices into a flat
/// row-major coordinate buffer. Cells are filled by [`GridIndex::insert`].
#[derive(Debug, Clone)]
pub struct GridIndex<'a> {
    dim: usize,
    coords: &'a [f64],
    lo: Vec<f64>,
    hi: Vec<f64>,
    cell: f64,
    shape: Vec<usize>,
    buckets: Vec<Vec<u32>>,
    len: usize,
}

impl<'a> GridIndex<'a> {
    /// Empty grid over `body` whose cells have side at least `min_cell` and
    /// hold roughly one of `expected_points` points each.
    pub fn new(body: &ConvexBody, coords: &'a [f64], expected_points: usize, min_cell: f64) -> Self {
        let dim = body.dim();
        let (lo, hi) = body.bounds();
        let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let spacing = (vol / expected_points.max(1) as f64).powf(1.0 / dim as f64);
        let mut cell = spacing.max(min_cell);
        let shape_for = |cell: f64| -> Vec<usize> {
            lo.iter()
                .zip(&hi)
                .map(|(a, b)| (((b - a) / cell).ceil() as usize).max(1))
                .collect()
        };
        let mut shape = shape_for(cell);
        while shape.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s)).map_or(true, |c| c > MAX_CELLS) {
            cell *= 2.0;
            shape = shape_for(cell);
        }
        let total = shape.iter().product();
        GridIndex {
            dim,
            coords,
            lo,
            hi,
            cell,
            shape,
            buckets: vec![Vec::new(); total],
            len: 0,
        }
    }

    /// Grid over `body` containing every point of `coords`.
    pub fn with_all(body: &ConvexBody, coords: &'a [f64], min_cell: f64) -> Self {
        let n = coords.len() / body.dim();
        let mut g = GridIndex::new(body, coords, n, min_cell);
        for i in 0..n {
            g.insert(i);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_side(&self) -> f64 {
        self.cell
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn cell_of(&self, p: &[f64]) -> Vec<usize> {
        (0..self.dim)
            .map(|k| {
                let c = ((p[k] - self.lo[k]) / self.cell).floor();
                if c <= 0.0 {
                    0
                } else {
                    (c as usize).min(self.shape[k] - 1)
                }
            })
            .collect()
    }

    fn flat(&self, c: &[usize]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim).rev() {
            idx = idx * self.shape[k] + c[k];
        }
        idx
    }

    pub fn insert(&mut self, i: usize) {
        let c = self.cell_of(self.point(i));
        let f = self.flat(&c);
        self.buckets[f].push(i as u32);
        self.len += 1;
    }

    /// Lower bound on the distance from `q` to any point in a cell outside
    /// the block of Chebyshev radius `r` around `c0`; infinite once the block
    /// covers the grid.
    fn ring_lower_bound(&self, q: &[f64], c0: &[usize], r: usize) -> f64 {
        let mut lb = f64::INFINITY;
        for k in 0..self.dim {
            if c0[k] >= r + 1 {
                let edge = self.lo[k] + (c0[k] - r) as f64 * self.cell;
                lb = lb.min((q[k] - edge).max(0.0));
            }
            if c0[k] + r + 1 < self.shape[k] {
                let edge = self.lo[k] + (c0[k] + r + 1) as f64 * self.cell;
                lb = lb.min((edge - q[k]).max(0.0));
            }
        }
        lb
    }

    /// Calls `visit` on every cell at Chebyshev distance exactly `r` from `c0`.
    fn for_each_ring_cell(&self, c0: &[usize], r: usize, mut visit: impl FnMut(&[u32])) {
        if r == 0 {
            visit(&self.buckets[self.flat(c0)]);
            return;
        }
        let d = self.dim;
        let ri = r as isize;
        let mut ranges = vec![(0isize, 0isize); d];
        let mut cur = vec![0usize; d];
        for k in 0..d {
            for side in [-ri, ri] {
                let ck = c0[k] as isize + side;
                if ck < 0 || ck >= self.shape[k] as isize {
                    continue;
                }
                // axes before k stay strictly inside the shell, axes after
                // may touch it; this partitions the shell into faces
                let mut empty = false;
                for j in 0..d {
                    let (a, b) = if j == k {
                        (ck, ck)
                    } else {
                        let w = if j < k { ri - 1 } else { ri };
                        let a = (c0[j] as isize - w).max(0);
                        let b = (c0[j] as isize + w).min(self.shape[j] as isize - 1);
                        (a, b)
                    };
                    if a > b {
                        empty = true;
                    }
                    ranges[j] = (a, b);
                }
                if empty {
                    continue;
                }
                for j in 0..d {
                    cur[j] = ranges[j].0 as usize;
                }
                loop {
                    visit(&self.buckets[self.flat(&cur)]);
                    let mut j = 0;
                    loop {
                        if j == d {
                            break;
                        }
                        if (cur[j] as isize) < ranges[j].1 {
                            cur[j] += 1;
                            break;
                        }
                        cur[j] = ranges[j].0 as usize;
                        j += 1;
                    }
                    if j == d {
                        break;
                    }
                }
            }
        }
    }

    /// Visits points ring by ring around `q`. After each ring the callback
    /// receives [`RingEvent::Done`] with a lower bound on the distance of
    /// every point not yet visited, and returns `true` to stop.
    pub fn visit_by_rings(&self, q: &[f64], mut f: impl FnMut(RingEvent) -> bool) {
        let c0 = self.cell_of(q);
        let max_r = self.shape.iter().copied().max().unwrap_or(1);
        for r in 0..=max_r {
            self.for_each_ring_cell(&c0, r, |bucket| {
                for &j in bucket {
                    let j = j as usize;
                    f(RingEvent::Point(j, dist(q, self.point(j))));
                }
            });
            let lb = self.ring_lower_bound(q, &c0, r);
            if lb == f64::INFINITY || f(RingEvent::Done(lb)) {
                return;
            }
        }
    }

    /// Nearest indexed point satisfying `accept`, starting from an optional
    /// external candidate `initial = (dist, tie)` that points must beat.
    pub fn nearest_with(
        &self,
        q: &[f64],
        accept: impl Fn(usize) -> bool,
        initial: Option<f64>,
    ) -> (Option<Nearest>, bool) {
        let mut best: Option<Nearest> = None;
        let mut bound = initial.unwrap_or(f64::INFINITY);
        let mut initial_tie = false;
        self.visit_by_rings(q, |ev| {
            let (j, dj) = match ev {
                RingEvent::Point(j, dj) => (j, dj),
                RingEvent::Done(lb) => return lb > bound,
            };
            {
                if !accept(j) {
                    return false;
                }
                if dj < bound {
                    bound = dj;
                    best = Some(Nearest {
                        index: j,
                        dist: dj,
                        tie: false,
                    });
                    initial_tie = false;
                } else if dj == bound {
                    match best.as_mut() {
                        Some(b) => b.tie = true,
                        None => initial_tie = true,
                    }
                }
            }
            false
        });
        (best, initial_tie)
    }

    /// Nearest indexed point satisfying `accept`.
    pub fn nearest(&self, q: &[f64], accept: impl Fn(usize) -> bool) -> Option<Nearest> {
        self.nearest_with(q, accept, None).0
    }

    /// The `k + 1` nearest accepted points in increasing distance (fewer if
    /// not available). The extra point lets callers detect ties at rank `k`.
    pub fn k_nearest(&self, q: &[f64], k: usize, accept: impl Fn(usize) -> bool) -> Vec<(usize, f64)> {
        let want = k + 1;
        let mut found: Vec<(usize, f64)> = Vec::with_capacity(want + 1);
        self.visit_by_rings(q, |ev| {
            let (j, dj) = match ev {
                RingEvent::Point(j, dj) => (j, dj),
                RingEvent::Done(lb) => return found.len() == want && lb > found[want - 1].1,
            };
            if !accept(j) {
                return false;
            }
            if found.len() == want && dj >= found[want - 1].1 {
                // on equal distance keep the smaller index so the order is total
                if dj == found[want - 1].1 && j < found[want - 1].0 {
                    found[want - 1] = (j, dj);
                }
                return false;
            }
            let pos = found.partition_point(|&(i, di)| di < dj || (di == dj && i < j));
            found.insert(pos, (j, dj));
            found.truncate(want);
            false
        });
        found
    }

    /// Indexed points at distance strictly less than `radius` from `q`, in
    /// increasing index order.
    pub fn points_within(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if radius <= 0.0 || self.len == 0 {
            return out;
        }
        let lo_c = self.cell_of(&q.iter().map(|v| v - radius).collect::<Vec<_>>());
        let hi_c = self.cell_of(&q.iter().map(|v| v + radius).collect::<Vec<_>>());
        let d = self.dim;
        let mut cur = lo_c.clone();
        loop {
            for &j in &self.buckets[self.flat(&cur)] {
                let j = j as usize;
                if dist(q, self.point(j)) < radius {
                    out.push(j);
                }
            }
            let mut k = 0;
            while k < d {
                if cur[k] < hi_c[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo_c[k];
                k += 1;
            }
            if k == d {
                break;
            }
        }
        out.sort_unstable();
        out
    }

    /// Upper corner of the indexed box.
    pub fn upper(&self) -> &[f64] {
        &self.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_poisson, RngStream};

    fn brute_nearest(coords: &[f64], d: usize, q: &[f64], skip: Option<usize>) -> Option<(usize, f64)> {
        (0..coords.len() / d)
            .filter(|&j| Some(j) != skip)
            .map(|j| (j, dist(q, &coords[j * d..(j + 1) * d])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    #[test]
    fn empty_index() {
        let body = ConvexBody::unit_cube(2);
        let g = GridIndex::with_all(&body, &[], 0.0);
        assert!(g.points_within(&[0.5, 0.5], 0.3).is_empty());
        assert!(g.nearest(&[0.5, 0.5], |_| true).is_none());
    }

    #[test]
    fn singleton_excluding_itself() {
        let body = ConvexBody::unit_cube(2);
        let coords = [0.3, 0.4];
        let g = GridIndex::with_all(&body, &coords, 0.0);
        assert!(g.nearest(&coords, |j| j != 0).is_none());
    }

    #[test]
    fn queries_match_linear_scan() {
        for d in 1..=3 {
            let body = ConvexBody::cuboid(vec![-1.0; d], vec![2.0; d]).unwrap();
            let cfg = sample_poisson(&body, 300.0 / body.volume(), false, RngStream::new(5, d as u64)).unwrap();
            let coords = cfg.coords();
            let g = GridIndex::with_all(&body, coords, 0.0);
            let qs = sample_poisson(&body, 100.0 / body.volume(), false, RngStream::new(6, d as u64)).unwrap();
            for qi in 0..qs.len() {
                let q = qs.position(qi);
                let hit = g.nearest(q, |_| true).unwrap();
                let (bi, bd) = brute_nearest(coords, d, q, None).unwrap();
                assert_eq!((hit.index, hit.dist), (bi, bd));
                let r = 0.4;
                let within = g.points_within(q, r);
                let brute: Vec<usize> = (0..cfg.len()).filter(|&j| dist(q, cfg.position(j)) < r).collect();
                assert_eq!(within, brute);
                let kn = g.k_nearest(q, 5, |_| true);
                let mut all: Vec<(usize, f64)> = (0..cfg.len()).map(|j| (j, dist(q, cfg.position(j)))).collect();
                all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                assert_eq!(kn, all[..6].to_vec());
            }
        }
    }

    #[test]
    fn query_outside_grid_is_exact() {
        let body = ConvexBody::unit_cube(2);
        let cfg = sample_poisson(&body, 50.0, false, RngStream::new(1, 1)).unwrap();
        let g = GridIndex::with_all(&body, cfg.coords(), 0.0);
        let q = [-3.0, 0.5];
        let hit = g.nearest(&q, |_| true).unwrap();
        let (bi, _) = brute_nearest(cfg.coords(), 2, &q, None).unwrap();
        assert_eq!(hit.index, bi);
    }

    #[test]
    fn tie_is_flagged() {
        let body = ConvexBody::unit_cube(1);
        let coords = [0.25, 0.75];
        let g = GridIndex::with_all(&body, &coords, 0.0);
        let hit = g.nearest(&[0.5], |_| true).unwrap();
        assert!(hit.tie);
        let (best, initial_tie) = g.nearest_with(&[0.5], |_| true, Some(0.25));
        assert!(best.is_none());
        assert!(initial_tie);
    }
}
