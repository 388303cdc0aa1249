//! The four graph families on a point configuration, each with a
//! grid-accelerated builder and an O(n²) brute-force builder that produce
//! identical edge lists.

pub mod index;

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, norm};
use crate::sampling::MarkedPointConfig;

pub use index::{GridIndex, Nearest, RingEvent};

/// Graph family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Onng,
    Gilbert { epsilon: f64 },
    Knn { k: usize },
    Rst,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Onng => "onng",
            Family::Gilbert { .. } => "gilbert",
            Family::Knn { .. } => "knn",
            Family::Rst => "rst",
        }
    }

    /// Directed families record a `connects_to` target per vertex.
    pub fn is_directed(&self) -> bool {
        matches!(self, Family::Onng | Family::Rst)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::Gilbert { epsilon } if !(epsilon > 0.0) || !epsilon.is_finite() => {
                Err(Error::arg(format!("epsilon must be positive, got {epsilon}")))
            }
            Family::Knn { k: 0 } => Err(Error::arg("k must be positive")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Onng => write!(f, "onng"),
            Family::Gilbert { epsilon } => write!(f, "gilbert epsilon={epsilon:e}"),
            Family::Knn { k } => write!(f, "knn k={k}"),
            Family::Rst => write!(f, "rst"),
        }
    }
}

/// Edge endpoint: a point of the configuration or the synthetic origin
/// vertex of the radial spanning tree (written as `-1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Point(usize),
    Origin,
}

impl Node {
    pub fn as_i64(&self) -> i64 {
        match self {
            Node::Point(i) => *i as i64,
            Node::Origin => -1,
        }
    }

    pub fn point(&self) -> Option<usize> {
        match self {
            Node::Point(i) => Some(*i),
            Node::Origin => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: Node,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGraph {
    pub family: Family,
    /// Number of vertices (points of the configuration).
    pub n: usize,
    /// Directed families: one edge per vertex with a target, in vertex
    /// order. Undirected families: `(i, j)` with `i < j`, sorted.
    pub edges: Vec<Edge>,
    /// Per-vertex target for directed families.
    pub connects_to: Option<Vec<Option<Node>>>,
}

impl GeometricGraph {
    fn directed(family: Family, targets: Vec<Option<(Node, f64)>>) -> Self {
        let edges = targets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|(j, length)| Edge { i, j, length }))
            .collect();
        GeometricGraph {
            family,
            n: targets.len(),
            edges,
            connects_to: Some(targets.iter().map(|t| t.map(|(j, _)| j)).collect()),
        }
    }

    fn undirected(family: Family, n: usize, cfg: &MarkedPointConfig, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let edges = pairs
            .into_iter()
            .map(|(i, j)| Edge {
                i,
                j: Node::Point(j),
                length: dist(cfg.position(i), cfg.position(j)),
            })
            .collect();
        GeometricGraph {
            family,
            n,
            edges,
            connects_to: None,
        }
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for e in &self.edges {
            deg[e.i] += 1;
            if let Node::Point(j) = e.j {
                deg[j] += 1;
            }
        }
        deg
    }

    /// Length of the out-edge of `i` in a directed graph.
    pub fn out_length(&self, i: usize) -> Option<f64> {
        let targets = self.connects_to.as_ref()?;
        targets[i]?;
        // edges are in vertex order with one edge per vertex that has a target
        let pos = self.edges.partition_point(|e| e.i < i);
        Some(self.edges[pos].length)
    }

    /// Writes the edge list: a header `# family ... n=.. edges=..` followed
    /// by `i j length` lines.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {} n={} edges={}", self.family, self.n, self.edges.len())?;
        for e in &self.edges {
            writeln!(w, "{} {} {:.16e}", e.i, e.j.as_i64(), e.length)?;
        }
        Ok(())
    }

    /// Parses an edge list; returns `(header, edges)`.
    pub fn read_edge_list<R: BufRead>(r: R) -> Result<(String, Vec<Edge>)> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))??;
        let header = header
            .strip_prefix("# ")
            .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?
            .to_string();
        let mut edges = Vec::new();
        for line in lines {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad edge line {line:?}")));
            }
            let p = |s: &str| s.parse::<i64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            let i = p(f[0])?;
            let j = p(f[1])?;
            let length = f[2].parse::<f64>().map_err(|e| Error::Parse(format!("{:?}: {e}", f[2])))?;
            if i < 0 || j < -1 {
                return Err(Error::Parse(format!("bad vertex in {line:?}")));
            }
            let j = if j == -1 { Node::Origin } else { Node::Point(j as usize) };
            edges.push(Edge { i: i as usize, j, length });
        }
        Ok((header, edges))
    }
}

fn tie_error(what: &str, i: usize) -> Error {
    Error::degenerate(format!("distance tie in {what} query for vertex {i}"))
}

fn require_marks(cfg: &MarkedPointConfig) -> Result<&[f64]> {
    cfg.marks()
        .ok_or_else(|| Error::arg("the online nearest neighbour graph needs a marked configuration"))
}

/// Builds a graph of the given family with the grid index.
pub fn build(cfg: &MarkedPointConfig, family: Family) -> Result<GeometricGraph> {
    family.validate()?;
    match family {
        Family::Onng => build_onng(cfg),
        Family::Gilbert { epsilon } => build_gilbert(cfg, epsilon),
        Family::Knn { k } => build_knn(cfg, k),
        Family::Rst => build_rst(cfg),
    }
}

/// Builds a graph of the given family by exhaustive pairwise scans.
pub fn build_brute(cfg: &MarkedPointConfig, family: Family) -> Result<GeometricGraph> {
    family.validate()?;
    match family {
        Family::Onng => build_onng_brute(cfg),
        Family::Gilbert { epsilon } => build_gilbert_brute(cfg, epsilon),
        Family::Knn { k } => build_knn_brute(cfg, k),
        Family::Rst => build_rst_brute(cfg),
    }
}

/// Online nearest neighbour graph: points are inserted in mark order and
/// each connects to its nearest already-inserted point.
pub fn build_onng(cfg: &MarkedPointConfig) -> Result<GeometricGraph> {
    let marks = require_marks(cfg)?;
    let n = cfg.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| marks[a].total_cmp(&marks[b]));
    let mut grid = GridIndex::new(cfg.body(), cfg.coords(), n, 0.0);
    let mut targets = vec![None; n];
    for &i in &order {
        if let Some(hit) = grid.nearest(cfg.position(i), |_| true) {
            if hit.tie {
                return Err(tie_error("onng", i));
            }
            targets[i] = Some((Node::Point(hit.index), hit.dist));
        }
        grid.insert(i);
    }
    Ok(GeometricGraph::directed(Family::Onng, targets))
}

pub fn build_onng_brute(cfg: &MarkedPointConfig) -> Result<GeometricGraph> {
    let marks = require_marks(cfg)?;
    let n = cfg.len();
    let mut targets = vec![None; n];
    for i in 0..n {
        let mut best: Option<(usize, f64)> = None;
        let mut tie = false;
        for j in (0..n).filter(|&j| marks[j] < marks[i]) {
            let dj = dist(cfg.position(i), cfg.position(j));
            match best {
                Some((_, bd)) if dj > bd => {}
                Some((_, bd)) if dj == bd => tie = true,
                _ => {
                    best = Some((j, dj));
                    tie = false;
                }
            }
        }
        if tie {
            return Err(tie_error("onng", i));
        }
        targets[i] = best.map(|(j, dj)| (Node::Point(j), dj));
    }
    Ok(GeometricGraph::directed(Family::Onng, targets))
}

/// Gilbert graph: an edge between every pair at distance `< epsilon`.
pub fn build_gilbert(cfg: &MarkedPointConfig, epsilon: f64) -> Result<GeometricGraph> {
    let family = Family::Gilbert { epsilon };
    family.validate()?;
    let n = cfg.len();
    let grid = GridIndex::with_all(cfg.body(), cfg.coords(), epsilon);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in grid.points_within(cfg.position(i), epsilon) {
            if j > i {
                pairs.push((i, j));
            }
        }
    }
    Ok(GeometricGraph::undirected(family, n, cfg, pairs))
}

pub fn build_gilbert_brute(cfg: &MarkedPointConfig, epsilon: f64) -> Result<GeometricGraph> {
    let family = Family::Gilbert { epsilon };
    family.validate()?;
    let n = cfg.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if dist(cfg.position(i), cfg.position(j)) < epsilon {
                pairs.push((i, j));
            }
        }
    }
    Ok(GeometricGraph::undirected(family, n, cfg, pairs))
}

fn check_knn_size(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::arg("k must be positive"));
    }
    if n <= k {
        return Err(Error::arg(format!("k-nearest neighbour graph needs n > k, got n={n}, k={k}")));
    }
    Ok(())
}

/// Undirected k-nearest neighbour graph.
pub fn build_knn(cfg: &MarkedPointConfig, k: usize) -> Result<GeometricGraph> {
    let n = cfg.len();
    check_knn_size(n, k)?;
    let grid = GridIndex::with_all(cfg.body(), cfg.coords(), 0.0);
    let mut pairs = Vec::with_capacity(n * k);
    for i in 0..n {
        let nn = grid.k_nearest(cfg.position(i), k, |j| j != i);
        if nn.len() > k && nn[k].1 == nn[k - 1].1 {
            return Err(tie_error("knn", i));
        }
        for &(j, _) in nn.iter().take(k) {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    Ok(GeometricGraph::undirected(Family::Knn { k }, n, cfg, pairs))
}

pub fn build_knn_brute(cfg: &MarkedPointConfig, k: usize) -> Result<GeometricGraph> {
    let n = cfg.len();
    check_knn_size(n, k)?;
    let mut pairs = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut all: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, dist(cfg.position(i), cfg.position(j))))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1));
        if all.len() > k && all[k].1 == all[k - 1].1 {
            return Err(tie_error("knn", i));
        }
        for &(j, _) in all.iter().take(k) {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    Ok(GeometricGraph::undirected(Family::Knn { k }, n, cfg, pairs))
}

fn point_norms(cfg: &MarkedPointConfig) -> Result<Vec<f64>> {
    let norms: Vec<f64> = (0..cfg.len()).map(|i| norm(cfg.position(i))).collect();
    if let Some(i) = norms.iter().position(|&r| r == 0.0) {
        return Err(Error::degenerate(format!("point {i} lies at the origin")));
    }
    Ok(norms)
}

/// Radial spanning tree: each point connects to its nearest point among
/// the origin and the points of strictly smaller norm.
pub fn build_rst(cfg: &MarkedPointConfig) -> Result<GeometricGraph> {
    let norms = point_norms(cfg)?;
    let grid = GridIndex::with_all(cfg.body(), cfg.coords(), 0.0);
    let mut targets = Vec::with_capacity(cfg.len());
    for i in 0..cfg.len() {
        let (hit, origin_tie) = grid.nearest_with(cfg.position(i), |j| norms[j] < norms[i], Some(norms[i]));
        targets.push(Some(match hit {
            Some(h) if h.tie => return Err(tie_error("rst", i)),
            Some(h) => (Node::Point(h.index), h.dist),
            None if origin_tie => return Err(tie_error("rst", i)),
            None => (Node::Origin, norms[i]),
        }));
    }
    Ok(GeometricGraph::directed(Family::Rst, targets))
}

pub fn build_rst_brute(cfg: &MarkedPointConfig) -> Result<GeometricGraph> {
    let norms = point_norms(cfg)?;
    let n = cfg.len();
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = (Node::Origin, norms[i]);
        let mut tie = false;
        for j in (0..n).filter(|&j| norms[j] < norms[i]) {
            let dj = dist(cfg.position(i), cfg.position(j));
            if dj < best.1 {
                best = (Node::Point(j), dj);
                tie = false;
            } else if dj == best.1 {
                tie = true;
            }
        }
        if tie {
            return Err(tie_error("rst", i));
        }
        targets.push(Some(best));
    }
    Ok(GeometricGraph::directed(Family::Rst, targets))
}

/// Nearest point of the configuration to `x` among those accepted by
/// `predicate`, by grid search.
pub fn nearest_in_subset(
    cfg: &MarkedPointConfig,
    x: &[f64],
    predicate: impl Fn(usize) -> bool,
) -> Option<(usize, f64)> {
    let grid = GridIndex::with_all(cfg.body(), cfg.coords(), 0.0);
    grid.nearest(x, predicate).map(|h| (h.index, h.dist))
}

/// Indices of the points at distance `< radius` from `center`.
pub fn points_in_ball(cfg: &MarkedPointConfig, center: &[f64], radius: f64) -> Vec<usize> {
    let grid = GridIndex::with_all(cfg.body(), cfg.coords(), radius);
    grid.points_within(center, radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexBody;
    use crate::sampling::{sample_poisson, MarkedPoint, RngStream};

    fn line_cfg(points: &[(f64, Option<f64>)]) -> MarkedPointConfig {
        let body = ConvexBody::cuboid(vec![-20.0], vec![20.0]).unwrap();
        let pts: Vec<MarkedPoint> = points.iter().map(|&(x, m)| MarkedPoint::new(vec![x], m)).collect();
        MarkedPointConfig::from_points(body, &pts).unwrap()
    }

    #[test]
    fn onng_two_points() {
        let cfg = line_cfg(&[(0.0, Some(0.2)), (3.0, Some(0.5))]);
        let g = build_onng(&cfg).unwrap();
        assert_eq!(g.edges, vec![Edge { i: 1, j: Node::Point(0), length: 3.0 }]);
        assert_eq!(g.connects_to.as_ref().unwrap()[0], None);
    }

    #[test]
    fn onng_three_points() {
        let cfg = line_cfg(&[(0.0, Some(0.1)), (1.0, Some(0.3)), (1.5, Some(0.2))]);
        let g = build_onng(&cfg).unwrap();
        let ct = g.connects_to.clone().unwrap();
        assert_eq!(ct, vec![None, Some(Node::Point(2)), Some(Node::Point(0))]);
        assert_eq!(g.out_length(2), Some(1.5));
        assert_eq!(g.out_length(1), Some(0.5));
        assert_eq!(g, build_onng_brute(&cfg).unwrap());
    }

    #[test]
    fn onng_needs_marks() {
        let cfg = line_cfg(&[(0.0, None)]);
        assert!(matches!(build_onng(&cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn gilbert_collinear() {
        let cfg = line_cfg(&[(0.0, None), (1.0, None), (2.0, None)]);
        let g = build_gilbert(&cfg, 1.5).unwrap();
        let pairs: Vec<(usize, Node)> = g.edges.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, Node::Point(1)), (1, Node::Point(2))]);
        let g = build_gilbert(&cfg, 100.0).unwrap();
        assert_eq!(g.edges.len(), 3);
    }

    #[test]
    fn knn_small_cases() {
        let cfg = line_cfg(&[(0.0, None), (1.0, None), (10.0, None)]);
        let g = build_knn(&cfg, 1).unwrap();
        let pairs: Vec<(usize, Node)> = g.edges.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, Node::Point(1)), (1, Node::Point(2))]);
        let g = build_knn(&cfg, 2).unwrap();
        assert_eq!(g.edges.len(), 3);
        assert!(build_knn(&cfg, 3).is_err());
    }

    #[test]
    fn rst_small_cases() {
        let body = ConvexBody::ball(vec![0.0, 0.0], 5.0).unwrap();
        let one = MarkedPointConfig::from_points(body.clone(), &[MarkedPoint::unmarked(vec![3.0, 4.0])]).unwrap();
        let g = build_rst(&one).unwrap();
        assert_eq!(g.edges, vec![Edge { i: 0, j: Node::Origin, length: 5.0 }]);
        let two = MarkedPointConfig::from_points(
            body.clone(),
            &[MarkedPoint::unmarked(vec![2.0, 0.0]), MarkedPoint::unmarked(vec![1.0, 0.0])],
        )
        .unwrap();
        let g = build_rst(&two).unwrap();
        assert_eq!(g.connects_to.unwrap(), vec![Some(Node::Point(1)), Some(Node::Origin)]);
        let at_origin = MarkedPointConfig::from_points(body, &[MarkedPoint::unmarked(vec![0.0, 0.0])]).unwrap();
        assert!(matches!(build_rst(&at_origin), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn ties_are_rejected() {
        let cfg = line_cfg(&[(0.0, Some(0.1)), (2.0, Some(0.2)), (1.0, Some(0.9))]);
        assert!(matches!(build_onng(&cfg), Err(Error::DegenerateInput(_))));
        assert!(matches!(build_onng_brute(&cfg), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn accelerated_equals_brute() {
        let cases: Vec<(ConvexBody, Family, f64)> = vec![
            (ConvexBody::unit_cube(2), Family::Onng, 200.0),
            (ConvexBody::unit_cube(3), Family::Gilbert { epsilon: 0.15 }, 500.0),
            (ConvexBody::unit_cube(2), Family::Knn { k: 6 }, 300.0),
            (ConvexBody::ball(vec![0.0, 0.0], 10.0).unwrap(), Family::Rst, 300.0 / (100.0 * std::f64::consts::PI)),
        ];
        for (body, fam, lam) in cases {
            let marked = fam == Family::Onng;
            for rep in 0..5 {
                let cfg = sample_poisson(&body, lam, marked, RngStream::new(17, rep)).unwrap();
                assert_eq!(build(&cfg, fam).unwrap(), build_brute(&cfg, fam).unwrap(), "{fam} rep {rep}");
            }
        }
    }

    #[test]
    fn edge_list_round_trip() {
        let body = ConvexBody::ball(vec![0.0, 0.0], 2.0).unwrap();
        let cfg = sample_poisson(&body, 5.0, false, RngStream::new(2, 2)).unwrap();
        let g = build_rst(&cfg).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let (header, edges) = GeometricGraph::read_edge_list(&buf[..]).unwrap();
        assert!(header.starts_with("rst n="));
        assert_eq!(edges, g.edges);
    }

    #[test]
    fn query_helpers() {
        let body = ConvexBody::unit_cube(2);
        let empty = MarkedPointConfig::empty(body.clone(), false);
        assert!(points_in_ball(&empty, &[0.5, 0.5], 0.2).is_empty());
        let cfg = sample_poisson(&body, 100.0, false, RngStream::new(4, 0)).unwrap();
        let q = [0.3, 0.6];
        let (j, dj) = nearest_in_subset(&cfg, &q, |_| true).unwrap();
        assert!((0..cfg.len()).all(|i| dist(&q, cfg.position(i)) >= dj));
        assert_eq!(dist(&q, cfg.position(j)), dj);
    }
}
