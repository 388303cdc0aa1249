//! Edge-weight functionals, exact add-one costs, the cone stabilisation
//! radius `R_θ` and the rewiring term `𝓛` of the online nearest neighbour
//! graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, norm, ConeCover};
use crate::graphs::{self, Family, GeometricGraph, GridIndex, Node, RingEvent};
use crate::sampling::{MarkedPoint, MarkedPointConfig};

/// Edge weight applied to an edge length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "weight", rename_all = "snake_case")]
pub enum Weight {
    /// `|e|^α`.
    Power { alpha: f64 },
    /// `φ(x) = x^{-a}`, `a ≥ 0`.
    PhiPower { a: f64 },
    /// `φ(x) = e^{-x}`.
    PhiExp,
}

impl Weight {
    /// Weight of an edge of the given length. `φ(0) = 0` for the decreasing
    /// catalogue; a power weight with `α ≤ 0` at length zero is an error.
    pub fn apply(&self, length: f64) -> Result<f64> {
        let w = match *self {
            Weight::Power { alpha } => {
                if length == 0.0 {
                    if alpha > 0.0 {
                        0.0
                    } else {
                        return Err(Error::numeric(format!(
                            "power weight with alpha={alpha} at zero length"
                        )));
                    }
                } else {
                    length.powf(alpha)
                }
            }
            Weight::PhiPower { a } => {
                if length == 0.0 {
                    0.0
                } else {
                    length.powf(-a)
                }
            }
            Weight::PhiExp => {
                if length == 0.0 {
                    0.0
                } else {
                    (-length).exp()
                }
            }
        };
        if !w.is_finite() {
            return Err(Error::numeric(format!("non-finite weight at length {length}")));
        }
        Ok(w)
    }

    /// Weight of an optional edge; a missing edge counts as zero.
    pub fn apply_opt(&self, length: Option<f64>) -> Result<f64> {
        length.map_or(Ok(0.0), |l| self.apply(l))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Weight::Power { alpha } if !alpha.is_finite() => Err(Error::arg("alpha must be finite")),
            Weight::PhiPower { a } if !(a >= 0.0) || !a.is_finite() => {
                Err(Error::arg(format!("phi exponent must be >= 0, got {a}")))
            }
            _ => Ok(()),
        }
    }
}

/// Which statistic to compute: a weight summed over the edges of a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub family: Family,
    pub weight: Weight,
}

impl FunctionalSpec {
    pub fn new(family: Family, weight: Weight) -> Self {
        FunctionalSpec { family, weight }
    }

    pub fn power(family: Family, alpha: f64) -> Self {
        FunctionalSpec::new(family, Weight::Power { alpha })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.family.validate()?;
        self.weight.validate()?;
        let _ = dim;
        Ok(())
    }

    /// Parameter ranges outside those covered by the limit theorems. These
    /// are advisory; computation stays valid wherever the weights are finite.
    pub fn warnings(&self, dim: usize) -> Vec<String> {
        let d = dim as f64;
        let mut out = Vec::new();
        match (self.family, self.weight) {
            (Family::Onng, Weight::Power { alpha }) if !(alpha > 0.0 && alpha <= 0.5 * d) => {
                out.push(format!("onng alpha={alpha} outside (0, d/2]"));
            }
            (Family::Gilbert { .. }, Weight::Power { alpha }) if alpha <= -0.5 * d => {
                out.push(format!("gilbert alpha={alpha} not above -d/2"));
            }
            (Family::Knn { .. } | Family::Rst, Weight::Power { .. }) => {
                out.push(format!("{} expects a decreasing weight", self.family.name()));
            }
            (Family::Knn { .. } | Family::Rst, Weight::PhiPower { a }) if a >= 0.5 * d => {
                out.push(format!("phi exponent {a} not below d/2"));
            }
            _ => {}
        }
        out
    }
}

/// Sum of the weights over the edges of `graph`.
pub fn evaluate(spec: &FunctionalSpec, graph: &GeometricGraph) -> Result<f64> {
    if spec.family != graph.family {
        return Err(Error::arg(format!(
            "functional is defined for {}, graph is {}",
            spec.family, graph.family
        )));
    }
    graph
        .edges
        .iter()
        .try_fold(0.0, |acc, e| Ok(acc + spec.weight.apply(e.length)?))
}

/// Builds the graph of `spec.family` on `cfg` and evaluates the functional.
pub fn evaluate_config(spec: &FunctionalSpec, cfg: &MarkedPointConfig) -> Result<f64> {
    evaluate(spec, &graphs::build(cfg, spec.family)?)
}

/// Change of one vertex's edge (directed families) or of one edge
/// (undirected families) caused by inserting a point. A missing length
/// means the edge is absent on that side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rewired {
    pub vertex: usize,
    pub old_length: Option<f64>,
    pub new_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AddOneCostResult {
    /// `F(μ + δ_x) − F(μ)`.
    pub first_order: f64,
    /// Weight of the edges of the inserted point.
    pub own_edge_term: f64,
    pub rewired: Vec<Rewired>,
    /// Set when no incremental path exists and the rebuild was used.
    pub used_oracle: bool,
}

impl AddOneCostResult {
    /// `own_edge_term + Σ (w(new) − w(old))`.
    pub fn recomposed(&self, weight: &Weight) -> Result<f64> {
        self.rewired.iter().try_fold(self.own_edge_term, |acc, r| {
            Ok(acc + weight.apply_opt(r.new_length)? - weight.apply_opt(r.old_length)?)
        })
    }
}

fn check_point(cfg: &MarkedPointConfig, p: &MarkedPoint) -> Result<()> {
    if p.position.len() != cfg.dim() {
        return Err(Error::arg("probe point has the wrong dimension"));
    }
    if cfg.is_marked() != p.mark.is_some() {
        return Err(Error::arg("probe point and configuration disagree on marks"));
    }
    Ok(())
}

/// Exact add-one cost by rebuilding the graph on `μ + δ_x`.
pub fn add_one_cost_oracle(
    spec: &FunctionalSpec,
    cfg: &MarkedPointConfig,
    p: &MarkedPoint,
) -> Result<AddOneCostResult> {
    check_point(cfg, p)?;
    let g0 = graphs::build(cfg, spec.family)?;
    let bigger = cfg.add_point(&p.position, p.mark)?;
    let g1 = graphs::build(&bigger, spec.family)?;
    let f0 = evaluate(spec, &g0)?;
    let f1 = evaluate(spec, &g1)?;
    let new = cfg.len();
    let w = &spec.weight;
    let mut own = 0.0;
    let mut rewired = Vec::new();
    match (&g0.connects_to, &g1.connects_to) {
        (Some(t0), Some(t1)) => {
            own = w.apply_opt(g1.out_length(new))?;
            for v in 0..new {
                if t0[v] != t1[v] {
                    rewired.push(Rewired {
                        vertex: v,
                        old_length: g0.out_length(v),
                        new_length: g1.out_length(v),
                    });
                }
            }
        }
        _ => {
            let key = |e: &graphs::Edge| (e.i, e.j);
            let old: std::collections::BTreeMap<_, f64> = g0.edges.iter().map(|e| (key(e), e.length)).collect();
            let mut seen = std::collections::BTreeSet::new();
            for e in &g1.edges {
                if e.j == Node::Point(new) {
                    own += w.apply(e.length)?;
                    continue;
                }
                seen.insert(key(e));
                if !old.contains_key(&key(e)) {
                    rewired.push(Rewired {
                        vertex: e.i,
                        old_length: None,
                        new_length: Some(e.length),
                    });
                }
            }
            for e in &g0.edges {
                if !seen.contains(&key(e)) {
                    rewired.push(Rewired {
                        vertex: e.i,
                        old_length: Some(e.length),
                        new_length: None,
                    });
                }
            }
        }
    }
    Ok(AddOneCostResult {
        first_order: f1 - f0,
        own_edge_term: own,
        rewired,
        used_oracle: true,
    })
}

/// A base configuration with its graph and spatial index, reused across
/// many probe points.
pub struct CostContext<'a> {
    spec: FunctionalSpec,
    cfg: &'a MarkedPointConfig,
    graph: GeometricGraph,
    grid: GridIndex<'a>,
    out_len: Vec<Option<f64>>,
    norms: Vec<f64>,
}

impl<'a> CostContext<'a> {
    pub fn new(spec: FunctionalSpec, cfg: &'a MarkedPointConfig) -> Result<Self> {
        let graph = graphs::build(cfg, spec.family)?;
        Self::with_graph(spec, cfg, graph)
    }

    /// Uses a graph already built from `cfg`.
    pub fn with_graph(spec: FunctionalSpec, cfg: &'a MarkedPointConfig, graph: GeometricGraph) -> Result<Self> {
        if graph.family != spec.family || graph.n != cfg.len() {
            return Err(Error::arg("graph does not belong to this configuration and functional"));
        }
        if spec.family == Family::Onng && !cfg.is_marked() {
            return Err(Error::arg("the online nearest neighbour graph needs a marked configuration"));
        }
        let min_cell = match spec.family {
            Family::Gilbert { epsilon } => epsilon,
            _ => 0.0,
        };
        let grid = GridIndex::with_all(cfg.body(), cfg.coords(), min_cell);
        let out_len = (0..cfg.len()).map(|i| graph.out_length(i)).collect();
        let norms = if spec.family == Family::Rst {
            (0..cfg.len()).map(|i| norm(cfg.position(i))).collect()
        } else {
            Vec::new()
        };
        Ok(CostContext {
            spec,
            cfg,
            graph,
            grid,
            out_len,
            norms,
        })
    }

    pub fn graph(&self) -> &GeometricGraph {
        &self.graph
    }

    pub fn value(&self) -> Result<f64> {
        evaluate(&self.spec, &self.graph)
    }

    fn check_generic(&self, p: &MarkedPoint) -> Result<()> {
        check_point(self.cfg, p)?;
        if !self.cfg.body().contains(&p.position) {
            return Err(Error::arg("probe point lies outside the observation window"));
        }
        for i in 0..self.cfg.len() {
            if self.cfg.position(i) == p.position.as_slice() {
                return Err(Error::degenerate("probe coincides with a point"));
            }
        }
        if let (Some(marks), Some(s)) = (self.cfg.marks(), p.mark) {
            if marks.contains(&s) {
                return Err(Error::degenerate("probe mark coincides with a mark"));
            }
        }
        Ok(())
    }

    /// Add-one cost of `p` without rebuilding; the k-nearest neighbour
    /// family falls back to the rebuild oracle.
    pub fn add_one_cost(&self, p: &MarkedPoint) -> Result<AddOneCostResult> {
        match self.spec.family {
            Family::Knn { .. } => add_one_cost_oracle(&self.spec, self.cfg, p),
            Family::Onng => {
                self.check_generic(p)?;
                self.onng_cost(p)
            }
            Family::Gilbert { epsilon } => {
                self.check_generic(p)?;
                let mut own = 0.0;
                for j in self.grid.points_within(&p.position, epsilon) {
                    own += self.spec.weight.apply(dist(self.cfg.position(j), &p.position))?;
                }
                Ok(AddOneCostResult {
                    first_order: own,
                    own_edge_term: own,
                    rewired: Vec::new(),
                    used_oracle: false,
                })
            }
            Family::Rst => {
                self.check_generic(p)?;
                self.rst_cost(p)
            }
        }
    }

    fn onng_cost(&self, p: &MarkedPoint) -> Result<AddOneCostResult> {
        let x = &p.position;
        let s = p.mark.expect("checked marked");
        let marks = self.cfg.marks().expect("checked marked");
        let w = &self.spec.weight;
        let own_len = match self.grid.nearest(x, |j| marks[j] < s) {
            Some(h) if h.tie => return Err(Error::degenerate("distance tie for the inserted point")),
            Some(h) => Some(h.dist),
            None => None,
        };
        let own = w.apply_opt(own_len)?;
        let rewired = self.rewire_onng(x, s)?;
        let mut first = own;
        for r in &rewired {
            first += w.apply_opt(r.new_length)? - w.apply_opt(r.old_length)?;
        }
        Ok(AddOneCostResult {
            first_order: first,
            own_edge_term: own,
            rewired,
            used_oracle: false,
        })
    }

    /// Later-marked points whose nearest earlier point becomes `x`.
    fn rewire_onng(&self, x: &[f64], s: f64) -> Result<Vec<Rewired>> {
        let marks = self.cfg.marks().expect("checked marked");
        let mut out = Vec::new();
        for y in 0..self.cfg.len() {
            if marks[y] <= s {
                continue;
            }
            let dxy = dist(self.cfg.position(y), x);
            let old = self.out_len[y];
            match old {
                Some(o) if dxy > o => {}
                Some(o) if dxy == o => return Err(Error::degenerate("distance tie on rewiring")),
                _ => out.push(Rewired {
                    vertex: y,
                    old_length: old,
                    new_length: Some(dxy),
                }),
            }
        }
        Ok(out)
    }

    fn rst_cost(&self, p: &MarkedPoint) -> Result<AddOneCostResult> {
        let x = &p.position;
        let nx = norm(x);
        if nx == 0.0 {
            return Err(Error::degenerate("probe lies at the origin"));
        }
        let w = &self.spec.weight;
        let (hit, origin_tie) = self.grid.nearest_with(x, |j| self.norms[j] < nx, Some(nx));
        let own_len = match hit {
            Some(h) if h.tie => return Err(Error::degenerate("distance tie for the inserted point")),
            Some(h) => h.dist,
            None if origin_tie => return Err(Error::degenerate("distance tie for the inserted point")),
            None => nx,
        };
        let own = w.apply(own_len)?;
        let mut first = own;
        let mut rewired = Vec::new();
        for y in 0..self.cfg.len() {
            if self.norms[y] <= nx {
                continue;
            }
            let dxy = dist(self.cfg.position(y), x);
            let old = self.out_len[y].expect("every radial spanning tree vertex has an edge");
            if dxy < old {
                first += w.apply(dxy)? - w.apply(old)?;
                rewired.push(Rewired {
                    vertex: y,
                    old_length: Some(old),
                    new_length: Some(dxy),
                });
            } else if dxy == old {
                return Err(Error::degenerate("distance tie on rewiring"));
            }
        }
        Ok(AddOneCostResult {
            first_order: first,
            own_edge_term: own,
            rewired,
            used_oracle: false,
        })
    }
}

/// Incremental add-one cost against a graph already built from `cfg`.
pub fn add_one_cost_fast(
    spec: &FunctionalSpec,
    cfg: &MarkedPointConfig,
    graph: &GeometricGraph,
    p: &MarkedPoint,
) -> Result<AddOneCostResult> {
    CostContext::with_graph(*spec, cfg, graph.clone())?.add_one_cost(p)
}

/// Second-order add-one cost `D_x F(μ + δ_y) − D_x F(μ)`.
///
/// For the Gilbert graph the neighbour sets of `x` in `μ` and `μ + δ_y` are
/// compared and only their symmetric difference is summed, which is exactly
/// `1{|x−y| < ε} |x−y|^α`. Other families difference two incremental
/// first-order costs.
pub fn second_add_one_cost(
    spec: &FunctionalSpec,
    cfg: &MarkedPointConfig,
    x: &MarkedPoint,
    y: &MarkedPoint,
) -> Result<f64> {
    let with_y = cfg.add_point(&y.position, y.mark)?;
    if let Family::Gilbert { epsilon } = spec.family {
        check_point(cfg, x)?;
        let g0 = GridIndex::with_all(cfg.body(), cfg.coords(), epsilon);
        let g1 = GridIndex::with_all(with_y.body(), with_y.coords(), epsilon);
        let n0 = g0.points_within(&x.position, epsilon);
        let n1 = g1.points_within(&x.position, epsilon);
        let mut total = 0.0;
        for &j in n1.iter().filter(|j| n0.binary_search(j).is_err()) {
            total += spec.weight.apply(dist(with_y.position(j), &x.position))?;
        }
        for &j in n0.iter().filter(|j| n1.binary_search(j).is_err()) {
            total -= spec.weight.apply(dist(cfg.position(j), &x.position))?;
        }
        return Ok(total);
    }
    let d1 = CostContext::new(*spec, &with_y)?.add_one_cost(x)?;
    let d0 = CostContext::new(*spec, cfg)?.add_one_cost(x)?;
    Ok(d1.first_order - d0.first_order)
}

/// Second-order add-one cost from four full rebuilds.
pub fn second_add_one_cost_oracle(
    spec: &FunctionalSpec,
    cfg: &MarkedPointConfig,
    x: &MarkedPoint,
    y: &MarkedPoint,
) -> Result<f64> {
    let fx = cfg.add_point(&x.position, x.mark)?;
    let fy = cfg.add_point(&y.position, y.mark)?;
    let fxy = fy.add_point(&x.position, x.mark)?;
    let e = |c: &MarkedPointConfig| evaluate_config(spec, c);
    Ok((e(&fxy)? - e(&fy)?) - (e(&fx)? - e(cfg)?))
}

fn onng_marks(cfg: &MarkedPointConfig) -> Result<&[f64]> {
    cfg.marks()
        .ok_or_else(|| Error::arg("the stabilisation radius needs a marked configuration"))
}

/// `R_θ(x) = max_i min(dist to nearest point of mark < θ in the widened cone
/// i at x, diam(body))`, by ring search.
pub fn onng_radius(cfg: &MarkedPointConfig, x: &[f64], theta: f64, cover: &ConeCover) -> Result<f64> {
    let grid = GridIndex::with_all(cfg.body(), cfg.coords(), 0.0);
    onng_radius_with(cfg, &grid, x, theta, cover)
}

/// As [`onng_radius`], reusing a grid holding every point of `cfg`.
pub fn onng_radius_with(
    cfg: &MarkedPointConfig,
    grid: &GridIndex<'_>,
    x: &[f64],
    theta: f64,
    cover: &ConeCover,
) -> Result<f64> {
    let marks = onng_marks(cfg)?;
    if cover.dim() != cfg.dim() {
        return Err(Error::arg("cone cover dimension does not match"));
    }
    let diam = cfg.body().diameter();
    let mut best = vec![diam; cover.len()];
    let mut offset = vec![0.0; cfg.dim()];
    grid.visit_by_rings(x, |ev| match ev {
        RingEvent::Point(j, dj) => {
            if marks[j] < theta && dj < diam {
                let z = cfg.position(j);
                for k in 0..offset.len() {
                    offset[k] = z[k] - x[k];
                }
                for (i, b) in best.iter_mut().enumerate() {
                    if dj < *b && cover.in_widened(i, &offset) {
                        *b = dj;
                    }
                }
            }
            false
        }
        RingEvent::Done(lb) => best.iter().all(|&b| b <= lb),
    });
    Ok(best.into_iter().fold(0.0, f64::max))
}

/// Linear-scan version of [`onng_radius`].
pub fn onng_radius_brute(cfg: &MarkedPointConfig, x: &[f64], theta: f64, cover: &ConeCover) -> Result<f64> {
    let marks = onng_marks(cfg)?;
    let diam = cfg.body().diameter();
    let mut r: f64 = 0.0;
    for i in 0..cover.len() {
        let mut m = diam;
        for j in (0..cfg.len()).filter(|&j| marks[j] < theta) {
            let z = cfg.position(j);
            let offset: Vec<f64> = z.iter().zip(x).map(|(a, b)| a - b).collect();
            if cover.in_widened(i, &offset) {
                m = m.min(dist(x, z));
            }
        }
        r = r.max(m);
    }
    Ok(r)
}

/// `𝓛_{(x,s)} F`: the sum of the old edge weights of the points with mark
/// above `s` that connect to `x` once it is inserted. A point without an
/// edge contributes `φ(0) = 0`.
pub fn onng_l_term(weight: &Weight, cfg: &MarkedPointConfig, x: &[f64], s: f64) -> Result<f64> {
    let marks = onng_marks(cfg)?;
    let graph = graphs::build_onng(cfg)?;
    let mut total = 0.0;
    for y in 0..cfg.len() {
        if marks[y] <= s {
            continue;
        }
        let old = graph.out_length(y);
        let dxy = dist(cfg.position(y), x);
        if old.is_none_or(|o| dxy < o) {
            total += weight.apply_opt(old)?;
        }
    }
    Ok(total)
}

/// Relative agreement used when comparing incremental and rebuilt costs:
/// `|a − b| ≤ rel · max(|a|, |b|) + 1e-3 · rel · scale`, where `scale` is the
/// magnitude of the functional the costs were differenced from.
pub fn costs_agree(a: f64, b: f64, scale: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-3 * rel * scale.abs()
}
