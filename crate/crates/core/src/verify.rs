//! Property suites: oracle equivalence, graph invariants, the add-one cost
//! bound by `R_s^α + 𝓛`, the product rule, sign of the k-NN and radial
//! spanning tree costs, and the Mecke and p-Poincaré checks.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{mecke_check, poincare_catalogue, poincare_check, with_workers, CheckSettings, MeckeFn};
use crate::functionals::{
    add_one_cost_oracle, costs_agree, evaluate_config, onng_l_term, onng_radius_with, second_add_one_cost,
    CostContext, FunctionalSpec, Weight,
};
use crate::geometry::{cone_cover, dist, ConvexBody};
use crate::graphs::{self, Family, GeometricGraph, GridIndex, Node};
use crate::sampling::{sample_poisson, sample_uniform, MarkedPoint, MarkedPointConfig, RngStream};

pub const SUITES: [&str; 7] = ["oracle", "graphs", "dbyl", "product", "nonneg", "mecke", "poincare"];

/// Stream tag reserved for the verification suites.
const TAG: u8 = 0x50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scale {
    /// Reduced sizes for fast feedback.
    Quick,
    /// Sizes used by the acceptance criteria.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub workers: usize,
    pub scale: Scale,
    /// Perturbs the incremental add-one costs, which must make the oracle
    /// suite fail.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub checks: usize,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        SuiteResult {
            name: name.to_string(),
            pass: true,
            checks: 0,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.pass = false;
            // keep reports readable when a suite fails wholesale
            if self.failures.len() < 20 {
                self.failures.push(what());
            }
        }
    }

    fn merge(&mut self, other: SuiteResult) {
        self.pass &= other.pass;
        self.checks += other.checks;
        for f in other.failures {
            if self.failures.len() < 20 {
                self.failures.push(f);
            }
        }
        self.notes.extend(other.notes);
    }
}

/// Runs the named suites (all when `names` is empty).
pub fn run_suites(names: &[String], opts: &VerifyOptions) -> Result<Vec<SuiteResult>> {
    let selected: Vec<&str> = if names.is_empty() {
        SUITES.to_vec()
    } else {
        names.iter().map(|s| s.as_str()).collect()
    };
    let mut out = Vec::new();
    for name in selected {
        out.push(match name {
            "oracle" => oracle_suite(opts)?,
            "graphs" => graph_suite(opts)?,
            "dbyl" => dbyl_suite(opts)?,
            "product" => product_suite(opts)?,
            "nonneg" => nonneg_suite(opts)?,
            "mecke" => mecke_suite(opts)?,
            "poincare" => poincare_suite(opts)?,
            other => {
                return Err(Error::arg(format!(
                    "unknown suite {other:?}; available: {}",
                    SUITES.join(", ")
                )))
            }
        });
    }
    Ok(out)
}

fn configs_per_family(opts: &VerifyOptions) -> usize {
    match opts.scale {
        Scale::Quick => 10,
        Scale::Full => 100,
    }
}

/// Families with the windows and intensities used by the equivalence suites;
/// every configuration has about 200 points.
pub fn family_cases() -> Vec<(FunctionalSpec, ConvexBody, f64)> {
    let disc = ConvexBody::ball(vec![0.0, 0.0], 10.0).expect("valid ball");
    vec![
        (FunctionalSpec::power(Family::Onng, 0.5), ConvexBody::unit_cube(2), 200.0),
        (
            FunctionalSpec::power(Family::Gilbert { epsilon: 0.12 }, 1.0),
            ConvexBody::unit_cube(2),
            200.0,
        ),
        (
            FunctionalSpec::new(Family::Knn { k: 6 }, Weight::PhiPower { a: 0.5 }),
            ConvexBody::unit_cube(2),
            200.0,
        ),
        (
            FunctionalSpec::new(Family::Rst, Weight::PhiExp),
            disc.clone(),
            200.0 / disc.volume(),
        ),
    ]
}

fn par_map<T: Send>(opts: &VerifyOptions, n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    with_workers(opts.workers, || (0..n).into_par_iter().map(f).collect::<Result<Vec<T>>>())?
}

/// Incremental add-one costs equal the rebuild oracle, accelerated builds
/// equal brute force, and the Gilbert second-order cost is the closed form.
pub fn oracle_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("oracle");
    let reps = configs_per_family(opts);
    for (fi, (spec, body, lambda)) in family_cases().into_iter().enumerate() {
        let marked = spec.family == Family::Onng;
        let parts = par_map(opts, reps, |rep| {
            let mut s = SuiteResult::new("oracle");
            let stream = RngStream::derive(opts.seed, TAG, fi, rep);
            let cfg = sample_poisson(&body, lambda, marked, stream)?;
            let fast_graph = graphs::build(&cfg, spec.family)?;
            let brute_graph = graphs::build_brute(&cfg, spec.family)?;
            s.check(fast_graph == brute_graph, || {
                format!("{} rep {rep}: accelerated build differs from brute force", spec.family)
            });
            let ctx = CostContext::with_graph(spec, &cfg, fast_graph)?;
            let scale = ctx.value()?;
            let mut rng = RngStream::derive(opts.seed, TAG + 1, fi, rep).rng();
            for _ in 0..5 {
                let x = sample_uniform(&body, &mut rng);
                let p = MarkedPoint::new(x, marked.then(|| rng.random::<f64>()));
                let mut fast = ctx.add_one_cost(&p)?.first_order;
                if opts.inject_fault {
                    fast += 1e-6 * (fast.abs() + 1.0);
                }
                let oracle = add_one_cost_oracle(&spec, &cfg, &p)?.first_order;
                s.check(costs_agree(fast, oracle, scale, 1e-10), || {
                    format!("{} rep {rep}: incremental {fast} vs oracle {oracle}", spec.family)
                });
            }
            if let Family::Gilbert { epsilon } = spec.family {
                for _ in 0..5 {
                    let x = MarkedPoint::unmarked(sample_uniform(&body, &mut rng));
                    // keep y close to x half of the time so both branches occur
                    let y = loop {
                        let mut y = sample_uniform(&body, &mut rng);
                        if rng.random::<bool>() {
                            for (yk, xk) in y.iter_mut().zip(&x.position) {
                                *yk = xk + (*yk - xk) * 0.1;
                            }
                        }
                        if body.contains(&y) {
                            break MarkedPoint::unmarked(y);
                        }
                    };
                    let d2 = second_add_one_cost(&spec, &cfg, &x, &y)?;
                    let r = dist(&x.position, &y.position);
                    let closed = if r < epsilon { spec.weight.apply(r)? } else { 0.0 };
                    s.check(d2 == closed, || format!("gilbert rep {rep}: D2 {d2} vs closed form {closed}"));
                }
            }
            Ok(s)
        })?;
        for p in parts {
            suite.merge(p);
        }
    }
    Ok(suite)
}

/// Per-(d, k) bound on the k-NN degree: `k (1 + τ_d)` with `τ_d` the
/// planar/spatial kissing-type constants 2, 6, 12 for d = 1, 2, 3.
pub fn knn_degree_bound(d: usize, k: usize) -> Option<usize> {
    let tau = match d {
        1 => 2,
        2 => 6,
        3 => 12,
        _ => return None,
    };
    Some(k * (1 + tau))
}

fn onng_is_tree(g: &GeometricGraph, marks: &[f64]) -> bool {
    let targets = match &g.connects_to {
        Some(t) => t,
        None => return false,
    };
    if g.n == 0 {
        return true;
    }
    let root = (0..g.n).min_by(|&a, &b| marks[a].total_cmp(&marks[b])).expect("nonempty");
    (0..g.n).all(|v| {
        let mut cur = v;
        for _ in 0..=g.n {
            if cur == root {
                return targets[cur].is_none();
            }
            match targets[cur] {
                Some(Node::Point(next)) if marks[next] < marks[cur] => cur = next,
                _ => return false,
            }
        }
        false
    })
}

fn rst_reaches_origin(g: &GeometricGraph, cfg: &MarkedPointConfig) -> bool {
    let targets = match &g.connects_to {
        Some(t) => t,
        None => return false,
    };
    let norm = |i: usize| dist(cfg.position(i), &vec![0.0; cfg.dim()]);
    (0..g.n).all(|v| {
        let mut cur = v;
        for _ in 0..=g.n {
            match targets[cur] {
                Some(Node::Origin) => return true,
                Some(Node::Point(next)) if norm(next) < norm(cur) => cur = next,
                _ => return false,
            }
        }
        false
    })
}

/// Structural invariants of the four families.
pub fn graph_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("graphs");
    let reps = configs_per_family(opts);
    let parts = par_map(opts, reps, |rep| {
        let mut s = SuiteResult::new("graphs");
        for d in 1..=3 {
            let body = ConvexBody::unit_cube(d);
            let cfg = sample_poisson(&body, 150.0, true, RngStream::derive(opts.seed, TAG + 2, d, rep))?;
            let marks = cfg.marks().expect("marked");
            let onng = graphs::build_onng(&cfg)?;
            s.check(onng_is_tree(&onng, marks), || format!("onng d={d} rep {rep}: not a tree"));
            s.check(onng.edges.len() == cfg.len().saturating_sub(1), || {
                format!("onng d={d} rep {rep}: edge count")
            });

            let eps = 0.3 / d as f64;
            let gil = graphs::build_gilbert(&cfg, eps)?;
            // relabel by reversing the point order
            let rev_pts: Vec<MarkedPoint> = (0..cfg.len()).rev().map(|i| cfg.point(i)).collect();
            let rev = MarkedPointConfig::from_points(body.clone(), &rev_pts)?;
            let gil_rev = graphs::build_gilbert(&rev, eps)?;
            let n = cfg.len();
            let mut a: Vec<(usize, usize)> = gil.edges.iter().map(|e| (e.i, e.j.point().expect("point"))).collect();
            let mut b: Vec<(usize, usize)> = gil_rev
                .edges
                .iter()
                .map(|e| {
                    let (i, j) = (n - 1 - e.i, n - 1 - e.j.point().expect("point"));
                    (i.min(j), i.max(j))
                })
                .collect();
            a.sort_unstable();
            b.sort_unstable();
            s.check(a == b, || format!("gilbert d={d} rep {rep}: relabelling changes edges"));

            for k in [1usize, 3, 6] {
                if cfg.len() <= k {
                    continue;
                }
                let knn = graphs::build_knn(&cfg, k)?;
                let nn1 = graphs::build_knn(&cfg, 1)?;
                let set: std::collections::BTreeSet<(usize, Node)> = knn.edges.iter().map(|e| (e.i, e.j)).collect();
                s.check(nn1.edges.iter().all(|e| set.contains(&(e.i, e.j))), || {
                    format!("knn d={d} k={k} rep {rep}: 1-NN edge missing")
                });
                let m = knn.edges.len();
                s.check(m * 2 >= n * k && m <= n * k, || format!("knn d={d} k={k}: edge count {m}"));
                let bound = knn_degree_bound(d, k).expect("tabulated");
                let maxdeg = knn.degrees().into_iter().max().unwrap_or(0);
                s.check(maxdeg <= bound, || format!("knn d={d} k={k}: degree {maxdeg} > {bound}"));
            }

            let ball = ConvexBody::ball(vec![0.0; d], 1.0)?;
            let rcfg = sample_poisson(&ball, 150.0 / ball.volume(), false, RngStream::derive(opts.seed, TAG + 3, d, rep))?;
            let rst = graphs::build_rst(&rcfg)?;
            s.check(rst.edges.len() == rcfg.len(), || format!("rst d={d} rep {rep}: edge count"));
            s.check(rst_reaches_origin(&rst, &rcfg), || format!("rst d={d} rep {rep}: path to origin"));
        }
        Ok(s)
    })?;
    for p in parts {
        suite.merge(p);
    }
    Ok(suite)
}

/// `|D_{(x,s)} F| ≤ R_s(x)^α + 𝓛_{(x,s)} F` for the online nearest
/// neighbour graph.
pub fn dbyl_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("dbyl");
    let pairs = match opts.scale {
        Scale::Quick => 100,
        Scale::Full => 1000,
    };
    let probes_per_cfg = 10;
    for (ci, (alpha, d)) in [(0.3, 1usize), (0.5, 1), (0.3, 2), (0.5, 2)].into_iter().enumerate() {
        let body = if d == 1 {
            ConvexBody::cuboid(vec![0.0], vec![100.0])?
        } else {
            ConvexBody::cuboid(vec![0.0, 0.0], vec![10.0, 10.0])?
        };
        let spec = FunctionalSpec::power(Family::Onng, alpha);
        let cover = cone_cover(d)?;
        let parts = par_map(opts, pairs / probes_per_cfg, |rep| {
            let mut s = SuiteResult::new("dbyl");
            let cfg = sample_poisson(&body, 1.0, true, RngStream::derive(opts.seed, TAG + 4, ci, rep))?;
            let ctx = CostContext::new(spec, &cfg)?;
            let grid = GridIndex::with_all(&body, cfg.coords(), 0.0);
            let mut rng = RngStream::derive(opts.seed, TAG + 5, ci, rep).rng();
            for _ in 0..probes_per_cfg {
                let x = sample_uniform(&body, &mut rng);
                let sm: f64 = rng.random();
                let dcost = ctx.add_one_cost(&MarkedPoint::new(x.clone(), Some(sm)))?.first_order;
                let r = onng_radius_with(&cfg, &grid, &x, sm, cover)?;
                let l = onng_l_term(&spec.weight, &cfg, &x, sm)?;
                let bound = r.powf(alpha) + l;
                s.check(dcost.abs() <= bound * (1.0 + 1e-12), || {
                    format!("alpha={alpha} d={d} rep {rep}: |D|={} > {bound}", dcost.abs())
                });
            }
            Ok(s)
        })?;
        for p in parts {
            suite.merge(p);
        }
    }
    Ok(suite)
}

/// `D(FG) = (DF) G + F (DG) + (DF)(DG)` for two functionals on the same
/// marked configuration.
pub fn product_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("product");
    let reps = configs_per_family(opts);
    let body = ConvexBody::unit_cube(2);
    let f_spec = FunctionalSpec::power(Family::Onng, 0.5);
    let g_spec = FunctionalSpec::power(Family::Gilbert { epsilon: 0.15 }, 1.0);
    let parts = par_map(opts, reps, |rep| {
        let mut s = SuiteResult::new("product");
        let cfg = sample_poisson(&body, 100.0, true, RngStream::derive(opts.seed, TAG + 6, 0, rep))?;
        let f_ctx = CostContext::new(f_spec, &cfg)?;
        let g_ctx = CostContext::new(g_spec, &cfg)?;
        let (f, g) = (f_ctx.value()?, g_ctx.value()?);
        let mut rng = RngStream::derive(opts.seed, TAG + 7, 0, rep).rng();
        for _ in 0..5 {
            let p = MarkedPoint::new(sample_uniform(&body, &mut rng), Some(rng.random()));
            let df = f_ctx.add_one_cost(&p)?.first_order;
            let dg = g_ctx.add_one_cost(&p)?.first_order;
            let bigger = cfg.add_point(&p.position, p.mark)?;
            let lhs = evaluate_config(&f_spec, &bigger)? * evaluate_config(&g_spec, &bigger)? - f * g;
            let rhs = df * g + f * dg + df * dg;
            let scale = (f * g).abs().max(lhs.abs());
            s.check((lhs - rhs).abs() <= 1e-9 * scale, || format!("rep {rep}: D(FG)={lhs} vs {rhs}"));
        }
        Ok(s)
    })?;
    for p in parts {
        suite.merge(p);
    }
    Ok(suite)
}

/// First-order costs of the k-NN graph and radial spanning tree are
/// nonnegative for decreasing weights.
pub fn nonneg_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("nonneg");
    let reps = configs_per_family(opts);
    let cases = family_cases()
        .into_iter()
        .filter(|(s, _, _)| matches!(s.family, Family::Knn { .. } | Family::Rst))
        .collect::<Vec<_>>();
    for (ci, (spec, body, lambda)) in cases.into_iter().enumerate() {
        let parts = par_map(opts, reps, |rep| {
            let mut s = SuiteResult::new("nonneg");
            let cfg = sample_poisson(&body, lambda, false, RngStream::derive(opts.seed, TAG + 8, ci, rep))?;
            let ctx = CostContext::new(spec, &cfg)?;
            let mut rng = RngStream::derive(opts.seed, TAG + 9, ci, rep).rng();
            for _ in 0..5 {
                let p = MarkedPoint::unmarked(sample_uniform(&body, &mut rng));
                let d = ctx.add_one_cost(&p)?.first_order;
                s.check(d >= 0.0, || format!("{} rep {rep}: negative cost {d}", spec.family));
            }
            Ok(s)
        })?;
        for p in parts {
            suite.merge(p);
        }
    }
    Ok(suite)
}

fn check_settings(opts: &VerifyOptions, tag: u8) -> CheckSettings {
    CheckSettings {
        replicates: match opts.scale {
            Scale::Quick => 400,
            Scale::Full => 2000,
        },
        probes: 20,
        base_seed: opts.seed,
        stream_tag: tag,
        workers: opts.workers,
    }
}

pub fn mecke_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("mecke");
    let body = ConvexBody::ball(vec![0.0, 0.0], 1.0)?;
    for (i, h) in MeckeFn::catalogue().into_iter().enumerate() {
        let r = mecke_check(h, &body, 5.0, check_settings(opts, TAG + 10 + i as u8))?;
        suite.notes.push(format!(
            "{h:?}: lhs={:.5} rhs={:.5} pooled_se={:.5}",
            r.lhs, r.rhs, r.pooled_se
        ));
        suite.check(r.pass, || format!("{h:?}: |lhs-rhs|={} > 3 x {}", r.margin.abs(), r.pooled_se));
    }
    Ok(suite)
}

pub fn poincare_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("poincare");
    for (i, (f, body)) in poincare_catalogue().into_iter().enumerate() {
        let lambda = if matches!(f, crate::estimators::PoincareFunctional::Count) { 30.0 } else { 1.0 };
        for (j, p) in [1.5, 2.0].into_iter().enumerate() {
            let tag = TAG + 20 + (2 * i + j) as u8;
            let r = poincare_check(f, p, &body, lambda, check_settings(opts, tag))?;
            suite.notes.push(format!(
                "{f:?} p={p}: lhs={:.5} rhs={:.5} margin={:.5} pooled_se={:.5}",
                r.lhs, r.rhs, r.margin, r.pooled_se
            ));
            suite.check(r.pass, || format!("{f:?} p={p}: margin {} < -3 x {}", r.margin, r.pooled_se));
        }
    }
    Ok(suite)
}
