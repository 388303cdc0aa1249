use std::collections::BTreeSet;

use proptest::prelude::*;
use rgg_core::geometry::{dist, norm, ConvexBody};
use rgg_core::graphs::{
    build, build_brute, build_gilbert, build_knn, build_onng, build_rst, nearest_in_subset, points_in_ball, Family,
    GeometricGraph, Node,
};
use rgg_core::sampling::{sample_poisson, sample_uniform, MarkedPoint, MarkedPointConfig, RngStream};
use rgg_core::verify::knn_degree_bound;

fn cfg(d: usize, intensity: f64, marked: bool, seed: u64) -> MarkedPointConfig {
    sample_poisson(&ConvexBody::unit_cube(d), intensity, marked, RngStream::new(seed, 0)).unwrap()
}

fn undirected(g: &GeometricGraph) -> BTreeSet<(usize, usize)> {
    g.edges
        .iter()
        .map(|e| {
            let j = e.j.point().unwrap();
            (e.i.min(j), e.i.max(j))
        })
        .collect()
}

fn line(xs: &[f64]) -> MarkedPointConfig {
    let pts: Vec<MarkedPoint> = xs.iter().map(|&x| MarkedPoint::unmarked(vec![x])).collect();
    MarkedPointConfig::from_points(ConvexBody::cuboid(vec![-20.0], vec![20.0]).unwrap(), &pts).unwrap()
}

#[test]
fn hand_built_graphs() {
    let g = build_gilbert(&line(&[0.0, 1.0, 2.0]), 1.5).unwrap();
    assert_eq!(undirected(&g), BTreeSet::from([(0, 1), (1, 2)]));

    let g = build_knn(&line(&[0.0, 1.0, 10.0]), 1).unwrap();
    assert_eq!(undirected(&g), BTreeSet::from([(0, 1), (1, 2)]));

    let pts = [MarkedPoint::unmarked(vec![2.0, 0.0]), MarkedPoint::unmarked(vec![1.0, 0.0])];
    let c = MarkedPointConfig::from_points(ConvexBody::ball(vec![0.0, 0.0], 3.0).unwrap(), &pts).unwrap();
    let g = build_rst(&c).unwrap();
    let targets = g.connects_to.as_ref().unwrap();
    assert_eq!(targets[0], Some(Node::Point(1)));
    assert_eq!(targets[1], Some(Node::Origin));
    assert_eq!(Node::Origin.as_i64(), -1);
}

#[test]
fn complete_graph_cases() {
    let c = cfg(2, 30.0, false, 4);
    let n = c.len();
    assert_eq!(build_gilbert(&c, 2.0).unwrap().edges.len(), n * (n - 1) / 2);
    let small = c.filter(|i| i < 5);
    assert_eq!(build_knn(&small, 4).unwrap().edges.len(), 10);
    assert!(build_knn(&small, 5).is_err());
}

#[test]
fn onng_requires_marks() {
    assert!(build_onng(&cfg(2, 10.0, false, 1)).is_err());
}

#[test]
fn queries_match_linear_scan() {
    let c = cfg(2, 300.0, false, 12);
    let mut rng = RngStream::new(12, 1).rng();
    for q in 0..100 {
        let x = sample_uniform(c.body(), &mut rng);
        let keep = |i: usize| i % 3 != q % 3;
        let want = (0..c.len())
            .filter(|&i| keep(i))
            .map(|i| (i, dist(c.position(i), &x)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        assert_eq!(nearest_in_subset(&c, &x, keep), want);
        let r = 0.02 + 0.001 * q as f64;
        let brute: Vec<usize> = (0..c.len()).filter(|&i| dist(c.position(i), &x) < r).collect();
        assert_eq!(points_in_ball(&c, &x, r), brute);
    }
    let empty = MarkedPointConfig::empty(ConvexBody::unit_cube(2), false);
    assert!(points_in_ball(&empty, &[0.5, 0.5], 1.0).is_empty());
    let single = c.filter(|i| i == 0);
    assert_eq!(nearest_in_subset(&single, single.position(0), |i| i != 0), None);
}

#[test]
fn accelerated_builds_on_larger_configs() {
    let c = cfg(2, 200.0, true, 31);
    assert_eq!(build(&c, Family::Onng).unwrap(), build_brute(&c, Family::Onng).unwrap());
    let c3 = cfg(3, 500.0, false, 32);
    let f = Family::Gilbert { epsilon: 0.15 };
    assert_eq!(build(&c3, f).unwrap(), build_brute(&c3, f).unwrap());
    let c2 = cfg(2, 300.0, false, 33);
    let f = Family::Knn { k: 6 };
    assert_eq!(build(&c2, f).unwrap(), build_brute(&c2, f).unwrap());
    let ball = ConvexBody::ball(vec![0.0, 0.0], 10.0).unwrap();
    let cr = sample_poisson(&ball, 300.0 / ball.volume(), false, RngStream::new(34, 0)).unwrap();
    assert_eq!(build(&cr, Family::Rst).unwrap(), build_brute(&cr, Family::Rst).unwrap());
}

/// Maximal k-NN degree observed over 100 configurations per (d, k) stays
/// below the calibrated fixture.
#[test]
fn knn_degree_fixture() {
    for d in 1..=3 {
        for k in [1usize, 2, 4, 6] {
            let bound = knn_degree_bound(d, k).unwrap();
            let mut worst = 0;
            for seed in 0..100 {
                let c = cfg(d, 150.0, false, 1000 + seed);
                if c.len() <= k {
                    continue;
                }
                let g = build_knn(&c, k).unwrap();
                worst = worst.max(g.degrees().into_iter().max().unwrap());
            }
            assert!(worst <= bound, "d={d} k={k}: degree {worst} > {bound}");
        }
    }
}

#[test]
fn edge_list_round_trip() {
    let c = cfg(2, 50.0, false, 8);
    let g = build_gilbert(&c, 0.2).unwrap();
    let mut buf = Vec::new();
    g.write_edge_list(&mut buf).unwrap();
    let (header, edges) = GeometricGraph::read_edge_list(&buf[..]).unwrap();
    assert!(header.contains("gilbert"));
    assert_eq!(edges.len(), g.edges.len());
    for (a, b) in edges.iter().zip(&g.edges) {
        assert_eq!((a.i, a.j), (b.i, b.j));
        assert!((a.length - b.length).abs() <= 1e-15 * b.length);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accelerated_equals_brute(seed in any::<u64>(), d in 1usize..4, which in 0usize..4) {
        let family = match which {
            0 => Family::Onng,
            1 => Family::Gilbert { epsilon: 0.25 / d as f64 },
            2 => Family::Knn { k: 3 },
            _ => Family::Rst,
        };
        let c = if family == Family::Rst {
            let ball = ConvexBody::ball(vec![0.0; d], 1.0).unwrap();
            sample_poisson(&ball, 80.0 / ball.volume(), false, RngStream::new(seed, 0)).unwrap()
        } else {
            cfg(d, 80.0, family == Family::Onng, seed)
        };
        if matches!(family, Family::Knn { .. }) && c.len() <= 3 {
            return Ok(());
        }
        let fast = build(&c, family).unwrap();
        let brute = build_brute(&c, family).unwrap();
        prop_assert_eq!(&fast, &brute);
        for e in &fast.edges {
            let other = match e.j {
                Node::Point(j) => dist(c.position(e.i), c.position(j)),
                Node::Origin => norm(c.position(e.i)),
            };
            prop_assert!((e.length - other).abs() <= 1e-12 * other);
            prop_assert!(e.j != Node::Point(e.i));
        }
    }

    #[test]
    fn onng_is_a_tree_rooted_at_minimal_mark(seed in any::<u64>(), d in 1usize..4) {
        let c = cfg(d, 60.0, true, seed);
        let g = build_onng(&c).unwrap();
        let marks = c.marks().unwrap();
        let targets = g.connects_to.as_ref().unwrap();
        prop_assert_eq!(g.edges.len(), c.len().saturating_sub(1));
        for v in 0..c.len() {
            match targets[v] {
                None => prop_assert!(marks.iter().all(|&m| m >= marks[v])),
                Some(Node::Point(u)) => {
                    prop_assert!(marks[u] < marks[v]);
                    // nearest among earlier-marked points
                    let best = (0..c.len())
                        .filter(|&w| marks[w] < marks[v])
                        .map(|w| dist(c.position(w), c.position(v)))
                        .fold(f64::INFINITY, f64::min);
                    prop_assert_eq!(dist(c.position(u), c.position(v)), best);
                }
                Some(Node::Origin) => prop_assert!(false, "origin in onng"),
            }
        }
    }

    #[test]
    fn rst_paths_reach_origin(seed in any::<u64>(), d in 1usize..4) {
        let ball = ConvexBody::ball(vec![0.0; d], 1.0).unwrap();
        let c = sample_poisson(&ball, 60.0 / ball.volume(), false, RngStream::new(seed, 0)).unwrap();
        let g = build_rst(&c).unwrap();
        prop_assert_eq!(g.edges.len(), c.len());
        let targets = g.connects_to.as_ref().unwrap();
        for v in 0..c.len() {
            let mut cur = v;
            let mut steps = 0;
            loop {
                steps += 1;
                prop_assert!(steps <= c.len());
                match targets[cur] {
                    Some(Node::Origin) => break,
                    Some(Node::Point(u)) => {
                        prop_assert!(norm(c.position(u)) < norm(c.position(cur)));
                        cur = u;
                    }
                    None => prop_assert!(false, "vertex without out-edge"),
                }
            }
        }
    }

    #[test]
    fn gilbert_edges_are_exactly_close_pairs(seed in any::<u64>(), eps in 0.05f64..0.5) {
        let c = cfg(2, 60.0, false, seed);
        let g = build_gilbert(&c, eps).unwrap();
        let want: BTreeSet<(usize, usize)> = (0..c.len())
            .flat_map(|i| (i + 1..c.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| dist(c.position(i), c.position(j)) < eps)
            .collect();
        prop_assert_eq!(undirected(&g), want);
    }

    #[test]
    fn gilbert_relabel_invariant(seed in any::<u64>(), shift in 1usize..50) {
        let c = cfg(2, 60.0, false, seed);
        let n = c.len();
        if n < 2 {
            return Ok(());
        }
        // cyclic relabelling i ↦ (i + shift) mod n
        let perm: Vec<MarkedPoint> = (0..n).map(|i| c.point((i + n - shift % n) % n)).collect();
        let relabelled = MarkedPointConfig::from_points(c.body().clone(), &perm).unwrap();
        let a = undirected(&build_gilbert(&c, 0.2).unwrap());
        let b: BTreeSet<(usize, usize)> = undirected(&build_gilbert(&relabelled, 0.2).unwrap())
            .into_iter()
            .map(|(i, j)| {
                let (i, j) = ((i + n - shift % n) % n, (j + n - shift % n) % n);
                (i.min(j), i.max(j))
            })
            .collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn knn_contains_one_nn(seed in any::<u64>(), d in 1usize..4, k in 1usize..7) {
        let c = cfg(d, 60.0, false, seed);
        if c.len() <= k {
            return Ok(());
        }
        let big = undirected(&build_knn(&c, k).unwrap());
        let one = undirected(&build_knn(&c, 1).unwrap());
        prop_assert!(one.is_subset(&big));
        let n = c.len();
        prop_assert!(2 * big.len() >= n * k && big.len() <= n * k);
    }
}
