use std::f64::consts::PI;

use grapht::diffcore::Tensor;
use grapht::graphcore::{
    add_degree_attrs, knn_graph, offset_attr, one_hot_edges, radius_graph, symmetrize, AttributedGraph, DegreeVariant,
    GraphError, PointCloud,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cloud(seed: u64, n: usize, scale: f64) -> PointCloud<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen::<f64>() * scale, rng.gen::<f64>() * scale, rng.gen::<f64>() * scale]).collect();
    PointCloud::from_f64(&pts).unwrap()
}

fn d2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

#[test]
fn radius_pair_on_x_axis() {
    let c = PointCloud::<f64>::from_f64(&[[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]]).unwrap();
    let g = radius_graph(&c, 0.2).unwrap();
    assert_eq!(g.edges, vec![(1, 0), (0, 1)]);
    let a = g.edge_attr.row(0);
    assert_eq!(&a[..4], &[0.1, 0.0, 0.0, 0.1]);
    assert!((a[4] - PI / 2.0).abs() < 1e-15 && a[5] == 0.0);
    let b = g.edge_attr.row(1);
    assert_eq!(&b[..4], &[-0.1, 0.0, 0.0, 0.1]);
    assert!((b[4] - PI / 2.0).abs() < 1e-15 && (b[5] - PI).abs() < 1e-15);

    let far = PointCloud::<f64>::from_f64(&[[0.0, 0.0, 0.0], [0.3, 0.0, 0.0]]).unwrap();
    assert_eq!(radius_graph(&far, 0.2).unwrap().num_edges(), 0);
}

#[test]
fn radius_rejects_bad_radius_and_handles_empty() {
    let c = random_cloud(0, 4, 1.0);
    assert!(matches!(radius_graph(&c, 0.0), Err(GraphError::Parameter(_))));
    let empty = PointCloud::<f64>::new(vec![]).unwrap();
    let g = radius_graph(&empty, 1.0).unwrap();
    assert_eq!((g.n, g.num_edges()), (0, 0));
}

#[test]
fn radius_graph_matches_brute_force() {
    let c = random_cloud(1, 300, 2.0);
    let rho = 0.35;
    let g = radius_graph(&c, rho).unwrap();
    let mut expected = Vec::new();
    for i in 0..c.len() {
        for j in 0..c.len() {
            if i != j && d2(&c.positions[i], &c.positions[j]) <= rho * rho {
                expected.push((j, i));
            }
        }
    }
    expected.sort_by_key(|&(j, i)| (i, j));
    assert_eq!(g.edges, expected);
    for (e, &(j, i)) in g.edges.iter().enumerate() {
        let p = &c.positions;
        let d = [p[j][0] - p[i][0], p[j][1] - p[i][1], p[j][2] - p[i][2]];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let want = [d[0], d[1], d[2], len, (d[2] / len).acos(), d[1].atan2(d[0])];
        assert_eq!(g.edge_attr.row(e), &want[..]);
    }
    assert!(g.is_symmetric());
}

#[test]
fn knn_examples() {
    let c = PointCloud::<f64>::from_f64(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
    let g = knn_graph(&c, 1).unwrap();
    let mut e = g.edges.clone();
    e.sort();
    assert_eq!(e, vec![(0, 1), (1, 0), (2, 1)]);
    let g = knn_graph(&c, 2).unwrap();
    assert_eq!(g.num_edges(), 6);
    assert!(g.is_symmetric());
    assert!(matches!(knn_graph(&c, 3), Err(GraphError::Parameter(_))));
}

#[test]
fn knn_matches_exhaustive_sort() {
    for (seed, n, k) in [(2, 200, 10), (3, 60, 5), (4, 500, 10)] {
        let c = random_cloud(seed, n, 1.0);
        let g = knn_graph(&c, k).unwrap();
        for i in 0..n {
            let mut all: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (d2(&c.positions[i], &c.positions[j]), j)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut want: Vec<usize> = all[..k].iter().map(|x| x.1).collect();
            let mut got: Vec<usize> = g.edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
            want.sort();
            got.sort();
            assert_eq!(got, want, "node {i}");
        }
        assert!(g.out_degrees().iter().all(|&d| d == k));
        assert!(symmetrize(&g, &c).is_symmetric());
    }
}

#[test]
fn knn_on_planar_cloud() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<[f64; 3]> = (0..400).map(|_| [rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0, 0.0]).collect();
    let c = PointCloud::<f64>::from_f64(&pts).unwrap();
    let g = knn_graph(&c, 10).unwrap();
    let i = 17;
    let mut all: Vec<(f64, usize)> = (0..400).filter(|&j| j != i).map(|j| (d2(&pts[i], &pts[j]), j)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut want: Vec<usize> = all[..10].iter().map(|x| x.1).collect();
    let mut got: Vec<usize> = g.edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
    want.sort();
    got.sort();
    assert_eq!(got, want);
}

fn class_graph(ids: &[f64]) -> AttributedGraph<f64> {
    let edges = (0..ids.len()).map(|e| (e % 3, (e + 1) % 3)).collect();
    AttributedGraph::new(3, edges, Tensor::zeros(vec![3, 0]), Tensor::new(vec![ids.len(), 1], ids.to_vec()).unwrap()).unwrap()
}

#[test]
fn one_hot_examples() {
    let g = one_hot_edges(&class_graph(&[2.0]), 4, false).unwrap();
    assert_eq!(g.edge_attr.data(), &[0.0, 0.0, 1.0, 0.0]);
    let g = one_hot_edges(&class_graph(&[2.0, 0.0, 3.0]), 4, true).unwrap();
    assert_eq!(g.edge_dim(), 5);
    assert_eq!(g.self_attr.as_deref(), Some(&[0.0, 0.0, 0.0, 0.0, 1.0][..]));
    assert!(matches!(one_hot_edges(&class_graph(&[4.0]), 4, false), Err(GraphError::Encoding(_))));
    assert!(matches!(one_hot_edges(&class_graph(&[1.5]), 4, false), Err(GraphError::Encoding(_))));
}

#[test]
fn one_hot_with_self_class_adds_one_column() {
    // four bond types plus the self-connection class
    let g = one_hot_edges(&class_graph(&[0.0, 1.0, 2.0, 3.0]), 4, true).unwrap();
    assert_eq!(g.edge_dim(), 5);
}

#[test]
fn degree_attrs_examples() {
    // star: centre 0 with four leaves, edges both ways
    let mut edges = Vec::new();
    for l in 1..5 {
        edges.push((l, 0));
        edges.push((0, l));
    }
    let g = AttributedGraph::<f64>::bare(5, edges.clone()).unwrap();
    let h = add_degree_attrs(&g, DegreeVariant::InvSqrt);
    for (e, &(j, i)) in edges.iter().enumerate() {
        let want = |n: usize| if n == 0 { 0.5 } else { 1.0 };
        assert_eq!(h.edge_attr.row(e), &[want(j), want(i)]);
    }
    let path = AttributedGraph::<f64>::bare(4, vec![(1, 0), (2, 0), (3, 0)]).unwrap();
    let h = add_degree_attrs(&path, DegreeVariant::Id);
    assert_eq!(h.edge_attr.row(0), &[0.0, 3.0]);
}

#[test]
fn degree_attrs_match_independent_count() {
    let c = random_cloud(6, 80, 1.0);
    let g = radius_graph(&c, 0.3).unwrap();
    for v in [DegreeVariant::InvSqrt, DegreeVariant::Inv, DegreeVariant::Sqrt, DegreeVariant::Id] {
        let h = add_degree_attrs(&g, v);
        assert_eq!(h.edge_dim(), 8);
        for (e, &(j, i)) in g.edges.iter().enumerate() {
            let deg = |x: usize| g.edges.iter().filter(|&&(_, d)| d == x).count() as f64;
            let f = |d: f64| match v {
                DegreeVariant::InvSqrt => 1.0 / d.sqrt(),
                DegreeVariant::Inv => 1.0 / d,
                DegreeVariant::Sqrt => d.sqrt(),
                DegreeVariant::Id => d,
            };
            assert_eq!(&h.edge_attr.row(e)[6..], &[f(deg(j)), f(deg(i))]);
        }
    }
}

#[test]
fn graph_json_round_trip() {
    let c = random_cloud(7, 20, 1.0);
    let g = radius_graph(&c, 0.5).unwrap();
    let back = AttributedGraph::<f64>::from_json(&g.to_json()).unwrap();
    assert_eq!(back, g);
    let bad = r#"{"n": 2, "edges": [[0, 5]], "node_attr": [], "edge_attr": []}"#;
    assert!(AttributedGraph::<f64>::from_json(bad).is_err());
}

#[test]
fn cloud_text_round_trip() {
    let text = "#fields x y z r g b label\n0 0 0 0.5 0.5 0.5 1\n1 2 3 0 1 0 2\n";
    let c = PointCloud::<f64>::read(text.as_bytes()).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.observation_dim(), 3);
    assert_eq!(c.labels.as_deref(), Some(&[1, 2][..]));
    let mut out = Vec::new();
    c.write(&mut out).unwrap();
    assert_eq!(PointCloud::<f64>::read(&out[..]).unwrap(), c);
    assert!(matches!(PointCloud::<f64>::read("1 2\n".as_bytes()), Err(GraphError::Parse { line: 1, .. })));
}

#[test]
fn offset_attr_zero_offset() {
    let p = [1.0, 2.0, 3.0];
    assert_eq!(offset_attr(&p, &p), [0.0; 6]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn radius_graph_is_antisymmetric(seed in 0u64..10_000, n in 2usize..60, rho in 0.05f64..0.8) {
        let c = random_cloud(seed, n, 1.0);
        let g = radius_graph(&c, rho).unwrap();
        prop_assert!(g.is_symmetric());
        for (e, &(j, i)) in g.edges.iter().enumerate() {
            let r = g.edges.iter().position(|&x| x == (i, j)).unwrap();
            for k in 0..3 {
                prop_assert_eq!(g.edge_attr.row(e)[k], -g.edge_attr.row(r)[k]);
            }
        }
    }

    #[test]
    fn one_hot_rows_sum_to_one(ids in prop::collection::vec(0usize..6, 1..20)) {
        let f: Vec<f64> = ids.iter().map(|&i| i as f64).collect();
        let g = one_hot_edges(&class_graph(&f), 6, true).unwrap();
        for (e, row) in g.edge_attr.to_rows().iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<f64>(), 1.0);
            let arg = row.iter().position(|&v| v == 1.0).unwrap();
            prop_assert_eq!(arg, ids[e]);
        }
    }

    #[test]
    fn knn_out_degree_is_k(seed in 0u64..10_000, n in 3usize..80, k in 1usize..8) {
        prop_assume!(k < n);
        let c = random_cloud(seed, n, 1.0);
        let g = knn_graph(&c, k).unwrap();
        prop_assert!(g.out_degrees().iter().all(|&d| d == k));
    }
}
