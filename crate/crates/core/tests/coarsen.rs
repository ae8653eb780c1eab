use grapht::coarsen::{
    eigvec_split, graclus_coarsen, graph_pyramid, kron_reduce, nearest_assign, pool_signal, random_sparsify,
    voxel_grid, voxel_pyramid, weighted_graph, CoarsenMethod, Laplacian, PoolingMap, Pyramid,
};
use grapht::diffcore::{check_gradients, Reduce, Tape, Tensor};
use grapht::graphcore::{AttributedGraph, GraphError, PointCloud};
use grapht::Rational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(pts: &[[f64; 3]]) -> PointCloud<f64> {
    PointCloud::from_f64(pts).unwrap()
}

fn random_points(seed: u64, n: usize, scale: f64) -> Vec<[f64; 3]> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [r.gen::<f64>() * scale, r.gen::<f64>() * scale, r.gen::<f64>() * scale]).collect()
}

#[test]
fn voxel_grid_examples() {
    let (c, m) = voxel_grid(&cloud(&[[0.0, 0.0, 0.0], [0.04, 0.0, 0.0]]), 0.1).unwrap();
    assert_eq!(c.len(), 1);
    assert!((c.positions[0][0] - 0.02).abs() < 1e-15);
    assert_eq!(m.assign, vec![0, 0]);
    let (c, _) = voxel_grid(&cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), 0.1).unwrap();
    assert_eq!(c.len(), 2);
    assert!(voxel_grid(&cloud(&[[0.0; 3]]), 0.0).is_err());
}

#[test]
fn voxel_centroids_lie_in_their_voxels() {
    let pts = random_points(1, 2000, 3.0);
    let c = cloud(&pts);
    let r = 0.37;
    let (out, map) = voxel_grid(&c, r).unwrap();
    for (i, p) in pts.iter().enumerate() {
        let k = map.assign[i];
        for a in 0..3 {
            let cell = (p[a] / r).floor();
            let (b0, b1) = (cell * r, (cell + 1.0) * r);
            let q = out.positions[k][a];
            assert!(q >= b0 - 1e-12 && q <= b1 + 1e-12);
        }
    }
    assert_eq!(map.counts.iter().sum::<usize>(), 2000);
}

#[test]
fn voxel_observations_and_labels_are_pooled() {
    let mut c = cloud(&[[0.0, 0.0, 0.0], [0.01, 0.0, 0.0], [0.02, 0.0, 0.0]]);
    c.observations = Some(vec![vec![0.0], vec![0.3], vec![0.6]]);
    c.labels = Some(vec![2, 1, 1]);
    let (out, _) = voxel_grid(&c, 0.1).unwrap();
    assert!((out.observations.unwrap()[0][0] - 0.3).abs() < 1e-15);
    assert_eq!(out.labels.unwrap(), vec![1]);
}

#[test]
fn pool_signal_examples_and_gradient() {
    let map = PoolingMap::new(vec![0, 0], 1).unwrap();
    let mut t = Tape::new();
    let h = t.constant(Tensor::from_rows(&[vec![1.0], vec![5.0]]).unwrap());
    let mx = pool_signal(&mut t, &map, h, Reduce::Max).unwrap();
    let av = pool_signal(&mut t, &map, h, Reduce::Mean).unwrap();
    assert_eq!(t.value(mx).data(), &[5.0]);
    assert_eq!(t.value(av).data(), &[3.0]);

    let map = PoolingMap::new(vec![0, 1, 0, 2, 1, 0], 3).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::new(vec![6, 2], (0..12).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let rep = check_gradients(
        |t, v| {
            let y = pool_signal(t, &map, v[0], Reduce::Max)?;
            let y = t.mul(y, y)?;
            Ok(t.sum(y))
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert!(rep.max_rel_error < 1e-5);
}

#[test]
fn nearest_assign_examples_and_brute_force() {
    let coarse = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
    let fine = cloud(&[[2.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.1, 0.0, 0.0]]);
    assert_eq!(nearest_assign(&fine, &coarse).unwrap().assign, vec![1, 0, 0]);
    assert!(nearest_assign(&fine, &cloud(&[])).is_err());

    let fine = cloud(&random_points(3, 800, 2.0));
    let coarse = cloud(&random_points(4, 60, 2.0));
    let m = nearest_assign(&fine, &coarse).unwrap();
    for (i, p) in fine.positions.iter().enumerate() {
        let d = |q: &[f64; 3]| (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>();
        let best = (0..coarse.len()).min_by(|&a, &b| d(&coarse.positions[a]).partial_cmp(&d(&coarse.positions[b])).unwrap().then(a.cmp(&b))).unwrap();
        assert_eq!(m.assign[i], best);
    }
}

fn unit_graph(n: usize, pairs: &[(usize, usize)]) -> AttributedGraph<f64> {
    let p: Vec<_> = pairs.iter().map(|&(a, b)| (a, b, 1.0)).collect();
    weighted_graph(n, &p).unwrap()
}

/// All maximal matchings of a small undirected graph.
fn maximal_matchings(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        let chosen: Vec<usize> = (0..pairs.len()).filter(|&e| mask >> e & 1 == 1).collect();
        let mut used = vec![false; n];
        let mut ok = true;
        for &e in &chosen {
            let (a, b) = pairs[e];
            if used[a] || used[b] {
                ok = false;
            }
            used[a] = true;
            used[b] = true;
        }
        if ok && pairs.iter().all(|&(a, b)| used[a] || used[b]) {
            out.push(chosen);
        }
    }
    out
}

#[test]
fn graclus_four_cycle() {
    let pairs = [(0, 1), (1, 2), (2, 3), (0, 3)];
    let sizes: Vec<usize> = maximal_matchings(4, &pairs).iter().map(|m| 4 - m.len()).collect();
    assert!(sizes.iter().all(|&s| s == 2));
    let (g, m) = graclus_coarsen(&unit_graph(4, &pairs)).unwrap();
    assert_eq!(g.n, 2);
    assert_eq!(m.counts, vec![2, 2]);
    // the two merged pairs are joined by two unit edges
    assert_eq!(g.edge_attr.data(), &[2.0, 2.0]);
}

#[test]
fn graclus_single_node_and_weights() {
    let (g, m) = graclus_coarsen(&unit_graph(1, &[])).unwrap();
    assert_eq!((g.n, m.assign.clone()), (1, vec![0]));
    // heavy middle edge wins: 1-2 merge, 0 and 3 stay
    let g = weighted_graph(4, &[(0, 1, 1.0), (1, 2, 10.0), (2, 3, 1.0)]).unwrap();
    let (c, m) = graclus_coarsen(&g).unwrap();
    assert_eq!(c.n, 3);
    assert_eq!(m.assign[1], m.assign[2]);
}

#[test]
fn kron_path_by_hand_is_exact() {
    let one = Rational::from_integer(1);
    let l = Laplacian::from_pairs(3, &[(0, 1, one), (1, 2, one)]).unwrap();
    let r = kron_reduce(&l, &[0, 2]).unwrap();
    assert_eq!(r.pairs(), vec![(0, 1, Rational::new(1, 2))]);
    assert_eq!(*r.get(0, 0), Rational::new(1, 2));
    assert_eq!(kron_reduce(&l, &[0, 1, 2]).unwrap(), l);
}

#[test]
fn kron_singular_block_is_reported() {
    // node 2 is isolated and removed
    let l = Laplacian::<f64>::from_pairs(3, &[(0, 1, 1.0)]).unwrap();
    assert!(matches!(kron_reduce(&l, &[0, 1]), Err(GraphError::Reduction(_))));
    let q = Laplacian::<Rational>::from_pairs(3, &[(0, 1, Rational::from_integer(1))]).unwrap();
    assert!(matches!(kron_reduce(&q, &[0, 1]), Err(GraphError::Reduction(_))));
}

fn random_tree(seed: u64, n: usize) -> Vec<(usize, usize, f64)> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (1..n).map(|i| (r.gen_range(0..i), i, r.gen_range(0.1..2.0))).collect()
}

fn assert_laplacian(l: &Laplacian<f64>) {
    for i in 0..l.n {
        assert!(l.row_sum(i).abs() < 1e-10);
        for j in 0..l.n {
            assert!((l.get(i, j) - l.get(j, i)).abs() < 1e-12);
            if i != j {
                assert!(*l.get(i, j) <= 1e-12);
            }
        }
    }
}

#[test]
fn kron_random_tree_rows_sum_to_zero() {
    let l = Laplacian::from_pairs(30, &random_tree(5, 30)).unwrap();
    let keep: Vec<usize> = (0..30).step_by(3).collect();
    assert_laplacian(&kron_reduce(&l, &keep).unwrap());
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    (0..n).for_each(|i| v[i * n + i] = 1.0);
    for _ in 0..100 {
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-15 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| a[i * n + i]).collect();
    let vecs = (0..n).map(|j| (0..n).map(|i| v[i * n + j]).collect()).collect();
    (vals, vecs)
}

#[test]
fn eigvec_split_two_nodes_and_path() {
    let l = Laplacian::<f64>::from_pairs(2, &[(0, 1, 1.0)]).unwrap();
    let s = eigvec_split(&l).unwrap();
    assert_eq!((s.positive.clone(), s.negative.clone()), (vec![0], vec![1]));

    let l = Laplacian::<f64>::from_pairs(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
    let s = eigvec_split(&l).unwrap();
    let (vals, vecs) = jacobi_eigen(&l.data, 4);
    let top = (0..4).max_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap()).unwrap();
    let mut want = vecs[top].clone();
    if want[0] < 0.0 {
        want.iter_mut().for_each(|x| *x = -*x);
    }
    let pos: Vec<usize> = (0..4).filter(|&i| want[i] >= 0.0).collect();
    assert_eq!(s.positive, pos);
    assert_eq!(s.positive, vec![0, 2]);
    assert!((s.eigenvalue - vals[top]).abs() < 1e-8);
    assert!(s.vector[0] >= 0.0);
    assert!(eigvec_split(&Laplacian::<f64>::zeros(1)).is_err());
}

#[test]
fn sparsify_contract() {
    let g = unit_graph(40, &(0..39).map(|i| (i, i + 1)).chain((0..30).map(|i| (i, i + 10))).collect::<Vec<_>>());
    let mut r = ChaCha8Rng::seed_from_u64(6);
    assert_eq!(random_sparsify(&g, 1.0, &mut r).unwrap(), g);
    assert!(random_sparsify(&g, 0.0, &mut r).is_err());
    let a = random_sparsify(&g, 0.5, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let b = random_sparsify(&g, 0.5, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(a, b);
    assert!(a.is_symmetric());
    // survivors over many draws average m/2 (m = 69 undirected pairs)
    let mut total = 0;
    for s in 0..400 {
        total += random_sparsify(&g, 0.5, &mut ChaCha8Rng::seed_from_u64(100 + s)).unwrap().num_edges() / 2;
    }
    let mean = total as f64 / 400.0;
    // Binomial(69, 0.5): sd of the mean over 400 runs is about 0.21
    assert!((mean - 34.5).abs() < 1.0, "mean {mean}");
}

#[test]
fn kron_pyramid_shrinks_to_one() {
    let g = weighted_graph(40, &random_tree(8, 40)).unwrap();
    let p = graph_pyramid(&g, 20, CoarsenMethod::Kron).unwrap();
    let counts = p.node_counts();
    assert!(counts.windows(2).all(|w| w[1] < w[0]), "{counts:?}");
    assert_eq!(*counts.last().unwrap(), 1);
    for lvl in &p.levels[1..] {
        let l = Laplacian::from_graph(&lvl.graph);
        assert_laplacian(&l);
    }
    let back = Pyramid::<f64>::from_json(&p.to_json()).unwrap();
    assert_eq!(back.node_counts(), counts);
    assert_eq!(back.levels[1].map, p.levels[1].map);
}

#[test]
fn graclus_pyramid_and_voxel_pyramid() {
    let g = unit_graph(16, &(0..15).map(|i| (i, i + 1)).collect::<Vec<_>>());
    let p = graph_pyramid(&g, 10, CoarsenMethod::Graclus).unwrap();
    assert_eq!(p.node_counts(), vec![16, 8, 4, 2, 1]);
    let c = cloud(&random_points(9, 500, 1.0));
    let (clouds, p) = voxel_pyramid(&c, &[(0.0, 0.15), (0.2, 0.4), (0.5, 1.0)]).unwrap();
    assert_eq!(clouds[0].len(), 500);
    let counts = p.node_counts();
    assert!(counts[1] < counts[0] && counts[2] < counts[1]);
    assert_eq!(p.levels[2].map.n_fine(), counts[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn voxel_count_idempotent(seed in 0u64..10_000, r in 0.05f64..0.5) {
        let c = cloud(&random_points(seed, 200, 1.0));
        let (a, _) = voxel_grid(&c, r).unwrap();
        prop_assert!(a.len() <= c.len());
        let (b, _) = voxel_grid(&a, r).unwrap();
        prop_assert_eq!(b.len(), a.len());
    }

    #[test]
    fn kron_result_is_laplacian(seed in 0u64..10_000, n in 3usize..25, extra in 0usize..30) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = random_tree(seed, n);
        for _ in 0..extra {
            let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
            if a != b { pairs.push((a, b, r.gen_range(0.1..3.0))); }
        }
        let l = Laplacian::from_pairs(n, &pairs).unwrap();
        let keep: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.5)).collect();
        prop_assume!(!keep.is_empty());
        assert_laplacian(&kron_reduce(&l, &keep).unwrap());
    }

    #[test]
    fn graclus_map_is_surjective(seed in 0u64..10_000, n in 1usize..30, extra in 0usize..40) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        for _ in 0..extra {
            let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
            if a != b && !pairs.iter().any(|p| (p.0, p.1) == (a.min(b), a.max(b))) {
                pairs.push((a.min(b), a.max(b), r.gen_range(0.1..3.0)));
            }
        }
        let (g, m) = graclus_coarsen(&weighted_graph(n, &pairs).unwrap()).unwrap();
        prop_assert!(g.n >= (n + 1) / 2);
        prop_assert_eq!(m.counts.iter().sum::<usize>(), n);
        prop_assert!(m.counts.iter().all(|&c| c >= 1 && c <= 2));
        prop_assert!(PoolingMap::new(m.assign.clone(), g.n).is_ok());
    }
}
