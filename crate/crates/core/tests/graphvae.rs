use std::collections::HashSet;

use grapht::diffcore::{check_gradients, check_param_gradients, ParamStore, Session, Tape, Tensor, TensorError, Var};
use grapht::graphvae::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_config() -> VaeConfig {
    let mut cfg = VaeConfig::new(4, 3, 2, 3);
    cfg.encoder = vec![4];
    cfg.pool = 5;
    cfg.decoder = vec![6, 5];
    cfg
}

/// Random symmetric probabilistic graph with entries bounded away from 0 and 1.
fn random_prob(k: usize, d_n: usize, d_e: usize, r: &mut ChaCha8Rng) -> ProbGraph<f64> {
    let mut a = Tensor::zeros(vec![k, k]);
    let mut e = Tensor::zeros(vec![k * k, d_e]);
    for x in 0..k {
        for y in x..k {
            let v = r.gen_range(0.05..0.95);
            a.set2(x, y, v);
            a.set2(y, x, v);
            let mut row: Vec<f64> = (0..d_e).map(|_| r.gen_range(0.1..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            for l in 0..d_e {
                e.set2(x * k + y, l, row[l]);
                e.set2(y * k + x, l, row[l]);
            }
        }
    }
    let mut f = Tensor::zeros(vec![k, d_n]);
    for x in 0..k {
        let mut row: Vec<f64> = (0..d_n).map(|_| r.gen_range(0.1..1.0)).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
        for l in 0..d_n {
            f.set2(x, l, row[l]);
        }
    }
    ProbGraph { k, a, e, f }
}

fn path(classes: &[usize], bond: usize) -> DenseGraph {
    let edges = (1..classes.len()).map(|i| (i - 1, i, bond)).collect();
    DenseGraph::new(classes.to_vec(), edges, 4, 4).unwrap()
}

// ---------- KL and posterior ----------

#[test]
fn kl_closed_forms() {
    assert_eq!(kl_normal::<f64>(&[0.0], &[1.0]), 0.0);
    assert!((kl_normal::<f64>(&[1.0], &[1.0]) - 0.5).abs() < 1e-15);
    // σ = 2: ½(4 − 1 − 2 ln 2)
    let want = 0.5 * (4.0 - 1.0 - 2.0 * 2f64.ln());
    assert!((kl_normal::<f64>(&[0.0], &[2.0]) - want).abs() < 1e-15);
}

#[test]
fn kl_matches_monte_carlo() {
    let mut r = rng(1);
    for _ in 0..3 {
        let c = 3;
        let mu: Vec<f64> = (0..c).map(|_| r.gen_range(-1.0..1.0)).collect();
        let sigma: Vec<f64> = (0..c).map(|_| r.gen_range(0.3..2.0)).collect();
        let n = 200_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let mut v = 0.0;
            for l in 0..c {
                let eps: f64 = r.sample(StandardNormal);
                let z = mu[l] + sigma[l] * eps;
                // log q(z) − log p(z), normalizers cancel except ln σ
                v += -0.5 * eps * eps - sigma[l].ln() + 0.5 * z * z;
            }
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        let kl = kl_normal::<f64>(&mu, &sigma);
        assert!((mean - kl).abs() < 3.0 * se, "mc {mean} vs {kl} (se {se})");
    }
}

#[test]
fn kl_tape_matches_values_and_gradients() {
    let mut r = rng(2);
    for _ in 0..5 {
        let mu = Tensor::new(vec![2, 3], (0..6).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let ls = Tensor::new(vec![2, 3], (0..6).map(|_| r.gen_range(-0.7..0.7)).collect()).unwrap();
        let store = ParamStore::new();
        let mut s = Session::frozen(&store);
        let (m, l) = (s.constant(mu.clone()), s.constant(ls.clone()));
        let kl = kl_normal_var(&mut s, m, l).unwrap();
        let sig: Vec<f64> = ls.data().iter().map(|v: &f64| v.exp()).collect();
        assert!((s.value(kl).item() - kl_normal(mu.data(), &sig)).abs() < 1e-12);
        let rep = check_gradients(
            |t: &mut Tape<f64>, x: &[Var]| {
                let mu2 = t.mul(x[0], x[0])?;
                let two = t.scale(x[1], 2.0);
                let var = t.exp(two);
                let a = t.add(mu2, var)?;
                let b = t.sub(a, two)?;
                let c = t.add_scalar(b, -1.0);
                let sum = t.sum(c);
                Ok(t.scale(sum, 0.5))
            },
            &[mu, ls],
            1e-6,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-5, "{rep:?}");
    }
}

#[test]
fn reparameterization_gradients() {
    let mut r = rng(3);
    for _ in 0..5 {
        let mu = Tensor::new(vec![1, 4], (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let sigma = Tensor::new(vec![1, 4], (0..4).map(|_| r.gen_range(0.2..2.0)).collect()).unwrap();
        let eps = Tensor::new(vec![1, 4], (0..4).map(|_| r.sample(StandardNormal)).collect()).unwrap();
        let w = Tensor::new(vec![1, 4], (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        // d(w·z)/dμ = w and d(w·z)/dσ = w ⊙ ε
        let store = ParamStore::new();
        let mut s = Session::new(&store);
        let m = s.param(mu.clone());
        let sg = s.param(sigma.clone());
        let ls = s.log(sg).unwrap();
        let z = Encoder::reparameterize(&mut s, m, ls, eps.clone()).unwrap();
        let wv = s.constant(w.clone());
        let wz = s.mul(z, wv).unwrap();
        let out = s.sum(wz);
        let g = s.backward(out).unwrap();
        let gm = g.get(m).unwrap();
        let gs = g.get(sg).unwrap();
        for l in 0..4 {
            assert!((gm.data()[l] as f64 - w.data()[l]).abs() < 1e-12);
            assert!((gs.data()[l] as f64 - w.data()[l] * eps.data()[l]).abs() < 1e-12);
        }
        let rep = check_gradients(
            |t: &mut Tape<f64>, x: &[Var]| {
                let ls = t.log(x[1])?;
                let sig = t.exp(ls);
                let e = t.constant(eps.clone());
                let n = t.mul(sig, e)?;
                let z = t.add(x[0], n)?;
                let wv = t.constant(w.clone());
                let wz = t.mul(z, wv)?;
                Ok(t.sum(wz))
            },
            &[mu, sigma],
            1e-6,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-5);
    }
}

#[test]
fn zero_noise_sample_is_the_mean_and_sampling_is_seeded() {
    let cfg = small_config();
    let mut store = ParamStore::<f64>::new();
    let vae = GraphVae::new(&mut store, &mut rng(4), &cfg);
    let g = DenseGraph::new(vec![0, 1, 2], vec![(0, 1, 0), (1, 2, 1)], 3, 2).unwrap();
    let ag = g.to_attributed::<f64>();
    let mut s = Session::frozen(&store);
    let (mu, ls) = vae.encoder.forward(&mut s, &[&ag], None).unwrap();
    let z = Encoder::reparameterize(&mut s, mu, ls, Tensor::zeros(vec![1, cfg.c])).unwrap();
    assert_eq!(s.value(z), s.value(mu));
    let a = vae.encode_posterior(&store, &g, None, &mut rng(9)).unwrap();
    let b = vae.encode_posterior(&store, &g, None, &mut rng(9)).unwrap();
    assert_eq!(a, b);
    assert!(a.sigma.iter().all(|&v| v > 0.0));
}

// ---------- decoder ----------

#[test]
fn zero_preactivations_give_half_and_uniform() {
    let cfg = small_config();
    let mut store = ParamStore::<f64>::new();
    let vae = GraphVae::new(&mut store, &mut rng(5), &cfg);
    let mut s = Session::frozen(&store);
    let t = cfg.tri();
    let la = s.constant(Tensor::zeros(vec![2, t]));
    let le = s.constant(Tensor::zeros(vec![2, t * cfg.d_e]));
    let lf = s.constant(Tensor::zeros(vec![2, cfg.k * cfg.d_n]));
    let out = vae.decoder.heads(&mut s, la, le, lf).unwrap();
    assert_eq!(out.len(), 2);
    for v in &out {
        let p = v.value(&s, cfg.k);
        assert!(p.a.data().iter().all(|&x| x == 0.5));
        assert!(p.e.data().iter().all(|&x| (x - 0.5).abs() < 1e-15));
        assert!(p.f.data().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }
}

#[test]
fn decoded_graphs_satisfy_invariants() {
    let cfg = VaeConfig::new(6, 4, 4, 5).scaled(8);
    let mut store = ParamStore::<f64>::new();
    let vae = GraphVae::new(&mut store, &mut rng(6), &cfg);
    let z = standard_normal(&mut rng(7), 8, cfg.c);
    for p in vae.decoder.decode(&store, &z).unwrap() {
        p.validate(1e-9).unwrap();
    }
}

#[test]
fn triangular_index_is_a_bijection() {
    for k in 1..7 {
        let mut seen = HashSet::new();
        for a in 0..k {
            for b in a..k {
                assert!(seen.insert(tri_index(k, a, b)));
                assert_eq!(tri_index(k, a, b), tri_index(k, b, a));
            }
        }
        assert_eq!(seen.into_iter().max(), Some(k * (k + 1) / 2 - 1));
    }
}

#[test]
fn decoder_heads_gradients() {
    for seed in 0..5 {
        let cfg = small_config();
        let mut store = ParamStore::<f64>::new();
        let mut r = rng(10 + seed);
        let dec = Decoder::new(&mut store, &mut r, "dec", &cfg);
        let z = standard_normal::<f64, _>(&mut r, 2, cfg.c);
        let wa: Vec<f64> = (0..cfg.k * cfg.k).map(|_| r.gen_range(-1.0..1.0)).collect();
        let we: Vec<f64> = (0..cfg.k * cfg.k * cfg.d_e).map(|_| r.gen_range(-1.0..1.0)).collect();
        let wf: Vec<f64> = (0..cfg.k * cfg.d_n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let rep = check_param_gradients(
            &store,
            |s: &mut Session<f64>| -> Result<Var, TensorError> {
                let zv = s.constant(z.clone());
                let out = dec.forward(s, zv)?;
                let mut terms = Vec::new();
                for p in out {
                    let a = s.constant(Tensor::new(vec![cfg.k, cfg.k], wa.clone())?);
                    let e = s.constant(Tensor::new(vec![cfg.k * cfg.k, cfg.d_e], we.clone())?);
                    let f = s.constant(Tensor::new(vec![cfg.k, cfg.d_n], wf.clone())?);
                    let ta = s.mul(p.a, a)?;
                    let te = s.mul(p.e, e)?;
                    let tf = s.mul(p.f, f)?;
                    terms.extend([s.sum(ta), s.sum(te), s.sum(tf)]);
                }
                let mut acc = terms[0];
                for &t in &terms[1..] {
                    acc = s.add(acc, t)?;
                }
                Ok(acc)
            },
            1e-6,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-5, "seed {seed}: {rep:?}");
    }
}

// ---------- similarity and matching ----------

#[test]
fn similarity_hand_table_two_nodes() {
    // graph: node classes (0, 1), one edge of class 1; d_n = 2, d_e = 2
    let g = DenseGraph::new(vec![0, 1], vec![(0, 1, 1)], 2, 2).unwrap();
    let p = ProbGraph::<f64> {
        k: 2,
        a: Tensor::from_rows(&[vec![0.9, 0.6], vec![0.6, 0.8]]).unwrap(),
        e: Tensor::from_rows(&[vec![0.5, 0.5], vec![0.3, 0.7], vec![0.3, 0.7], vec![0.5, 0.5]]).unwrap(),
        f: Tensor::from_rows(&[vec![0.2, 0.8], vec![0.7, 0.3]]).unwrap(),
    };
    let s = similarity(&g, &p).unwrap();
    // rows (i,j), columns (a,b) over (0,0), (0,1), (1,0), (1,1)
    let pairs = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let edge = 0.7 * 0.6 * 0.9 * 0.8;
    let table = [
        [0.2 * 0.9, 0.0, 0.0, 0.7 * 0.8],
        [0.0, edge, edge, 0.0],
        [0.0, edge, edge, 0.0],
        [0.8 * 0.9, 0.0, 0.0, 0.3 * 0.8],
    ];
    for (r, &(i, j)) in pairs.iter().enumerate() {
        for (c, &(a, b)) in pairs.iter().enumerate() {
            assert!((s.get(i, j, a, b) - table[r][c]).abs() < 1e-15, "({i},{j})×({a},{b})");
        }
    }
}

#[test]
fn mixed_pairs_have_zero_similarity() {
    let mut r = rng(20);
    let g = path(&[0, 1, 2, 0], 0);
    let p = random_prob(5, 4, 4, &mut r);
    let s = similarity(&g, &p).unwrap();
    for i in 0..4 {
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    assert_eq!(s.get(i, i, a, b), 0.0);
                }
            }
            for j in 0..4 {
                if i != j {
                    assert_eq!(s.get(i, j, a, a), 0.0);
                }
            }
        }
    }
    // non-adjacent pairs carry no similarity
    assert!((0..5).all(|a| (0..5).all(|b| s.get(0, 2, a, b) == 0.0)));
    // zero padding beyond n
    assert_eq!(s.get(4, 4, 0, 0), 0.0);
}

#[test]
fn deterministic_node_term_is_class_agreement() {
    let g = path(&[0, 1, 3], 2);
    let p = ProbGraph::<f64>::from_dense(&g, 3).unwrap();
    let s = similarity(&g, &p).unwrap();
    for i in 0..3 {
        for a in 0..3 {
            let want = if g.node_class[i] == g.node_class[a] { 1.0 } else { 0.0 };
            assert_eq!(s.get(i, i, a, a), want);
        }
    }
}

#[test]
fn similarity_rejects_mismatched_widths() {
    let g = path(&[0, 1], 0);
    let p = ProbGraph::<f64>::from_dense(&DenseGraph::new(vec![0, 1], vec![(0, 1, 0)], 3, 4).unwrap(), 2).unwrap();
    assert!(similarity(&g, &p).is_err());
    let big = path(&[0, 1, 2], 0);
    let p = ProbGraph::<f64>::from_dense(&path(&[0, 1], 0), 2).unwrap();
    assert!(similarity(&big, &p).is_err());
}

#[test]
fn mpm_single_node() {
    let g = DenseGraph::new(vec![2], vec![], 4, 4).unwrap();
    let p = ProbGraph::<f64>::from_dense(&g, 1).unwrap();
    let x = mpm_match(&similarity(&g, &p).unwrap(), MPM_ITERS);
    assert_eq!(x.shape(), [1, 1]);
    assert!((x.get2(0, 0) - 1.0).abs() < 1e-15);
}

#[test]
fn mpm_zero_similarity_is_uniform() {
    let g = DenseGraph::new(vec![0, 1], vec![], 4, 4).unwrap();
    let mut p = ProbGraph::<f64>::from_dense(&g, 3).unwrap();
    p.a = Tensor::zeros(vec![3, 3]);
    let x = mpm_match(&similarity(&g, &p).unwrap(), MPM_ITERS);
    let u = 1.0 / 6f64.sqrt();
    assert!(x.data().iter().all(|&v| (v - u).abs() < 1e-15));
}

#[test]
fn mpm_identifies_identity_on_two_nodes() {
    let g = DenseGraph::new(vec![0, 2], vec![(0, 1, 1)], 4, 4).unwrap();
    let p = ProbGraph::<f64>::from_dense(&g, 2).unwrap();
    let sim = similarity(&g, &p).unwrap();
    let dense = sim.dense();
    // exhaustive scoring of both permutations: xᵀ S x
    let score = |perm: [usize; 2]| {
        let mut x = [0.0; 4];
        for i in 0..2 {
            x[i * 2 + perm[i]] = 1.0;
        }
        let mut s = 0.0;
        for u in 0..4 {
            for v in 0..4 {
                s += x[u] * dense.get2(u, v) * x[v];
            }
        }
        s
    };
    assert!(score([0, 1]) > score([1, 0]));
    let x = mpm_match(&sim, MPM_ITERS);
    assert!(x.get2(0, 0) > x.get2(1, 0) && x.get2(1, 1) > x.get2(0, 1));
    assert_eq!(hungarian(&x).perm, vec![0, 1]);
}

#[test]
fn hungarian_two_by_two() {
    let x = Tensor::<f64>::from_rows(&[vec![0.9, 0.1], vec![0.8, 0.2]]).unwrap();
    let best = hungarian(&x);
    assert_eq!(best.perm, vec![0, 1]);
    assert!((best.score(&x) - 1.1).abs() < 1e-15);
    let swapped = Assignment { k: 2, perm: vec![1, 0] };
    assert!((swapped.score(&x) - 0.9).abs() < 1e-15);
}

#[test]
fn hungarian_identity_dominant() {
    let mut x = Tensor::full(vec![5, 3], 0.1);
    for i in 0..3 {
        x.set2(i, i, 0.9);
    }
    assert_eq!(hungarian(&x).perm, vec![0, 1, 2]);
}

fn brute_force_best(x: &Tensor<f64>) -> f64 {
    fn rec(x: &Tensor<f64>, i: usize, used: &mut Vec<bool>) -> f64 {
        if i == x.cols() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..x.rows() {
            if !used[a] {
                used[a] = true;
                best = best.max(x.get2(a, i) + rec(x, i + 1, used));
                used[a] = false;
            }
        }
        best
    }
    rec(x, 0, &mut vec![false; x.rows()])
}

#[test]
fn hungarian_matches_brute_force() {
    let mut r = rng(30);
    for _ in 0..60 {
        let n = r.gen_range(1..=6);
        let k = r.gen_range(n..=7);
        let x = Tensor::new(vec![k, n], (0..k * n).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
        let a = hungarian(&x);
        let mut seen = HashSet::new();
        assert!(a.perm.iter().all(|&p| p < k && seen.insert(p)));
        assert!((a.score(&x) - brute_force_best(&x)).abs() < 1e-12);
        let m: Tensor<f64> = a.matrix();
        for i in 0..n {
            assert_eq!((0..k).map(|p| m.get2(p, i)).sum::<f64>(), 1.0);
        }
        for p in 0..k {
            assert!((0..n).map(|i| m.get2(p, i)).sum::<f64>() <= 1.0);
        }
    }
}

#[test]
fn noiseless_self_matching_is_exact() {
    let mut r = rng(31);
    for _ in 0..20 {
        let n = r.gen_range(3..=12);
        let g = random_molecule(n, &mut r);
        let p = noisy_prob_graph::<f64, _>(&g, 15, NoiseLevels::default(), &mut r).unwrap();
        let x = match_graphs(&g, &p, MPM_ITERS).unwrap();
        let acc = self_match_accuracy(&g, &x);
        assert_eq!((acc.a, acc.f, acc.e), (1.0, 1.0, 1.0));
    }
}

#[test]
fn noisy_graphs_keep_their_invariants() {
    let mut r = rng(32);
    let g = random_molecule(8, &mut r);
    let p = noisy_prob_graph::<f64, _>(&g, 10, NoiseLevels { a: 0.8, e: 0.8, f: 0.8 }, &mut r).unwrap();
    p.validate(1e-9).unwrap();
}

// ---------- reconstruction likelihood ----------

/// Direct evaluation of the three cross-entropies with explicit matrix products.
fn oracle_loglik(g: &DenseGraph, p: &ProbGraph<f64>, perm: &[usize]) -> (f64, f64, f64) {
    let (k, n) = (p.k, g.n());
    let mut x = vec![vec![0.0; n]; k];
    for (i, &a) in perm.iter().enumerate() {
        x[a][i] = 1.0;
    }
    let mut adj = vec![vec![0.0; n]; n];
    for i in 0..n {
        adj[i][i] = 1.0;
    }
    let mut eten = vec![vec![vec![0.0; g.d_e]; n]; n];
    for &(i, j, c) in &g.edges {
        adj[i][j] = 1.0;
        adj[j][i] = 1.0;
        eten[i][j][c] = 1.0;
        eten[j][i][c] = 1.0;
    }
    // A' = X A Xᵀ
    let mut ap = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            for i in 0..n {
                for j in 0..n {
                    ap[a][b] += x[a][i] * adj[i][j] * x[b][j];
                }
            }
        }
    }
    let mut lpa = 0.0;
    for a in 0..k {
        let t = p.a.get2(a, a);
        lpa += (ap[a][a] * t.ln() + (1.0 - ap[a][a]) * (1.0 - t).ln()) / k as f64;
        for b in 0..k {
            if a != b {
                let t = p.a.get2(a, b);
                lpa += (ap[a][b] * t.ln() + (1.0 - ap[a][b]) * (1.0 - t).ln()) / (k * (k - 1)) as f64;
            }
        }
    }
    // F' = Xᵀ F̃
    let mut lpf = 0.0;
    for i in 0..n {
        let mut dotp = 0.0;
        for l in 0..g.d_n {
            let fp: f64 = (0..k).map(|a| x[a][i] * p.f.get2(a, l)).sum();
            dotp += if g.node_class[i] == l { fp } else { 0.0 };
        }
        lpf += dotp.ln() / n as f64;
    }
    // E'_l = Xᵀ Ẽ_l X
    let norm: f64 = adj.iter().flatten().sum::<f64>() - n as f64;
    let mut lpe = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j || adj[i][j] == 0.0 {
                continue;
            }
            let mut dotp = 0.0;
            for l in 0..g.d_e {
                let mut ep = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        ep += x[a][i] * p.e.get2(a * k + b, l) * x[b][j];
                    }
                }
                dotp += eten[i][j][l] * ep;
            }
            lpe += dotp.ln() / norm;
        }
    }
    (lpa, lpf, lpe)
}

#[test]
fn recon_loglik_matches_scalar_oracle() {
    let mut r = rng(40);
    for trial in 0..10 {
        let g = DenseGraph::new(vec![0, 2, 1], vec![(0, 1, 1), (1, 2, 3)], 4, 4).unwrap();
        let k = if trial < 5 { 3 } else { 5 };
        let p = random_prob(k, 4, 4, &mut r);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut r);
        perm.truncate(3);
        let x = Assignment { k, perm: perm.clone() };
        let got = recon_loglik(&g, &p, &x, LossWeights::default()).unwrap();
        let (a, f, e) = oracle_loglik(&g, &p, &perm);
        assert!((got.log_pa - a).abs() < 1e-12);
        assert!((got.log_pf - f).abs() < 1e-12);
        assert!((got.log_pe - e).abs() < 1e-12);
        assert!((got.total + a + f + e).abs() < 1e-12);
        let w = LossWeights { a: 0.5, f: 2.0, e: 3.0 };
        let got = recon_loglik(&g, &p, &x, w).unwrap();
        assert!((got.total + 0.5 * a + 2.0 * f + 3.0 * e).abs() < 1e-12);
    }
}

#[test]
fn perfect_prediction_has_zero_loss() {
    let g = path(&[0, 1, 2, 3], 1);
    let p = ProbGraph::<f64>::from_dense(&g, 6).unwrap();
    let got = recon_loglik(&g, &p, &Assignment::identity(4, 6), LossWeights::default()).unwrap();
    assert_eq!((got.log_pa, got.log_pf, got.log_pe, got.total), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn uniform_adjacency_gives_two_log_half() {
    // diagonal and off-diagonal averages each contribute log ½
    let mut r = rng(41);
    for n in 1..5 {
        let g = random_molecule(n, &mut r);
        let mut p = ProbGraph::<f64>::from_dense(&g, 5).unwrap();
        p.a = Tensor::full(vec![5, 5], 0.5);
        let got = recon_loglik(&g, &p, &Assignment::identity(n, 5), LossWeights::default()).unwrap();
        assert!((got.log_pa - 2.0 * 0.5f64.ln()).abs() < 1e-14);
    }
}

#[test]
fn edgeless_graph_has_zero_edge_term() {
    let g = DenseGraph::new(vec![1], vec![], 4, 4).unwrap();
    let p = random_prob(3, 4, 4, &mut rng(42));
    let got = recon_loglik(&g, &p, &Assignment { k: 3, perm: vec![2] }, LossWeights::default()).unwrap();
    assert_eq!(got.log_pe, 0.0);
}

#[test]
fn recon_loglik_gradients() {
    let mut r = rng(43);
    let g = DenseGraph::new(vec![0, 2, 1], vec![(0, 1, 1), (1, 2, 3)], 4, 4).unwrap();
    for _ in 0..5 {
        let p = random_prob(4, 4, 4, &mut r);
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut r);
        perm.truncate(3);
        let x = Assignment { k: 4, perm };
        let rep = check_gradients(
            |t: &mut Tape<f64>, v: &[Var]| {
                let vars = ProbGraphVars { a: v[0], e: v[1], f: v[2] };
                Ok(recon_loglik_var(t, &g, &vars, &x, LossWeights::default())?.total)
            },
            &[p.a.clone(), p.e.clone(), p.f.clone()],
            1e-6,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-5, "{rep:?}");
    }
}

// ---------- ELBO ----------

#[test]
fn elbo_is_the_sum_of_its_parts_and_reaches_the_decoder() {
    let cfg = small_config();
    let mut store = ParamStore::<f64>::new();
    let mut r = rng(50);
    let vae = GraphVae::new(&mut store, &mut r, &cfg);
    let gs = vec![
        DenseGraph::new(vec![0, 1, 2], vec![(0, 1, 0), (1, 2, 1)], 3, 2).unwrap(),
        DenseGraph::new(vec![2, 2], vec![(0, 1, 1)], 3, 2).unwrap(),
    ];
    let refs: Vec<&DenseGraph> = gs.iter().collect();
    let opts = ElboOptions { kl_weight: 0.7, ..Default::default() };
    let mut s = Session::new(&store);
    let out = elbo_batch(&vae, &mut s, &refs, None, &opts, &mut r).unwrap();
    let recon = out.terms.iter().map(|t| t.total).sum::<f64>() / 2.0;
    assert!((s.value(out.recon).item() - recon).abs() < 1e-12);
    let total = s.value(out.recon).item() + 0.7 * s.value(out.kl).item();
    assert!((s.value(out.total).item() - total).abs() < 1e-12);
    let grads = s.param_grads(&store, out.total).unwrap();
    let dec_ids: Vec<usize> = store.ids().filter(|&id| store.name(id).starts_with("dec")).map(|id| id.0).collect();
    assert!(dec_ids.iter().any(|&i| grads[i].data().iter().any(|&v| v != 0.0)));
}

#[test]
fn elbo_decreases_on_a_small_overfit_run() {
    let mut r = rng(51);
    let data: Vec<DenseGraph> = (0..10).map(|_| {
        let n = r.gen_range(2..=5);
        random_molecule(n, &mut r)
    }).collect();
    let mut cfg = VaeConfig::new(5, 4, 4, 8).scaled(4);
    cfg.encoder = vec![8, 8];
    let mut store = ParamStore::<f64>::new();
    let vae = GraphVae::new(&mut store, &mut r, &cfg);
    let refs: Vec<&DenseGraph> = data.iter().collect();
    let opts = ElboOptions::default();
    let mut adam = grapht::harness::Adam::new(&store, grapht::harness::AdamConfig { lr: 3e-3, ..Default::default() });
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..150 {
        let mut s = Session::new(&store);
        let out = elbo_batch(&vae, &mut s, &refs, None, &opts, &mut r).unwrap();
        last = s.value(out.total).item();
        first.get_or_insert(last);
        let g = s.param_grads(&store, out.total).unwrap();
        adam.step_store(&mut store, &g).unwrap();
    }
    assert!(last < 0.6 * first.unwrap(), "{first:?} -> {last}");
}

// ---------- discretization and validity ----------

fn two_node(diag: f64, off: f64) -> ProbGraph<f64> {
    ProbGraph {
        k: 2,
        a: Tensor::from_rows(&[vec![diag, off], vec![off, diag]]).unwrap(),
        e: Tensor::from_rows(&[vec![0.25; 4], vec![0.1, 0.6, 0.2, 0.1], vec![0.1, 0.6, 0.2, 0.1], vec![0.25; 4]]).unwrap(),
        f: Tensor::from_rows(&[vec![0.7, 0.1, 0.1, 0.1], vec![0.1, 0.1, 0.8, 0.0]]).unwrap(),
    }
}

#[test]
fn point_estimate_with_and_without_tree() {
    let p = two_node(0.9, 0.3);
    let with = point_estimate(&p, true);
    assert_eq!(with.node_class, vec![0, 2]);
    assert_eq!(with.edges, vec![(0, 1, 1)]);
    let without = point_estimate(&p, false);
    assert_eq!(without.n(), 2);
    assert!(without.edges.is_empty());
    let none = point_estimate(&two_node(0.2, 0.9), true);
    assert_eq!(none.n(), 0);
}

#[test]
fn spanning_tree_uses_the_most_probable_edges() {
    // path 0-1-2 is likelier than the 0-2 edge
    let mut p = ProbGraph::<f64>::from_dense(&path(&[0, 0, 0], 0), 3).unwrap();
    p.a = Tensor::from_rows(&[vec![0.9, 0.4, 0.1], vec![0.4, 0.9, 0.3], vec![0.1, 0.3, 0.9]]).unwrap();
    let g = point_estimate(&p, true);
    assert_eq!(g.edges.iter().map(|&(i, j, _)| (i, j)).collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
}

#[test]
fn implicit_node_probabilities() {
    let mut p = ProbGraph::<f64>::from_dense(&path(&[0, 0, 0], 0), 3).unwrap();
    p.a = Tensor::from_rows(&[vec![0.0, 0.2, 0.7], vec![0.2, 0.0, 0.0], vec![0.7, 0.0, 0.0]]).unwrap();
    let q = implicit_node_probs(&p);
    assert_eq!((q.a.get2(0, 0), q.a.get2(1, 1), q.a.get2(2, 2)), (0.7, 0.2, 0.7));
    assert_eq!(implicit_node_probs(&q), q);
    let mut z = p.clone();
    z.a = Tensor::full(vec![3, 3], 0.0);
    z.a.set2(1, 1, 0.9);
    assert_eq!(implicit_node_probs(&z).a.get2(1, 1), 0.0);
    let single = ProbGraph::<f64>::from_dense(&DenseGraph::new(vec![1], vec![], 4, 4).unwrap(), 1).unwrap();
    assert_eq!(implicit_node_probs(&single), single);
}

#[test]
fn valence_examples() {
    let alpha = Alphabet::default();
    let methane = DenseGraph::new(vec![0], vec![], 4, 4).unwrap();
    assert!(valence_valid(&methane, &alpha).unwrap());
    let five = DenseGraph::new(vec![0; 6], (1..6).map(|i| (0, i, 0)).collect(), 4, 4).unwrap();
    assert!(!valence_valid(&five, &alpha).unwrap());
    let four = DenseGraph::new(vec![0; 5], (1..5).map(|i| (0, i, 0)).collect(), 4, 4).unwrap();
    assert!(valence_valid(&four, &alpha).unwrap());
    // O with a double and a single bond
    let o = DenseGraph::new(vec![2, 0, 0], vec![(0, 1, 1), (0, 2, 0)], 4, 4).unwrap();
    assert!(!valence_valid(&o, &alpha).unwrap());
    // benzene-like ring of aromatic carbons
    let ring = DenseGraph::new(vec![0; 6], (0..6).map(|i| (i, (i + 1) % 6, 3)).collect(), 4, 4).unwrap();
    assert!(valence_valid(&ring, &alpha).unwrap());
    let split = DenseGraph::new(vec![0, 0], vec![], 4, 4).unwrap();
    assert!(!valence_valid(&split, &alpha).unwrap());
    let unknown = Molecule { atoms: vec!["Xe".into()], bonds: vec![] };
    assert!(molecule_valid(&unknown).is_err());
}

#[test]
fn molecules_round_trip() {
    let alpha = Alphabet::default();
    let g = DenseGraph::new(vec![0, 1, 2], vec![(0, 1, 3), (1, 2, 1)], 4, 4).unwrap();
    let m = Molecule::from_graph(&g, &alpha).unwrap();
    assert_eq!(m.to_json(), r#"{"atoms":["C","N","O"],"bonds":[[0,1,1.5],[1,2,2.0]]}"#);
    assert_eq!(Molecule::from_json(&m.to_json()).unwrap().to_graph(&alpha).unwrap(), g);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mols.jsonl");
    Molecule::save_lines(&[m.clone(), m.clone()], &path).unwrap();
    assert_eq!(Molecule::load_lines(&path).unwrap(), vec![m.clone(), m]);
}

#[test]
fn attributed_round_trip_and_one_hot_check() {
    let g = DenseGraph::new(vec![0, 3, 1], vec![(0, 1, 2), (0, 2, 0)], 4, 4).unwrap();
    let ag = g.to_attributed::<f64>();
    assert!(ag.is_symmetric());
    assert_eq!(DenseGraph::from_attributed(&ag).unwrap(), g);
    let mut bad = ag.clone();
    bad.node_attr.set2(0, 1, 0.5);
    assert!(DenseGraph::from_attributed(&bad).is_err());
}

#[test]
fn canonical_forms_identify_isomorphism_classes() {
    let star = DenseGraph::new(vec![0; 4], vec![(0, 1, 0), (0, 2, 0), (0, 3, 0)], 4, 4).unwrap();
    let chain = path(&[0, 0, 0, 0], 0);
    let b = CANONICAL_NODE_BOUND;
    assert_ne!(canonical_form(&star, b).unwrap(), canonical_form(&chain, b).unwrap());
    assert_ne!(canonical_form(&chain, b).unwrap(), canonical_form(&path(&[0, 0, 0, 0], 1), b).unwrap());
    assert_ne!(canonical_form(&path(&[0, 1, 0], 0), b).unwrap(), canonical_form(&path(&[1, 0, 0], 0), b).unwrap());
    assert_eq!(canonical_form(&path(&[2, 0, 1], 0), b).unwrap(), canonical_form(&path(&[1, 0, 2], 0), b).unwrap());
    assert!(canonical_form(&random_molecule(10, &mut rng(60)), 9).is_err());
}

#[test]
fn sample_metrics_follow_definitions() {
    struct Fixed(ProbGraph<f64>);
    impl GraphSource<f64> for Fixed {
        fn latent_dim(&self) -> usize {
            2
        }
        fn decode_batch(&self, z: &Tensor<f64>, _: Option<&[f64]>) -> Result<Vec<ProbGraph<f64>>, TensorError> {
            Ok(vec![self.0.clone(); z.rows()])
        }
    }
    let alpha = Alphabet::default();
    let cfg = SamplingConfig { n_samples: 40, batch: 16, ..Default::default() };
    let mol = path(&[0, 0, 2], 0);
    let dataset = canonical_set(&[mol.clone()], CANONICAL_NODE_BOUND).unwrap();
    let good = Fixed(ProbGraph::from_dense(&mol, 4).unwrap());
    let m = sample_metrics(&good, None, &dataset, &alpha, &cfg, &mut rng(70)).unwrap();
    assert_eq!((m.valid, m.accurate, m.unique, m.novel), (1.0, 1.0, 1.0 / 40.0, 0.0));
    let fresh = sample_metrics(&good, None, &HashSet::new(), &alpha, &cfg, &mut rng(70)).unwrap();
    assert_eq!(fresh.novel, 1.0);
    // five single bonds on one carbon
    let bad_graph = DenseGraph::new(vec![0; 6], (1..6).map(|i| (0, i, 0)).collect(), 4, 4).unwrap();
    let bad = Fixed(ProbGraph::from_dense(&bad_graph, 6).unwrap());
    let m = sample_metrics(&bad, None, &dataset, &alpha, &cfg, &mut rng(71)).unwrap();
    assert_eq!((m.valid, m.accurate, m.unique, m.novel), (0.0, 0.0, 0.0, 0.0));
    // conditional: valid graphs with the wrong histogram are not accurate
    let labels = vec![(vec![1.0], vec![3, 0, 0, 0], 1.0)];
    let m = sample_metrics(&good, Some(&labels), &dataset, &alpha, &cfg, &mut rng(72)).unwrap();
    assert_eq!((m.valid, m.accurate, m.unique, m.novel), (1.0, 0.0, 0.0, 0.0));
    let labels = vec![(vec![1.0], vec![2, 0, 1, 0], 3.0), (vec![0.0], vec![3, 0, 0, 0], 1.0)];
    let m = sample_metrics(&good, Some(&labels), &dataset, &alpha, &cfg, &mut rng(72)).unwrap();
    assert_eq!((m.valid, m.accurate), (1.0, 0.75));
}

#[test]
fn unconditional_sampling_has_valid_equal_accurate() {
    let cfg = VaeConfig::new(9, 4, 4, 8).scaled(8);
    let mut store = ParamStore::<f64>::new();
    let vae = GraphVae::new(&mut store, &mut rng(80), &cfg);
    let src = TrainedDecoder { vae: &vae, store: &store };
    let scfg = SamplingConfig { n_samples: 200, batch: 50, mst_fix: true, ..Default::default() };
    let m = sample_metrics(&src, None, &HashSet::new(), &Alphabet::default(), &scfg, &mut rng(81)).unwrap();
    assert_eq!(m.valid, m.accurate);
}

// ---------- properties ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kl_is_nonnegative(mu in prop::collection::vec(-3.0f64..3.0, 1..6), ls in prop::collection::vec(-2.0f64..2.0, 6)) {
        let sigma: Vec<f64> = ls[..mu.len()].iter().map(|v| v.exp()).collect();
        let kl = kl_normal::<f64>(&mu, &sigma);
        prop_assert!(kl >= -1e-12);
        let zero: f64 = kl_normal::<f64>(&vec![0.0; mu.len()], &vec![1.0; mu.len()]);
        prop_assert!(zero.abs() < 1e-10);
        if mu.iter().any(|m| m.abs() > 1e-3) || ls.iter().take(mu.len()).any(|l| l.abs() > 1e-3) {
            prop_assert!(kl > 1e-10);
        }
    }

    #[test]
    fn recon_is_invariant_to_relabelling(seed in 0u64..1000) {
        let mut r = rng(seed);
        let n = r.gen_range(2..=6);
        let g = random_molecule(n, &mut r);
        let p = random_prob(7, 4, 4, &mut r);
        let mut perm: Vec<usize> = (0..7).collect();
        perm.shuffle(&mut r);
        perm.truncate(n);
        let x = Assignment { k: 7, perm: perm.clone() };
        let base = recon_loglik(&g, &p, &x, LossWeights::default()).unwrap();
        let mut relabel: Vec<usize> = (0..n).collect();
        relabel.shuffle(&mut r);
        let h = g.permuted(&relabel);
        let mut hp = vec![0; n];
        for i in 0..n {
            hp[relabel[i]] = perm[i];
        }
        let moved = recon_loglik(&h, &p, &Assignment { k: 7, perm: hp }, LossWeights::default()).unwrap();
        prop_assert!((base.total - moved.total).abs() < 1e-12);
    }

    #[test]
    fn hungarian_beats_random_assignments(seed in 0u64..1000) {
        let mut r = rng(seed);
        let n = r.gen_range(1..=8);
        let k = r.gen_range(n..=10);
        let x = Tensor::new(vec![k, n], (0..k * n).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
        let best = hungarian(&x).score(&x);
        for _ in 0..100 {
            let mut rows: Vec<usize> = (0..k).collect();
            rows.shuffle(&mut r);
            rows.truncate(n);
            let other = Assignment { k, perm: rows };
            prop_assert!(best >= other.score(&x) - 1e-12);
        }
    }

    #[test]
    fn tree_fix_connects_probable_nodes(seed in 0u64..1000) {
        let mut r = rng(seed);
        let k = r.gen_range(1..=9);
        let p = random_prob(k, 4, 4, &mut r);
        let g = point_estimate(&p, true);
        let probable = (0..k).filter(|&a| p.a.get2(a, a) >= 0.5).count();
        prop_assert_eq!(g.n(), probable);
        if probable > 0 {
            prop_assert!(g.is_connected());
        }
    }

    #[test]
    fn canonical_form_is_permutation_invariant(seed in 0u64..1000) {
        let mut r = rng(seed);
        let n = r.gen_range(1..=9);
        let g = random_molecule(n, &mut r);
        let mut relabel: Vec<usize> = (0..n).collect();
        relabel.shuffle(&mut r);
        prop_assert_eq!(canonical_form(&g, 9).unwrap(), canonical_form(&g.permuted(&relabel), 9).unwrap());
    }

    #[test]
    fn generated_molecules_are_valid(seed in 0u64..1000, n in 1usize..40) {
        let g = random_molecule(n, &mut rng(seed));
        prop_assert_eq!(g.n(), n);
        prop_assert!(valence_valid(&g, &Alphabet::default()).unwrap());
    }

    #[test]
    fn decoder_outputs_are_symmetric_distributions(seed in 0u64..1000) {
        let cfg = small_config();
        let mut store = ParamStore::<f64>::new();
        let mut r = rng(seed);
        let vae = GraphVae::new(&mut store, &mut r, &cfg);
        let z = standard_normal(&mut r, 3, cfg.c);
        for p in vae.decoder.decode(&store, &z).unwrap() {
            prop_assert!(p.validate(1e-9).is_ok());
        }
    }
}
