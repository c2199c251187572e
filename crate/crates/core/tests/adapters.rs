use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treedens::distributions::preset;
use treedens::learner::{self, LearnerConfig};
use treedens::linalg;
use treedens::rank_adapter::{self, RankAdapterConfig};
use treedens::tree_adapter::{self, TreeProposalConfig};
use treedens::{Basis, DimSet, DimensionTree, SampleSet, TreeTensor};

fn full_ranks(tree: &DimensionTree, sizes: &[usize], cap: usize) -> Vec<usize> {
    let total: usize = sizes.iter().product();
    (0..tree.num_nodes())
        .map(|a| {
            if a == tree.root() {
                return 1;
            }
            let inside: usize = tree.subset(a).iter().map(|nu| sizes[nu]).product();
            inside.min(total / inside).min(cap)
        })
        .collect()
}

fn admissible_random(tree: &DimensionTree, sizes: &[usize], cap: usize, rng: &mut ChaCha8Rng) -> TreeTensor {
    let bases: Vec<Basis> = sizes.iter().map(|&k| Basis::canonical(k)).collect();
    let ranks = full_ranks(tree, sizes, cap);
    TreeTensor::random(tree.clone(), bases, &ranks, rng).unwrap()
}

fn dense_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn cross_term_matches_dense_inner_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sizes = [3, 2, 4, 3];
    for tree in [DimensionTree::balanced(4).unwrap(), DimensionTree::linear(4, &[2, 4, 1, 3]).unwrap()] {
        let g = admissible_random(&tree, &sizes, 3, &mut rng);
        let mut c = admissible_random(&tree, &sizes, 2, &mut rng);
        for alpha in 0..tree.num_nodes() {
            c.orthonormalize_at(alpha).unwrap();
            let s = rank_adapter::cross_term(&g, &c, alpha).unwrap();
            assert_eq!(s.shape, c.cores[alpha].shape);
            let mut probe = c.clone();
            for v in probe.cores[alpha].data.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let lhs = dense_dot(&s.data, &probe.cores[alpha].data);
            let rhs = dense_dot(&probe.full_tensor().unwrap().data, &g.full_tensor().unwrap().data);
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
            // self cross term is the identity map on the core
            let own = rank_adapter::cross_term(&c, &c, alpha).unwrap();
            for (a, b) in own.data.iter().zip(&c.cores[alpha].data) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        let zero = TreeTensor::zeros(tree.clone(), g.bases.clone(), &vec![1; tree.num_nodes()]).unwrap();
        assert!(rank_adapter::cross_term(&zero, &c, 0).unwrap().data.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn cross_term_is_linear_in_g() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tree = DimensionTree::balanced(3).unwrap();
    let sizes = [3, 3, 3];
    let g1 = admissible_random(&tree, &sizes, 2, &mut rng);
    let g2 = admissible_random(&tree, &sizes, 2, &mut rng);
    let mut c = admissible_random(&tree, &sizes, 2, &mut rng);
    c.orthonormalize_at(1).unwrap();
    let sum = g1.add(&g2).unwrap();
    let a = rank_adapter::cross_term(&sum, &c, 1).unwrap();
    let b1 = rank_adapter::cross_term(&g1, &c, 1).unwrap();
    let b2 = rank_adapter::cross_term(&g2, &c, 1).unwrap();
    for i in 0..a.len() {
        assert!((a.data[i] - b1.data[i] - b2.data[i]).abs() < 1e-10);
    }
}

fn random_sample(n: usize, sizes: &[usize], rng: &mut ChaCha8Rng) -> SampleSet {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| sizes.iter().map(|&k| (rng.random_range(0..k).min(rng.random_range(0..k))) as f64).collect())
        .collect();
    SampleSet::from_rows(&rows).unwrap()
}

#[test]
fn rank_one_correction_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tree = DimensionTree::balanced(3).unwrap();
    let sizes = [4, 3, 5];
    let bases: Vec<Basis> = sizes.iter().map(|&k| Basis::canonical(k)).collect();
    let s = random_sample(300, &sizes, &mut rng);
    let cfg = LearnerConfig { max_sweeps: 50, stagnation_tol: 0.0, ..Default::default() };

    // correction of zero is the rank-one fit
    let zero = TreeTensor::zeros(tree.clone(), bases.clone(), &vec![1; tree.num_nodes()]).unwrap();
    let c = rank_adapter::rank_one_correction(&zero, &s, 200).unwrap();
    let fit = learner::fit_fixed(&tree, &vec![1; tree.num_nodes()], &bases, &s, &cfg).unwrap();
    let rc = learner::empirical_risk(&c, &s).unwrap();
    let rf = learner::empirical_risk(&fit.model, &s).unwrap();
    assert!((rc - rf).abs() < 1e-8, "{rc} vs {rf}");

    // the correction never raises the risk, and is stationary
    let g = learner::fit_fixed(&tree, &[1, 2, 2, 2, 2], &bases, &s, &cfg).unwrap().model;
    let c = rank_adapter::rank_one_correction(&g, &s, 500).unwrap();
    let r0 = learner::empirical_risk(&g, &s).unwrap();
    let sum = g.add(&c).unwrap();
    let r1 = learner::empirical_risk(&sum, &s).unwrap();
    assert!(r1 <= r0 + 1e-10);
    // finite-difference gradient of the corrected risk in the leaf factors
    let h = 1e-5;
    let mut grad2 = 0.0;
    for leaf in tree.leaves() {
        for j in 0..c.cores[leaf].len() {
            let risk = |delta: f64| {
                let mut cp = c.clone();
                cp.cores[leaf].data[j] += delta;
                learner::empirical_risk(&g.add(&cp).unwrap(), &s).unwrap()
            };
            let d = (risk(h) - risk(-h)) / (2.0 * h);
            grad2 += d * d;
        }
    }
    assert!(grad2.sqrt() <= 1e-6, "gradient norm {}", grad2.sqrt());
}

#[test]
fn truncation_scores_match_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tree = DimensionTree::balanced(4).unwrap();
    let sizes = [3, 3, 2, 4];
    let g = admissible_random(&tree, &sizes, 4, &mut rng);
    let r = vec![1; tree.num_nodes()];
    let scores = rank_adapter::truncation_scores(&g, &r).unwrap();
    let f = g.full_tensor().unwrap();
    for a in 0..tree.num_nodes() {
        if a == tree.root() {
            assert_eq!(scores[a], 0.0);
            continue;
        }
        let rows: Vec<usize> = tree.subset(a).iter().collect();
        let (m, nr, nc) = f.matricize(&rows);
        let sv = linalg::singular_values(&m, nr, nc).unwrap();
        assert!((scores[a] - sv.get(1).copied().unwrap_or(0.0)).abs() < 1e-10);
    }
    let mut g2 = g.clone();
    g2.scale(2.0);
    let s2 = rank_adapter::truncation_scores(&g2, &r).unwrap();
    for (a, b) in scores.iter().zip(&s2) {
        assert!((2.0 * a - b).abs() < 1e-10);
    }
    let exact = rank_adapter::truncation_scores(&g, &g.ranks()).unwrap();
    assert!(exact.iter().all(|v| *v == 0.0));
}

#[test]
fn select_nodes_thresholds() {
    let tree = DimensionTree::balanced(4).unwrap();
    let dims = [5; 4];
    let mut r = vec![2; tree.num_nodes()];
    r[tree.root()] = 1;
    let scores: Vec<f64> = (0..tree.num_nodes()).map(|a| if a == tree.root() { 0.0 } else { a as f64 }).collect();
    let all = rank_adapter::select_nodes(&tree, &scores, 0.0, &r, &dims);
    assert_eq!(all.len(), tree.num_nodes() - 1);
    let top = rank_adapter::select_nodes(&tree, &scores, 1.0, &r, &dims);
    let argmax = (0..tree.num_nodes()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    assert!(top.contains(&argmax));
    for a in &top {
        let mut rr = r.clone();
        for b in &top {
            rr[*b] += 1;
        }
        tree.check_admissible(&rr, &dims).unwrap();
        assert!(*a == argmax || tree.parent(*a) == tree.parent(argmax) || tree.parent(argmax) == Some(*a));
    }
    let flat: Vec<f64> = (0..tree.num_nodes()).map(|a| if a == tree.root() { 0.0 } else { 1.0 }).collect();
    assert_eq!(rank_adapter::select_nodes(&tree, &flat, 0.9, &r, &dims).len(), tree.num_nodes() - 1);
}

#[test]
fn product_density_keeps_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let laws = [vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.25, 0.25, 0.5]];
    let rows: Vec<Vec<f64>> = (0..4000)
        .map(|_| {
            laws.iter()
                .map(|l| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    l.iter().position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(2) as f64
                })
                .collect()
        })
        .collect();
    let s = SampleSet::from_rows(&rows).unwrap();
    let (train, valid) = s.split(0.1, &mut rng);
    let tree = DimensionTree::balanced(3).unwrap();
    let bases = vec![Basis::canonical(3); 3];
    let cfg = RankAdapterConfig { tree_adaptation: false, ..Default::default() };
    let st = rank_adapter::adapt_ranks(
        &tree,
        &bases,
        &train,
        &valid,
        &LearnerConfig::default(),
        &cfg,
        &TreeProposalConfig::default(),
    )
    .unwrap();
    assert!(st.ranks.iter().all(|&r| r == 1), "{:?}", st.ranks);
    for w in st.history.windows(2) {
        for (a, b) in w[0].ranks.iter().zip(&w[1].ranks) {
            assert!(b >= a);
        }
    }
    for t in &st.risk_traces {
        for w in t.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }
}

#[test]
fn permutation_count_law() {
    let cfg = TreeProposalConfig::default();
    let law = tree_adapter::permutation_count_law(&cfg);
    let z: f64 = (1..=10).map(|k| 1.0 / (k * k) as f64).sum();
    assert!((law[0] - 1.0 / z).abs() < 1e-12);
    assert!((law[0] - 0.645).abs() < 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut counts = [0usize; 10];
    let draws = 100_000;
    for _ in 0..draws {
        counts[tree_adapter::draw_permutation_count(&cfg, &mut rng) - 1] += 1;
    }
    for (c, p) in counts.iter().zip(&law) {
        assert!((*c as f64 / draws as f64 - p).abs() < 0.01);
    }
    let steep = TreeProposalConfig { gamma1: 200.0, ..Default::default() };
    assert!((0..100).all(|_| tree_adapter::draw_permutation_count(&steep, &mut rng) == 1));
}

#[test]
fn swap_pair_support() {
    let tree = DimensionTree::linear(3, &[1, 2, 3]).unwrap();
    let a = tree.find(DimSet::from_dims(&[2])).unwrap();
    let mut targets: Vec<DimSet> =
        tree_adapter::swap_targets(&tree, a, 2.0).into_iter().map(|(b, _)| tree.subset(b)).collect();
    targets.sort();
    let mut want = vec![DimSet::from_dims(&[0]), DimSet::from_dims(&[1]), DimSet::from_dims(&[0, 1])];
    want.sort();
    assert_eq!(targets, want);
    for (b, w) in tree_adapter::swap_targets(&tree, a, 2.0) {
        let dist = tree.path_length(a, b).unwrap() as f64;
        assert!((w - dist.powi(-2)).abs() < 1e-15);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tree = DimensionTree::random_binary(7, &mut rng).unwrap();
    let ranks = vec![2; tree.num_nodes()];
    let cfg = TreeProposalConfig::default();
    for _ in 0..10_000 {
        let (a, b) = tree_adapter::draw_swap_pair(&tree, &ranks, &cfg, &mut rng).unwrap();
        assert!(tree.subset(a).is_disjoint(tree.subset(b)));
    }
}

#[test]
fn apply_permutation_preserves_the_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sizes = [3, 2, 3, 2, 3];
    for _ in 0..10 {
        let tree = DimensionTree::random_binary(5, &mut rng).unwrap();
        let g = admissible_random(&tree, &sizes, 3, &mut rng);
        let f = g.full_tensor().unwrap();
        let cfg = TreeProposalConfig::default();
        let (a, b) = tree_adapter::draw_swap_pair(&tree, &g.ranks(), &cfg, &mut rng).unwrap();
        for eps in [1e-12, 0.3] {
            let h = tree_adapter::apply_permutation(&g, a, b, eps).unwrap();
            assert_eq!(h.tree, tree.swap_nodes(a, b).unwrap());
            h.tree.validate().unwrap();
            let diff: f64 = h.full_tensor().unwrap().data.iter().zip(&f.data).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!(diff.sqrt() <= eps * f.norm() * (1.0 + 1e-9) + 1e-12);
        }
    }
}

#[test]
fn sibling_swap_is_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tree = DimensionTree::balanced(4).unwrap();
    let g = admissible_random(&tree, &[2, 3, 2, 3], 3, &mut rng);
    let r = tree.root();
    let (a, b) = (tree.children(r)[0], tree.children(r)[1]);
    let h = tree_adapter::apply_permutation(&g, a, b, 0.0).unwrap();
    let x = [1.0, 2.0, 0.0, 1.0];
    assert!((h.evaluate(&x).unwrap() - g.evaluate(&x).unwrap()).abs() < 1e-12);
}

#[test]
fn markov_permuted_tree_recovers_linear_ranks() {
    let dist = preset("markov-example", 0).unwrap();
    let f = dist.exact_tensor().unwrap();
    let permuted = DimensionTree::linear(8, &[1, 3, 5, 7, 2, 4, 6, 8]).unwrap();
    let mut g = TreeTensor::from_full(&f, &permuted, dist.natural_bases(0), 1e-13).unwrap();
    // bubble the dimensions into natural order by swapping leaves
    let target = [0usize, 1, 2, 3, 4, 5, 6, 7];
    loop {
        let t = &g.tree;
        let order: Vec<usize> = t.pre_order().into_iter().filter(|&a| t.is_leaf(a)).map(|a| t.leaf_dim(a)).collect();
        let Some(i) = (0..8).find(|&i| order[i] != target[i]) else { break };
        let a = t.leaf_of_dim(order[i]);
        let b = t.leaf_of_dim(target[i]);
        g = tree_adapter::apply_permutation(&g, a, b, 1e-13 / 8.0).unwrap();
    }
    let mut ranks: Vec<(DimSet, usize)> = (0..g.tree.num_nodes()).map(|a| (g.tree.subset(a), g.rank(a))).collect();
    ranks.sort();
    let linear = DimensionTree::linear(8, &target.map(|v| v + 1)).unwrap();
    let direct = TreeTensor::from_full(&f, &linear, dist.natural_bases(0), 1e-13).unwrap();
    let mut want: Vec<(DimSet, usize)> = (0..linear.num_nodes()).map(|a| (linear.subset(a), direct.rank(a))).collect();
    want.sort();
    assert_eq!(ranks, want);
    assert_eq!(g.storage_complexity(), 240);
}

#[test]
fn optimize_tree_never_increases_complexity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dist = preset("markov-example", 0).unwrap();
    let f = dist.exact_tensor().unwrap();
    let tree = DimensionTree::random_binary(8, &mut rng).unwrap();
    let g = TreeTensor::from_full(&f, &tree, dist.natural_bases(0), 1e-13).unwrap();
    let cfg = TreeProposalConfig { max_iterations: 60, seed: 4, ..Default::default() };
    let res = tree_adapter::optimize_tree(&g, &cfg).unwrap();
    let acc = res.accepted_complexities();
    assert!(acc.windows(2).all(|w| w[1] <= w[0]));
    assert!(res.model.storage_complexity() <= g.storage_complexity());
    let h = res.model.full_tensor().unwrap();
    let diff: f64 = h.data.iter().zip(&f.data).map(|(x, y)| (x - y) * (x - y)).sum();
    assert!(diff.sqrt() <= cfg.max_iterations as f64 * cfg.epsilon * f.norm());
    res.model.tree.validate().unwrap();

    let one = TreeTensor::rank_one(tree.clone(), vec![Basis::canonical(5); 8], &vec![vec![0.2; 5]; 8]).unwrap();
    let res = tree_adapter::optimize_tree(&one, &cfg).unwrap();
    assert_eq!(res.model.storage_complexity(), one.storage_complexity());
}
