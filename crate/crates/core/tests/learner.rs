use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treedens::learner::{self, LearnerConfig, Sparsity};
use treedens::{Basis, DimensionTree, SampleSet, TreeTensor};

fn cfg() -> LearnerConfig {
    LearnerConfig { max_sweeps: 30, stagnation_tol: 0.0, ..Default::default() }
}

fn random_discrete(n: usize, sizes: &[usize], rng: &mut ChaCha8Rng) -> SampleSet {
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| sizes.iter().map(|&k| rng.random_range(0..k) as f64).collect()).collect();
    SampleSet::from_rows(&rows).unwrap()
}

fn frequency_table(s: &SampleSet, sizes: &[usize]) -> Vec<f64> {
    let mut f = vec![0.0; sizes.iter().product()];
    for i in 0..s.n() {
        let mut idx = 0;
        for (nu, &k) in sizes.iter().enumerate() {
            idx = idx * k + s.point(i)[nu] as usize;
        }
        f[idx] += 1.0 / s.n() as f64;
    }
    f
}

#[test]
fn full_rank_fit_is_frequency_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sizes = [3, 4, 2];
    let tree = DimensionTree::balanced(3).unwrap();
    let bases: Vec<Basis> = sizes.iter().map(|&k| Basis::canonical(k)).collect();
    let s = random_discrete(50, &sizes, &mut rng);
    // full ranks: every α-rank equals min(#α states, #α^c states)
    let mut ranks = vec![1; tree.num_nodes()];
    for a in 0..tree.num_nodes() {
        if a == tree.root() {
            continue;
        }
        let inside: usize = tree.subset(a).iter().map(|nu| sizes[nu]).product();
        let total: usize = sizes.iter().product();
        ranks[a] = inside.min(total / inside);
    }
    let fit = learner::fit_fixed(&tree, &ranks, &bases, &s, &cfg()).unwrap();
    let full = fit.model.full_tensor().unwrap();
    let freq = frequency_table(&s, &sizes);
    for (a, b) in full.data.iter().zip(&freq) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    let risk = learner::empirical_risk(&fit.model, &s).unwrap();
    let norm2: f64 = freq.iter().map(|v| v * v).sum();
    assert!((risk + norm2).abs() < 1e-10);
    assert!(fit.max_risk_increase() <= 1e-10);
}

#[test]
fn point_mass_sample_gives_indicator() {
    let tree = DimensionTree::balanced(2).unwrap();
    let bases = vec![Basis::canonical(3), Basis::canonical(3)];
    let s = SampleSet::from_rows(&vec![vec![0.0, 0.0]; 7]).unwrap();
    let fit = learner::fit_fixed(&tree, &[1, 3, 3], &bases, &s, &cfg()).unwrap();
    let full = fit.model.full_tensor().unwrap();
    for (i, v) in full.data.iter().enumerate() {
        let want = if i == 0 { 1.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-10);
    }
}

#[test]
fn rank_one_fit_matches_leading_singular_triple() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sizes = [4, 5];
    let tree = DimensionTree::balanced(2).unwrap();
    let bases = vec![Basis::canonical(4), Basis::canonical(5)];
    let s = random_discrete(200, &sizes, &mut rng);
    let fit = learner::fit_fixed(&tree, &[1, 1, 1], &bases, &s, &cfg()).unwrap();
    let full = fit.model.full_tensor().unwrap();
    let freq = frequency_table(&s, &sizes);
    let sv = treedens::linalg::singular_values(&freq, 4, 5).unwrap();
    // best rank-one approximation: error² = Σ_{k>1} σ_k²
    let err2: f64 = full.data.iter().zip(&freq).map(|(a, b)| (a - b) * (a - b)).sum();
    let tail: f64 = sv[1..].iter().map(|v| v * v).sum();
    assert!((err2 - tail).abs() < 1e-10, "{err2} vs {tail}");
    assert!(fit.max_risk_increase() <= 1e-10);
}

fn brute_force_loo(pattern: &[usize], psi: &[f64], n: usize, k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let mut c = vec![0.0; k];
        for l in 0..n {
            if l != i {
                for &j in pattern {
                    c[j] += psi[l * k + j] / (n - 1) as f64;
                }
            }
        }
        let norm2: f64 = c.iter().map(|v| v * v).sum();
        let val: f64 = pattern.iter().map(|&j| c[j] * psi[i * k + j]).sum();
        total += norm2 - 2.0 * val;
    }
    total / n as f64
}

#[test]
fn loo_closed_form_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(2..=30);
        let k = rng.random_range(1..=40);
        let psi: Vec<f64> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pattern: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
        let a = learner::loo_risk(&pattern, &psi, n, k).unwrap();
        let b = brute_force_loo(&pattern, &psi, n, k);
        let c = learner::loo_risk_pairwise(&pattern, &psi, n, k).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        assert!((a - c).abs() < 1e-10, "{a} vs {c}");
    }
    assert_eq!(learner::loo_risk(&[], &[1.0, 2.0], 2, 1).unwrap(), 0.0);
    assert!(learner::loo_risk(&[0], &[1.0], 1, 1).is_err());
}

#[test]
fn core_update_is_exact_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let tree = DimensionTree::linear(3, &[1, 2, 3]).unwrap();
    let bases = vec![Basis::legendre(-1.0, 1.0, 3); 3];
    let rows: Vec<Vec<f64>> = (0..80).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let s = SampleSet::from_rows(&rows).unwrap();
    let mut g = TreeTensor::random(tree.clone(), bases, &[1, 2, 2, 2, 2], &mut rng).unwrap();
    for a in 0..tree.num_nodes() {
        g.orthonormalize_at(a).unwrap();
        let c = learner::core_update(&g, a, &s).unwrap();
        g.cores[a] = c.clone();
        let r0 = learner::empirical_risk(&g, &s).unwrap();
        let delta: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-0.1..0.1)).collect();
        let d2: f64 = delta.iter().map(|v| v * v).sum();
        for (v, dv) in g.cores[a].data.iter_mut().zip(&delta) {
            *v += dv;
        }
        let r1 = learner::empirical_risk(&g, &s).unwrap();
        assert!((r1 - r0 - d2).abs() < 1e-10, "{} vs {}", r1 - r0, d2);
        g.cores[a] = c;
        // norm identity at the center
        assert!((g.norm().powi(2) - g.cores[a].norm().powi(2)).abs() < 1e-10);
    }
}

#[test]
fn sparse_candidates_and_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tree = DimensionTree::balanced(2).unwrap();
    let bases = vec![Basis::legendre(0.0, 1.0, 5); 2];
    // density 2x on the first axis, uniform on the second: degree 1 suffices
    let rows: Vec<Vec<f64>> =
        (0..2000).map(|_| vec![rng.random::<f64>().sqrt(), rng.random::<f64>()]).collect();
    let s = SampleSet::from_rows(&rows).unwrap();
    let mut g = TreeTensor::random(tree.clone(), bases, &[1, 1, 1], &mut rng).unwrap();
    let leaf = tree.leaf_of_dim(0);
    g.orthonormalize_at(leaf).unwrap();
    let cands = learner::sparse_candidates(&g, leaf, &s, Sparsity::WorkingSet).unwrap();
    assert_eq!(cands.len(), 6);
    let full = learner::core_update(&g, leaf, &s).unwrap();
    assert_eq!(cands.last().unwrap().1, full);
    for (p, c) in &cands {
        for j in 0..c.len() {
            let want = if p.contains(&j) { full.data[j] } else { 0.0 };
            assert_eq!(c.data[j], want);
        }
    }
    let psi = learner::psi_samples(&g, leaf, &s).unwrap();
    let (p, _) = learner::select_core(&cands, &psi, s.n()).unwrap();
    assert!(p.len() <= 4, "selected degree {}", p.len() - 1);
    let single = learner::select_core(&cands[2..3], &psi, s.n()).unwrap();
    assert_eq!(single, cands[2]);
    let mut doubled = cands.clone();
    doubled.extend(cands.clone());
    assert_eq!(learner::select_core(&doubled, &psi, s.n()).unwrap().0, p);

    let th = learner::sparse_candidates(&g, leaf, &s, Sparsity::Thresholding).unwrap();
    assert_eq!(th.len(), 6);
}

#[test]
fn risk_identity_and_zero_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tree = DimensionTree::balanced(3).unwrap();
    let bases = vec![Basis::legendre(-1.0, 1.0, 2); 3];
    let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let s = SampleSet::from_rows(&rows).unwrap();
    let z = TreeTensor::zeros(tree.clone(), bases.clone(), &vec![1; tree.num_nodes()]).unwrap();
    assert_eq!(learner::empirical_risk(&z, &s).unwrap(), 0.0);
    let g = TreeTensor::random(tree.clone(), bases, &vec![2; tree.num_nodes()].iter().enumerate().map(|(a, &r)| if a == tree.root() { 1 } else { r }).collect::<Vec<_>>(), &mut rng).unwrap();
    let r = learner::empirical_risk(&g, &s).unwrap();
    let mean: f64 = (0..s.n()).map(|i| g.evaluate(s.point(i)).unwrap()).sum::<f64>() / s.n() as f64;
    assert!((r + 2.0 * mean - g.norm().powi(2)).abs() < 1e-12);
    assert_eq!(learner::test_risk(&g, &s).unwrap(), r);
}

#[test]
fn single_sample_falls_back_to_plain_update() {
    let tree = DimensionTree::balanced(2).unwrap();
    let bases = vec![Basis::legendre(0.0, 1.0, 3); 2];
    let s = SampleSet::from_rows(&[vec![0.3, 0.6]]).unwrap();
    let fit = learner::fit_fixed(&tree, &[1, 1, 1], &bases, &s, &cfg()).unwrap();
    assert!(fit.max_risk_increase() <= 1e-10);
}
