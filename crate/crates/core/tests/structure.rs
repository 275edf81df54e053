use pan_core::attributes::randomize_labels;
use pan_core::csm::init_params;
use pan_core::{
    combine_pair, csm_batch_forward, csm_forward, drop_edges, normalize_adjacency, AttributeTable, CombineFn,
    CsmConfig, CsmParams, Matrix, SeedStream, SimilarityGraph,
};
use proptest::prelude::*;
use rand::Rng;

fn features(rows: usize, d: usize, seed: u64) -> Matrix<f64> {
    let mut rng = SeedStream::new(seed).rng("features");
    Matrix::new(rows, d, (0..rows * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn csm_symmetry_over_a_thousand_pairs() {
    for seed in 0..1000u64 {
        let d = 1 + (seed % 7) as usize;
        let m = 1 + (seed % 5) as usize;
        let params: CsmParams = init_params(d, m, seed).unwrap();
        let x = features(2, d, seed);
        for relevance in [true, false] {
            let cfg = CsmConfig::unsupervised(m).with_relevance(relevance);
            let ij = csm_forward(x.row(0), x.row(1), &params, &cfg).unwrap();
            let ji = csm_forward(x.row(1), x.row(0), &params, &cfg).unwrap();
            assert_eq!(ij.p.to_bits(), ji.p.to_bits(), "seed {seed}");
            assert_eq!(ij.rho, ji.rho);
            assert_eq!(ij.omega, ji.omega);
        }
    }
}

#[test]
fn batch_of_32_equals_single_pair_loop() {
    let (d, m) = (5, 3);
    let params: CsmParams = init_params(d, m, 11).unwrap();
    let x = features(12, d, 12);
    let mut rng = SeedStream::new(13).rng("pairs");
    let pairs: Vec<(usize, usize)> = (0..32).map(|_| (rng.random_range(0..12), rng.random_range(0..12))).collect();
    let cfg = CsmConfig::supervised(m);
    let batch = csm_batch_forward(&pairs, &x, &params, &cfg).unwrap();
    for (out, &(i, j)) in batch.iter().zip(&pairs) {
        let single = csm_forward(x.row(i), x.row(j), &params, &cfg).unwrap();
        assert_eq!(out, &single);
    }
}

#[test]
fn every_combination_on_every_cell_with_masks() {
    for fa in [CombineFn::And, CombineFn::Or, CombineFn::Xor, CombineFn::Xnor] {
        for (a, b) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            for (ka, kb) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
                let lab = combine_pair(&[a], &[ka], &[b], &[kb], fa).unwrap();
                let expected = match fa {
                    CombineFn::And => a & b,
                    CombineFn::Or => a | b,
                    CombineFn::Xor => a ^ b,
                    _ => u8::from(a == b),
                };
                let known = ka == 1 && kb == 1;
                assert_eq!(lab.mask, vec![u8::from(known)], "{fa} mask {ka}{kb}");
                assert_eq!(lab.labels, vec![if known { expected } else { 0 }], "{fa} on {a}{b}");
            }
        }
    }
}

#[test]
fn quoted_examples_of_one_sided_attributes() {
    let one = |fa| combine_pair(&[1], &[1], &[0], &[1], fa).unwrap().labels[0];
    assert_eq!(one(CombineFn::Or), 1);
    assert_eq!(one(CombineFn::Xor), 1);
    assert_eq!(one(CombineFn::And), 0);
    assert_eq!(one(CombineFn::Xnor), 0);
}

#[test]
fn single_edge_normalizes_to_halves() {
    let g = SimilarityGraph::from_edges(2, [(0, 1)]).unwrap();
    let a: Matrix<f64> = normalize_adjacency(&g);
    assert!(a.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn edge_retention_is_binomial() {
    let n = 150;
    let mut g = SimilarityGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            g.add_edge(i, j).unwrap();
        }
    }
    let total = g.edge_count() as f64;
    assert!(total >= 1e4);
    let kept = drop_edges(&g, 0.15, 3).unwrap().edge_count() as f64;
    let sd = (total * 0.85 * 0.15).sqrt();
    assert!((kept - 0.85 * total).abs() < 3.0 * sd, "kept {kept} of {total}");
}

#[test]
fn random_labels_are_fair_over_ten_thousand_cells() {
    let (n, m) = (2000, 5);
    let table = AttributeTable::fully_labeled(n, m, vec![1; n * m]).unwrap();
    let r = randomize_labels(&table, 21);
    let ones = (0..n).map(|i| r.values(i).iter().filter(|&&v| v == 1).count()).sum::<usize>() as f64;
    let total = (n * m) as f64;
    assert!((ones / total - 0.5).abs() < 3.0 * (0.25 / total).sqrt());
}

fn small_graph() -> impl Strategy<Value = SimilarityGraph> {
    (2usize..9).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
            let mut g = SimilarityGraph::empty(n);
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if bits[k] {
                        g.add_edge(i, j).unwrap();
                    }
                    k += 1;
                }
            }
            g
        })
    })
}

proptest! {
    #[test]
    fn csm_outputs_are_well_formed(seed in any::<u64>(), d in 1usize..8, m in 1usize..6, relevance: bool) {
        let params: CsmParams = init_params(d, m, seed).unwrap();
        let x = features(2, d, seed);
        let cfg = CsmConfig::unsupervised(m).with_relevance(relevance);
        let out = csm_forward(x.row(0), x.row(1), &params, &cfg).unwrap();
        prop_assert!(out.rho.iter().all(|&r| r > 0.0 && r < 1.0));
        prop_assert!((out.omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(out.p > 0.0 && out.p < 1.0);
        let ji = csm_forward(x.row(1), x.row(0), &params, &cfg).unwrap();
        prop_assert_eq!(out.p.to_bits(), ji.p.to_bits());
    }

    #[test]
    fn combination_is_symmetric_and_masked(
        a in prop::collection::vec(0u8..2, 6),
        b in prop::collection::vec(0u8..2, 6),
        ka in prop::collection::vec(0u8..2, 6),
        kb in prop::collection::vec(0u8..2, 6),
        which in 0usize..5,
    ) {
        let fa = CombineFn::ALL[which];
        let ab = combine_pair(&a, &ka, &b, &kb, fa).unwrap();
        let ba = combine_pair(&b, &kb, &a, &ka, fa).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(ab.labels.len(), fa.label_len(6));
        for (l, k) in ab.labels.iter().zip(&ab.mask) {
            prop_assert!(*k == 1 || *l == 0);
        }
    }

    #[test]
    fn randomized_labels_keep_the_mask(
        values in prop::collection::vec(0u8..2, 24),
        mask in prop::collection::vec(0u8..2, 24),
        seed: u64,
    ) {
        let table = AttributeTable::new(6, 4, values, mask).unwrap();
        let r = randomize_labels(&table, seed);
        for i in 0..6 {
            prop_assert_eq!(r.mask(i), table.mask(i));
        }
        prop_assert_eq!(r, randomize_labels(&table, seed));
    }

    #[test]
    fn normalized_adjacency_is_symmetric_and_matches_formula(g in small_graph()) {
        let a: Matrix<f64> = normalize_adjacency(&g);
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.get(i, j).to_bits(), a.get(j, i).to_bits());
                let linked = i == j || g.has_edge(i, j);
                let di = (g.degree(i) + 1) as f64;
                let dj = (g.degree(j) + 1) as f64;
                let expected = if linked { 1.0 / (di * dj).sqrt() } else { 0.0 };
                prop_assert!((a.get(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dropped_edges_are_a_subset(g in small_graph(), p in 0.0f64..1.0, seed: u64) {
        let kept = drop_edges(&g, p, seed).unwrap();
        prop_assert_eq!(kept.n(), g.n());
        for (i, j) in kept.edges() {
            prop_assert!(g.has_edge(i, j));
        }
    }
}
