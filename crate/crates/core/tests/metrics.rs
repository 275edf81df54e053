use pan_core::evaluation::{
    average_precision, few_shot_accuracy, fitb_accuracy, mann_whitney_auc, mean_and_interval, rank_report_from_scores,
    recall_from_scores, ConditionScores,
};
use pan_core::{Episode, FitbQuestion, Matrix, PairScorer, PanError, SeedStream, SimilarityGraph};
use proptest::prelude::*;
use rand::Rng;

/// Items carry their own id as the only feature; scores come from a lookup
/// keyed on the two ids.
struct Stub<F: Fn(usize, usize) -> f64>(F);

impl<F: Fn(usize, usize) -> f64> PairScorer for Stub<F> {
    fn score_pairs(&self, x: &Matrix<f64>, _: &SimilarityGraph, pairs: &[(usize, usize)]) -> pan_core::Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|&(i, j)| (self.0)(x.get(i, 0) as usize, x.get(j, 0) as usize))
            .collect())
    }
}

fn id_features(n: usize) -> Matrix<f64> {
    Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap()
}

fn hashed_uniform(seed: u64, i: usize, j: usize) -> f64 {
    SeedStream::new(seed).rng_indexed(&format!("{}", i.min(j)), i.max(j) as u64).random()
}

#[test]
fn fitb_toy_with_forced_scores() {
    let forced = |i: usize, j: usize| -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 5) => 0.9,
            (1, 5) => 0.8,
            (0, 3) => 0.7,
            (1, 3) => 0.1,
            (2, 4) => 0.3,
            (2, 6) => 0.3,
            _ => 0.0,
        }
    };
    let qs = vec![
        FitbQuestion {
            question_items: vec![0, 1],
            candidates: vec![3, 5, 4],
            answer_index: 1,
        },
        FitbQuestion {
            question_items: vec![2],
            candidates: vec![4, 6],
            answer_index: 1,
        },
    ];
    let stub = Stub(forced);
    let x = id_features(7);
    let mut correct = 0;
    for q in &qs {
        let totals: Vec<f64> = q
            .candidates
            .iter()
            .map(|&c| q.question_items.iter().map(|&i| forced(i, c)).sum())
            .collect();
        let mut best = 0;
        for k in 1..totals.len() {
            if totals[k] > totals[best] {
                best = k;
            }
        }
        correct += usize::from(best == q.answer_index);
    }
    let r = fitb_accuracy(&stub, &qs, &x).unwrap();
    assert_eq!(r.value, correct as f64 / 2.0);
    assert_eq!(r.value, 0.5);
}

#[test]
fn auc_of_five_and_five_matches_pairwise_count() {
    let pos = [0.9, 0.4, 0.4, 0.7, 0.1];
    let neg = [0.4, 0.2, 0.8, 0.05, 0.4];
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    assert_eq!(mann_whitney_auc(&pos, &neg).unwrap(), wins / 25.0);
}

fn episodes(n_way: usize, k_shot: usize, n_query: usize, count: usize, seed: u64) -> (Vec<Episode>, usize) {
    let mut rng = SeedStream::new(seed).rng("episodes");
    let per_episode = n_way * (k_shot + n_query);
    let mut out = Vec::new();
    for e in 0..count {
        let base = e * per_episode;
        let mut next = base;
        let mut support = Vec::new();
        for _ in 0..n_way {
            support.push((next..next + k_shot).collect::<Vec<_>>());
            next += k_shot;
        }
        let mut query = Vec::new();
        for slot in 0..n_way {
            for _ in 0..n_query {
                query.push((next, slot));
                next += 1;
            }
        }
        let shift = rng.random_range(0..1000);
        out.push(Episode {
            n_way,
            k_shot,
            support,
            query,
            classes: (0..n_way).map(|c| c + shift).collect(),
        });
    }
    (out, count * per_episode)
}

#[test]
fn constant_scores_hit_the_tie_break_base_rate_exactly() {
    let (eps, n) = episodes(5, 5, 16, 100, 1);
    let r = few_shot_accuracy(&Stub(|_, _| 0.5), &eps, &id_features(n)).unwrap();
    assert_eq!(r.value, 1.0 / 5.0);
}

#[test]
fn uniform_scores_are_at_chance() {
    let (eps, n) = episodes(5, 5, 16, 200, 2);
    let r = few_shot_accuracy(&Stub(|i, j| hashed_uniform(3, i, j)), &eps, &id_features(n)).unwrap();
    let queries = (200 * 5 * 16) as f64;
    let sd = (0.2 * 0.8 / queries).sqrt();
    assert!((r.value - 0.2).abs() < 3.0 * sd, "{}", r.value);
}

#[test]
fn recall_on_ten_queries_matches_full_sort() {
    let mut rng = SeedStream::new(4).rng("recall");
    let gallery_labels: Vec<usize> = (0..12).map(|g| g % 4).collect();
    let query_labels: Vec<usize> = (0..10).map(|q| q % 4).collect();
    let scores: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..12).map(|_| f64::from(rng.random_range(0..6u8))).collect())
        .collect();
    for k in 1..=12 {
        let mut hits = 0;
        for (row, &ql) in scores.iter().zip(&query_labels) {
            let mut ranked: Vec<(f64, usize)> = row.iter().copied().zip(0..).collect();
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            hits += usize::from(ranked[..k].iter().any(|&(_, g)| gallery_labels[g] == ql));
        }
        assert_eq!(recall_from_scores(&scores, &query_labels, &gallery_labels, k).unwrap(), hits as f64 / 10.0);
    }
    assert!(matches!(
        recall_from_scores(&scores, &query_labels, &gallery_labels, 13),
        Err(PanError::Contract(_))
    ));
}

#[test]
fn random_scores_give_base_rate_average_precision() {
    let n = 10_000;
    let mut rng = SeedStream::new(5).rng("ap");
    let replicate = |rng: &mut pan_core::PanRng| {
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let base = labels.iter().filter(|&&l| l).count() as f64 / n as f64;
        average_precision(&scores, &labels).unwrap() - base
    };
    let first = replicate(&mut rng);
    let rest: Vec<f64> = (0..20).map(|_| replicate(&mut rng)).collect();
    let mean = rest.iter().sum::<f64>() / rest.len() as f64;
    let sd = (rest.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rest.len() - 1) as f64).sqrt();
    assert!(first.abs() < 3.0 * sd.max(1e-3), "gap {first}, sd {sd}");
}

#[test]
fn rank_report_of_three_hand_set_runs() {
    let omegas = [[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.5, 0.2, 0.3]];
    let runs: Vec<ConditionScores> = omegas
        .iter()
        .map(|w| ConditionScores {
            rho: Matrix::filled(1, 3, 1.0),
            omega: Matrix::new(1, 3, w.to_vec()).unwrap(),
        })
        .collect();
    let rows = rank_report_from_scores(&runs).unwrap();
    let expected_means = [5.0 / 3.0, 2.0, 7.0 / 3.0];
    let expected_sds = [(4.0f64 / 3.0).sqrt(), 1.0, (1.0f64 / 3.0).sqrt()];
    for (row, (m, s)) in rows.iter().zip(expected_means.iter().zip(&expected_sds)) {
        assert!((row.relevance_mean_rank - m).abs() < 1e-12);
        assert!((row.relevance_sd - s).abs() < 1e-12);
        assert!((row.contribution_mean_rank - m).abs() < 1e-12);
        assert!((row.contribution_sd - s).abs() < 1e-12);
    }
}

#[test]
fn interval_of_three_runs_by_hand() {
    let (mean, half) = mean_and_interval(&[0.70, 0.74, 0.78]);
    assert!((mean - 0.74).abs() < 1e-12);
    assert!((half - 1.96 * 0.04 / 3f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn auc_agrees_with_pairwise_comparison(
        pos in prop::collection::vec(0u8..6, 1..12),
        neg in prop::collection::vec(0u8..6, 1..12),
    ) {
        let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
        let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
        let mut wins = 0.0;
        for p in &pos {
            for n in &neg {
                wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        let auc = mann_whitney_auc(&pos, &neg).unwrap();
        prop_assert!((auc - wins / (pos.len() * neg.len()) as f64).abs() < 1e-12);
    }

    #[test]
    fn average_precision_is_a_probability(
        scores in prop::collection::vec(0u8..5, 2..30),
        labels in prop::collection::vec(any::<bool>(), 2..30),
    ) {
        let n = scores.len().min(labels.len());
        let s: Vec<f64> = scores[..n].iter().map(|&v| f64::from(v)).collect();
        let l = &labels[..n];
        match average_precision(&s, l) {
            Some(ap) => prop_assert!(ap > 0.0 && ap <= 1.0),
            None => prop_assert!(l.iter().all(|&b| b) || l.iter().all(|&b| !b)),
        }
    }
}
