//! Question, negative-set and episode construction from a bundle.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::{PanError, Result};
use crate::evaluation::{Episode, FitbQuestion};
use crate::rng::rng_from_seed;

use super::bundle::{items_by_category, DatasetBundle};

/// One question per set: a uniformly chosen member becomes the answer and
/// `num_choices - 1` distractors of its category are drawn from `pool`.
pub fn build_fitb_questions(
    outfit_sets: &[Vec<usize>],
    num_choices: usize,
    categories: &[usize],
    pool: &[usize],
    seed: u64,
) -> Result<Vec<FitbQuestion>> {
    if num_choices == 0 {
        return Err(PanError::contract("num_choices must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let by_cat = items_by_category(categories, pool);
    let mut out = Vec::with_capacity(outfit_sets.len());
    for set in outfit_sets {
        if set.len() < 2 {
            return Err(PanError::Contract(format!("set {set:?} is too small to pose a question")));
        }
        let pos = rng.random_range(0..set.len());
        let answer = set[pos];
        let cat = categories[answer];
        let members: BTreeSet<usize> = set.iter().copied().collect();
        let options: Vec<usize> = by_cat
            .get(&cat)
            .map(|v| v.iter().copied().filter(|i| !members.contains(i)).collect())
            .unwrap_or_default();
        if options.len() < num_choices - 1 {
            return Err(PanError::Generation(format!(
                "category {cat} has {} distractors available, {} needed",
                options.len(),
                num_choices - 1
            )));
        }
        let mut candidates: Vec<usize> = options.choose_multiple(&mut rng, num_choices - 1).copied().collect();
        let answer_index = rng.random_range(0..=candidates.len());
        candidates.insert(answer_index, answer);
        let question_items = set.iter().copied().filter(|&i| i != answer).collect();
        out.push(FitbQuestion {
            question_items,
            candidates,
            answer_index,
        });
    }
    Ok(out)
}

/// For each set, replaces a uniform count in `[1, len]` of positions with
/// same-category items from `pool` not already in the set.
pub fn resample_negative_sets(
    positive_sets: &[Vec<usize>],
    categories: &[usize],
    pool: &[usize],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut rng = rng_from_seed(seed);
    let by_cat = items_by_category(categories, pool);
    let mut out = Vec::with_capacity(positive_sets.len());
    for set in positive_sets {
        if set.is_empty() {
            return Err(PanError::contract("cannot resample an empty set"));
        }
        let r = rng.random_range(1..=set.len());
        let mut positions: Vec<usize> = (0..set.len()).collect();
        positions.shuffle(&mut rng);
        let mut neg = set.clone();
        let mut used: BTreeSet<usize> = set.iter().copied().collect();
        for &p in &positions[..r] {
            let cat = categories[set[p]];
            let options: Vec<usize> = by_cat
                .get(&cat)
                .map(|v| v.iter().copied().filter(|i| !used.contains(i)).collect())
                .unwrap_or_default();
            let &pick = options.choose(&mut rng).ok_or_else(|| {
                PanError::Generation(format!("category {cat} has no unused replacement item"))
            })?;
            used.insert(pick);
            neg[p] = pick;
        }
        out.push(neg);
    }
    Ok(out)
}

/// `count` episodes over classes (category labels) of `split`.
pub fn build_episodes(
    bundle: &DatasetBundle,
    split: &str,
    n_way: usize,
    k_shot: usize,
    n_query: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    if n_way == 0 || k_shot == 0 || n_query == 0 {
        return Err(PanError::contract("n_way, k_shot and n_query must be at least 1"));
    }
    let labels = bundle
        .categories
        .as_ref()
        .ok_or_else(|| PanError::contract("episodes need category labels"))?;
    let by_class = items_by_category(labels, bundle.split(split)?);
    let eligible: Vec<(usize, &Vec<usize>)> = by_class
        .iter()
        .filter(|(_, items)| items.len() >= k_shot + n_query)
        .map(|(c, items)| (*c, items))
        .collect();
    if eligible.len() < n_way {
        return Err(PanError::Generation(format!(
            "split {split:?} has {} classes with {} items, {n_way} needed",
            eligible.len(),
            k_shot + n_query
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let chosen: Vec<&(usize, &Vec<usize>)> = eligible.choose_multiple(&mut rng, n_way).collect();
        let mut support = Vec::with_capacity(n_way);
        let mut query = Vec::with_capacity(n_way * n_query);
        let mut classes = Vec::with_capacity(n_way);
        for (slot, (class, items)) in chosen.into_iter().enumerate() {
            let draw: Vec<usize> = items.choose_multiple(&mut rng, k_shot + n_query).copied().collect();
            support.push(draw[..k_shot].to_vec());
            query.extend(draw[k_shot..].iter().map(|&i| (i, slot)));
            classes.push(*class);
        }
        out.push(Episode {
            n_way,
            k_shot,
            support,
            query,
            classes,
        });
    }
    Ok(out)
}
