use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use pan_core::csm::init_params;
use pan_core::data::tasks::build_episodes;
use pan_core::evaluation::{
    attribute_map_from_scores, average_precision, compatibility_auc, few_shot_accuracy, fitb_accuracy, recall_at_k,
};
use pan_core::{
    combine_pair, csm_forward, AttributeTable, CombineFn, CsmConfig, CsmParams, DatasetBundle, FitbQuestion, Matrix,
    PairScorer, SeedStream, SimilarityGraph,
};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

const GRADCHECK_SEEDS: u64 = 100;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(10);
const SYMMETRY_PAIRS: u64 = 1000;
const REDUCTION_EPOCHS: &str = "200";
const ORACLE_INSTANCES: u64 = 60;
/// AP sums the same fractions in a different order than the brute force.
const AP_TOLERANCE: f64 = 1e-12;
const TREND_SEEDS: [u64; 3] = [0, 1, 2];
const TREND_BUDGET: Duration = Duration::from_secs(300);
const PAN_MARGIN: f64 = 0.05;
const ATTR_SIM_MARGIN: f64 = 0.02;
const MIN_SEEDS_HOLDING: usize = 2;
const FEWSHOT_EPISODES: &str = "100";
const FEWSHOT_FLOOR: f64 = 0.95;

/// Shared training flags for the trend criteria.
const TREND_TRAINING: [&str; 6] = ["--lambda", "5", "--lr", "0.01", "--epochs", "2000"];

fn pan(args: &[&str]) -> Result<Output> {
    let out = Command::new(env!("CARGO_BIN_EXE_pan"))
        .args(args)
        .env_remove("PAN_SEED")
        .output()
        .context("spawning pan")?;
    Ok(out)
}

fn pan_ok(args: &[&str]) -> Result<Output> {
    let out = pan(args)?;
    ensure!(
        out.status.success(),
        "pan {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(out)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn read_json(path: &Path) -> Result<Value> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// First report value named `metric` in an eval output directory.
fn metric(dir: &Path, name: &str) -> Result<f64> {
    let doc = read_json(&dir.join("metrics.json"))?;
    doc["reports"]
        .as_array()
        .into_iter()
        .flatten()
        .find(|r| r["metric"] == name)
        .and_then(|r| r["value"].as_f64())
        .with_context(|| format!("{name} missing from {}", dir.display()))
}

fn dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        out.insert(entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path())?);
    }
    Ok(out)
}

fn same_outputs(a: &Path, b: &Path) -> Result<usize> {
    let (x, y) = (dir_bytes(a)?, dir_bytes(b)?);
    ensure!(x.keys().eq(y.keys()), "file sets differ: {:?} vs {:?}", x.keys(), y.keys());
    for (name, bytes) in &x {
        ensure!(bytes == &y[name], "{name} differs between runs");
    }
    Ok(x.len())
}

fn gradient_correctness(_: &Path) -> Result<(bool, String)> {
    let start = Instant::now();
    let out = pan(&["gradcheck", "--seeds", &GRADCHECK_SEEDS.to_string(), "--step", "1e-5"])?;
    let elapsed = start.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let worst = stdout.lines().find(|l| l.starts_with("worst")).unwrap_or("no report").to_string();
    let pass = out.status.success() && elapsed < GRADCHECK_BUDGET;
    Ok((pass, format!("{worst}; {:.2}s", elapsed.as_secs_f64())))
}

fn csm_symmetry(_: &Path) -> Result<(bool, String)> {
    let mut mismatches = 0;
    for seed in 0..SYMMETRY_PAIRS {
        let mut rng = SeedStream::new(seed).rng("symmetry");
        let d = rng.random_range(1..17);
        let m = rng.random_range(1..9);
        let params: CsmParams = init_params(d, m, seed)?;
        let hi: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let hj: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let cfg = CsmConfig::unsupervised(m).with_relevance(rng.random_bool(0.5));
        let ij = csm_forward(&hi, &hj, &params, &cfg)?;
        let ji = csm_forward(&hj, &hi, &params, &cfg)?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if ij.p.to_bits() != ji.p.to_bits() || bits(&ij.rho) != bits(&ji.rho) || bits(&ij.omega) != bits(&ji.omega) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} of {SYMMETRY_PAIRS} pairs differ")))
}

fn truth_tables(_: &Path) -> Result<(bool, String)> {
    let table = |fa: CombineFn, a: u8, b: u8| -> Vec<u8> {
        match fa {
            CombineFn::And => vec![a & b],
            CombineFn::Or => vec![a | b],
            CombineFn::Xor => vec![a ^ b],
            CombineFn::Xnor => vec![u8::from(a == b)],
            CombineFn::AndConcatXor => vec![a & b, a ^ b],
        }
    };
    let mut cells = 0;
    let mut wrong = Vec::new();
    for fa in CombineFn::ALL {
        for (a, b) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            for (ka, kb) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
                cells += 1;
                let got = combine_pair(&[a], &[ka], &[b], &[kb], fa)?;
                let known = ka & kb;
                let expected = table(fa, a, b);
                let want_labels: Vec<u8> = expected.iter().map(|v| v * known).collect();
                let want_mask = vec![known; expected.len()];
                if got.labels != want_labels || got.mask != want_mask {
                    wrong.push(format!("{fa}({a},{b}) mask ({ka},{kb})"));
                }
            }
        }
    }
    Ok((wrong.is_empty(), format!("{cells} cells, {} wrong {wrong:?}", wrong.len())))
}

fn loss_reductions(tmp: &Path) -> Result<(bool, String)> {
    let bundle = tmp.join("c4-bundle");
    pan_ok(&["gen", "--out", s(&bundle), "--items", "200", "--seed", "4"])?;
    let run = |name: &str, extra: &[&str]| -> Result<Vec<u8>> {
        let out = tmp.join(name);
        let mut args = vec!["train", "--bundle", s(&bundle), "--out", s(&out), "--seed", "4"];
        args.extend(["--epochs", REDUCTION_EPOCHS, "--lr", "0.01"]);
        args.extend(extra);
        pan_ok(&args)?;
        Ok(std::fs::read(out.join("checkpoint.json"))?)
    };
    let unsupervised = run("c4-unsup", &["--supervision", "unsupervised"])?;
    let zero = run("c4-zero", &["--supervision", "supervised", "--lambda", "0"])?;
    let masked = run("c4-masked", &["--supervision", "supervised", "--lambda", "5", "--no-attributes"])?;
    let supervised = run("c4-sup", &["--supervision", "supervised", "--lambda", "5"])?;
    let pass = zero == unsupervised && masked == unsupervised;
    Ok((
        pass,
        format!(
            "lambda=0 identical: {}, all-masked identical: {}, supervised differs: {}",
            zero == unsupervised,
            masked == unsupervised,
            supervised != unsupervised
        ),
    ))
}

/// Items carry their id as the only feature; scores come from a table.
struct TableScorer(Vec<Vec<f64>>);

impl TableScorer {
    fn score(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }
}

impl PairScorer for TableScorer {
    fn score_pairs(&self, x: &Matrix<f64>, _: &SimilarityGraph, pairs: &[(usize, usize)]) -> pan_core::Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|&(i, j)| self.score(x.get(i, 0) as usize, x.get(j, 0) as usize))
            .collect())
    }
}

fn random_scorer(n: usize, coarse: bool, rng: &mut impl Rng) -> TableScorer {
    let mut t = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = if coarse {
                f64::from(rng.random_range(0..4u8)) / 4.0
            } else {
                rng.random()
            };
            t[i][j] = v;
            t[j][i] = v;
        }
    }
    TableScorer(t)
}

fn ids(n: usize) -> Matrix<f64> {
    Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).expect("column of ids")
}

fn brute_fitb(t: &TableScorer, qs: &[FitbQuestion]) -> f64 {
    let mut correct = 0;
    for q in qs {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, &c) in q.candidates.iter().enumerate() {
            let mut total = 0.0;
            for &i in &q.question_items {
                total += t.score(i, c);
            }
            if total > best_score {
                best = k;
                best_score = total;
            }
        }
        if best == q.answer_index {
            correct += 1;
        }
    }
    correct as f64 / qs.len() as f64
}

fn brute_set_score(t: &TableScorer, set: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for a in 0..set.len() {
        for b in a + 1..set.len() {
            total += t.score(set[a], set[b]);
            count += 1;
        }
    }
    total / count as f64
}

fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn brute_recall(scores: &[Vec<f64>], ql: &[usize], gl: &[usize], k: usize) -> f64 {
    let mut hits = 0;
    for (row, &label) in scores.iter().zip(ql) {
        // Position of gallery item g: how many items beat it, ties going to the lower index.
        let found = (0..row.len()).any(|g| {
            let ahead = (0..row.len())
                .filter(|&o| row[o] > row[g] || (row[o] == row[g] && o < g))
                .count();
            ahead < k && gl[g] == label
        });
        hits += usize::from(found);
    }
    hits as f64 / ql.len() as f64
}

fn brute_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).collect();
    if positives.is_empty() || positives.len() == scores.len() {
        return None;
    }
    let mut total = 0.0;
    for &p in &positives {
        let at_least: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= scores[p]).collect();
        let good = at_least.iter().filter(|&&i| labels[i]).count();
        total += good as f64 / at_least.len() as f64;
    }
    Some(total / positives.len() as f64)
}

fn distinct(n: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(count);
    all
}

fn oracle_instance(seed: u64) -> Result<Vec<String>> {
    let mut rng = SeedStream::new(seed).rng("oracle");
    let n = rng.random_range(8..=20);
    let t = random_scorer(n, seed % 2 == 0, &mut rng);
    let x = ids(n);
    let mut failures = Vec::new();

    let questions: Vec<FitbQuestion> = (0..rng.random_range(1..6))
        .map(|_| {
            let nq = rng.random_range(1..=3);
            let nc = rng.random_range(2..=(n - nq).min(10));
            let picked = distinct(n, nq + nc, &mut rng);
            FitbQuestion {
                question_items: picked[..nq].to_vec(),
                candidates: picked[nq..].to_vec(),
                answer_index: rng.random_range(0..nc),
            }
        })
        .collect();
    if fitb_accuracy(&t, &questions, &x)?.value != brute_fitb(&t, &questions) {
        failures.push("fitb".to_string());
    }

    let mut sets = |count: usize| -> Vec<Vec<usize>> {
        (0..count)
            .map(|_| {
                let size = rng.random_range(2..=4);
                distinct(n, size, &mut rng)
            })
            .collect()
    };
    let (pos, neg) = (sets(3 + seed as usize % 4), sets(2 + seed as usize % 5));
    let score = |sets: &[Vec<usize>]| sets.iter().map(|s| brute_set_score(&t, s)).collect::<Vec<_>>();
    if compatibility_auc(&t, &pos, &neg, &x)?.value != brute_auc(&score(&pos), &score(&neg)) {
        failures.push("auc".to_string());
    }

    let nq = rng.random_range(1..n / 2);
    let ng = n - nq;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let k = rng.random_range(1..=ng);
    let recall = recall_at_k(
        &ids(nq),
        &Matrix::new(ng, 1, (nq..n).map(|i| i as f64).collect())?,
        &labels[..nq],
        &labels[nq..],
        k,
        Some(&t),
    )?;
    let scores: Vec<Vec<f64>> = (0..nq).map(|q| (nq..n).map(|g| t.score(q, g)).collect()).collect();
    if recall.value != brute_recall(&scores, &labels[..nq], &labels[nq..], k) {
        failures.push(format!("recall@{k}"));
    }

    let m = rng.random_range(1..5);
    let values: Vec<u8> = (0..n * m).map(|_| rng.random_range(0..2)).collect();
    let mask: Vec<u8> = (0..n * m).map(|_| u8::from(rng.random_bool(0.8))).collect();
    let table = AttributeTable::new(n, m, values.clone(), mask.clone())?;
    let fa = CombineFn::ALL[rng.random_range(0..4)];
    let pairs: Vec<(usize, usize)> = (0..rng.random_range(6..40)).map(|_| {
        let p = distinct(n, 2, &mut rng);
        (p[0], p[1])
    }).collect();
    let rho = Matrix::new(
        pairs.len(),
        m,
        (0..pairs.len() * m)
            .map(|_| if seed % 2 == 0 { f64::from(rng.random_range(0..3u8)) } else { rng.random() })
            .collect(),
    )?;
    let report = attribute_map_from_scores(&rho, &pairs, &table, fa)?;
    for c in 0..m {
        let (mut sc, mut lab) = (Vec::new(), Vec::new());
        for (r, &(i, j)) in pairs.iter().enumerate() {
            if mask[i * m + c] == 1 && mask[j * m + c] == 1 {
                let (a, b) = (values[i * m + c], values[j * m + c]);
                let on = match fa {
                    CombineFn::And => a & b,
                    CombineFn::Or => a | b,
                    CombineFn::Xor => a ^ b,
                    _ => u8::from(a == b),
                };
                sc.push(rho.get(r, c));
                lab.push(on == 1);
            }
        }
        let expected = brute_ap(&sc, &lab);
        let got = report.per_condition[c].ap;
        let agree = match (got, expected) {
            (Some(g), Some(e)) => (g - e).abs() <= AP_TOLERANCE,
            (None, None) => true,
            _ => false,
        };
        if !agree {
            failures.push(format!("ap condition {c}: {got:?} vs {expected:?}"));
        }
        if let (Some(g), Some(direct)) = (got, average_precision(&sc, &lab)) {
            if g != direct {
                failures.push(format!("ap condition {c} disagrees with direct call"));
            }
        }
    }
    Ok(failures)
}

fn oracle_equivalence(_: &Path) -> Result<(bool, String)> {
    let mut failed = Vec::new();
    for seed in 0..ORACLE_INSTANCES {
        let f = oracle_instance(seed)?;
        if !f.is_empty() {
            failed.push(format!("instance {seed}: {}", f.join(", ")));
        }
    }
    Ok((
        failed.is_empty(),
        format!(
            "{ORACLE_INSTANCES} instances x 4 metrics, {} mismatched {:?}",
            failed.len(),
            failed
        ),
    ))
}

struct TrendRun {
    bayes: f64,
    supervised: f64,
    attr_sim: f64,
    relevance_off: f64,
    random_labels: f64,
}

fn trend_runs(tmp: &Path) -> Result<(Vec<TrendRun>, Duration)> {
    let start = Instant::now();
    let mut runs = Vec::new();
    for seed in TREND_SEEDS {
        let seed_s = seed.to_string();
        let bundle = tmp.join(format!("trend-{seed}"));
        pan_ok(&["gen", "--out", s(&bundle), "--seed", &seed_s])?;
        let bayes = read_json(&bundle.join("oracle_report.json"))?["presence_only_bayes_rate"]
            .as_f64()
            .context("oracle report without bayes rate")?;
        let accuracy = |name: &str, extra: &[&str]| -> Result<f64> {
            let run = tmp.join(format!("trend-{seed}-{name}"));
            let eval = tmp.join(format!("trend-{seed}-{name}-eval"));
            let mut args = vec!["train", "--bundle", s(&bundle), "--out", s(&run), "--seed", &seed_s];
            args.extend(TREND_TRAINING);
            args.extend(extra);
            pan_ok(&args)?;
            let checkpoint = run.join("checkpoint.json");
            pan_ok(&[
                "eval",
                "pair-accuracy",
                "--checkpoint",
                s(&checkpoint),
                "--bundle",
                s(&bundle),
                "--out",
                s(&eval),
                "--seed",
                &seed_s,
                "--eval-pairs",
                "1000",
            ])?;
            metric(&eval, "pair_accuracy")
        };
        runs.push(TrendRun {
            bayes,
            supervised: accuracy("supervised", &["--supervision", "supervised", "--fa", "or"])?,
            attr_sim: accuracy("attr-sim", &["--model", "attr-sim"])?,
            relevance_off: accuracy("relevance-off", &["--supervision", "supervised", "--fa", "or", "--relevance", "off"])?,
            random_labels: accuracy("random-labels", &["--supervision", "supervised", "--fa", "or", "--random-labels"])?,
        });
    }
    Ok((runs, start.elapsed()))
}

fn fmt(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("/")
}

fn information_loss(runs: &[TrendRun], elapsed: Duration) -> (bool, String) {
    let pan_holds = runs.iter().filter(|r| r.supervised >= r.bayes + PAN_MARGIN).count();
    let sim_holds = runs.iter().filter(|r| r.attr_sim <= r.bayes + ATTR_SIM_MARGIN).count();
    let pass = pan_holds >= MIN_SEEDS_HOLDING && sim_holds >= MIN_SEEDS_HOLDING && elapsed < TREND_BUDGET;
    (
        pass,
        format!(
            "bayes {}; pan {} (>= bayes+{PAN_MARGIN} in {pan_holds}/3); attr-sim {} (<= bayes+{ATTR_SIM_MARGIN} in {sim_holds}/3); {:.0}s for all trend runs",
            fmt(runs.iter().map(|r| r.bayes)),
            fmt(runs.iter().map(|r| r.supervised)),
            fmt(runs.iter().map(|r| r.attr_sim)),
            elapsed.as_secs_f64()
        ),
    )
}

fn relevance_ablation(runs: &[TrendRun]) -> (bool, String) {
    let mean = |f: fn(&TrendRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let (full, off) = (mean(|r| r.supervised), mean(|r| r.relevance_off));
    (
        off < full,
        format!(
            "relevance off mean {off:.4} ({}) vs full {full:.4}",
            fmt(runs.iter().map(|r| r.relevance_off))
        ),
    )
}

fn random_label_check(runs: &[TrendRun]) -> (bool, String) {
    let holds = runs.iter().filter(|r| r.random_labels < r.supervised).count();
    (
        holds >= MIN_SEEDS_HOLDING,
        format!(
            "random labels {} vs OR labels {}, below in {holds}/3",
            fmt(runs.iter().map(|r| r.random_labels)),
            fmt(runs.iter().map(|r| r.supervised))
        ),
    )
}

struct Constant;

impl PairScorer for Constant {
    fn score_pairs(&self, _: &Matrix<f64>, _: &SimilarityGraph, pairs: &[(usize, usize)]) -> pan_core::Result<Vec<f64>> {
        Ok(vec![0.5; pairs.len()])
    }
}

fn few_shot_sanity(tmp: &Path) -> Result<(bool, String)> {
    let bundle = tmp.join("fewshot");
    let run = tmp.join("fewshot-run");
    let eval = tmp.join("fewshot-eval");
    pan_ok(&[
        "gen", "--out", s(&bundle), "--task", "fewshot", "--attrs", "8", "--items", "1500", "--noise", "0.1",
        "--separation", "1.0", "--seed", "0",
    ])?;
    pan_ok(&[
        "train", "--bundle", s(&bundle), "--out", s(&run), "--seed", "0", "--epochs", "300", "--lr", "0.01",
        "--validation", "few-shot",
    ])?;
    let checkpoint = run.join("checkpoint.json");
    pan_ok(&[
        "eval", "fewshot", "--checkpoint", s(&checkpoint), "--bundle", s(&bundle), "--out", s(&eval), "--way", "5",
        "--shot", "5", "--query", "16", "--episodes", FEWSHOT_EPISODES, "--seed", "0",
    ])?;
    let trained = metric(&eval, "few_shot_accuracy")?;

    let (b, _) = DatasetBundle::load(&bundle)?;
    let episodes = build_episodes(&b, "novel", 5, 5, 16, 100, 0)?;
    let queries: usize = episodes.iter().map(|e| e.query.len()).sum();
    let first_slot: usize = episodes.iter().map(|e| e.query.iter().filter(|q| q.1 == 0).count()).sum();
    let base_rate = first_slot as f64 / queries as f64;
    let stub = few_shot_accuracy(&Constant, &episodes, &b.features)?.value;
    let pass = trained >= FEWSHOT_FLOOR && stub == base_rate;
    Ok((
        pass,
        format!("trained {trained:.4} (floor {FEWSHOT_FLOOR}); constant stub {stub} vs base rate {base_rate}"),
    ))
}

fn determinism(tmp: &Path) -> Result<(bool, String)> {
    let mut compared = 0;
    let twice = |name: &str, args: &dyn Fn(&Path) -> Vec<String>| -> Result<usize> {
        let (a, b) = (tmp.join(format!("{name}-a")), tmp.join(format!("{name}-b")));
        for dir in [&a, &b] {
            let owned = args(dir);
            pan_ok(&owned.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        same_outputs(&a, &b)
    };
    let strings = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    compared += twice("det-gen", &|d| strings(&["gen", "--out", s(d), "--items", "300", "--seed", "7"]))?;
    let bundle = tmp.join("det-gen-a");
    compared += twice("det-train", &|d| {
        strings(&[
            "train", "--bundle", s(&bundle), "--out", s(d), "--seed", "7", "--encoder", "gcn", "--hidden", "8",
            "--epochs", "60", "--validation-every", "20",
        ])
    })?;
    let checkpoint = tmp.join("det-train-a").join("checkpoint.json");
    for task in ["pair-accuracy", "auc", "fitb", "attr-map"] {
        compared += twice(&format!("det-eval-{task}"), &|d| {
            strings(&["eval", task, "--checkpoint", s(&checkpoint), "--bundle", s(&bundle), "--out", s(d), "--seed", "7"])
        })?;
    }
    Ok((true, format!("{compared} artifacts byte-identical across gen, train and 4 eval tasks")))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir: PathBuf = tmp.path().to_path_buf();
    let mut results: Vec<(&str, Result<(bool, String)>)> = vec![
        ("1 gradient correctness", gradient_correctness(&dir)),
        ("2 bit-exact symmetry", csm_symmetry(&dir)),
        ("3 combination truth tables", truth_tables(&dir)),
        ("4 loss reductions", loss_reductions(&dir)),
        ("5 oracle equivalence", oracle_equivalence(&dir)),
    ];
    match trend_runs(&dir) {
        Ok((runs, elapsed)) => {
            results.push(("6 information-loss trend", Ok(information_loss(&runs, elapsed))));
            results.push(("7 relevance ablation", Ok(relevance_ablation(&runs))));
            results.push(("8 random-label check", Ok(random_label_check(&runs))));
        }
        Err(e) => {
            let msg = format!("{e:#}");
            for name in ["6 information-loss trend", "7 relevance ablation", "8 random-label check"] {
                results.push((name, Err(anyhow::anyhow!(msg.clone()))));
            }
        }
    }
    results.push(("9 few-shot sanity", few_shot_sanity(&dir)));
    results.push(("10 determinism", determinism(&dir)));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok((true, detail)) => println!("criterion {name}: PASS ({detail})"),
            Ok((false, detail)) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
            Err(e) => {
                failed += 1;
                println!("criterion {name}: FAIL (error: {e:#})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
