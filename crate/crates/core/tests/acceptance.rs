//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use mixrec::baselines::{build_table, item_cf_scores};
use mixrec::data::{
    generate_synthetic, parse_clicks, parse_ratings, preprocess_movielens, preprocess_recsys, ColumnMapping,
    InteractionSequence, MovieLensConfig, RecsysConfig, SplitRatios, SyntheticConfig, SyntheticLayout,
};
use mixrec::embeddings::EmbeddingMatrix;
use mixrec::evaluation::{evaluate, ndcg_at_k, precision_at_k, recall_at_k, EvalOptions};
use mixrec::mdn::MixtureParameters;
use mixrec::numerics::gradcheck::check_gradients;
use mixrec::numerics::Precision;
use mixrec::seed::SeedStreams;
use mixrec::training::{format_log, train, Model, ModelConfig, TrainConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn run(n: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let took = start.elapsed();
    let (mut pass, mut detail) = match outcome {
        Ok(v) => (v.pass, v.detail),
        Err(p) => (
            false,
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    };
    if let Some(b) = budget {
        if took > b {
            pass = false;
            detail.push_str(&format!("; exceeded the {}s budget", b.as_secs()));
        }
    }
    println!(
        "criterion {n} [{name}]: {} ({detail}) in {:.1}s",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    pass
}

// 1 -------------------------------------------------------------------------

fn gradient_correctness() -> Verdict {
    let mut rng = SeedStreams::new(11).stream("corpus");
    let rows: Vec<f64> = (0..8 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let e = EmbeddingMatrix::new(8, 4, rows).unwrap().normalize(None).unwrap();
    let seq = InteractionSequence {
        user: "u".into(),
        history: vec![3, 6, 1],
        future: vec![5, 0, 3],
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    for fam in ["CBoI-FF", "RNN-FF", "RNN-RNN", "RNN-ATT-RNN"] {
        for m in [1, 2] {
            let mut cfg: ModelConfig = format!("{fam}-{m}").parse().unwrap();
            cfg = cfg.with_dims(4, 6);
            cfg.init_scale = 0.5;
            let model = Model::new(cfg, &mut SeedStreams::new(m as u64).stream("init")).unwrap();
            let r = check_gradients(model.params(), 1e-5, |g| model.sequence_loss(g, &seq, &e)).unwrap();
            worst = worst.max(r.max_relative_error);
            checked += r.checked;
        }
    }
    verdict(worst < 1e-4, format!("max relative error {worst:.2e} over {checked} entries"))
}

// 2 -------------------------------------------------------------------------

fn random_mixture(rng: &mut impl Rng, m: usize, d: usize) -> MixtureParameters {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    MixtureParameters {
        weights: raw.iter().map(|w| w / total).collect(),
        means: (0..m).map(|_| (0..d).map(|_| rng.random_range(-0.9..0.9)).collect()).collect(),
        variances: (0..m).map(|_| (0..d).map(|_| rng.random_range(0.02..0.5)).collect()).collect(),
    }
}

/// Importance sampling with an isotropic normal proposal of scale `s`.
fn mc_integral(mix: &MixtureParameters, samples: usize, rng: &mut impl Rng) -> f64 {
    let d = mix.dim();
    let s = 1.2f64;
    let log_norm = -(d as f64) * (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let mut scorer = mix.scorer().unwrap();
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for _ in 0..samples {
        let mut sq = 0.0;
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = s * z;
            sq += z * z;
        }
        let log_q = log_norm - 0.5 * sq;
        acc += (scorer.log_density(&x) - log_q).exp();
    }
    acc / samples as f64
}

fn density_validity() -> Verdict {
    // simplex on model outputs across families and component counts
    let mut rng = SeedStreams::new(21).stream("corpus");
    let rows: Vec<f64> = (0..12 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let e = EmbeddingMatrix::new(12, 5, rows).unwrap().normalize(None).unwrap();
    let mut worst_sum = 0.0f64;
    for fam in ["CBoI-FF", "RNN-FF", "RNN-RNN", "RNN-ATT-RNN"] {
        for m in [1, 2, 4, 8] {
            let mut cfg: ModelConfig = format!("{fam}-{m}").parse().unwrap();
            cfg = cfg.with_dims(5, 8);
            cfg.init_scale = 1.0;
            let model = Model::new(cfg, &mut SeedStreams::new(m as u64).stream("init")).unwrap();
            for _ in 0..20 {
                let len = rng.random_range(1..8);
                let h: Vec<usize> = (0..len).map(|_| rng.random_range(0..12)).collect();
                let mix = model.mixture(&h, &e).unwrap();
                if mix.weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                    return verdict(false, format!("{fam}-{m}: weight outside [0, 1]"));
                }
                worst_sum = worst_sum.max((mix.weights.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    if worst_sum > 1e-6 {
        return verdict(false, format!("weights sum off by {worst_sum:.2e}"));
    }
    let mut worst_int = 0.0f64;
    let mut ints = Vec::new();
    for (k, d) in [2usize, 3, 2, 3].into_iter().enumerate() {
        let mix = random_mixture(&mut rng, 2 + k, d);
        let v = mc_integral(&mix, 1_000_000, &mut SeedStreams::new(k as u64).stream("mc"));
        worst_int = worst_int.max((v - 1.0).abs());
        ints.push(format!("{v:.4}"));
    }
    verdict(
        worst_int <= 0.01,
        format!("simplex error {worst_sum:.1e}; integrals {}", ints.join(", ")),
    )
}

// 3 -------------------------------------------------------------------------

struct OracleMetrics {
    precision: f64,
    recall: f64,
    ndcg: f64,
}

fn brute_force(ranked: &[usize], raw_targets: &[usize], k: usize) -> OracleMetrics {
    let mut t: Vec<usize> = Vec::new();
    for &x in raw_targets {
        if !t.contains(&x) {
            t.push(x);
        }
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().enumerate() {
        if pos >= k {
            break;
        }
        if t.contains(item) {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let mut ideal = 0.0;
    for pos in 0..t.len() {
        ideal += 1.0 / ((pos + 2) as f64).log2();
    }
    OracleMetrics {
        precision: hits as f64 / k as f64,
        recall: hits as f64 / t.len() as f64,
        ndcg: dcg / ideal,
    }
}

fn metric_oracles() -> Verdict {
    let mut rng = SeedStreams::new(31).stream("corpus");
    let mut worst_ndcg = 0.0f64;
    for case in 0..1000 {
        let universe = rng.random_range(2..40);
        let mut pool: Vec<usize> = (0..universe).collect();
        let len = rng.random_range(0..=universe.min(25));
        let mut ranked = Vec::with_capacity(len);
        for _ in 0..len {
            ranked.push(pool.swap_remove(rng.random_range(0..pool.len())));
        }
        let raw: Vec<usize> = (0..rng.random_range(1..12)).map(|_| rng.random_range(0..universe)).collect();
        let k = rng.random_range(1..30);
        let set: HashSet<usize> = raw.iter().copied().collect();
        let want = brute_force(&ranked, &raw, k);
        let p = precision_at_k(&ranked, &set, k);
        let r = recall_at_k(&ranked, &set, k).unwrap();
        let n = ndcg_at_k(&ranked, &set, k).unwrap();
        if p != want.precision || r != want.recall {
            return verdict(false, format!("case {case}: P/R {p}/{r} vs {}/{}", want.precision, want.recall));
        }
        worst_ndcg = worst_ndcg.max((n - want.ndcg).abs());
    }
    let hand = ndcg_at_k(&[99, 1], &HashSet::from([1, 2]), 2).unwrap();
    let hand_ok = (hand - 0.3869).abs() < 5e-5;
    verdict(
        worst_ndcg <= 1e-12 && hand_ok,
        format!("1000 instances, max nDCG gap {worst_ndcg:.1e}; nDCG([x,t1],{{t1,t2}}) = {hand:.4}"),
    )
}

// 4 -------------------------------------------------------------------------

fn baseline_oracles() -> Verdict {
    let mut rng = SeedStreams::new(41).stream("corpus");
    let mut worst_sum = 0.0f64;
    for case in 0..100 {
        let vocab = rng.random_range(2..8);
        let seqs: Vec<InteractionSequence> = (0..rng.random_range(1..6))
            .map(|u| InteractionSequence {
                user: format!("u{u}"),
                history: (0..rng.random_range(1..5)).map(|_| rng.random_range(0..vocab)).collect(),
                future: (0..rng.random_range(1..4)).map(|_| rng.random_range(0..vocab)).collect(),
            })
            .collect();
        let table = build_table(&seqs);
        // nested-loop enumeration of (future i, history j) pairs
        let mut counts = vec![vec![0u64; vocab]; vocab];
        for s in &seqs {
            for &j in &s.history {
                for &i in &s.future {
                    counts[i][j] += 1;
                }
            }
        }
        for j in 0..vocab {
            let marginal: u64 = (0..vocab).map(|i| counts[i][j]).sum();
            if table.marginal(j) != marginal {
                return verdict(false, format!("case {case}: marginal of {j}"));
            }
            for i in 0..vocab {
                if table.count(i, j) != counts[i][j] {
                    return verdict(false, format!("case {case}: count ({i}, {j})"));
                }
            }
            if marginal > 0 {
                let total: f64 = (0..vocab).filter_map(|i| table.conditional(i, j)).sum();
                worst_sum = worst_sum.max((total - 1.0).abs());
            }
        }
        let history: Vec<usize> = (0..rng.random_range(1..5)).map(|_| rng.random_range(0..vocab)).collect();
        let got = item_cf_scores(&history, &table, vocab);
        for i in 0..vocab {
            let mut acc = 0.0;
            for &j in &history {
                let marginal: u64 = (0..vocab).map(|x| counts[x][j]).sum();
                if marginal > 0 {
                    acc += counts[i][j] as f64 / marginal as f64;
                }
            }
            let want = acc / history.len() as f64;
            if got[i] != want {
                return verdict(false, format!("case {case}: Item-CF score of {i}: {} vs {want}", got[i]));
            }
        }
    }
    verdict(worst_sum <= 1e-9, format!("100 corpora exact; conditional sums within {worst_sum:.1e}"))
}

// 5-7 -----------------------------------------------------------------------

const SEEDS: u64 = 5;

#[derive(Debug, Clone, Copy)]
struct Run {
    log_likelihood: f64,
    recall10: f64,
}

fn train_config(seed: u64, patience: usize, max_epochs: usize) -> TrainConfig {
    let mut tc = TrainConfig {
        batch_size: 32,
        max_epochs,
        patience,
        seed,
        record_time: false,
        ..Default::default()
    };
    tc.adam.lr = 0.01;
    tc
}

/// Trains every model on every seed's corpus; `[seed][model]`.
fn experiment(
    corpus: impl Fn(u64) -> SyntheticConfig + Sync,
    models: &[&str],
    d_hidden: usize,
    (patience, max_epochs): (usize, usize),
) -> Vec<Vec<Run>> {
    thread::scope(|s| {
        let handles: Vec<_> = (0..SEEDS)
            .map(|seed| {
                let corpus = &corpus;
                s.spawn(move || {
                    let data = generate_synthetic(&corpus(seed)).unwrap();
                    models
                        .iter()
                        .map(|name| {
                            let mc: ModelConfig = name.parse().unwrap();
                            let mc = mc.with_dims(data.embeddings.dim(), d_hidden);
                            let out = train(&mc, &data.bundle, &data.embeddings, &train_config(seed, patience, max_epochs)).unwrap();
                            let ll = out.model.mean_log_likelihood(&data.bundle.test, &data.embeddings).unwrap();
                            let rep = evaluate(&out.model.recommender(&data.embeddings), &data.bundle.test, &EvalOptions::default())
                                .unwrap();
                            Run {
                                log_likelihood: ll,
                                recall10: rep.at(10).unwrap().recall,
                            }
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn table(runs: &[Vec<Run>], models: &[&str]) -> String {
    let mut parts = Vec::new();
    for (seed, row) in runs.iter().enumerate() {
        let cells: Vec<String> = models
            .iter()
            .zip(row)
            .map(|(m, r)| format!("{m} ll {:.2} R@10 {:.3}", r.log_likelihood, r.recall10))
            .collect();
        parts.push(format!("seed {seed}: {}", cells.join(", ")));
    }
    parts.join(" | ")
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn synthetic(layout: SyntheticLayout, modality: usize, types: usize, history_len: usize, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        layout,
        vocab_size: 200,
        sequences: 2000,
        types,
        modality,
        history_len,
        future_len: 5,
        seed,
        ..Default::default()
    }
}

fn multimodality() -> Verdict {
    let models = ["RNN-RNN-1", "RNN-RNN-2"];
    let runs = experiment(|s| synthetic(SyntheticLayout::Hub, 2, 8, 8, s), &models, 32, (5, 40));
    let ll_wins = runs.iter().filter(|r| r[1].log_likelihood > r[0].log_likelihood).count();
    let r1 = mean(runs.iter().map(|r| r[0].recall10));
    let r2 = mean(runs.iter().map(|r| r[1].recall10));
    let gain = r2 / r1 - 1.0;
    verdict(
        ll_wins >= 4 && gain >= 0.10,
        format!(
            "log-likelihood higher in {ll_wins}/5 seeds; mean R@10 {r1:.3} -> {r2:.3} ({:+.0}%); {}",
            100.0 * gain,
            table(&runs, &models)
        ),
    )
}

fn encoder_order() -> Verdict {
    let models = ["RNN-FF-2", "CBoI-FF-2"];
    let runs = experiment(|s| synthetic(SyntheticLayout::Ordered, 1, 3, 5, s), &models, 32, (5, 40));
    let wins = runs.iter().filter(|r| r[0].recall10 > r[1].recall10).count();
    verdict(
        wins >= 4,
        format!("RNN-FF-2 beats CBoI-FF-2 on R@10 in {wins}/5 seeds; {}", table(&runs, &models)),
    )
}

fn attention_trend() -> Verdict {
    let models = ["RNN-ATT-RNN-4", "RNN-RNN-4", "RNN-ATT-RNN-2", "RNN-ATT-RNN-1"];
    let runs = experiment(|s| synthetic(SyntheticLayout::Hub, 4, 5, 8, s), &models, 32, (5, 40));
    let wins = runs.iter().filter(|r| r[0].log_likelihood >= r[1].log_likelihood).count();
    let med = |k: usize| median(runs.iter().map(|r| r[k].recall10).collect());
    let (m1, m2, m4) = (med(3), med(2), med(0));
    verdict(
        wins >= 3 && m1 <= m2 && m2 <= m4,
        format!(
            "RNN-ATT-RNN-4 >= RNN-RNN-4 log-likelihood in {wins}/5 seeds; median R@10 m=1 {m1:.3}, m=2 {m2:.3}, m=4 {m4:.3}; {}",
            table(&runs, &models)
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn determinism() -> Verdict {
    let data = generate_synthetic(&SyntheticConfig {
        sequences: 300,
        vocab_size: 80,
        types: 3,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let mut same = true;
    let mut families = Vec::new();
    for name in ["RNN-ATT-RNN-2", "CBoI-FF-2"] {
        let mc: ModelConfig = name.parse().unwrap();
        let mc = mc.with_dims(data.embeddings.dim(), 12);
        let tc = TrainConfig {
            max_epochs: 3,
            batch_size: 16,
            threads: 1,
            seed: 8,
            record_time: false,
            ..Default::default()
        };
        let a = train(&mc, &data.bundle, &data.embeddings, &tc).unwrap();
        let b = train(&mc, &data.bundle, &data.embeddings, &tc).unwrap();
        let la = format_log(&a.log);
        let ca = a.model.to_checkpoint(Precision::F64).to_json().unwrap();
        let cb = b.model.to_checkpoint(Precision::F64).to_json().unwrap();
        same &= la == format_log(&b.log) && ca == cb;
        families.push(format!("{name} {} log bytes, {} checkpoint bytes", la.len(), ca.len()));
    }
    verdict(same, format!("bit-identical logs and checkpoints: {}", families.join("; ")))
}

// 9 -------------------------------------------------------------------------

fn preprocessing_fidelity() -> Verdict {
    // MovieLens: user a has 20 positives (m1..m20 in time order, listed out of
    // order) and two low ratings; user b has 14 positives.
    let mut rows = vec!["userId,movieId,rating,timestamp".to_string()];
    for t in (1..=20).rev() {
        rows.push(format!("a,m{t},{},{}", if t % 2 == 0 { "4.0" } else { "5.0" }, 100 + t));
    }
    rows.push("a,low1,3.5,150".into());
    rows.push("a,low2,1.0,50".into());
    for t in 1..=14 {
        rows.push(format!("b,n{t},4.5,{t}"));
    }
    let text = rows.join("\n");
    let parsed = parse_ratings(text.as_bytes(), &ColumnMapping::movielens(), "fixture").unwrap();
    let cfg = MovieLensConfig {
        ratios: SplitRatios {
            train: 1.0,
            valid: 0.0,
            test: 0.0,
        },
        ..Default::default()
    };
    let ml = preprocess_movielens(parsed, &cfg).unwrap();
    let tokens = |ids: &[usize], b: &mixrec::data::ItemVocabulary| -> Vec<String> {
        ids.iter().map(|&i| b.token(i).unwrap().to_string()).collect()
    };
    let names = |r: std::ops::RangeInclusive<usize>, p: &str| r.map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let ml_ok = ml.train.len() == 1
        && ml.train[0].user == "a"
        && tokens(&ml.train[0].history, &ml.vocab) == names(6..=15, "m")
        && tokens(&ml.train[0].future, &ml.vocab) == names(16..=20, "m");

    // RecSys: s1 has 15 clicks with item x at positions 3 and 14, s2 has 14,
    // s3 has 17.
    let mut clicks = Vec::new();
    for p in 1..=15 {
        let item = if p == 3 || p == 14 { "x".to_string() } else { format!("c{p}") };
        clicks.push(format!("s1,2014-04-01T10:{p:02}:00.000Z,{item},0"));
    }
    for p in 1..=14 {
        clicks.push(format!("s2,2014-04-01T11:{p:02}:00.000Z,d{p},0"));
    }
    for p in (1..=17).rev() {
        clicks.push(format!("s3,2014-04-02T09:{p:02}:00.000Z,e{p},0"));
    }
    let parsed = parse_clicks(clicks.join("\n").as_bytes(), &ColumnMapping::recsys(), "fixture").unwrap();
    let rc = preprocess_recsys(
        parsed,
        &RecsysConfig {
            ratios: SplitRatios {
                train: 1.0,
                valid: 0.0,
                test: 0.0,
            },
            ..Default::default()
        },
    )
    .unwrap();
    let by_user: BTreeMap<&str, &InteractionSequence> = rc.train.iter().map(|s| (s.user.as_str(), s)).collect();
    let mut s1_history = names(1..=13, "c");
    s1_history[2] = "x".into();
    let rc_ok = by_user.len() == 2
        && !by_user.contains_key("s2")
        && tokens(&by_user["s1"].history, &rc.vocab) == s1_history
        && tokens(&by_user["s1"].future, &rc.vocab) == vec!["x".to_string(), "c15".to_string()]
        && tokens(&by_user["s3"].history, &rc.vocab) == names(1..=13, "e")
        && tokens(&by_user["s3"].future, &rc.vocab) == names(16..=17, "e");
    verdict(
        ml_ok && rc_ok,
        format!("MovieLens 10/5 split {}; RecSys 13/2 split {}", if ml_ok { "exact" } else { "WRONG" }, if rc_ok { "exact" } else { "WRONG" }),
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let minute = Duration::from_secs(60);
    let criteria: Vec<(usize, &str, Option<Duration>, fn() -> Verdict)> = vec![
        (1, "gradient correctness", Some(minute), gradient_correctness),
        (2, "density validity", Some(minute), density_validity),
        (3, "metric oracles", None, metric_oracles),
        (4, "baseline oracles", None, baseline_oracles),
        (5, "multimodality", Some(10 * minute), multimodality),
        (6, "encoder ordering", None, encoder_order),
        (7, "attention trend", None, attention_trend),
        (8, "determinism", None, determinism),
        (9, "preprocessing fidelity", None, preprocessing_fidelity),
    ];
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        if !run(n, name, budget, f) {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
