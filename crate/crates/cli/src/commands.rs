use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use mixrec::baselines::{build_table, CooccurrenceTable, ItemCf, Rvi};
use mixrec::data::{
    generate_synthetic, load_bundle, preprocess_movielens, preprocess_recsys, read_clicks, read_ratings, save_bundle,
    ColumnMapping, DatasetBundle,
};
use mixrec::embeddings::{train_cbow, EmbeddingMatrix};
use mixrec::evaluation::{evaluate as eval_report, reports_csv, reports_plot, reports_table, EvalOptions, MetricReport, Recommender};
use mixrec::numerics::Checkpoint;
use mixrec::training::{format_log, train as train_model, Model, ModelConfig};

use crate::config::{DatasetKind, ExperimentConfig};
use crate::output::OutDir;

pub const DATA_DIR: &str = "data";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const MODELS_DIR: &str = "models";
pub const TABLE_FILE: &str = "cooccurrence.tsv";
pub const REPORT_FILE: &str = "report.csv";
pub const PLOT_FILE: &str = "plot.csv";
pub const BASELINE_REPORT_FILE: &str = "baselines.csv";
pub const BASELINE_PLOT_FILE: &str = "baselines_plot.csv";
pub const CLUSTERS_FILE: &str = "clusters.tsv";

fn checkpoint_name(model: &str) -> String {
    format!("{MODELS_DIR}/{model}.json")
}

fn log_name(model: &str) -> String {
    format!("{MODELS_DIR}/{model}.log.csv")
}

fn is_baseline(name: &str) -> bool {
    name.eq_ignore_ascii_case("rvi") || name.eq_ignore_ascii_case("item-cf")
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.exists() {
        bail!("{} not found; {hint}", path.display());
    }
    Ok(())
}

fn load_data(out: &Path) -> Result<DatasetBundle> {
    let dir = out.join(DATA_DIR);
    require(&dir, "run `mixrec preprocess` (or `mixrec synth`) first")?;
    load_bundle(&dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

fn load_embeddings(out: &Path, bundle: &DatasetBundle) -> Result<EmbeddingMatrix> {
    let path = out.join(EMBEDDINGS_FILE);
    require(&path, "run `mixrec embed` first")?;
    Ok(EmbeddingMatrix::load_text(&path, &bundle.vocab)?)
}

fn summarize(bundle: &DatasetBundle) -> String {
    let p = &bundle.provenance;
    format!(
        "sequences train/valid/test: {}/{}/{}\nvocabulary: {}\ndropped items: {}\ndropped sequences: {}",
        bundle.train.len(),
        bundle.valid.len(),
        bundle.test.len(),
        bundle.vocab.len(),
        p.dropped_items,
        p.dropped_sequences
    )
}

fn save_data(out: &OutDir, bundle: &DatasetBundle) -> Result<()> {
    out.write_dir(DATA_DIR, |dir| Ok(save_bundle(dir, bundle)?))?;
    Ok(())
}

pub fn preprocess(cfg: &ExperimentConfig) -> Result<()> {
    let out = OutDir::lock(&cfg.out)?;
    let ds = &cfg.dataset;
    let bundle = match ds.kind {
        DatasetKind::Synthetic => return write_synthetic(cfg, &out).map(|_| ()),
        DatasetKind::Movielens => {
            let path = ds.path.as_ref().ok_or_else(|| anyhow!("no input: pass --input or set dataset.path"))?;
            let mapping = ds.columns.clone().unwrap_or_else(ColumnMapping::movielens);
            preprocess_movielens(read_ratings(path, &mapping)?, &ds.movielens)?
        }
        DatasetKind::Recsys => {
            let path = ds.path.as_ref().ok_or_else(|| anyhow!("no input: pass --input or set dataset.path"))?;
            let mapping = ds.columns.clone().unwrap_or_else(ColumnMapping::recsys);
            preprocess_recsys(read_clicks(path, &mapping)?, &ds.recsys)?
        }
    };
    save_data(&out, &bundle)?;
    println!("{}", summarize(&bundle));
    Ok(())
}

pub fn embed(cfg: &ExperimentConfig) -> Result<()> {
    let out = OutDir::lock(&cfg.out)?;
    let bundle = load_data(&cfg.out)?;
    let seqs = bundle.train_item_sequences(cfg.embedding.include_future);
    let raw = train_cbow(&seqs, bundle.vocab.len(), &cfg.embedding)?;
    let e = raw.normalize(Some(&bundle.vocab))?;
    let path = out.write(EMBEDDINGS_FILE, &e.to_text(&bundle.vocab)?)?;
    println!("{} vectors of dimension {} -> {}", e.vocab_size(), e.dim(), path.display());
    Ok(())
}

fn model_config(cfg: &ExperimentConfig, name: &str, d_emb: usize) -> Result<ModelConfig> {
    let mut mc: ModelConfig = name.parse()?;
    mc = mc.with_dims(d_emb, cfg.model.d_hidden);
    mc.init_scale = cfg.model.init_scale;
    mc.scorer = cfg.model.scorer;
    mc.validate()?;
    Ok(mc)
}

fn model_names(requested: &[String], cfg: &ExperimentConfig, baselines: bool) -> Vec<String> {
    let names = if requested.is_empty() {
        &cfg.model.models
    } else {
        requested
    };
    names.iter().filter(|n| baselines || !is_baseline(n)).cloned().collect()
}

fn train_all(cfg: &ExperimentConfig, out: &OutDir, bundle: &DatasetBundle, e: &EmbeddingMatrix, names: &[String]) -> Result<()> {
    for name in names {
        let mc = model_config(cfg, name, e.dim())?;
        let canonical = mc.name();
        info!("training {canonical}");
        let outcome = train_model(&mc, bundle, e, &cfg.training)?;
        let ckpt = outcome.model.to_checkpoint(cfg.training.precision);
        let path = out.write(&checkpoint_name(&canonical), &ckpt.to_json()?)?;
        out.write(&log_name(&canonical), &format_log(&outcome.log))?;
        println!(
            "{canonical}: best epoch {} of {}, valid F1@{} {:.5} -> {}",
            outcome.state.best_epoch,
            outcome.log.len(),
            cfg.training.early_stop_cutoff,
            outcome.state.best_f1,
            path.display()
        );
    }
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, requested: &[String]) -> Result<()> {
    let out = OutDir::lock(&cfg.out)?;
    let names = model_names(requested, cfg, false);
    if names.is_empty() {
        bail!("no model to train; pass --model NAME (e.g. RNN-ATT-RNN-4)");
    }
    let bundle = load_data(&cfg.out)?;
    let e = load_embeddings(&cfg.out, &bundle)?;
    train_all(cfg, &out, &bundle, &e, &names)
}

fn load_model(out: &Path, name: &str) -> Result<Model> {
    let canonical = name.parse::<ModelConfig>()?.name();
    let path = out.join(checkpoint_name(&canonical));
    require(&path, &format!("run `mixrec train --model {canonical}` first"))?;
    let ckpt = Checkpoint::load(&path)?;
    Model::from_checkpoint(&ckpt).with_context(|| format!("loading {}", path.display()))
}

fn table(out: &Path, bundle: &DatasetBundle) -> Result<CooccurrenceTable> {
    let path = out.join(TABLE_FILE);
    if path.exists() {
        Ok(CooccurrenceTable::load(&path)?)
    } else {
        Ok(build_table(&bundle.train))
    }
}

fn options(cfg: &ExperimentConfig, k: &[usize]) -> Result<EvalOptions> {
    let cutoffs = if k.is_empty() {
        cfg.evaluation.cutoffs.clone()
    } else {
        k.to_vec()
    };
    if cutoffs.contains(&0) {
        bail!("cutoffs must be positive");
    }
    Ok(EvalOptions {
        cutoffs,
        exclude_history: cfg.evaluation.exclude_history,
        threads: cfg.evaluation.threads,
    })
}

fn report_for(out: &Path, bundle: &DatasetBundle, name: &str, opts: &EvalOptions) -> Result<MetricReport> {
    if name.eq_ignore_ascii_case("rvi") {
        return Ok(eval_report(&Rvi, &bundle.test, opts)?);
    }
    if name.eq_ignore_ascii_case("item-cf") {
        let rec = ItemCf {
            table: table(out, bundle)?,
            vocab_size: bundle.vocab.len(),
        };
        return Ok(eval_report(&rec, &bundle.test, opts)?);
    }
    let e = load_embeddings(out, bundle)?;
    let model = load_model(out, name)?;
    Ok(eval_report(&model.recommender(&e), &bundle.test, opts)?)
}

fn write_reports(out: &OutDir, reports: &[MetricReport], csv: &str, plot: &str) -> Result<()> {
    out.write(csv, &reports_csv(reports))?;
    out.write(plot, &reports_plot(reports))?;
    print!("{}", reports_table(reports));
    Ok(())
}

pub fn evaluate(cfg: &ExperimentConfig, requested: &[String], k: &[usize]) -> Result<()> {
    let out = OutDir::lock(&cfg.out)?;
    let names = model_names(requested, cfg, true);
    if names.is_empty() {
        bail!("no model to evaluate; pass --model NAME");
    }
    let bundle = load_data(&cfg.out)?;
    let opts = options(cfg, k)?;
    let reports = names
        .iter()
        .map(|n| report_for(&cfg.out, &bundle, n, &opts))
        .collect::<Result<Vec<_>>>()?;
    write_reports(&out, &reports, REPORT_FILE, PLOT_FILE)
}

pub fn recommend(cfg: &ExperimentConfig, name: &str, history: &[String], k: usize, exclude_history: bool) -> Result<()> {
    if k == 0 {
        bail!("k must be positive");
    }
    let bundle = load_data(&cfg.out)?;
    let ids = history
        .iter()
        .map(|t| bundle.vocab.get(t).ok_or_else(|| anyhow!("item `{t}` is not in the training vocabulary")))
        .collect::<Result<Vec<_>>>()?;
    let exclude: Option<HashSet<usize>> = exclude_history.then(|| ids.iter().copied().collect());
    let ranked = if name.eq_ignore_ascii_case("rvi") {
        Rvi.recommend(&ids, k, exclude.as_ref())?
    } else if name.eq_ignore_ascii_case("item-cf") {
        let rec = ItemCf {
            table: table(&cfg.out, &bundle)?,
            vocab_size: bundle.vocab.len(),
        };
        rec.recommend(&ids, k, exclude.as_ref())?
    } else {
        let e = load_embeddings(&cfg.out, &bundle)?;
        let model = load_model(&cfg.out, name)?;
        model.recommender(&e).recommend(&ids, k, exclude.as_ref())?
    };
    let mut text = String::from("rank\titem\tscore\n");
    for (r, (&item, score)) in ranked.items().iter().zip(ranked.scores()).enumerate() {
        let _ = writeln!(text, "{}\t{}\t{score}", r + 1, bundle.vocab.token(item)?);
    }
    print!("{text}");
    Ok(())
}

pub fn baseline(cfg: &ExperimentConfig, k: &[usize]) -> Result<()> {
    let out = OutDir::lock(&cfg.out)?;
    let bundle = load_data(&cfg.out)?;
    let t = build_table(&bundle.train);
    out.write(TABLE_FILE, &t.to_text())?;
    let opts = options(cfg, k)?;
    let rec = ItemCf {
        table: t,
        vocab_size: bundle.vocab.len(),
    };
    let reports = vec![eval_report(&Rvi, &bundle.test, &opts)?, eval_report(&rec, &bundle.test, &opts)?];
    write_reports(&out, &reports, BASELINE_REPORT_FILE, BASELINE_PLOT_FILE)
}

fn write_synthetic(cfg: &ExperimentConfig, out: &OutDir) -> Result<(DatasetBundle, EmbeddingMatrix)> {
    let data = generate_synthetic(&cfg.dataset.synthetic)?;
    save_data(out, &data.bundle)?;
    out.write(EMBEDDINGS_FILE, &data.embeddings.to_text(&data.bundle.vocab)?)?;
    let mut labels = String::from("item\tcluster\n");
    for (tok, c) in data.bundle.vocab.tokens().iter().zip(&data.item_clusters) {
        let _ = writeln!(labels, "{tok}\t{c}");
    }
    out.write(CLUSTERS_FILE, &labels)?;
    println!("{}", summarize(&data.bundle));
    Ok((data.bundle, data.embeddings))
}

pub fn synth(cfg: &ExperimentConfig, requested: &[String], k: &[usize]) -> Result<()> {
    let out = OutDir::lock(&cfg.out)?;
    let opts = options(cfg, k)?;
    let (bundle, e) = write_synthetic(cfg, &out)?;
    let names = model_names(requested, cfg, true);
    let trainable: Vec<String> = names.iter().filter(|n| !is_baseline(n)).cloned().collect();
    train_all(cfg, &out, &bundle, &e, &trainable)?;
    let reports = names
        .iter()
        .map(|n| report_for(&cfg.out, &bundle, n, &opts))
        .collect::<Result<Vec<_>>>()?;
    write_reports(&out, &reports, REPORT_FILE, PLOT_FILE)
}

