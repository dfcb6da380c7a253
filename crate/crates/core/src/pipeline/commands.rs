//! File-based stages. Every stage reads and writes under one output root:
//!
//! ```text
//! <out>/data/         catalogs and logs (synth-gen)
//! <out>/vocab/        vocabularies, categories, buckets, validation users (build-vocab)
//! <out>/models/       sdae.bin (train-sdae), dsn.bin + trace (train)
//! <out>/checkpoints/  one model per epoch and index.tsv (train)
//! <out>/reports/      evaluation reports and recommendations
//! ```
//!
//! Each directory a stage writes gets the resolved configuration as
//! `config.toml` and a `MANIFEST` of SHA-256 hashes; stages verify the
//! manifests of the directories they read.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::prepare::{prepare, validation_split, Corpus, FeatureSpace, Prepared};
use crate::config::Config;
use crate::data;
use crate::dsn::{DsnModel, LossComponents, LossWeights, ObjectiveGraph};
use crate::eval::{mean_sd, popularity_baseline, EvalReport, Method, RankMetrics, TABLE_HEADER};
use crate::features::{CategorySet, ItemFeaturizer, PlaytimeBuckets, SparseVec, Vocabulary};
use crate::nn::{grad_check, GradCheckOptions, GradCheckReport, GrlMode, Matrix, SoftmaxMlpGraph};
use crate::persist;
use crate::sdae::{densify, SdaeGraph, SdaeModel};
use crate::serve::recommend_topk;
use crate::synth::{self, generate};
use crate::train::{grid_search, initial_models, pretrain_sdae, train, TrainConfig, TrainOutcome, CHECKPOINT_INDEX_HEADER};
use crate::{Error, Result};

pub const CONFIG_ECHO: &str = "config.toml";
pub const MANIFEST: &str = "MANIFEST";

pub const USER_VOCAB_FILE: &str = "user_vocab.tsv";
pub const ITEM_VOCAB_FILE: &str = "item_vocab.tsv";
pub const CATEGORIES_FILE: &str = "categories.txt";
pub const BUCKETS_FILE: &str = "buckets.json";
pub const VALIDATION_USERS_FILE: &str = "validation_users.tsv";

pub const SDAE_FILE: &str = "sdae.bin";
pub const DSN_FILE: &str = "dsn.bin";
pub const TRACE_FILE: &str = "trace.tsv";
pub const SELECTED_FILE: &str = "selected.txt";
pub const CHECKPOINT_INDEX_FILE: &str = "index.tsv";

pub const REPORTS_FILE: &str = "eval_reports.json";
pub const TABLE_FILE: &str = "eval_table.tsv";
pub const SUMMARY_FILE: &str = "eval_summary.tsv";
pub const RECOMMENDATIONS_FILE: &str = "recommendations.tsv";

pub const TRACE_HEADER: &str = "step\ttotal\ttask\trecon\tdifference\tsimilarity\titem\tir\tweight_norm";

/// Directory layout under one output root.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
    pub data: PathBuf,
}

impl Layout {
    pub fn new(out: &Path, config: &Config) -> Layout {
        Layout {
            root: out.to_path_buf(),
            data: out.join(&config.data_dir),
        }
    }
    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab")
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn manifest_entries(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut names = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != MANIFEST && entry.path().is_file() {
            names.insert(name);
        }
    }
    names
        .into_iter()
        .map(|n| Ok((sha256_file(&dir.join(&n))?, n)))
        .collect()
}

/// Writes `<dir>/MANIFEST`: one `sha256  name` line per file, sorted by name.
pub fn write_manifest(dir: &Path) -> Result<()> {
    let mut text = String::new();
    for (hash, name) in manifest_entries(dir)? {
        text.push_str(&format!("{hash}  {name}\n"));
    }
    write_file(&dir.join(MANIFEST), text)
}

/// Checks that every file listed in `<dir>/MANIFEST` still has its hash.
pub fn verify_manifest(dir: &Path) -> Result<()> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    for line in text.lines() {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| Error::Format(format!("{}: bad manifest line `{line}`", path.display())))?;
        let actual = sha256_file(&dir.join(name))?;
        if actual != hash {
            return Err(Error::Format(format!(
                "{}: hash mismatch (manifest {hash}, file {actual})",
                dir.join(name).display()
            )));
        }
    }
    Ok(())
}

/// Echoes the configuration and seals the directory.
fn finish_dir(dir: &Path, config: &Config) -> Result<()> {
    write_file(&dir.join(CONFIG_ECHO), config.to_toml()?)?;
    write_manifest(dir)
}

/// `synth-gen`: generates a task and writes it to the data directory.
pub fn synth_gen(config: &Config, out: &Path) -> Result<PathBuf> {
    let layout = Layout::new(out, config);
    let task = generate(&config.synth)?;
    create_dir(&layout.data)?;
    task.write(&layout.data)?;
    finish_dir(&layout.data, config)?;
    Ok(layout.data)
}

pub fn read_corpus(layout: &Layout) -> Result<Corpus> {
    verify_manifest(&layout.data)?;
    Corpus::read(&layout.data)
}

/// `build-vocab`: draws the validation split and fits the vocabularies on
/// the training users.
pub fn build_vocab(config: &Config, out: &Path) -> Result<PathBuf> {
    let layout = Layout::new(out, config);
    let corpus = read_corpus(&layout)?;
    let (train_users, val_users) =
        validation_split(corpus.source.len(), config.features.validation_fraction, config.seed);
    let space = FeatureSpace::build(&corpus, &train_users, &config.features)?;
    let dir = layout.vocab();
    create_dir(&dir)?;
    space.user_vocab.write(&dir.join(USER_VOCAB_FILE))?;
    space.items.text_vocab.write(&dir.join(ITEM_VOCAB_FILE))?;
    space.items.categories.write(&dir.join(CATEGORIES_FILE))?;
    let buckets = serde_json::to_string(&space.items.buckets).map_err(|e| Error::Format(e.to_string()))?;
    write_file(&dir.join(BUCKETS_FILE), buckets + "\n")?;
    let mut users = String::from("index\tuser_id\n");
    for &i in &val_users {
        users.push_str(&format!("{i}\t{}\n", corpus.source[i].history.user_id));
    }
    write_file(&dir.join(VALIDATION_USERS_FILE), users)?;
    finish_dir(&dir, config)?;
    Ok(dir)
}

/// Vocabularies and split written by [`build_vocab`].
pub fn read_features(layout: &Layout, corpus: &Corpus) -> Result<(FeatureSpace, Vec<usize>, Vec<usize>)> {
    let dir = layout.vocab();
    verify_manifest(&dir)?;
    let buckets_path = dir.join(BUCKETS_FILE);
    let buckets: PlaytimeBuckets = serde_json::from_str(
        &fs::read_to_string(&buckets_path).map_err(|e| Error::io(&buckets_path, e))?,
    )
    .map_err(|e| Error::Format(format!("{}: {e}", buckets_path.display())))?;
    let space = FeatureSpace {
        user_vocab: Vocabulary::read(&dir.join(USER_VOCAB_FILE))?,
        items: ItemFeaturizer {
            text_vocab: Vocabulary::read(&dir.join(ITEM_VOCAB_FILE))?,
            categories: CategorySet::read(&dir.join(CATEGORIES_FILE))?,
            buckets,
        },
    };
    let path = dir.join(VALIDATION_USERS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut val = Vec::new();
    for line in text.lines().skip(1) {
        let (idx, user) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("{}: bad line `{line}`", path.display())))?;
        let i: usize = idx
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad index `{idx}`", path.display())))?;
        if corpus.source.get(i).map(|e| e.history.user_id.as_str()) != Some(user) {
            return Err(Error::Format(format!(
                "{}: user `{user}` is not source user {i}; rebuild the vocabulary",
                path.display()
            )));
        }
        val.push(i);
    }
    let held: BTreeSet<usize> = val.iter().copied().collect();
    let train: Vec<usize> = (0..corpus.source.len()).filter(|i| !held.contains(i)).collect();
    Ok((space, train, val))
}

/// Corpus, features and vectors from the data and vocabulary directories.
pub fn load_prepared(layout: &Layout) -> Result<(Corpus, FeatureSpace, Prepared)> {
    let corpus = read_corpus(layout)?;
    let (space, train_users, val_users) = read_features(layout, &corpus)?;
    let prepared = prepare(&corpus, &space, &train_users, &val_users)?;
    Ok((corpus, space, prepared))
}

/// `train-sdae`: pretrains the item autoencoder.
pub fn train_sdae(config: &Config, out: &Path) -> Result<PathBuf> {
    let layout = Layout::new(out, config);
    let (_, _, prepared) = load_prepared(&layout)?;
    let sdae = pretrain_sdae(&prepared.data.items, &config.train)?;
    let dir = layout.models();
    create_dir(&dir)?;
    let path = dir.join(SDAE_FILE);
    persist::save_sdae(&path, &sdae, &config.to_toml()?)?;
    finish_dir(&dir, config)?;
    Ok(path)
}

fn load_pretrained(layout: &Layout) -> Result<Option<SdaeModel>> {
    let path = layout.models().join(SDAE_FILE);
    if !path.exists() {
        return Ok(None);
    }
    verify_manifest(&layout.models())?;
    Ok(Some(persist::load_sdae(&path)?.0))
}

/// One training run on prepared data. The autoencoder is `pretrained` when
/// given, otherwise pretrained here when the objective needs it.
pub fn fit(prepared: &Prepared, config: &TrainConfig, pretrained: Option<&SdaeModel>) -> Result<TrainOutcome> {
    let data = &prepared.data;
    if config.grid_search {
        return grid_search(data, config);
    }
    let (model, sdae) = match (pretrained, config.uses_sdae()) {
        (Some(s), true) => {
            let mut cfg = config.clone();
            cfg.weights.lambda_item = 0.0;
            cfg.weights.lambda_ir = 0.0;
            (initial_models(data, &cfg)?.0, Some(s.clone()))
        }
        _ => initial_models(data, config)?,
    };
    train(model, sdae, data, config)
}

pub fn trace_table(trace: &[LossComponents]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for (i, p) in trace.iter().enumerate() {
        s.push_str(&format!(
            "{}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\n",
            i + 1,
            p.total,
            p.task,
            p.recon,
            p.difference,
            p.similarity,
            p.item,
            p.ir,
            p.weight_norm
        ));
    }
    s
}

/// `train`: trains the configured objective, writes a model per epoch, the
/// checkpoint index and the selected model.
pub fn train_model(config: &Config, out: &Path) -> Result<PathBuf> {
    let layout = Layout::new(out, config);
    let (_, _, prepared) = load_prepared(&layout)?;
    let pretrained = load_pretrained(&layout)?;
    let outcome = fit(&prepared, &config.train, pretrained.as_ref())?;
    let echo = config.to_toml()?;

    let ckpt = layout.checkpoints();
    create_dir(&ckpt)?;
    let mut index = format!("epoch\tfile\t{CHECKPOINT_INDEX_HEADER}\n");
    for (i, c) in outcome.checkpoints.iter().enumerate() {
        let name = format!("epoch_{:03}.bin", c.epoch);
        persist::save_dsn(&ckpt.join(&name), &outcome.model_at(i)?, &echo)?;
        index.push_str(&format!("{}\t{name}\t{}\n", c.epoch, c.index_line()));
    }
    write_file(&ckpt.join(CHECKPOINT_INDEX_FILE), index)?;
    finish_dir(&ckpt, config)?;

    let models = layout.models();
    create_dir(&models)?;
    let chosen = &outcome.checkpoints[outcome.selected];
    let path = models.join(DSN_FILE);
    persist::save_dsn(&path, &outcome.selected_model()?, &echo)?;
    write_file(
        &models.join(SELECTED_FILE),
        format!(
            "epoch\t{}\nstep\t{}\nselection\t{:?}\nweight_decay\t{}\n",
            chosen.epoch, chosen.step, config.train.selection, outcome.weight_decay
        ),
    )?;
    write_file(&models.join(TRACE_FILE), trace_table(&outcome.trace))?;
    finish_dir(&models, config)?;
    Ok(path)
}

/// Training configuration of a method, `None` for the untrained baseline.
/// I-DSN uses the configured weights, DSN drops the item terms and NN
/// further drops the domain adaptation terms.
pub fn method_config(method: Method, base: &TrainConfig) -> Option<TrainConfig> {
    let mut cfg = base.clone();
    match method {
        Method::IDsn => {}
        Method::Dsn => {
            cfg.weights.lambda_item = 0.0;
            cfg.weights.lambda_ir = 0.0;
        }
        Method::Nn => {
            cfg.weights.lambda_item = 0.0;
            cfg.weights.lambda_ir = 0.0;
            cfg.weights = cfg.weights.without_adaptation();
        }
        Method::Pop => return None,
    }
    Some(cfg)
}

fn dense(rows: &[SparseVec]) -> Result<Matrix> {
    let dim = rows.first().ok_or(Error::Empty("test users"))?.dim();
    let refs: Vec<&SparseVec> = rows.iter().collect();
    Ok(densify(&refs, dim))
}

/// Rank of each test label under a trained model.
pub fn model_ranks(model: &DsnModel, prepared: &Prepared) -> Result<Vec<usize>> {
    let scores = model.scores(&dense(&prepared.test)?)?;
    RankMetrics::label_ranks(&scores, &prepared.test_labels)
}

/// Rank of each test label under the popularity list of the training users.
pub fn popularity_ranks(prepared: &Prepared) -> Result<Vec<usize>> {
    let list = popularity_baseline(&prepared.data.source_labels, prepared.data.classes())?;
    Ok(RankMetrics::fixed_list_ranks(&list, &prepared.test_labels))
}

/// One evaluation of `method` under `seed`, with the training outcome of
/// trained methods.
pub fn evaluate_method(
    method: Method,
    seed: u64,
    prepared: &Prepared,
    base: &TrainConfig,
    pretrained: Option<&SdaeModel>,
    ks: &[usize],
) -> Result<(EvalReport, Option<TrainOutcome>)> {
    match method_config(method, base) {
        None => Ok((EvalReport::from_ranks(method, seed, &popularity_ranks(prepared)?, ks)?, None)),
        Some(mut cfg) => {
            cfg.seed = seed;
            let outcome = fit(prepared, &cfg, pretrained)?;
            let ranks = model_ranks(&outcome.selected_model()?, prepared)?;
            Ok((EvalReport::from_ranks(method, seed, &ranks, ks)?, Some(outcome)))
        }
    }
}

/// Mean and standard deviation over seeds per `(method, K, metric)`.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let mut s = String::from("method\tK\tmetric\tmean\tsd\truns\n");
    let mut methods: Vec<Method> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    for m in methods {
        let runs: Vec<&EvalReport> = reports.iter().filter(|r| r.method == m).collect();
        let mut line = |k: usize, metric: &str, get: &dyn Fn(&EvalReport) -> Option<f64>| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| get(r)).collect();
            let (mean, sd) = mean_sd(&vals);
            s.push_str(&format!("{m}\t{k}\t{metric}\t{mean:.6}\t{sd:.6}\t{}\n", vals.len()));
        };
        for &k in runs[0].recall.keys() {
            line(k, "recall", &|r| r.recall.get(&k).copied());
        }
        for &k in runs[0].ndcg.keys() {
            line(k, "ndcg", &|r| r.ndcg.get(&k).copied());
        }
        line(1, "target_risk", &|r| Some(r.empirical_target_risk));
    }
    s
}

/// `evaluate`: every configured method under every evaluation seed. POP is
/// seed independent and evaluated once.
pub fn evaluate(config: &Config, out: &Path) -> Result<Vec<EvalReport>> {
    let layout = Layout::new(out, config);
    let (_, _, prepared) = load_prepared(&layout)?;
    let pretrained = load_pretrained(&layout)?;
    let mut reports = Vec::new();
    for &method in &config.eval.methods {
        let seeds: &[u64] = if method == Method::Pop {
            &config.eval.seeds[..1]
        } else {
            &config.eval.seeds
        };
        for &seed in seeds {
            let (report, _) = evaluate_method(method, seed, &prepared, &config.train, pretrained.as_ref(), &config.eval.ks)?;
            reports.push(report);
        }
    }
    let dir = layout.reports();
    create_dir(&dir)?;
    let json = serde_json::to_string_pretty(&reports).map_err(|e| Error::Format(e.to_string()))?;
    write_file(&dir.join(REPORTS_FILE), json + "\n")?;
    let mut table = format!("{TABLE_HEADER}\n");
    for r in &reports {
        for row in r.table_rows() {
            table.push_str(&row);
            table.push('\n');
        }
    }
    write_file(&dir.join(TABLE_FILE), table)?;
    write_file(&dir.join(SUMMARY_FILE), summary_table(&reports))?;
    finish_dir(&dir, config)?;
    Ok(reports)
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// `recommend`: top-K source items for every target-domain user of the
/// configured log (the test log by default), as
/// `user_id, rank, item_id, score` rows.
pub fn recommend(config: &Config, out: &Path) -> Result<PathBuf> {
    let layout = Layout::new(out, config);
    let corpus = read_corpus(&layout)?;
    let (space, _, _) = read_features(&layout, &corpus)?;
    verify_manifest(&layout.models())?;
    let (model, _) = persist::load_dsn(&layout.models().join(DSN_FILE))?;
    let log = match &config.recommend.log {
        Some(p) => layout.root.join(p),
        None => layout.data.join(synth::TEST_LOG_FILE),
    };
    let histories = data::target_histories(&data::read_log(&log)?, &corpus.target_catalog)?;
    let vectors = histories
        .iter()
        .map(|h| space.user_vector(&corpus, h))
        .collect::<Result<Vec<_>>>()?;
    if model.input_dim() != space.user_vocab.len() {
        return Err(Error::shape("model input does not match the user vocabulary"));
    }
    let recs = recommend_topk(&model, &dense(&vectors)?, config.recommend.k)?;

    let dir = layout.reports();
    create_dir(&dir)?;
    let path = dir.join(RECOMMENDATIONS_FILE);
    let mut buf = Vec::new();
    writeln!(buf, "user_id\trank\titem_id\tscore").expect("vec write");
    for (h, r) in histories.iter().zip(&recs) {
        for (rank, (item, score)) in r.items.iter().enumerate() {
            let id = &corpus.source_catalog.get(*item).item_id;
            writeln!(buf, "{}\t{}\t{id}\t{score:.9}", h.user_id, rank + 1).expect("vec write");
        }
    }
    write_file(&path, buf)?;
    finish_dir(&dir, config)?;
    Ok(path)
}

pub const GRADCHECK_FILE: &str = "gradcheck.txt";
/// Largest relative error a gradient check may show.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckSummary {
    /// `(graph, seed, report)` of each central-difference check.
    pub checks: Vec<(&'static str, u64, GradCheckReport)>,
    /// Whether reversal negated every shared-encoder gradient entry exactly.
    pub reversal_exact: bool,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.reversal_exact && self.checks.iter().all(|(_, _, r)| r.max_rel_error < GRADCHECK_TOLERANCE)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (graph, seed, r) in &self.checks {
            s.push_str(&format!(
                "{graph} seed {seed}: max relative error {:.3e} over {} entries of {} tensors (worst {}[{}])\n",
                r.max_rel_error, r.checked_entries, r.params, r.worst_param, r.worst_entry
            ));
        }
        s.push_str(&format!("gradient reversal exact: {}\n", self.reversal_exact));
        s.push_str(if self.passed() { "PASS\n" } else { "FAIL\n" });
        s
    }
}

/// Central differences at two seeds of a softmax MLP classifier, the
/// autoencoder and the full objective (reversal replaced by the identity so
/// the surrogate is the differentiated function), plus an exact check that
/// reversal negates the adversarial gradient reaching the shared encoder.
pub fn run_gradcheck(seed: u64) -> Result<GradCheckSummary> {
    let mut checks = Vec::new();
    for s in [seed, seed.wrapping_add(1)] {
        let opts = GradCheckOptions { seed: s, ..GradCheckOptions::default() };
        checks.push(("softmax-mlp", s, grad_check(&mut SoftmaxMlpGraph::toy(s)?, &opts)?));
        checks.push(("sdae", s, grad_check(&mut SdaeGraph::toy(s)?, &opts)?));
        let mut g = ObjectiveGraph::toy(s)?;
        g.options.grl = GrlMode::Identity;
        checks.push(("dsn-objective", s, grad_check(&mut g, &ObjectiveGraph::check_options(s))?));
    }
    let shared_grads = |grl| -> Result<Vec<Matrix>> {
        let mut g = ObjectiveGraph::toy(seed)?;
        g.weights = LossWeights {
            gamma: 1.0,
            ..LossWeights::task_only()
        };
        g.options.grl = grl;
        let last = g.model.classifier.layers().len() - 1;
        g.model.classifier.layers_mut()[last].weight.value.fill(0.0);
        g.model.zero_grad();
        g.evaluate(true)?;
        Ok(g.model.shared_encoder.params().map(|(_, p)| p.grad.clone()).collect())
    };
    let rev = shared_grads(GrlMode::Reverse)?;
    let id = shared_grads(GrlMode::Identity)?;
    let nonzero = id.iter().any(|m| m.as_slice().iter().any(|v| *v != 0.0));
    let reversal_exact = nonzero && rev.iter().zip(&id).all(|(r, i)| r == &i.neg());
    Ok(GradCheckSummary { checks, reversal_exact })
}

/// `gradcheck`: runs [`run_gradcheck`] and writes its summary.
pub fn gradcheck(config: &Config, out: &Path) -> Result<GradCheckSummary> {
    let summary = run_gradcheck(config.seed)?;
    let dir = Layout::new(out, config).reports();
    create_dir(&dir)?;
    write_file(&dir.join(GRADCHECK_FILE), summary.to_text())?;
    finish_dir(&dir, config)?;
    Ok(summary)
}
