//! Paired-domain synthetic benchmark with a controllable topic shift.
//!
//! A fixed set of latent topics drives both services. Source items (the
//! recommendation targets) and target articles carry topic mixtures and
//! text sampled from per-domain topic-word distributions. A user's source
//! consumption follows their preference vector `p_u`; their target
//! consumption follows `q_u = (1-s) p_u + s π(p_u)` for a fixed topic
//! derangement `π`, so `s` sets how far the target feature marginals move
//! away from the label structure.
//!
//! Each domain's vocabulary optionally contains a block of shared "entity"
//! words with the same topic association in both domains.

use std::fs;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{
    self, Catalog, Domain, ItemRecord, LabeledExample, LogEvent, UserHistory, MAX_PLAYTIME_SECONDS,
};
use crate::nn::Rng;
use crate::{Error, Result};

pub const SOURCE_CATALOG_FILE: &str = "source_items.jsonl";
pub const TARGET_CATALOG_FILE: &str = "target_items.jsonl";
pub const SOURCE_LOG_FILE: &str = "source_log.tsv";
pub const TARGET_LOG_FILE: &str = "target_log.tsv";
pub const TEST_LOG_FILE: &str = "test_log.tsv";
pub const CONFIG_ECHO_FILE: &str = "synth_config.json";

/// Largest share of source labels a single item may take.
pub const MAX_LABEL_SHARE: f64 = 0.2;
const MAX_ATTEMPTS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Source items (classes).
    pub items: usize,
    pub topics: usize,
    pub source_vocab: usize,
    pub target_vocab: usize,
    /// Words present in both vocabularies with a common topic profile.
    pub shared_vocab: usize,
    /// Fraction of each topic's token mass placed on the shared words.
    pub shared_mass: f64,
    /// Target-domain articles that target histories are made of.
    pub target_items: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub n_test: usize,
    pub history_min: usize,
    pub history_max: usize,
    pub shift: f64,
    /// Temperature `c` of the preference link `exp(c <p, ψ>)`.
    pub preference_temperature: f64,
    pub word_concentration: f64,
    pub item_concentration: f64,
    pub user_concentration: f64,
    pub title_words: usize,
    pub description_words: usize,
    pub cast_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            items: 200,
            topics: 12,
            source_vocab: 1000,
            target_vocab: 1000,
            shared_vocab: 0,
            shared_mass: 0.0,
            target_items: 400,
            n_source: 20_000,
            n_target: 20_000,
            n_test: 2_000,
            history_min: 3,
            history_max: 10,
            shift: 0.6,
            preference_temperature: 5.0,
            word_concentration: 0.1,
            item_concentration: 0.2,
            user_concentration: 0.3,
            title_words: 4,
            description_words: 24,
            cast_words: 3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [
            ("items", self.items),
            ("topics", self.topics),
            ("source_vocab", self.source_vocab),
            ("target_vocab", self.target_vocab),
            ("target_items", self.target_items),
            ("n_source", self.n_source),
            ("n_target", self.n_target),
            ("n_test", self.n_test),
            ("history_min", self.history_min),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.history_max < self.history_min {
            return bad("history_max must be >= history_min".into());
        }
        if !(0.0..=1.0).contains(&self.shift) {
            return bad(format!("shift {} outside [0, 1]", self.shift));
        }
        if self.shared_vocab >= self.source_vocab.min(self.target_vocab) {
            return bad("shared_vocab must be smaller than both vocabularies".into());
        }
        if !(0.0..=1.0).contains(&self.shared_mass) || (self.shared_vocab == 0 && self.shared_mass > 0.0) {
            return bad("shared_mass must lie in [0, 1] and needs shared_vocab > 0".into());
        }
        for (name, v) in [
            ("word_concentration", self.word_concentration),
            ("item_concentration", self.item_concentration),
            ("user_concentration", self.user_concentration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !self.preference_temperature.is_finite() {
            return bad("preference_temperature must be finite".into());
        }
        if self.title_words + self.description_words + self.cast_words == 0 {
            return bad("items need at least one word".into());
        }
        Ok(())
    }
}

/// Latent quantities behind a generated task, kept for oracle checks.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOracle {
    /// `ψ_k` per source item.
    pub item_topics: Vec<Vec<f64>>,
    /// `π`: topic `t` of `p_u` moves to `π[t]` in the shifted mixture.
    pub permutation: Vec<usize>,
    /// `p_u` of each test user, in test-log user order.
    pub test_preferences: Vec<Vec<f64>>,
    /// Which generation attempt satisfied the label-share cap.
    pub attempt: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthTask {
    pub config: SynthConfig,
    pub source_catalog: Catalog,
    pub target_catalog: Catalog,
    /// Source users: history followed by the held-out next item.
    pub source_log: Vec<LogEvent>,
    /// Unlabeled target users.
    pub target_log: Vec<LogEvent>,
    /// Common users: target history and one later source event.
    pub test_log: Vec<LogEvent>,
    pub oracle: SynthOracle,
}

impl SynthTask {
    pub fn source_examples(&self) -> Result<Vec<LabeledExample>> {
        data::source_examples(&self.source_log, &self.source_catalog)
    }

    pub fn target_histories(&self) -> Result<Vec<UserHistory>> {
        data::target_histories(&self.target_log, &self.target_catalog)
    }

    pub fn test_examples(&self) -> Result<Vec<LabeledExample>> {
        data::common_user_examples(&self.test_log, &self.source_catalog, &self.target_catalog)
    }

    /// Writes catalogs, logs and the config echo into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.source_catalog.write_jsonl(&dir.join(SOURCE_CATALOG_FILE))?;
        self.target_catalog.write_jsonl(&dir.join(TARGET_CATALOG_FILE))?;
        data::write_log(&dir.join(SOURCE_LOG_FILE), &self.source_log)?;
        data::write_log(&dir.join(TARGET_LOG_FILE), &self.target_log)?;
        data::write_log(&dir.join(TEST_LOG_FILE), &self.test_log)?;
        let path = dir.join(CONFIG_ECHO_FILE);
        let mut echo = serde_json::to_string_pretty(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        echo.push('\n');
        fs::write(&path, echo).map_err(|e| Error::io(path, e))
    }
}

/// `(1-s) p + s π(p)`; equals `p` when `s = 0`.
pub fn shifted_mixture(p: &[f64], permutation: &[usize], s: f64) -> Vec<f64> {
    let mut q: Vec<f64> = p.iter().map(|v| (1.0 - s) * v).collect();
    for (t, &v) in p.iter().enumerate() {
        q[permutation[t]] += s * v;
    }
    q
}

/// Index of the largest entry, lowest index on ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn dirichlet(dim: usize, concentration: f64, rng: &mut Rng) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("validated concentration");
    let mut v: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        // Every gamma draw underflowed: collapse onto one corner.
        v[rng.below(dim)] = 1.0;
    }
    v
}

fn derangement(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    if n < 2 {
        return perm;
    }
    loop {
        rng.shuffle(&mut perm);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Topic-word samplers of one domain. Words `0..shared` are the shared block.
struct Language {
    words: Vec<String>,
    topics: Vec<WeightedIndex<f64>>,
}

impl Language {
    fn new(prefix: &str, cfg: &SynthConfig, vocab: usize, shared: &[Vec<f64>], rng: &mut Rng) -> Language {
        let private = vocab - cfg.shared_vocab;
        let mut words: Vec<String> = (0..cfg.shared_vocab).map(|i| format!("w{i:04}")).collect();
        words.extend((0..private).map(|i| format!("{prefix}{i:04}")));
        let topics = (0..cfg.topics)
            .map(|t| {
                let own = dirichlet(private, cfg.word_concentration, rng);
                let mut weights: Vec<f64> = shared
                    .get(t)
                    .map(|s| s.iter().map(|w| cfg.shared_mass * w).collect())
                    .unwrap_or_default();
                weights.extend(own.iter().map(|w| (1.0 - cfg.shared_mass) * w));
                WeightedIndex::new(&weights).expect("positive topic mass")
            })
            .collect();
        Language { words, topics }
    }

    fn text(&self, mixture: &WeightedIndex<f64>, n: usize, rng: &mut Rng) -> String {
        (0..n)
            .map(|_| self.words[self.topics[mixture.sample(rng)].sample(rng)].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

struct Users<'a> {
    cfg: &'a SynthConfig,
    permutation: &'a [usize],
    source_topics: &'a [Vec<f64>],
    target_topics: &'a [Vec<f64>],
    source_ids: Vec<String>,
    target_ids: Vec<String>,
}

impl Users<'_> {
    fn chooser(&self, prefs: &[f64], topics: &[Vec<f64>]) -> WeightedIndex<f64> {
        let c = self.cfg.preference_temperature;
        let w: Vec<f64> = topics.iter().map(|psi| (c * dot(prefs, psi)).exp()).collect();
        WeightedIndex::new(&w).expect("positive utilities")
    }

    fn history_len(&self, rng: &mut Rng) -> usize {
        self.cfg.history_min + rng.below(self.cfg.history_max - self.cfg.history_min + 1)
    }

    fn preferences(&self, rng: &mut Rng) -> Vec<f64> {
        dirichlet(self.cfg.topics, self.cfg.user_concentration, rng)
    }

    fn events(&self, user: &str, start: u64, domain: Domain, picks: impl Iterator<Item = usize>) -> Vec<LogEvent> {
        let ids = match domain {
            Domain::Source => &self.source_ids,
            Domain::Target => &self.target_ids,
        };
        picks
            .enumerate()
            .map(|(j, k)| LogEvent {
                user_id: user.to_string(),
                timestamp: start + 60 * j as u64,
                item_id: ids[k].clone(),
                domain,
            })
            .collect()
    }

    fn source_user(&self, n: usize, rng: &mut Rng) -> Vec<LogEvent> {
        let p = self.preferences(rng);
        let choose = self.chooser(&p, self.source_topics);
        let len = self.history_len(rng) + 1;
        let picks: Vec<usize> = (0..len).map(|_| choose.sample(rng)).collect();
        self.events(&format!("s{n:06}"), n as u64 * 10_000, Domain::Source, picks.into_iter())
    }

    fn target_user(&self, n: usize, rng: &mut Rng) -> Vec<LogEvent> {
        let p = self.preferences(rng);
        let q = shifted_mixture(&p, self.permutation, self.cfg.shift);
        let choose = self.chooser(&q, self.target_topics);
        let len = self.history_len(rng);
        let picks: Vec<usize> = (0..len).map(|_| choose.sample(rng)).collect();
        self.events(&format!("t{n:06}"), n as u64 * 10_000, Domain::Target, picks.into_iter())
    }

    fn test_user(&self, n: usize, rng: &mut Rng) -> (Vec<LogEvent>, Vec<f64>) {
        let p = self.preferences(rng);
        let q = shifted_mixture(&p, self.permutation, self.cfg.shift);
        let target = self.chooser(&q, self.target_topics);
        let len = self.history_len(rng);
        let picks: Vec<usize> = (0..len).map(|_| target.sample(rng)).collect();
        let label = self.chooser(&p, self.source_topics).sample(rng);
        let user = format!("c{n:06}");
        let start = n as u64 * 10_000;
        let mut events = self.events(&user, start, Domain::Target, picks.into_iter());
        events.extend(self.events(&user, start + 60 * len as u64, Domain::Source, std::iter::once(label)));
        (events, p)
    }
}

fn catalog(
    prefix: &str,
    category_prefix: &str,
    topics: &[Vec<f64>],
    language: &Language,
    cfg: &SynthConfig,
    playtime: impl Fn(usize, &mut Rng) -> i64,
    rng: &mut Rng,
) -> Result<Catalog> {
    let items = topics
        .iter()
        .enumerate()
        .map(|(k, psi)| {
            let mixture = WeightedIndex::new(psi).expect("normalized mixture");
            let category = argmax(psi);
            ItemRecord {
                item_id: format!("{prefix}{k:05}"),
                title: language.text(&mixture, cfg.title_words, rng),
                category: format!("{category_prefix}{category:02}"),
                description: language.text(&mixture, cfg.description_words, rng),
                cast: language.text(&mixture, cfg.cast_words, rng),
                playtime_seconds: playtime(category, rng).clamp(1, MAX_PLAYTIME_SECONDS - 1),
            }
        })
        .collect();
    Catalog::new(items)
}

fn attempt(cfg: &SynthConfig, rng: &Rng, attempt: usize) -> Result<SynthTask> {
    let mut words = rng.fork("words");
    let shared: Vec<Vec<f64>> = if cfg.shared_vocab > 0 {
        (0..cfg.topics)
            .map(|_| dirichlet(cfg.shared_vocab, cfg.word_concentration, &mut words))
            .collect()
    } else {
        Vec::new()
    };
    let source_lang = Language::new("v", cfg, cfg.source_vocab, &shared, &mut words);
    let target_lang = Language::new("n", cfg, cfg.target_vocab, &shared, &mut words);
    let permutation = derangement(cfg.topics, &mut rng.fork("permutation"));

    let mut item_rng = rng.fork("items");
    let source_topics: Vec<Vec<f64>> = (0..cfg.items)
        .map(|_| dirichlet(cfg.topics, cfg.item_concentration, &mut item_rng))
        .collect();
    let target_topics: Vec<Vec<f64>> = (0..cfg.target_items)
        .map(|_| dirichlet(cfg.topics, cfg.item_concentration, &mut item_rng))
        .collect();
    let source_catalog = catalog(
        "item",
        "genre",
        &source_topics,
        &source_lang,
        cfg,
        |c, r| 1200 + 600 * c as i64 + r.below(600) as i64 - 300,
        &mut rng.fork("source_catalog"),
    )?;
    let target_catalog = catalog(
        "article",
        "section",
        &target_topics,
        &target_lang,
        cfg,
        |c, r| 60 + 30 * c as i64 + r.below(240) as i64,
        &mut rng.fork("target_catalog"),
    )?;

    let users = Users {
        cfg,
        permutation: &permutation,
        source_topics: &source_topics,
        target_topics: &target_topics,
        source_ids: source_catalog.items().iter().map(|i| i.item_id.clone()).collect(),
        target_ids: target_catalog.items().iter().map(|i| i.item_id.clone()).collect(),
    };
    let mut r = rng.fork("source_users");
    let source_log: Vec<LogEvent> = (0..cfg.n_source).flat_map(|n| users.source_user(n, &mut r)).collect();
    let mut r = rng.fork("target_users");
    let target_log: Vec<LogEvent> = (0..cfg.n_target).flat_map(|n| users.target_user(n, &mut r)).collect();
    let mut r = rng.fork("test_users");
    let mut test_log = Vec::new();
    let mut test_preferences = Vec::with_capacity(cfg.n_test);
    for n in 0..cfg.n_test {
        let (events, p) = users.test_user(n, &mut r);
        test_log.extend(events);
        test_preferences.push(p);
    }

    Ok(SynthTask {
        config: cfg.clone(),
        source_catalog,
        target_catalog,
        source_log,
        target_log,
        test_log,
        oracle: SynthOracle {
            item_topics: source_topics,
            permutation,
            test_preferences,
            attempt,
        },
    })
}

/// Largest fraction of source labels held by one item.
pub fn max_label_share(examples: &[LabeledExample], items: usize) -> f64 {
    let mut counts = vec![0usize; items];
    for e in examples {
        counts[e.label] += 1;
    }
    counts.into_iter().max().unwrap_or(0) as f64 / examples.len().max(1) as f64
}

/// Generates a task from `config.seed`. Draws that let one item take more
/// than [`MAX_LABEL_SHARE`] of the source labels are discarded and redrawn.
pub fn generate(config: &SynthConfig) -> Result<SynthTask> {
    config.validate()?;
    let root = Rng::new(config.seed);
    for n in 0..MAX_ATTEMPTS {
        let task = attempt(config, &root.fork(&format!("attempt.{n}")), n)?;
        if max_label_share(&task.source_examples()?, config.items) <= MAX_LABEL_SHARE {
            return Ok(task);
        }
    }
    Err(Error::Config(format!(
        "no draw within {MAX_ATTEMPTS} attempts kept every item under {MAX_LABEL_SHARE} of the labels"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            items: 30,
            topics: 5,
            source_vocab: 120,
            target_vocab: 90,
            target_items: 40,
            n_source: 300,
            n_target: 200,
            n_test: 150,
            seed: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn dataset_sizes_follow_the_config() {
        let cfg = small();
        let task = generate(&cfg).unwrap();
        assert_eq!(task.source_examples().unwrap().len(), cfg.n_source);
        assert_eq!(task.target_histories().unwrap().len(), cfg.n_target);
        let test = task.test_examples().unwrap();
        assert_eq!(test.len(), cfg.n_test);
        assert!(test.iter().all(|e| e.label < cfg.items));
        assert_eq!(task.source_catalog.len(), cfg.items);
        assert_eq!(task.target_catalog.len(), cfg.target_items);
        for e in task.source_examples().unwrap() {
            let n = e.history.events.len();
            assert!((cfg.history_min..=cfg.history_max).contains(&n));
        }
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let cfg = small();
        let a = tempdir("a");
        let b = tempdir("b");
        generate(&cfg).unwrap().write(&a).unwrap();
        generate(&cfg).unwrap().write(&b).unwrap();
        for f in [
            SOURCE_CATALOG_FILE,
            TARGET_CATALOG_FILE,
            SOURCE_LOG_FILE,
            TARGET_LOG_FILE,
            TEST_LOG_FILE,
            CONFIG_ECHO_FILE,
        ] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        let other = generate(&SynthConfig { seed: 5, ..cfg }).unwrap();
        assert_ne!(other.source_log, generate(&small()).unwrap().source_log);
    }

    fn tempdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("dsnrec-synth-{}-{tag}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn zero_shift_keeps_the_preference_law() {
        let mut rng = Rng::new(1);
        let perm = derangement(6, &mut rng);
        let p = dirichlet(6, 0.3, &mut rng);
        assert_eq!(shifted_mixture(&p, &perm, 0.0), p);
        let full = shifted_mixture(&p, &perm, 1.0);
        for t in 0..6 {
            assert_eq!(full[perm[t]], p[t]);
        }
        let half = shifted_mixture(&p, &perm, 0.6);
        assert!((half.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_moves_every_topic() {
        let perm = derangement(12, &mut Rng::new(3));
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..12).collect::<Vec<_>>());
        assert!(perm.iter().enumerate().all(|(i, &p)| i != p));
    }

    #[test]
    fn categories_are_argmax_topics() {
        let task = generate(&small()).unwrap();
        for (item, psi) in task.source_catalog.items().iter().zip(&task.oracle.item_topics) {
            assert_eq!(item.category, format!("genre{:02}", argmax(psi)));
            assert!(item.playtime_seconds > 0);
        }
    }

    #[test]
    fn oracle_preferences_beat_uniform_top1() {
        let task = generate(&small()).unwrap();
        let test = task.test_examples().unwrap();
        let hits = test
            .iter()
            .zip(&task.oracle.test_preferences)
            .filter(|(e, p)| {
                let scores: Vec<f64> = task.oracle.item_topics.iter().map(|psi| dot(p, psi)).collect();
                crate::serve::rank_of(&scores, e.label) == 1
            })
            .count();
        let recall = hits as f64 / test.len() as f64;
        assert!(recall > 1.0 / task.config.items as f64, "oracle recall@1 {recall}");
    }

    #[test]
    fn shared_words_appear_in_both_domains() {
        let cfg = SynthConfig {
            shared_vocab: 20,
            shared_mass: 0.5,
            ..small()
        };
        let task = generate(&cfg).unwrap();
        let has_shared = |c: &Catalog| c.items().iter().any(|i| i.description.contains('w'));
        assert!(has_shared(&task.source_catalog) && has_shared(&task.target_catalog));
    }

    #[test]
    fn invalid_configs_error() {
        for cfg in [
            SynthConfig { items: 0, ..small() },
            SynthConfig { shift: 1.5, ..small() },
            SynthConfig { history_max: 1, ..small() },
            SynthConfig { shared_mass: 0.3, ..small() },
            SynthConfig { user_concentration: 0.0, ..small() },
        ] {
            assert!(generate(&cfg).is_err());
        }
    }
}
