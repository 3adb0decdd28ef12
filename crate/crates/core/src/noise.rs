//! Noise injection and the noisy model grid.
//!
//! For one noise kind, every fold gets five models trained with 0, 25, 50,
//! 75 and 100 percent of the training instances replaced by their noisy
//! versions. All five share one test set: the clean test split plus the
//! noisy version of each test instance.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{train, ClassifierModel, Hyperparams, ModelKind};
use crate::corpus::{make_folds, remove_tokens, tokenize_spans, Corpus, Document, FoldPlan};
use crate::{seed, Error, Result};

pub const NOISE_LEVELS: [u32; 5] = [0, 25, 50, 75, 100];

/// Suffix appended to the id of a noisy test duplicate.
pub const NOISY_SUFFIX: &str = "+noise";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Drop 30-70% of the words.
    Removal,
    /// Swap the label for a different class.
    Label,
    /// Append a sentence that is fixed per class.
    Bias,
    /// Re-attach the document's stripped noise payload.
    Payload,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::Removal, NoiseKind::Label, NoiseKind::Bias, NoiseKind::Payload];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Removal => "removal",
            NoiseKind::Label => "label",
            NoiseKind::Bias => "bias",
            NoiseKind::Payload => "payload",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "removal" => Ok(NoiseKind::Removal),
            "label" => Ok(NoiseKind::Label),
            "bias" => Ok(NoiseKind::Bias),
            "payload" | "natural" => Ok(NoiseKind::Payload),
            other => Err(Error::invalid(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: u32,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: u32) -> Result<Self> {
        if !NOISE_LEVELS.contains(&level) {
            return Err(Error::invalid(format!("noise level {level} is not one of {NOISE_LEVELS:?}")));
        }
        Ok(NoiseSpec { kind, level })
    }
}

/// Number of instances replaced at `level` percent of `n`, rounded to nearest.
pub fn replaced_count(level: u32, n: usize) -> usize {
    (level as usize * n + 50) / 100
}

/// One distinct sentence per class, appended by bias noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasTable(pub BTreeMap<String, String>);

impl BiasTable {
    /// Draws a distinct sentence from `pool` for each class.
    pub fn from_pool(pool: &[String], classes: &[String], seed: u64) -> Result<Self> {
        let mut distinct: Vec<&String> = Vec::new();
        for s in pool {
            if !distinct.contains(&s) {
                distinct.push(s);
            }
        }
        if distinct.len() < classes.len() {
            return Err(Error::data(format!(
                "bias pool has {} distinct sentences, need one per class ({})",
                distinct.len(),
                classes.len()
            )));
        }
        let mut rng = seed::rng(seed, &["bias-table"]);
        let picks = index::sample(&mut rng, distinct.len(), classes.len());
        Ok(BiasTable(
            classes
                .iter()
                .zip(picks)
                .map(|(c, i)| (c.clone(), distinct[i].clone()))
                .collect(),
        ))
    }

    pub fn sentence(&self, class: &str) -> Option<&str> {
        self.0.get(class).map(String::as_str)
    }
}

/// Plain text, one sentence per line.
pub fn load_bias_pool(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Returns the noisy version of `doc`. The id is left unchanged.
pub fn inject(
    doc: &Document,
    kind: NoiseKind,
    classes: &[String],
    bias: Option<&BiasTable>,
    rng: &mut impl Rng,
) -> Result<Document> {
    let mut out = doc.clone();
    match kind {
        NoiseKind::Removal => {
            let tokens = tokenize_spans(&doc.text);
            if tokens.is_empty() {
                return Err(Error::data(format!("removal noise: document {} has no tokens", doc.id)));
            }
            let fraction: f64 = rng.random_range(0.30..=0.70);
            let remove = (fraction * tokens.len() as f64).round() as usize;
            let mut keep = vec![true; tokens.len()];
            for i in index::sample(rng, tokens.len(), remove) {
                keep[i] = false;
            }
            out.text = remove_tokens(&doc.text, &tokens, |i| keep[i]);
        }
        NoiseKind::Label => {
            let others: Vec<&String> = classes.iter().filter(|c| **c != doc.label).collect();
            let Some(new) = others.choose(rng) else {
                return Err(Error::data(format!(
                    "label noise: no class other than {:?} to switch document {} to",
                    doc.label, doc.id
                )));
            };
            out.label = (*new).clone();
        }
        NoiseKind::Bias => {
            let sentence = bias.and_then(|b| b.sentence(&doc.label)).ok_or_else(|| {
                Error::data(format!("bias noise: no bias sentence for class {:?}", doc.label))
            })?;
            out.text = format!("{} {sentence}", doc.text);
        }
        NoiseKind::Payload => {
            let payload = doc.noise_payload.as_deref().ok_or_else(|| {
                Error::data(format!("payload noise: document {} has no noise_payload", doc.id))
            })?;
            out.text = format!("{}\n{payload}", doc.text);
        }
    }
    Ok(out)
}

/// The noisy duplicate of `doc` used throughout a model set; its randomness
/// depends only on (seed, kind, doc id) and its id carries [`NOISY_SUFFIX`].
pub fn noisy_version(
    doc: &Document,
    kind: NoiseKind,
    classes: &[String],
    bias: Option<&BiasTable>,
    seed: u64,
) -> Result<Document> {
    let mut rng = seed::rng(seed, &["inject", kind.as_str(), &doc.id]);
    let mut noisy = inject(doc, kind, classes, bias, &mut rng)?;
    noisy.id = format!("{}{NOISY_SUFFIX}", doc.id);
    Ok(noisy)
}

/// Models of one fold across the noise levels, and the fold's shared test set.
#[derive(Debug, Clone)]
pub struct FoldCells {
    pub fold: usize,
    /// Clean test split followed by the noisy duplicate of each test instance.
    pub test: Vec<Document>,
    /// One model per entry of [`NOISE_LEVELS`], in order.
    pub models: Vec<(u32, Arc<ClassifierModel>)>,
}

#[derive(Debug, Clone)]
pub struct ModelSet {
    pub dataset: String,
    pub model_kind: ModelKind,
    pub noise_kind: NoiseKind,
    pub folds: Vec<FoldCells>,
}

impl ModelSet {
    pub fn id(&self) -> String {
        format!("{}/{}/{}", self.dataset, self.model_kind, self.noise_kind)
    }

    pub fn cell_count(&self) -> usize {
        self.folds.iter().map(|f| f.models.len()).sum()
    }
}

/// Clean (0% noise) model of every fold; shared by all noise kinds.
pub fn train_clean_models(
    corpus: &Corpus,
    plan: &FoldPlan,
    kind: ModelKind,
    hp: &Hyperparams,
    seed: u64,
) -> Result<Vec<Arc<ClassifierModel>>> {
    (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let (train_docs, _) = plan.split(corpus, fold);
            let s = seed::derive(seed, &["train", kind.as_str(), &fold.to_string()]);
            train(&train_docs, &corpus.classes, kind, hp, s).map(Arc::new)
        })
        .collect()
}

/// Training documents of one fold at a noise level: a fixed per-fold random
/// order decides which instances are replaced, so higher levels replace a
/// superset of the instances replaced at lower levels.
pub fn noisy_training_docs(
    train_docs: &[&Document],
    noisy: &HashMap<&str, Document>,
    kind: NoiseKind,
    fold: usize,
    level: u32,
    seed: u64,
) -> Vec<Document> {
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    order.shuffle(&mut seed::rng(seed, &["select", kind.as_str(), &fold.to_string()]));
    let mut replace = vec![false; train_docs.len()];
    for &i in order.iter().take(replaced_count(level, train_docs.len())) {
        replace[i] = true;
    }
    train_docs
        .iter()
        .zip(replace)
        .map(|(doc, r)| if r { noisy[doc.id.as_str()].clone() } else { (*doc).clone() })
        .collect()
}

/// Builds the noisy model set for `noise_kind` on top of existing fold
/// plan and clean models.
#[allow(clippy::too_many_arguments)]
pub fn build_model_set_with(
    corpus: &Corpus,
    plan: &FoldPlan,
    clean: &[Arc<ClassifierModel>],
    model_kind: ModelKind,
    noise_kind: NoiseKind,
    hp: &Hyperparams,
    bias: Option<&BiasTable>,
    seed: u64,
) -> Result<ModelSet> {
    let noisy: HashMap<&str, Document> = corpus
        .documents
        .iter()
        .map(|d| Ok((d.id.as_str(), noisy_version(d, noise_kind, &corpus.classes, bias, seed)?)))
        .collect::<Result<_>>()?;

    let folds = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let (train_docs, test_docs) = plan.split(corpus, fold);
            let mut test: Vec<Document> = test_docs.iter().map(|d| (*d).clone()).collect();
            test.extend(test_docs.iter().map(|d| noisy[d.id.as_str()].clone()));
            let models = NOISE_LEVELS
                .par_iter()
                .map(|&level| {
                    if level == 0 {
                        return Ok((level, Arc::clone(&clean[fold])));
                    }
                    let docs = noisy_training_docs(&train_docs, &noisy, noise_kind, fold, level, seed);
                    let s = seed::derive(
                        seed,
                        &["train", model_kind.as_str(), &fold.to_string(), noise_kind.as_str(), &level.to_string()],
                    );
                    Ok((level, Arc::new(train(&docs, &corpus.classes, model_kind, hp, s)?)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FoldCells { fold, test, models })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ModelSet {
        dataset: corpus.name.clone(),
        model_kind,
        noise_kind,
        folds,
    })
}

/// Folds, clean models and the noisy grid in one call.
pub fn build_model_set(
    corpus: &Corpus,
    model_kind: ModelKind,
    noise_kind: NoiseKind,
    k: usize,
    seed: u64,
    bias: Option<&BiasTable>,
    hp: &Hyperparams,
) -> Result<ModelSet> {
    let plan = make_folds(corpus, k, seed)?;
    let clean = train_clean_models(corpus, &plan, model_kind, hp, seed)?;
    build_model_set_with(corpus, &plan, &clean, model_kind, noise_kind, hp, bias, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::Classifier;
    use crate::corpus::tokenize;

    fn classes() -> Vec<String> {
        vec!["neg".into(), "pos".into()]
    }

    fn corpus(n: usize) -> Corpus {
        let docs = (0..n)
            .map(|i| {
                let (label, text) = if i % 2 == 0 {
                    ("pos", format!("great fun lovely film number {i}"))
                } else {
                    ("neg", format!("awful dull boring film number {i}"))
                };
                let mut d = Document::new(format!("d{i:03}"), text, label);
                d.noise_payload = Some(format!("From: user{i}@example.com"));
                d
            })
            .collect();
        Corpus::new("toy", docs).unwrap()
    }

    fn bias() -> BiasTable {
        let pool: Vec<String> = ["the river ran past the old mill", "snow fell on the quiet harbour", "a kite drifted over the dunes"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        BiasTable::from_pool(&pool, &classes(), 4).unwrap()
    }

    #[test]
    fn label_noise_switches_to_the_other_class() {
        let d = Document::new("a", "text", "pos");
        let mut rng = seed::rng(0, &[]);
        let n = inject(&d, NoiseKind::Label, &classes(), None, &mut rng).unwrap();
        assert_eq!(n.label, "neg");
        assert!(inject(&d, NoiseKind::Label, &["pos".to_string()], None, &mut rng).is_err());
    }

    #[test]
    fn removal_drops_between_30_and_70_percent() {
        let d = Document::new("a", "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9", "pos");
        let original = tokenize(&d.text);
        for s in 0..200 {
            let mut rng = seed::rng(s, &[]);
            let n = inject(&d, NoiseKind::Removal, &classes(), None, &mut rng).unwrap();
            let kept = tokenize(&n.text);
            let removed = original.len() - kept.len();
            assert!((3..=7).contains(&removed), "removed {removed}");
            // order preserved: kept is a subsequence of the original
            let mut it = original.iter();
            assert!(kept.iter().all(|k| it.any(|o| o == k)));
        }
        let empty = Document::new("b", "...", "pos");
        assert!(inject(&empty, NoiseKind::Removal, &classes(), None, &mut seed::rng(0, &[])).is_err());
    }

    #[test]
    fn bias_suffix_is_fixed_per_class() {
        let table = bias();
        let mut rng = seed::rng(0, &[]);
        let a = inject(&Document::new("a", "one", "pos"), NoiseKind::Bias, &classes(), Some(&table), &mut rng).unwrap();
        let b = inject(&Document::new("b", "two", "pos"), NoiseKind::Bias, &classes(), Some(&table), &mut rng).unwrap();
        let c = inject(&Document::new("c", "one", "neg"), NoiseKind::Bias, &classes(), Some(&table), &mut rng).unwrap();
        assert_eq!(a.text.strip_prefix("one"), b.text.strip_prefix("two"));
        assert_ne!(a.text.strip_prefix("one"), c.text.strip_prefix("one"));
        assert!(inject(&Document::new("d", "x", "pos"), NoiseKind::Bias, &classes(), None, &mut rng).is_err());
    }

    #[test]
    fn payload_needs_a_payload() {
        let mut d = Document::new("a", "body", "pos");
        let mut rng = seed::rng(0, &[]);
        assert!(inject(&d, NoiseKind::Payload, &classes(), None, &mut rng).is_err());
        d.noise_payload = Some("Subject: hi".into());
        let n = inject(&d, NoiseKind::Payload, &classes(), None, &mut rng).unwrap();
        assert_eq!(n.text, "body\nSubject: hi");
    }

    #[test]
    fn replacement_counts() {
        assert_eq!(replaced_count(0, 80), 0);
        assert_eq!(replaced_count(25, 80), 20);
        assert_eq!(replaced_count(25, 10), 3);
        assert_eq!(replaced_count(50, 7), 4);
        assert_eq!(replaced_count(100, 7), 7);
        assert!(NoiseSpec::new(NoiseKind::Bias, 30).is_err());
    }

    #[test]
    fn full_label_noise_flips_every_training_label() {
        let c = corpus(20);
        let train_docs: Vec<&Document> = c.documents.iter().collect();
        let noisy: HashMap<&str, Document> = c
            .documents
            .iter()
            .map(|d| (d.id.as_str(), noisy_version(d, NoiseKind::Label, &c.classes, None, 1).unwrap()))
            .collect();
        let docs = noisy_training_docs(&train_docs, &noisy, NoiseKind::Label, 0, 100, 1);
        assert!(docs.iter().zip(&c.documents).all(|(n, o)| n.label != o.label));
        let half = noisy_training_docs(&train_docs, &noisy, NoiseKind::Label, 0, 50, 1);
        let changed = half.iter().zip(&c.documents).filter(|(n, o)| n.label != o.label).count();
        assert_eq!(changed, 10);
    }

    #[test]
    fn model_set_shape_and_shared_test() {
        let c = corpus(40);
        let set = build_model_set(&c, ModelKind::Mnb, NoiseKind::Bias, 5, 3, Some(&bias()), &Hyperparams::default())
            .unwrap();
        assert_eq!(set.cell_count(), 25);
        assert_eq!(set.id(), "toy/mnb/bias");
        let clean = train_clean_models(&c, &make_folds(&c, 5, 3).unwrap(), ModelKind::Mnb, &Hyperparams::default(), 3)
            .unwrap();
        for (fold, cells) in set.folds.iter().enumerate() {
            assert_eq!(cells.test.len(), 16);
            assert!(cells.test[8..].iter().all(|d| d.id.ends_with(NOISY_SUFFIX)));
            let level0 = &cells.models[0].1;
            for d in &cells.test {
                assert_eq!(level0.predict_proba(&d.text).unwrap(), clean[fold].predict_proba(&d.text).unwrap());
            }
        }
    }

    #[test]
    fn model_set_is_deterministic() {
        let c = corpus(30);
        let build = || {
            build_model_set(&c, ModelKind::SgdLinear, NoiseKind::Removal, 5, 8, None, &Hyperparams::default()).unwrap()
        };
        let (a, b) = (build(), build());
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.test, fb.test);
            for ((la, ma), (lb, mb)) in fa.models.iter().zip(&fb.models) {
                assert_eq!(la, lb);
                assert_eq!(ma, mb);
            }
        }
    }
}
