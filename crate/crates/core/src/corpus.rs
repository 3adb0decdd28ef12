//! Labelled text corpora: loading, tokenization and cross-validation folds.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{jsonl, seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: String,
    /// Text stripped from the instance during cleaning (headers, footers,
    /// signatures). Re-attached by payload noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_payload: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            noise_payload: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    /// Distinct single-word class names, sorted.
    pub classes: Vec<String>,
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Validates documents and derives the class list from their labels.
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::data("no documents"));
        }
        let mut ids = HashSet::new();
        let mut classes = BTreeSet::new();
        for doc in &documents {
            validate_label(&doc.label)?;
            if !ids.insert(doc.id.as_str()) {
                return Err(Error::data(format!("duplicate document id {:?}", doc.id)));
            }
            classes.insert(doc.label.clone());
        }
        if classes.len() < 2 {
            return Err(Error::data(format!(
                "corpus needs at least 2 classes, found {}",
                classes.len()
            )));
        }
        Ok(Corpus {
            name: name.into(),
            classes: classes.into_iter().collect(),
            documents,
        })
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.documents)
    }
}

fn validate_label(label: &str) -> Result<()> {
    if label.is_empty() {
        return Err(Error::data("empty class label"));
    }
    if label.chars().any(char::is_whitespace) {
        return Err(Error::data(format!(
            "multi-word class {label:?} is not supported; classes must be a single word"
        )));
    }
    Ok(())
}

/// Loads a JSONL corpus; the corpus is named after the file stem.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let documents: Vec<Document> = jsonl::read(path)?;
    for (idx, doc) in documents.iter().enumerate() {
        validate_label(&doc.label).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::new(name, documents).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// A token and its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

// Lowercasing can introduce combining marks (U+0130 -> "i\u{307}"); those are
// dropped so that tokenizing a token yields the token itself.
fn normalize(run: &str) -> String {
    run.to_lowercase().chars().filter(|c| c.is_alphanumeric()).collect()
}

/// Lowercased maximal runs of alphanumeric characters, with byte offsets.
pub fn tokenize_spans(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    for (idx, ch) in text.char_indices() {
        match (ch.is_alphanumeric(), start) {
            (true, None) => start = Some(idx),
            (false, Some(s)) => {
                out.push(Token {
                    text: normalize(&text[s..idx]),
                    start: s,
                    end: idx,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: normalize(&text[s..]),
            start: s,
            end: text.len(),
        });
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|t| t.text).collect()
}

/// Rebuilds `text` without the tokens for which `keep` is false. Characters
/// between tokens are kept, so order and punctuation of what remains survive.
pub fn remove_tokens(text: &str, tokens: &[Token], keep: impl Fn(usize) -> bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (idx, tok) in tokens.iter().enumerate() {
        if !keep(idx) {
            out.push_str(&text[cursor..tok.start]);
            cursor = tok.end;
        }
    }
    out.push_str(&text[cursor..]);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    /// (train, test) for one fold, in corpus order.
    pub fn split<'a>(&self, corpus: &'a Corpus, fold: usize) -> (Vec<&'a Document>, Vec<&'a Document>) {
        corpus
            .documents
            .iter()
            .partition(|d| self.fold_of(&d.id) != Some(fold))
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment. Documents are shuffled within each class,
/// the per-class lists are concatenated in class order and dealt round-robin,
/// so every class is spread evenly and fold sizes differ by at most one.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if k > corpus.documents.len() {
        return Err(Error::invalid(format!(
            "k={k} exceeds the {} documents in the corpus",
            corpus.documents.len()
        )));
    }
    let mut rng = seed::rng(seed, &["folds", &corpus.name]);
    let mut order = Vec::with_capacity(corpus.documents.len());
    for class in &corpus.classes {
        let mut ids: Vec<&str> = corpus
            .documents
            .iter()
            .filter(|d| &d.label == class)
            .map(|d| d.id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        order.extend(ids);
    }
    let assignments = order
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i % k))
        .collect();
    Ok(FoldPlan { k, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document::new(format!("d{i}"), format!("text {i}"), if i % 2 == 0 { "pos" } else { "neg" }))
            .collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Good, GREAT movie!"), vec!["good", "great", "movie"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("NNTP-Posting-Host"), vec!["nntp", "posting", "host"]);
        assert_eq!(tokenize("Straße 42x"), vec!["straße", "42x"]);
    }

    #[test]
    fn spans_point_into_source() {
        let text = "Re: Posting-Host!";
        for tok in tokenize_spans(text) {
            assert_eq!(normalize(&text[tok.start..tok.end]), tok.text);
        }
    }

    #[test]
    fn remove_tokens_keeps_order_and_punctuation() {
        let text = "a good, bad movie";
        let toks = tokenize_spans(text);
        assert_eq!(remove_tokens(text, &toks, |i| i != 2), "a good,  movie");
        assert_eq!(remove_tokens(text, &toks, |_| true), text);
    }

    #[test]
    fn corpus_validation() {
        let err = Corpus::new("x", vec![]).unwrap_err();
        assert!(err.to_string().contains("no documents"));

        let mut d = docs(4);
        d[1].label = "very good".into();
        assert!(Corpus::new("x", d).unwrap_err().to_string().contains("multi-word class"));

        let mut d = docs(4);
        d[3].id = "d0".into();
        assert!(Corpus::new("x", d).unwrap_err().to_string().contains("duplicate"));

        let c = Corpus::new("x", docs(4)).unwrap();
        assert_eq!(c.classes, vec!["neg", "pos"]);
    }

    #[test]
    fn folds_examples() {
        let c = Corpus::new("x", docs(10)).unwrap();
        let plan = make_folds(&c, 5, 1).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
        assert_eq!(plan, make_folds(&c, 5, 1).unwrap());
        assert!(make_folds(&c, 11, 1).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let c = Corpus::new("x", docs(20)).unwrap();
        let plan = make_folds(&c, 5, 3).unwrap();
        for fold in 0..5 {
            let (_, test) = plan.split(&c, fold);
            let pos = test.iter().filter(|d| d.label == "pos").count();
            assert_eq!((pos, test.len()), (2, 4));
        }
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "\\PC{0,60}") {
            let once = tokenize(&text);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }

        #[test]
        fn folds_partition_the_corpus(n in 4usize..60, k in 2usize..8, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let c = Corpus::new("x", docs(n)).unwrap();
            let plan = make_folds(&c, k, seed).unwrap();
            prop_assert_eq!(plan.assignments.len(), n);
            let sizes = plan.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut seen = 0;
            for fold in 0..k {
                let (train, test) = plan.split(&c, fold);
                prop_assert_eq!(train.len() + test.len(), n);
                seen += test.len();
            }
            prop_assert_eq!(seen, n);
        }
    }
}
