//! The trustworthiness oracle.
//!
//! A correctly predicted instance is explained, the explanation is filtered
//! down to the words that support the prediction, each word is judged
//! against the class name by the embedding ensemble, and the per-word
//! relatedness tuples are folded into a (trustworthy, untrustworthy,
//! undefined) tuple.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::CalibratedEmbedding;
use crate::classify::Classifier;
use crate::corpus::Document;
use crate::explain::{lime_explain, Explanation, LimeParams};
use crate::relate::{ensemble_combine, plurality, EnsembleMethod, RelatednessTuple, Verdict};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustMethod {
    /// Mean of the word tuples.
    Average,
    /// Mean, then all mass on its largest component.
    Plurality,
    /// Trustworthy as soon as one word is related.
    Sufficiency,
}

impl FromStr for TrustMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(TrustMethod::Average),
            "plurality" => Ok(TrustMethod::Plurality),
            "sufficiency" => Ok(TrustMethod::Sufficiency),
            other => Err(Error::invalid(format!("unknown trust method {other:?}"))),
        }
    }
}

impl FromStr for EnsembleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aggregation" => Ok(EnsembleMethod::Aggregation),
            "voting" => Ok(EnsembleMethod::Voting),
            other => Err(Error::invalid(format!("unknown relatedness method {other:?}"))),
        }
    }
}

pub const EXCLUSION_RANGES: [f64; 2] = [0.0, 0.07];
pub const EXPLANATION_THRESHOLDS: [f64; 2] = [0.0, 0.05];
pub const TOP_NS: [usize; 2] = [5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    pub exclusion_range: f64,
    pub weighting: bool,
    pub relatedness_method: EnsembleMethod,
    pub explanation_threshold: f64,
    pub top_n: usize,
    pub trust_method: TrustMethod,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            exclusion_range: 0.07,
            weighting: true,
            relatedness_method: EnsembleMethod::Aggregation,
            explanation_threshold: 0.0,
            top_n: 10,
            trust_method: TrustMethod::Average,
        }
    }
}

impl fmt::Display for ToolConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "range={} weighting={} relatedness={} threshold={} top_n={} trust={}",
            self.exclusion_range,
            self.weighting,
            match self.relatedness_method {
                EnsembleMethod::Aggregation => "aggregation",
                EnsembleMethod::Voting => "voting",
            },
            self.explanation_threshold,
            self.top_n,
            match self.trust_method {
                TrustMethod::Average => "average",
                TrustMethod::Plurality => "plurality",
                TrustMethod::Sufficiency => "sufficiency",
            }
        )
    }
}

/// The full configuration grid, in lexicographic order of the field tuple.
/// Positions in this list are the config ids used in result files.
pub fn enumerate_configs() -> Vec<ToolConfig> {
    let mut out = Vec::with_capacity(96);
    for &exclusion_range in &EXCLUSION_RANGES {
        for weighting in [false, true] {
            for relatedness_method in [EnsembleMethod::Aggregation, EnsembleMethod::Voting] {
                for &explanation_threshold in &EXPLANATION_THRESHOLDS {
                    for &top_n in &TOP_NS {
                        for trust_method in [TrustMethod::Average, TrustMethod::Plurality, TrustMethod::Sufficiency] {
                            out.push(ToolConfig {
                                exclusion_range,
                                weighting,
                                relatedness_method,
                                explanation_threshold,
                                top_n,
                                trust_method,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustVerdict {
    Trustworthy,
    Untrustworthy,
    Undefined,
}

impl TrustVerdict {
    pub const ALL: [TrustVerdict; 3] = [TrustVerdict::Trustworthy, TrustVerdict::Untrustworthy, TrustVerdict::Undefined];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrustVerdict::Trustworthy => "trustworthy",
            TrustVerdict::Untrustworthy => "untrustworthy",
            TrustVerdict::Undefined => "undefined",
        }
    }
}

impl fmt::Display for TrustVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrustVerdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trustworthy" | "0" => Ok(TrustVerdict::Trustworthy),
            "untrustworthy" | "1" => Ok(TrustVerdict::Untrustworthy),
            "undefined" | "2" => Ok(TrustVerdict::Undefined),
            other => Err(Error::invalid(format!("unknown trust label {other:?}"))),
        }
    }
}

/// (trustworthy, untrustworthy, undefined); components sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct TrustTuple {
    pub trustworthy: f64,
    pub untrustworthy: f64,
    pub undefined: f64,
}

impl From<[f64; 3]> for TrustTuple {
    fn from(a: [f64; 3]) -> Self {
        TrustTuple {
            trustworthy: a[0],
            untrustworthy: a[1],
            undefined: a[2],
        }
    }
}

impl From<TrustTuple> for [f64; 3] {
    fn from(t: TrustTuple) -> Self {
        t.as_array()
    }
}

impl TrustTuple {
    pub const TRUSTWORTHY: Self = TrustTuple { trustworthy: 1.0, untrustworthy: 0.0, undefined: 0.0 };
    pub const UNTRUSTWORTHY: Self = TrustTuple { trustworthy: 0.0, untrustworthy: 1.0, undefined: 0.0 };
    pub const UNDEFINED: Self = TrustTuple { trustworthy: 0.0, untrustworthy: 0.0, undefined: 1.0 };

    pub fn as_array(&self) -> [f64; 3] {
        [self.trustworthy, self.untrustworthy, self.undefined]
    }

    /// Unique largest component; ties are undefined.
    pub fn verdict(&self) -> TrustVerdict {
        match plurality(self.as_array()) {
            Some(0) => TrustVerdict::Trustworthy,
            Some(1) => TrustVerdict::Untrustworthy,
            _ => TrustVerdict::Undefined,
        }
    }

    pub fn from_verdict(v: TrustVerdict) -> Self {
        match v {
            TrustVerdict::Trustworthy => Self::TRUSTWORTHY,
            TrustVerdict::Untrustworthy => Self::UNTRUSTWORTHY,
            TrustVerdict::Undefined => Self::UNDEFINED,
        }
    }

    /// Componentwise mean; `None` for an empty input.
    pub fn mean<'a>(tuples: impl IntoIterator<Item = &'a TrustTuple>) -> Option<TrustTuple> {
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for t in tuples {
            for (s, v) in sum.iter_mut().zip(t.as_array()) {
                *s += v;
            }
            n += 1;
        }
        (n > 0).then(|| TrustTuple::from(sum.map(|s| s / n as f64)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub value: TrustVerdict,
    pub trust: TrustTuple,
    pub per_word: Vec<(String, RelatednessTuple)>,
}

/// Indices of the entries that survive filtering: positive score, at least
/// the explanation threshold, first `top_n` of those. `scores` must already
/// be sorted descending.
fn surviving(scores: impl Iterator<Item = f64>, cfg: &ToolConfig) -> Vec<usize> {
    scores
        .enumerate()
        .filter(|(_, s)| *s > 0.0 && *s >= cfg.explanation_threshold)
        .map(|(i, _)| i)
        .take(cfg.top_n)
        .collect()
}

pub fn filter_explanation(entries: &[(String, f64)], cfg: &ToolConfig) -> Vec<(String, f64)> {
    surviving(entries.iter().map(|(_, s)| *s), cfg)
        .into_iter()
        .map(|i| entries[i].clone())
        .collect()
}

pub fn combine_trust(word_tuples: &[RelatednessTuple], method: TrustMethod) -> Result<TrustTuple> {
    if word_tuples.is_empty() {
        return Err(Error::invalid("no word tuples to combine"));
    }
    let n = word_tuples.len() as f64;
    let mut mean = [0.0; 3];
    for t in word_tuples {
        for (m, v) in mean.iter_mut().zip(t.as_array()) {
            *m += v;
        }
    }
    let mean = TrustTuple::from(mean.map(|m| m / n));
    Ok(match method {
        TrustMethod::Average => mean,
        TrustMethod::Plurality => TrustTuple::from_verdict(mean.verdict()),
        TrustMethod::Sufficiency => {
            let verdicts: Vec<Verdict> = word_tuples.iter().map(RelatednessTuple::argmax).collect();
            if verdicts.contains(&Verdict::Related) {
                TrustTuple::TRUSTWORTHY
            } else if verdicts.iter().all(|v| *v == Verdict::Unrelated) {
                TrustTuple::UNTRUSTWORTHY
            } else {
                TrustTuple::UNDEFINED
            }
        }
    })
}

/// An explanation word with its similarity to the class under every
/// ensemble member (`None` = out of vocabulary). Similarities do not depend
/// on the tool configuration, so one scoring serves all 96 configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredWord {
    pub word: String,
    pub importance: f64,
    pub similarities: Vec<Option<f64>>,
}

pub fn score_words(explanation: &Explanation, ensemble: &[CalibratedEmbedding]) -> Vec<ScoredWord> {
    explanation
        .entries
        .iter()
        .map(|(word, importance)| ScoredWord {
            word: word.clone(),
            importance: *importance,
            similarities: ensemble
                .iter()
                .map(|ce| ce.model.relatedness(word, &explanation.predicted_class))
                .collect(),
        })
        .collect()
}

/// Judges pre-scored explanation words under one configuration.
pub fn judge_scored(words: &[ScoredWord], ensemble: &[CalibratedEmbedding], cfg: &ToolConfig) -> Result<OracleVerdict> {
    let kept = surviving(words.iter().map(|w| w.importance), cfg);
    let mut per_word = Vec::with_capacity(kept.len());
    for i in kept {
        let w = &words[i];
        let verdicts: Vec<(Verdict, f64)> = w
            .similarities
            .iter()
            .zip(ensemble)
            .map(|(sim, ce)| {
                (
                    Verdict::from_score(*sim, ce.threshold, cfg.exclusion_range),
                    ce.weight(cfg.weighting),
                )
            })
            .collect();
        per_word.push((w.word.clone(), ensemble_combine(&verdicts, cfg.relatedness_method)?));
    }
    let trust = if per_word.is_empty() {
        TrustTuple::UNDEFINED
    } else {
        let tuples: Vec<RelatednessTuple> = per_word.iter().map(|(_, t)| *t).collect();
        combine_trust(&tuples, cfg.trust_method)?
    };
    Ok(OracleVerdict {
        value: trust.verdict(),
        trust,
        per_word,
    })
}

pub fn judge_explanation(
    explanation: &Explanation,
    ensemble: &[CalibratedEmbedding],
    cfg: &ToolConfig,
) -> Result<OracleVerdict> {
    if ensemble.is_empty() {
        return Err(Error::invalid("the embedding ensemble is empty"));
    }
    judge_scored(&score_words(explanation, ensemble), ensemble, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Judgment {
    /// The model mispredicted the instance; it is not judged.
    Skipped { predicted: String },
    Judged {
        explanation: Explanation,
        verdict: OracleVerdict,
    },
}

/// Explains the model's prediction on `doc` if it is correct.
pub fn explain_if_correct(
    model: &dyn Classifier,
    doc: &Document,
    lime: &LimeParams,
    seed: u64,
) -> Result<std::result::Result<Explanation, String>> {
    let classes = model.classes();
    if !classes.contains(&doc.label) {
        return Err(Error::data(format!(
            "instance {} has label {:?} unknown to the model",
            doc.id, doc.label
        )));
    }
    let predicted = &classes[model.predict(&doc.text)?];
    if *predicted != doc.label {
        return Ok(Err(predicted.clone()));
    }
    lime_explain(model, &doc.id, &doc.text, predicted, lime, seed).map(Ok)
}

pub fn oracle_judge(
    model: &dyn Classifier,
    doc: &Document,
    ensemble: &[CalibratedEmbedding],
    cfg: &ToolConfig,
    lime: &LimeParams,
    seed: u64,
) -> Result<Judgment> {
    if ensemble.is_empty() {
        return Err(Error::invalid("the embedding ensemble is empty"));
    }
    match explain_if_correct(model, doc, lime, seed)? {
        Err(predicted) => Ok(Judgment::Skipped { predicted }),
        Ok(explanation) => {
            let verdict = judge_explanation(&explanation, ensemble, cfg)?;
            Ok(Judgment::Judged { explanation, verdict })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrust {
    pub trust: TrustTuple,
    pub judged: usize,
    pub skipped: usize,
}

/// Mean trust tuple over the correctly predicted instances of `test_set`.
pub fn model_trust_score(
    model: &dyn Classifier,
    test_set: &[Document],
    ensemble: &[CalibratedEmbedding],
    cfg: &ToolConfig,
    lime: &LimeParams,
    seed: u64,
) -> Result<ModelTrust> {
    let judgments = test_set
        .par_iter()
        .map(|doc| oracle_judge(model, doc, ensemble, cfg, lime, seed))
        .collect::<Result<Vec<_>>>()?;
    summarize(&judgments)
}

pub fn summarize(judgments: &[Judgment]) -> Result<ModelTrust> {
    let tuples: Vec<TrustTuple> = judgments
        .iter()
        .filter_map(|j| match j {
            Judgment::Judged { verdict, .. } => Some(verdict.trust),
            Judgment::Skipped { .. } => None,
        })
        .collect();
    let trust = TrustTuple::mean(&tuples).ok_or_else(|| Error::data("no correct predictions to judge"))?;
    Ok(ModelTrust {
        trust,
        judged: tuples.len(),
        skipped: judgments.len() - tuples.len(),
    })
}

/// One line of the verdict JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<usize>,
    pub verdict: Option<TrustVerdict>,
    pub trust: Option<TrustTuple>,
    pub skipped: bool,
    pub words: Vec<(String, [f64; 3])>,
}

impl VerdictRecord {
    pub fn new(id: &str, config: Option<usize>, judgment: &Judgment) -> Self {
        match judgment {
            Judgment::Skipped { .. } => VerdictRecord {
                id: id.to_string(),
                config,
                verdict: None,
                trust: None,
                skipped: true,
                words: Vec::new(),
            },
            Judgment::Judged { verdict, .. } => VerdictRecord {
                id: id.to_string(),
                config,
                verdict: Some(verdict.value),
                trust: Some(verdict.trust),
                skipped: false,
                words: verdict
                    .per_word
                    .iter()
                    .map(|(w, t)| (w.clone(), t.as_array()))
                    .collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn rt(r: f64, u: f64, d: f64) -> RelatednessTuple {
        RelatednessTuple { related: r, unrelated: u, undefined: d }
    }

    fn entries(v: &[(&str, f64)]) -> Vec<(String, f64)> {
        v.iter().map(|(w, s)| (w.to_string(), *s)).collect()
    }

    #[test]
    fn config_space_has_96_distinct_members() {
        let all = enumerate_configs();
        assert_eq!(all.len(), 96);
        let keys: HashSet<String> = all.iter().map(|c| c.to_string()).collect();
        assert_eq!(keys.len(), 96);
    }

    #[test]
    fn filtering_rules() {
        let e = entries(&[("host", 0.30), ("re", 0.06), ("deity", -0.10)]);
        let cfg = ToolConfig { explanation_threshold: 0.05, top_n: 5, ..ToolConfig::default() };
        assert_eq!(filter_explanation(&e, &cfg), entries(&[("host", 0.30), ("re", 0.06)]));
        let cfg = ToolConfig { explanation_threshold: 0.0, top_n: 1, ..ToolConfig::default() };
        assert_eq!(filter_explanation(&e, &cfg), entries(&[("host", 0.30)]));
        let neg = entries(&[("a", -0.1), ("b", -0.2)]);
        assert!(filter_explanation(&neg, &cfg).is_empty());
        let zero = entries(&[("a", 0.0)]);
        assert!(filter_explanation(&zero, &cfg).is_empty());
    }

    #[test]
    fn combine_examples() {
        let words = [rt(0.0, 0.8, 0.2), rt(1.0, 0.0, 0.0)];
        let avg = combine_trust(&words, TrustMethod::Average).unwrap();
        for (a, b) in avg.as_array().iter().zip([0.5, 0.4, 0.1]) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(combine_trust(&words, TrustMethod::Plurality).unwrap(), TrustTuple::TRUSTWORTHY);
        let unrel = [RelatednessTuple::UNRELATED, RelatednessTuple::UNRELATED];
        assert_eq!(combine_trust(&unrel, TrustMethod::Sufficiency).unwrap(), TrustTuple::UNTRUSTWORTHY);
        let mixed = [RelatednessTuple::UNRELATED, rt(0.5, 0.5, 0.0)];
        assert_eq!(combine_trust(&mixed, TrustMethod::Sufficiency).unwrap(), TrustTuple::UNDEFINED);
        assert_eq!(combine_trust(&words, TrustMethod::Sufficiency).unwrap(), TrustTuple::TRUSTWORTHY);
        assert!(combine_trust(&[], TrustMethod::Average).is_err());
    }

    #[test]
    fn plurality_tie_is_undefined() {
        let words = [RelatednessTuple::RELATED, RelatednessTuple::UNRELATED];
        assert_eq!(combine_trust(&words, TrustMethod::Plurality).unwrap(), TrustTuple::UNDEFINED);
    }

    #[test]
    fn verdict_of_tuple() {
        assert_eq!(TrustTuple::from([0.5, 0.4, 0.1]).verdict(), TrustVerdict::Trustworthy);
        assert_eq!(TrustTuple::from([0.4, 0.4, 0.2]).verdict(), TrustVerdict::Undefined);
    }

    #[test]
    fn trust_tuple_serializes_as_array() {
        let t = TrustTuple::from([0.5, 0.25, 0.25]);
        assert_eq!(serde_json::to_string(&t).unwrap(), "[0.5,0.25,0.25]");
    }

    #[test]
    fn model_level_mean() {
        let judged = |t: TrustTuple| Judgment::Judged {
            explanation: Explanation { instance_id: "x".into(), predicted_class: "c".into(), entries: vec![] },
            verdict: OracleVerdict { value: t.verdict(), trust: t, per_word: vec![] },
        };
        let s = summarize(&[judged(TrustTuple::TRUSTWORTHY), judged(TrustTuple::UNTRUSTWORTHY)]).unwrap();
        assert_eq!(s.trust, TrustTuple::from([0.5, 0.5, 0.0]));
        let s = summarize(&[judged(TrustTuple::UNDEFINED), Judgment::Skipped { predicted: "c".into() }]).unwrap();
        assert_eq!((s.trust, s.judged, s.skipped), (TrustTuple::UNDEFINED, 1, 1));
        assert!(summarize(&[Judgment::Skipped { predicted: "c".into() }]).is_err());
    }
}
