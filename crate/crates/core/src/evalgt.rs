//! Ground-truth evaluation of oracle verdicts against human labels.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::oracle::TrustVerdict;
use crate::{jsonl, seed, Error, Result};

/// What one annotator said about an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanLabel {
    Trustworthy,
    Untrustworthy,
    Undefined,
    /// The annotator guessed the wrong class and never saw the explanation.
    ClassMispredicted,
}

impl HumanLabel {
    pub fn verdict(self) -> Option<TrustVerdict> {
        match self {
            HumanLabel::Trustworthy => Some(TrustVerdict::Trustworthy),
            HumanLabel::Untrustworthy => Some(TrustVerdict::Untrustworthy),
            HumanLabel::Undefined => Some(TrustVerdict::Undefined),
            HumanLabel::ClassMispredicted => None,
        }
    }
}

impl From<TrustVerdict> for HumanLabel {
    fn from(v: TrustVerdict) -> Self {
        match v {
            TrustVerdict::Trustworthy => HumanLabel::Trustworthy,
            TrustVerdict::Untrustworthy => HumanLabel::Untrustworthy,
            TrustVerdict::Undefined => HumanLabel::Undefined,
        }
    }
}

impl FromStr for HumanLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "class_mispredicted" {
            return Ok(HumanLabel::ClassMispredicted);
        }
        s.parse::<TrustVerdict>().map(HumanLabel::from)
    }
}

/// Outcome of applying the agreement rule to the labels collected so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Fewer than two labels.
    Pending,
    /// The first two labels disagree; a third annotator decides.
    NeedsThird,
    Final(TrustVerdict),
    Discarded,
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Pending => f.write_str("pending"),
            Resolution::NeedsThird => f.write_str("needs_third"),
            Resolution::Final(v) => write!(f, "{v}"),
            Resolution::Discarded => f.write_str("discarded"),
        }
    }
}

/// Two matching labels decide; otherwise a third label decides if it
/// matches either of the first two. A wrong class guess by anyone discards
/// the instance. Labels beyond the third are ignored.
pub fn resolve(labels: &[HumanLabel]) -> Resolution {
    if labels.contains(&HumanLabel::ClassMispredicted) {
        return Resolution::Discarded;
    }
    let v: Vec<TrustVerdict> = labels.iter().filter_map(|l| l.verdict()).collect();
    match v.as_slice() {
        [] | [_] => Resolution::Pending,
        [a, b] if a == b => Resolution::Final(*a),
        [_, _] => Resolution::NeedsThird,
        [a, b, ..] if a == b => Resolution::Final(*a),
        [a, b, c, ..] if c == a || c == b => Resolution::Final(*c),
        _ => Resolution::Discarded,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub instance_id: String,
    pub oracle_verdict: TrustVerdict,
    pub annotator_labels: Vec<(String, HumanLabel)>,
}

impl LabelRecord {
    pub fn resolve(&self) -> Resolution {
        let labels: Vec<HumanLabel> = self.annotator_labels.iter().map(|(_, l)| *l).collect();
        resolve(&labels)
    }
}

/// One line of the ground-truth JSONL: a resolved human label next to the
/// oracle's verdict. Labels may be written as names or as 0, 1, 2
/// (trustworthy, untrustworthy, undefined).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    #[serde(alias = "instance_id")]
    pub id: String,
    #[serde(alias = "oracle_label", alias = "prediction", deserialize_with = "verdict_or_code")]
    pub oracle: TrustVerdict,
    #[serde(alias = "human_label", alias = "final", deserialize_with = "verdict_or_code")]
    pub label: TrustVerdict,
}

fn verdict_or_code<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<TrustVerdict, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Code(u64),
        Name(String),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Code(c) => c.to_string(),
        Raw::Name(s) => s,
    };
    text.parse().map_err(serde::de::Error::custom)
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    jsonl::read(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `confusion[human][oracle]`, indexed trustworthy, untrustworthy,
    /// undefined.
    pub confusion: [[usize; 3]; 3],
    pub trustworthy: LabelScores,
    pub untrustworthy: LabelScores,
    pub undefined: LabelScores,
    pub records: usize,
}

impl Metrics {
    pub fn scores(&self, v: TrustVerdict) -> &LabelScores {
        match v {
            TrustVerdict::Trustworthy => &self.trustworthy,
            TrustVerdict::Untrustworthy => &self.untrustworthy,
            TrustVerdict::Undefined => &self.undefined,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion matrix and per-label precision/recall/F1, treating the human
/// label as truth. Undefined ratios are 0.
pub fn metrics(pairs: &[(TrustVerdict, TrustVerdict)]) -> Result<Metrics> {
    if pairs.is_empty() {
        return Err(Error::data("no resolved records to score"));
    }
    let mut m = [[0usize; 3]; 3];
    for (human, oracle) in pairs {
        m[human.index()][oracle.index()] += 1;
    }
    let score = |v: usize| {
        let tp = m[v][v];
        let predicted: usize = (0..3).map(|h| m[h][v]).sum();
        let actual: usize = m[v].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        LabelScores { precision, recall, f1 }
    };
    Ok(Metrics {
        confusion: m,
        trustworthy: score(0),
        untrustworthy: score(1),
        undefined: score(2),
        records: pairs.len(),
    })
}

pub fn metrics_from_records(records: &[GroundTruthRecord]) -> Result<Metrics> {
    let pairs: Vec<_> = records.iter().map(|r| (r.label, r.oracle)).collect();
    metrics(&pairs)
}

const MAX_PROPORTION_DRAWS: usize = 10_000;

/// Per-verdict sample sizes: target proportions 1/3 + U(−jitter, jitter),
/// renormalised, redrawn until every count lies within (1/3 ± jitter)·n.
pub fn stratified_counts(n: usize, jitter: f64, rng: &mut impl Rng) -> Result<[usize; 3]> {
    if !(0.0..1.0 / 3.0).contains(&jitter) {
        return Err(Error::invalid(format!("jitter {jitter} must lie in [0, 1/3)")));
    }
    let lo = ((1.0 / 3.0 - jitter) * n as f64).ceil() as usize;
    let hi = ((1.0 / 3.0 + jitter) * n as f64).floor() as usize;
    let checkable = jitter > 0.0 && 3 * lo <= n && n <= 3 * hi;
    for _ in 0..MAX_PROPORTION_DRAWS {
        let raw: [f64; 3] = std::array::from_fn(|_| {
            1.0 / 3.0 + if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 }
        });
        let total: f64 = raw.iter().sum();
        let counts = largest_remainder(raw.map(|p| p / total), n);
        if !checkable || counts.iter().all(|c| (lo..=hi).contains(c)) {
            return Ok(counts);
        }
    }
    Err(Error::data(format!("could not draw proportions within 1/3 ± {jitter} for n = {n}")))
}

fn largest_remainder(p: [f64; 3], n: usize) -> [usize; 3] {
    let exact = p.map(|x| x * n as f64);
    let mut counts = exact.map(|x| x.floor() as usize);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// Samples `n` items stratified by verdict. Returns indices into `verdicts`
/// in ascending order.
pub fn stratified_sample(verdicts: &[TrustVerdict], n: usize, jitter: f64, seed: u64) -> Result<Vec<usize>> {
    let mut rng = seed::rng(seed, &["stratified-sample"]);
    let counts = stratified_counts(n, jitter, &mut rng)?;
    let by_class: Vec<Vec<usize>> = TrustVerdict::ALL
        .iter()
        .map(|v| (0..verdicts.len()).filter(|&i| verdicts[i] == *v).collect())
        .collect();
    let shortfalls: Vec<String> = TrustVerdict::ALL
        .iter()
        .zip(&by_class)
        .zip(counts)
        .filter(|((_, pool), want)| pool.len() < *want)
        .map(|((v, pool), want)| format!("{v}: need {want}, have {}", pool.len()))
        .collect();
    if !shortfalls.is_empty() {
        return Err(Error::data(format!("not enough instances to sample: {}", shortfalls.join("; "))));
    }
    let mut out: Vec<usize> = by_class
        .iter()
        .zip(counts)
        .flat_map(|(pool, want)| {
            index::sample(&mut rng, pool.len(), want)
                .into_iter()
                .map(|i| pool[i])
                .collect::<Vec<_>>()
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}
