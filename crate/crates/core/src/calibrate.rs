//! Per-model relatedness thresholds.
//!
//! A labelled set of related (synonym) and unrelated (random) word pairs is
//! scored by each embedding model. The threshold τ is searched so that
//! precision and recall of the related class balance, and the model's AUC on
//! the same pairs becomes its ensemble weight.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingModel;
use crate::{jsonl, seed, Error, Result};

/// Binary search stops once the bracket is narrower than this.
pub const SEARCH_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordPair {
    pub w1: String,
    pub w2: String,
    pub related: bool,
}

fn unordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordPairSet {
    pub pairs: Vec<WordPair>,
}

impl WordPairSet {
    /// Rejects pairs that repeat (in either order).
    pub fn new(pairs: Vec<WordPair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pairs {
            if !seen.insert(unordered(&p.w1, &p.w2)) {
                return Err(Error::data(format!("pair ({}, {}) appears twice", p.w1, p.w2)));
            }
        }
        Ok(WordPairSet { pairs })
    }

    pub fn related_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.related).count()
    }

    pub fn unrelated_count(&self) -> usize {
        self.pairs.len() - self.related_count()
    }

    /// `w1,w2,related` rows with `related` in {0, 1}; a header row is optional.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let mut pairs = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
            if record.len() != 3 {
                return Err(Error::parse(path, idx + 1, "expected 3 fields: w1,w2,related"));
            }
            let related = match record[2].trim() {
                "1" => true,
                "0" => false,
                _ if idx == 0 => continue,
                other => {
                    return Err(Error::parse(path, idx + 1, format!("related must be 0 or 1, got {other:?}")))
                }
            };
            pairs.push(WordPair {
                w1: record[0].trim().to_string(),
                w2: record[1].trim().to_string(),
                related,
            });
        }
        WordPairSet::new(pairs).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["w1", "w2", "related"]).map_err(io)?;
        for p in &self.pairs {
            w.write_record([p.w1.as_str(), p.w2.as_str(), if p.related { "1" } else { "0" }])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub type Thesaurus = BTreeMap<String, Vec<String>>;

/// `{"word": ["synonym", ...]}`
pub fn load_thesaurus(path: &Path) -> Result<Thesaurus> {
    jsonl::read_json(path)
}

/// One word per line; blank lines and `#` comments are ignored.
pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// Related pairs are (word, synonym) for each common word's thesaurus entry;
/// unrelated pairs are distinct random pairs of common words that are not
/// synonyms in either direction.
pub fn build_pairs(
    common_words: &[String],
    thesaurus: &Thesaurus,
    target_unrelated: usize,
    seed: u64,
) -> Result<WordPairSet> {
    if target_unrelated == 0 {
        return Err(Error::invalid("target_unrelated must be at least 1"));
    }
    let mut words: Vec<&str> = Vec::new();
    {
        let mut seen = HashSet::new();
        for w in common_words {
            if seen.insert(w.as_str()) {
                words.push(w);
            }
        }
    }

    let mut synonyms: HashSet<(&str, &str)> = HashSet::new();
    for (key, syns) in thesaurus {
        for s in syns {
            if s != key {
                synonyms.insert(unordered(key, s));
            }
        }
    }

    let mut pairs = Vec::new();
    let mut used: HashSet<(&str, &str)> = HashSet::new();
    for &w in &words {
        for s in thesaurus.get(w).into_iter().flatten() {
            if s != w && used.insert(unordered(w, s)) {
                pairs.push(WordPair {
                    w1: w.to_string(),
                    w2: s.clone(),
                    related: true,
                });
            }
        }
    }

    let m = words.len();
    let word_set: HashSet<&str> = words.iter().copied().collect();
    let excluded = synonyms
        .iter()
        .filter(|(a, b)| word_set.contains(a) && word_set.contains(b))
        .count();
    let available = (m * m.saturating_sub(1) / 2).saturating_sub(excluded);
    if target_unrelated > available {
        return Err(Error::data(format!(
            "cannot draw {target_unrelated} unrelated pairs: only {available} non-synonym pairs exist among {m} words"
        )));
    }

    let mut rng = seed::rng(seed, &["pairs"]);
    let admissible = |i: usize, j: usize| !synonyms.contains(&unordered(words[i], words[j]));
    let chosen: Vec<(usize, usize)> = if 2 * target_unrelated > available {
        let mut all: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .filter(|&(i, j)| admissible(i, j))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(target_unrelated);
        all
    } else {
        let mut drawn = HashSet::new();
        let mut out = Vec::with_capacity(target_unrelated);
        while out.len() < target_unrelated {
            let i = rng.random_range(0..m);
            let j = rng.random_range(0..m);
            if i == j || !admissible(i, j) {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if drawn.insert(key) {
                out.push((i, j));
            }
        }
        out
    };
    pairs.extend(chosen.into_iter().map(|(i, j)| WordPair {
        w1: words[i].to_string(),
        w2: words[j].to_string(),
        related: false,
    }));
    WordPairSet::new(pairs)
}

/// Outcome of the threshold search for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Pairs skipped because a word was out of vocabulary.
    pub dropped: usize,
    /// Every usable score was identical; τ is that score.
    pub degenerate: bool,
    /// AUC below 0.5: related pairs tend to score lower than unrelated ones.
    pub inverted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Counts {
    tp: usize,
    fp: usize,
}

struct Scored<'a> {
    related: &'a [f64],
    unrelated: &'a [f64],
}

impl Scored<'_> {
    fn counts(&self, tau: f64) -> Counts {
        Counts {
            tp: self.related.iter().filter(|s| **s > tau).count(),
            fp: self.unrelated.iter().filter(|s| **s > tau).count(),
        }
    }

    /// (precision, recall, f1) of the related class; 0/0 is 0.
    fn metrics(&self, c: Counts) -> (f64, f64, f64) {
        let predicted = c.tp + c.fp;
        let precision = if predicted == 0 { 0.0 } else { c.tp as f64 / predicted as f64 };
        let recall = c.tp as f64 / self.related.len() as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        (precision, recall, f1)
    }
}

fn check_scores(related: &[f64], unrelated: &[f64]) -> Result<()> {
    if related.is_empty() || unrelated.is_empty() {
        return Err(Error::data(format!(
            "need at least one usable related and one usable unrelated pair (have {} and {})",
            related.len(),
            unrelated.len()
        )));
    }
    if let Some(s) = related
        .iter()
        .chain(unrelated)
        .find(|s| !s.is_finite() || s.abs() > 1.0)
    {
        return Err(Error::invalid(format!("relatedness score {s} outside [-1, 1]")));
    }
    Ok(())
}

/// Threshold search over raw scores (pair labelled related iff score > τ).
///
/// When some related pair is predicted related, precision ≥ recall exactly
/// when no more pairs are predicted related than there are related pairs,
/// which is monotone in τ. A binary search on that predicate brackets the
/// balance point to [`SEARCH_TOLERANCE`]. Scores only change the confusion
/// counts at observed values, so the bracket is then snapped to the two
/// constant-count intervals on either side of the crossing; the one with the
/// smaller |precision - recall| (then higher F1, then the upper one) wins,
/// and τ is its midpoint.
pub fn find_threshold_scores(related: &[f64], unrelated: &[f64]) -> Result<ThresholdReport> {
    check_scores(related, unrelated)?;
    let scored = Scored { related, unrelated };
    let auc = auc_from_scores(related, unrelated)?;

    let mut distinct: Vec<f64> = related.iter().chain(unrelated).copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    let report = |tau: f64, degenerate: bool| {
        let (precision, recall, f1) = scored.metrics(scored.counts(tau));
        ThresholdReport {
            tau,
            precision,
            recall,
            f1,
            dropped: 0,
            degenerate,
            inverted: auc < 0.5,
        }
    };
    if distinct.len() == 1 {
        return Ok(report(distinct[0], true));
    }

    let n_related = related.len();
    let balanced = |tau: f64| {
        let c = scored.counts(tau);
        c.tp + c.fp <= n_related
    };
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    if balanced(lo) {
        hi = lo;
    }
    while hi - lo >= SEARCH_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if balanced(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Constant-count intervals are [-1, s0), [s0, s1), ..., [s_last, 1]:
    // interval i starts at distinct[i - 1] (or -1) and predicts exactly the
    // scores >= distinct[i] as related.
    let bounds = |i: usize| -> (f64, f64) {
        let start = if i == 0 { -1.0 } else { distinct[i - 1] };
        (start, distinct.get(i).copied().unwrap_or(1.0))
    };
    let counts_in = |i: usize| match distinct.get(i) {
        Some(&s) => Counts {
            tp: related.iter().filter(|x| **x >= s).count(),
            fp: unrelated.iter().filter(|x| **x >= s).count(),
        },
        None => Counts { tp: 0, fp: 0 },
    };
    let interval_of = |tau: f64| distinct.partition_point(|s| *s <= tau);
    let upper = (interval_of(lo)..=interval_of(hi))
        .find(|&i| {
            let c = counts_in(i);
            c.tp + c.fp <= n_related
        })
        .unwrap_or_else(|| interval_of(hi));

    let candidate = |i: usize| {
        let (start, end) = bounds(i);
        let c = counts_in(i);
        if start >= end || c.tp == 0 {
            return None;
        }
        let (p, r, f1) = scored.metrics(c);
        Some((i, (p - r).abs(), f1))
    };
    // Below the crossing |precision - recall| only grows as τ falls, so the
    // first interval with a true positive is the best on that side.
    let below = (0..upper).rev().find_map(candidate);
    let best = match (candidate(upper), below) {
        (Some(a), Some(b)) => {
            let b_wins = b.1 < a.1 - 1e-12 || ((b.1 - a.1).abs() <= 1e-12 && b.2 > a.2 + 1e-12);
            Some(if b_wins { b } else { a })
        }
        (a, b) => a.or(b),
    };
    let Some((chosen, _, _)) = best else {
        // no threshold recovers any related pair
        return Ok(report(0.5 * (lo + hi), true));
    };
    let (start, end) = bounds(chosen);
    Ok(report(0.5 * (start + end), false))
}

/// Probability that a random related pair outscores a random unrelated one,
/// ties counting one half (Mann-Whitney U over average ranks).
pub fn auc_from_scores(related: &[f64], unrelated: &[f64]) -> Result<f64> {
    if related.is_empty() || unrelated.is_empty() {
        return Err(Error::data("AUC needs at least one related and one unrelated score"));
    }
    let mut all: Vec<(f64, bool)> = related
        .iter()
        .map(|s| (*s, true))
        .chain(unrelated.iter().map(|s| (*s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // doubled ranks keep tie averages integral
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j, average (i + 1 + j) / 2
        let avg_x2 = (i + 1 + j) as u128;
        let positives = all[i..j].iter().filter(|(_, r)| *r).count() as u128;
        rank_sum_x2 += avg_x2 * positives;
        i = j;
    }
    let n_pos = related.len() as u128;
    let n_neg = unrelated.len() as u128;
    let u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
    Ok(u_x2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Scores the usable pairs; returns (related, unrelated, dropped).
pub fn score_pairs(model: &EmbeddingModel, pairs: &WordPairSet) -> (Vec<f64>, Vec<f64>, usize) {
    let mut related = Vec::new();
    let mut unrelated = Vec::new();
    let mut dropped = 0;
    for p in &pairs.pairs {
        match model.relatedness(&p.w1, &p.w2) {
            Some(s) if p.related => related.push(s),
            Some(s) => unrelated.push(s),
            None => dropped += 1,
        }
    }
    (related, unrelated, dropped)
}

pub fn find_threshold(model: &EmbeddingModel, pairs: &WordPairSet) -> Result<ThresholdReport> {
    let (related, unrelated, dropped) = score_pairs(model, pairs);
    let mut report = find_threshold_scores(&related, &unrelated)
        .map_err(|e| Error::Data(format!("{}: {e}", model.name)))?;
    report.dropped = dropped;
    Ok(report)
}

pub fn compute_auc(model: &EmbeddingModel, pairs: &WordPairSet) -> Result<f64> {
    let (related, unrelated, _) = score_pairs(model, pairs);
    auc_from_scores(&related, &unrelated).map_err(|e| Error::Data(format!("{}: {e}", model.name)))
}

/// Serialized calibration of one embedding model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: String,
    pub tau: f64,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub dropped: usize,
}

pub fn calibrate(model: &EmbeddingModel, pairs: &WordPairSet) -> Result<Calibration> {
    let report = find_threshold(model, pairs)?;
    if report.degenerate {
        log::warn!("{}: degenerate calibration, all usable scores identical", model.name);
    }
    if report.inverted {
        log::warn!("{}: related pairs score below unrelated ones (AUC < 0.5)", model.name);
    }
    Ok(Calibration {
        model: model.name.clone(),
        tau: report.tau,
        auc: compute_auc(model, pairs)?,
        precision: report.precision,
        recall: report.recall,
        f1: report.f1,
        dropped: report.dropped,
    })
}

/// An embedding model with its threshold and AUC.
#[derive(Debug, Clone)]
pub struct CalibratedEmbedding {
    pub model: Arc<EmbeddingModel>,
    pub threshold: f64,
    pub auc: f64,
}

impl CalibratedEmbedding {
    pub fn new(model: Arc<EmbeddingModel>, calibration: &Calibration) -> Self {
        CalibratedEmbedding {
            model,
            threshold: calibration.tau,
            auc: calibration.auc,
        }
    }

    /// Ensemble weight: the AUC when weighting is enabled, else 1.
    pub fn weight(&self, weighting: bool) -> f64 {
        if weighting {
            self.auc
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use proptest::prelude::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    /// Exhaustive scan over τ = -1, -0.999, ..., 1 minimising
    /// |precision - recall| (then maximising F1, then preferring higher τ)
    /// over thresholds that keep at least one related pair; returns the
    /// median of the optimal grid points.
    fn grid_scan(related: &[f64], unrelated: &[f64]) -> f64 {
        let mut best: Vec<(f64, (usize, usize))> = Vec::new();
        let mut best_key = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=2000 {
            let tau = (i as f64 - 1000.0) / 1000.0;
            let tp = related.iter().filter(|s| **s > tau).count();
            let fp = unrelated.iter().filter(|s| **s > tau).count();
            if tp == 0 {
                continue;
            }
            let p = tp as f64 / (tp + fp) as f64;
            let r = tp as f64 / related.len() as f64;
            let f1 = 2.0 * p * r / (p + r);
            let gap = (p - r).abs();
            if gap < best_key.0 - 1e-12 || ((gap - best_key.0).abs() <= 1e-12 && f1 > best_key.1 + 1e-12) {
                best_key = (gap, f1);
                best.clear();
            }
            if (gap - best_key.0).abs() <= 1e-12 && (f1 - best_key.1).abs() <= 1e-12 {
                best.push((tau, (tp, fp)));
            }
        }
        let top = best.last().unwrap().1;
        let pts: Vec<f64> = best.iter().filter(|(_, c)| *c == top).map(|(t, _)| *t).collect();
        let n = pts.len();
        if n % 2 == 1 {
            pts[n / 2]
        } else {
            0.5 * (pts[n / 2 - 1] + pts[n / 2])
        }
    }

    fn brute_auc(related: &[f64], unrelated: &[f64]) -> f64 {
        let mut twice = 0u64;
        for r in related {
            for u in unrelated {
                twice += if r > u { 2 } else if r == u { 1 } else { 0 };
            }
        }
        twice as f64 / (2 * related.len() * unrelated.len()) as f64
    }

    #[test]
    fn separable_scores_land_inside_the_gap() {
        let r = find_threshold_scores(&[0.8, 0.9], &[0.1, 0.2]).unwrap();
        assert!(r.tau > 0.2 && r.tau < 0.8, "{}", r.tau);
        assert!((r.tau - grid_scan(&[0.8, 0.9], &[0.1, 0.2])).abs() <= 1e-3);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert!(!r.degenerate && !r.inverted);
    }

    #[test]
    fn inverted_scores_are_flagged() {
        let (rel, unrel) = ([0.1, 0.2], [0.8, 0.9]);
        let r = find_threshold_scores(&rel, &unrel).unwrap();
        assert!(r.inverted);
        assert!((r.tau - grid_scan(&rel, &unrel)).abs() <= 1e-3, "{} vs {}", r.tau, grid_scan(&rel, &unrel));
    }

    #[test]
    fn identical_scores_are_degenerate() {
        let r = find_threshold_scores(&[0.5], &[0.5]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.tau, 0.5);
    }

    #[test]
    fn missing_side_is_an_error() {
        assert!(find_threshold_scores(&[], &[0.1]).is_err());
        assert!(auc_from_scores(&[0.3], &[]).is_err());
        assert!(find_threshold_scores(&[1.5], &[0.1]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_from_scores(&[0.8, 0.9], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc_from_scores(&[0.9], &[0.9]).unwrap(), 0.5);
        assert_eq!(auc_from_scores(&[0.1, 0.2], &[0.8, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn auc_of_shuffled_labels_is_near_half() {
        let mut rng = seed::rng(11, &["auc"]);
        let scores: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (rel, unrel): (Vec<_>, Vec<_>) = scores.iter().partition(|_| rng.random_bool(0.5));
        let auc = auc_from_scores(&rel, &unrel).unwrap();
        assert_eq!(auc, brute_auc(&rel, &unrel));
        assert!((auc - 0.5).abs() <= 0.05, "{auc}");
    }

    #[test]
    fn pairs_exclude_synonyms() {
        let common = words(&["a", "b", "c"]);
        let thesaurus: Thesaurus = [("a".to_string(), words(&["b"]))].into_iter().collect();
        let set = build_pairs(&common, &thesaurus, 2, 7).unwrap();
        assert_eq!(set.related_count(), 1);
        assert_eq!(set.pairs[0], WordPair { w1: "a".into(), w2: "b".into(), related: true });
        let mut unrelated: Vec<(String, String)> = set
            .pairs
            .iter()
            .filter(|p| !p.related)
            .map(|p| {
                let (x, y) = unordered(&p.w1, &p.w2);
                (x.to_string(), y.to_string())
            })
            .collect();
        unrelated.sort();
        assert_eq!(unrelated, vec![("a".into(), "c".into()), ("b".into(), "c".into())]);
        assert!(build_pairs(&common, &thesaurus, 3, 7).is_err());
        assert_eq!(build_pairs(&common, &thesaurus, 2, 7).unwrap(), set);
    }

    #[test]
    fn empty_thesaurus_gives_no_related_pairs() {
        let set = build_pairs(&words(&["a", "b", "c", "d"]), &Thesaurus::new(), 3, 1).unwrap();
        assert_eq!(set.related_count(), 0);
        assert_eq!(set.unrelated_count(), 3);
    }

    #[test]
    fn rejection_sampling_path_is_deterministic() {
        let common: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let thesaurus: Thesaurus = (0..50)
            .map(|i| (format!("w{i}"), vec![format!("w{}", i + 50), "extra".to_string()]))
            .collect();
        let a = build_pairs(&common, &thesaurus, 500, 3).unwrap();
        assert_eq!(a, build_pairs(&common, &thesaurus, 500, 3).unwrap());
        assert_eq!(a.related_count(), 100);
        assert_eq!(a.unrelated_count(), 500);
    }

    #[test]
    fn csv_round_trip() {
        let set = WordPairSet::new(vec![
            WordPair { w1: "a".into(), w2: "b".into(), related: true },
            WordPair { w1: "a".into(), w2: "c".into(), related: false },
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        set.write_csv(&path).unwrap();
        assert_eq!(WordPairSet::read_csv(&path).unwrap(), set);
        std::fs::write(&path, "a,b,1\nb,a,0\n").unwrap();
        assert!(WordPairSet::read_csv(&path).is_err());
    }

    #[test]
    fn model_level_calibration_drops_oov_pairs() {
        let m = EmbeddingModel::from_rows(
            "toy",
            2,
            vec![
                ("cat".to_string(), vec![1.0, 0.1]),
                ("kitten".to_string(), vec![1.0, 0.2]),
                ("car".to_string(), vec![0.1, 1.0]),
            ],
        )
        .unwrap();
        let pairs = WordPairSet::new(vec![
            WordPair { w1: "cat".into(), w2: "kitten".into(), related: true },
            WordPair { w1: "cat".into(), w2: "car".into(), related: false },
            WordPair { w1: "cat".into(), w2: "zebra".into(), related: false },
        ])
        .unwrap();
        let c = calibrate(&m, &pairs).unwrap();
        assert_eq!(c.dropped, 1);
        assert_eq!(c.auc, 1.0);
        let (rel, unrel, _) = score_pairs(&m, &pairs);
        assert!(c.tau > unrel[0] && c.tau < rel[0]);
    }

    fn quantized() -> impl Strategy<Value = f64> {
        (-1000i32..=1000).prop_map(|k| f64::from(k) / 1000.0)
    }

    proptest! {
        #[test]
        fn threshold_matches_grid_scan(
            rel in prop::collection::vec(quantized(), 1..60),
            unrel in prop::collection::vec(quantized(), 1..60),
        ) {
            let r = find_threshold_scores(&rel, &unrel).unwrap();
            prop_assume!(!r.degenerate);
            let scan = grid_scan(&rel, &unrel);
            prop_assert!((r.tau - scan).abs() <= 1e-3, "tau {} scan {}", r.tau, scan);
        }

        #[test]
        fn threshold_ignores_pair_order(
            mut rel in prop::collection::vec(quantized(), 1..40),
            mut unrel in prop::collection::vec(quantized(), 1..40),
        ) {
            let a = find_threshold_scores(&rel, &unrel).unwrap();
            rel.reverse();
            unrel.sort_by(f64::total_cmp);
            prop_assert_eq!(a, find_threshold_scores(&rel, &unrel).unwrap());
        }

        #[test]
        fn auc_matches_pairwise_and_is_rank_invariant(
            rel in prop::collection::vec(quantized(), 1..100),
            unrel in prop::collection::vec(quantized(), 1..100),
        ) {
            let auc = auc_from_scores(&rel, &unrel).unwrap();
            prop_assert_eq!(auc, brute_auc(&rel, &unrel));
            let squash = |v: &[f64]| v.iter().map(|x| (x * 3.0).tanh()).collect::<Vec<_>>();
            prop_assert_eq!(auc, auc_from_scores(&squash(&rel), &squash(&unrel)).unwrap());
        }
    }
}
