//! Word-versus-class relatedness verdicts and their ensemble combination.

use serde::{Deserialize, Serialize};

use crate::calibrate::CalibratedEmbedding;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Related,
    Unrelated,
    Undefined,
}

impl Verdict {
    /// Maps a similarity score against a threshold with an exclusion band:
    /// strictly above `tau + range` is related, strictly below `tau - range`
    /// unrelated, anything else (including abstention) undefined.
    pub fn from_score(score: Option<f64>, tau: f64, range: f64) -> Verdict {
        match score {
            Some(s) if s > tau + range => Verdict::Related,
            Some(s) if s < tau - range => Verdict::Unrelated,
            _ => Verdict::Undefined,
        }
    }
}

/// (related, unrelated, undefined) proportions; components sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelatednessTuple {
    pub related: f64,
    pub unrelated: f64,
    pub undefined: f64,
}

impl RelatednessTuple {
    pub const RELATED: Self = RelatednessTuple { related: 1.0, unrelated: 0.0, undefined: 0.0 };
    pub const UNRELATED: Self = RelatednessTuple { related: 0.0, unrelated: 1.0, undefined: 0.0 };
    pub const UNDEFINED: Self = RelatednessTuple { related: 0.0, unrelated: 0.0, undefined: 1.0 };

    pub fn as_array(&self) -> [f64; 3] {
        [self.related, self.unrelated, self.undefined]
    }

    pub fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::Related => Self::RELATED,
            Verdict::Unrelated => Self::UNRELATED,
            Verdict::Undefined => Self::UNDEFINED,
        }
    }

    /// Component with the unique largest mass; ties are undefined.
    pub fn argmax(&self) -> Verdict {
        match plurality(self.as_array()) {
            Some(0) => Verdict::Related,
            Some(1) => Verdict::Unrelated,
            _ => Verdict::Undefined,
        }
    }
}

/// Index of the unique maximum, `None` when the maximum is shared.
pub(crate) fn plurality(values: [f64; 3]) -> Option<usize> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut winners = values.iter().enumerate().filter(|(_, v)| **v == max);
    let first = winners.next().map(|(i, _)| i);
    if winners.next().is_some() {
        None
    } else {
        first
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMethod {
    /// Weighted proportion of models returning each verdict.
    Aggregation,
    /// All mass on the verdict with the largest total weight.
    Voting,
}

pub fn classify_word(ce: &CalibratedEmbedding, word: &str, class_name: &str, exclusion_range: f64) -> Verdict {
    Verdict::from_score(ce.model.relatedness(word, class_name), ce.threshold, exclusion_range)
}

pub fn ensemble_combine(verdicts: &[(Verdict, f64)], method: EnsembleMethod) -> Result<RelatednessTuple> {
    if verdicts.is_empty() {
        return Err(Error::invalid("ensemble needs at least one verdict"));
    }
    if let Some((_, w)) = verdicts.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid(format!("ensemble weight {w} must be finite and non-negative")));
    }
    let mut mass = [0.0f64; 3];
    for (v, w) in verdicts {
        let slot = match v {
            Verdict::Related => 0,
            Verdict::Unrelated => 1,
            Verdict::Undefined => 2,
        };
        mass[slot] += w;
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("ensemble weights are all zero"));
    }
    Ok(match method {
        EnsembleMethod::Aggregation => RelatednessTuple {
            related: mass[0] / total,
            unrelated: mass[1] / total,
            undefined: mass[2] / total,
        },
        EnsembleMethod::Voting => match plurality(mass) {
            Some(0) => RelatednessTuple::RELATED,
            Some(1) => RelatednessTuple::UNRELATED,
            _ => RelatednessTuple::UNDEFINED,
        },
    })
}
