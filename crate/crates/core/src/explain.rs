//! Local surrogate explanations for a single prediction.
//!
//! The text is mapped to a binary presence vector over its distinct tokens.
//! Random masks remove words from the text, the black box scores each
//! perturbed text, and a proximity-weighted ridge regression of the target
//! class probability on the presence vector yields one importance score per
//! word.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classify::Classifier;
use crate::corpus::{remove_tokens, tokenize_spans};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    #[serde(rename = "id")]
    pub instance_id: String,
    #[serde(rename = "class")]
    pub predicted_class: String,
    /// (word, score), score descending; equal scores keep text order.
    pub entries: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeParams {
    pub n_samples: usize,
    pub top_k: usize,
    /// Width of the exponential proximity kernel over cosine distance.
    pub kernel_width: f64,
    pub ridge: f64,
}

impl Default for LimeParams {
    fn default() -> Self {
        LimeParams {
            n_samples: 5000,
            top_k: 10,
            kernel_width: 0.25,
            ridge: 1.0,
        }
    }
}

/// Explains `model`'s probability for `target_class` on `text`.
///
/// Randomness is derived only from `(seed, instance_id)`.
pub fn lime_explain(
    model: &dyn Classifier,
    instance_id: &str,
    text: &str,
    target_class: &str,
    params: &LimeParams,
    seed: u64,
) -> Result<Explanation> {
    if params.n_samples < 2 {
        return Err(Error::invalid(format!(
            "n_samples must be at least 2, got {}",
            params.n_samples
        )));
    }
    let target = model
        .class_index(target_class)
        .ok_or_else(|| Error::invalid(format!("class {target_class:?} is not known to the model")))?;
    let tokens = tokenize_spans(text);
    let mut features: Vec<String> = Vec::new();
    let mut feature_of_token = Vec::with_capacity(tokens.len());
    {
        let mut index_of: HashMap<&str, usize> = HashMap::new();
        for tok in &tokens {
            let next = features.len();
            let f = *index_of.entry(tok.text.as_str()).or_insert(next);
            if f == next {
                features.push(tok.text.clone());
            }
            feature_of_token.push(f);
        }
    }
    let d = features.len();
    if d == 0 {
        return Err(Error::invalid(format!("instance {instance_id} has no tokens to explain")));
    }

    let masks = sample_masks(d, params.n_samples, &mut seed::rng(seed, &["lime", instance_id]));

    let mut cache: HashMap<&[bool], f64> = HashMap::new();
    let mut targets = Vec::with_capacity(masks.len());
    for mask in &masks {
        let y = match cache.get(mask.as_slice()) {
            Some(y) => *y,
            None => {
                let perturbed = remove_tokens(text, &tokens, |i| mask[feature_of_token[i]]);
                let y = model.predict_proba(&perturbed)?[target];
                cache.insert(mask.as_slice(), y);
                y
            }
        };
        targets.push(y);
    }

    let weights: Vec<f64> = masks
        .iter()
        .map(|m| proximity(m, params.kernel_width))
        .collect();

    let scores = if targets.iter().all(|y| *y == targets[0]) {
        vec![0.0; d]
    } else {
        let all: Vec<usize> = (0..d).collect();
        let coef = weighted_ridge(&masks, &all, &targets, &weights, params.ridge)?;
        if params.top_k >= d {
            coef
        } else {
            let mut chosen: Vec<usize> = (0..d).collect();
            chosen.sort_by(|&a, &b| coef[b].abs().total_cmp(&coef[a].abs()).then(a.cmp(&b)));
            chosen.truncate(params.top_k);
            chosen.sort_unstable();
            let refit = weighted_ridge(&masks, &chosen, &targets, &weights, params.ridge)?;
            let mut scores = vec![f64::NAN; d];
            for (f, c) in chosen.iter().zip(refit) {
                scores[*f] = c;
            }
            scores
        }
    };

    let mut entries: Vec<(usize, f64)> = scores
        .into_iter()
        .enumerate()
        .filter(|(_, s)| !s.is_nan())
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(Explanation {
        instance_id: instance_id.to_string(),
        predicted_class: target_class.to_string(),
        entries: entries
            .into_iter()
            .map(|(f, s)| (features[f].clone(), s))
            .collect(),
    })
}

/// First row is the unperturbed text. With a single feature the only other
/// point is the empty text; otherwise each row removes a uniformly drawn
/// number of features in `[1, d-1]`, chosen uniformly.
fn sample_masks(d: usize, n_samples: usize, rng: &mut impl Rng) -> Vec<Vec<bool>> {
    if d == 1 {
        return vec![vec![true], vec![false]];
    }
    let mut masks = Vec::with_capacity(n_samples);
    masks.push(vec![true; d]);
    for _ in 1..n_samples {
        let remove = rng.random_range(1..d);
        let mut mask = vec![true; d];
        for f in index::sample(rng, d, remove) {
            mask[f] = false;
        }
        masks.push(mask);
    }
    masks
}

/// exp(-D²/σ²) with D the cosine distance between the mask and the
/// all-present vector. The empty mask has cosine similarity 0.
pub fn proximity(mask: &[bool], kernel_width: f64) -> f64 {
    let kept = mask.iter().filter(|b| **b).count() as f64;
    let similarity = if kept == 0.0 {
        0.0
    } else {
        (kept / mask.len() as f64).sqrt()
    };
    let distance = 1.0 - similarity;
    (-(distance * distance) / (kernel_width * kernel_width)).exp()
}

/// Weighted ridge regression with an unpenalised intercept, restricted to
/// the `columns` of the binary design. Returns one coefficient per column.
///
/// Solves `(X̃ᵀWX̃ + λI) β = X̃ᵀWỹ` where X̃ and ỹ are centred on their
/// weighted means.
pub fn weighted_ridge(
    design: &[Vec<bool>],
    columns: &[usize],
    targets: &[f64],
    weights: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    let p = columns.len();
    let total_w: f64 = weights.iter().sum();
    if total_w <= 0.0 {
        return Err(Error::invalid("sample weights sum to zero"));
    }
    let mut x_mean = vec![0.0; p];
    let mut y_mean = 0.0;
    for ((row, y), w) in design.iter().zip(targets).zip(weights) {
        for (j, &c) in columns.iter().enumerate() {
            if row[c] {
                x_mean[j] += w;
            }
        }
        y_mean += w * y;
    }
    for m in &mut x_mean {
        *m /= total_w;
    }
    y_mean /= total_w;

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut centred = vec![0.0; p];
    for ((row, y), w) in design.iter().zip(targets).zip(weights) {
        for (j, &c) in columns.iter().enumerate() {
            centred[j] = f64::from(u8::from(row[c])) - x_mean[j];
        }
        let dy = y - y_mean;
        for a in 0..p {
            let wa = w * centred[a];
            rhs[a] += wa * dy;
            for b in a..p {
                gram[(a, b)] += wa * centred[b];
            }
        }
    }
    for a in 0..p {
        gram[(a, a)] += ridge;
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let solution = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::invalid("singular surrogate system; use a positive ridge penalty"))?,
    };
    Ok(solution.iter().copied().collect())
}
