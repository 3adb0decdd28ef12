//! Black-box text classifiers under test.
//!
//! Everything downstream (explainer, oracle, experiment runner) only needs
//! [`Classifier::predict_proba`]. Two models are built in: multinomial naive
//! Bayes and a one-vs-rest logistic model trained by SGD. Third-party models
//! plug in through [`ExternalClassifier`] or [`FnClassifier`].

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Document};
use crate::{seed, Error, Result};

pub trait Classifier: Send + Sync {
    /// Class names, in the order of the probability vector.
    fn classes(&self) -> &[String];

    /// Probability distribution over [`Classifier::classes`].
    fn predict_proba(&self, text: &str) -> Result<Vec<f64>>;

    /// Index of the most probable class; ties go to the lowest index.
    fn predict(&self, text: &str) -> Result<usize> {
        Ok(argmax(&self.predict_proba(text)?))
    }

    fn class_index(&self, name: &str) -> Option<usize> {
        self.classes().iter().position(|c| c == name)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mnb,
    SgdLinear,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mnb => "mnb",
            ModelKind::SgdLinear => "sgd_linear",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnb" => Ok(ModelKind::Mnb),
            "sgd" | "sgd_linear" => Ok(ModelKind::SgdLinear),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Additive smoothing for naive Bayes; 1.0 is Laplace smoothing.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 1.0,
            learning_rate: 0.1,
            epochs: 20,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Params {
    Mnb {
        log_prior: Vec<f64>,
        /// `[class][feature]` log P(token | class).
        log_likelihood: Vec<Vec<f64>>,
        /// Kept for inspection; not used for prediction.
        feature_count: Vec<Vec<f64>>,
    },
    SgdLinear {
        /// `[class][feature]`
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
        loss_history: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    kind: ModelKind,
    classes: Vec<String>,
    vocabulary: HashMap<String, usize>,
    params: Params,
}

type SparseRow = Vec<(usize, f64)>;

impl ClassifierModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    /// Regularised training objective after each SGD epoch (empty for MNB).
    pub fn loss_history(&self) -> &[f64] {
        match &self.params {
            Params::SgdLinear { loss_history, .. } => loss_history,
            Params::Mnb { .. } => &[],
        }
    }

    /// Token counts restricted to the training vocabulary, sorted by feature.
    fn features(&self, text: &str) -> SparseRow {
        count_features(&self.vocabulary, text)
    }
}

fn count_features(vocabulary: &HashMap<String, usize>, text: &str) -> SparseRow {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for tok in tokenize(text) {
        if let Some(&f) = vocabulary.get(&tok) {
            *counts.entry(f).or_default() += 1.0;
        }
    }
    let mut row: SparseRow = counts.into_iter().collect();
    row.sort_unstable_by_key(|(f, _)| *f);
    row
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Classifier for ClassifierModel {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        let x = self.features(text);
        let probs = match &self.params {
            Params::Mnb {
                log_prior,
                log_likelihood,
                ..
            } => {
                let mut scores = log_prior.clone();
                for (c, score) in scores.iter_mut().enumerate() {
                    for &(f, n) in &x {
                        *score += n * log_likelihood[c][f];
                    }
                }
                softmax_in_place(&mut scores);
                scores
            }
            Params::SgdLinear { weights, bias, .. } => {
                let mut scores: Vec<f64> = weights
                    .iter()
                    .zip(bias)
                    .map(|(w, b)| sigmoid(x.iter().map(|&(f, n)| w[f] * n).sum::<f64>() + b))
                    .collect();
                let sum: f64 = scores.iter().sum();
                for s in &mut scores {
                    *s /= sum;
                }
                scores
            }
        };
        Ok(probs)
    }
}

/// Trains a built-in classifier. `classes` fixes the output order; every
/// class must have at least one training document.
pub fn train<D: Borrow<Document>>(
    docs: &[D],
    classes: &[String],
    kind: ModelKind,
    hp: &Hyperparams,
    seed: u64,
) -> Result<ClassifierModel> {
    let class_of: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut per_class = vec![0usize; classes.len()];
    let mut labels = Vec::with_capacity(docs.len());
    for doc in docs {
        let doc = doc.borrow();
        let c = *class_of.get(doc.label.as_str()).ok_or_else(|| {
            Error::data(format!("document {} has unknown class {:?}", doc.id, doc.label))
        })?;
        per_class[c] += 1;
        labels.push(c);
    }
    if let Some(c) = per_class.iter().position(|&n| n == 0) {
        return Err(Error::data(format!(
            "class {:?} has no training documents",
            classes[c]
        )));
    }

    // feature indices in order of first appearance
    let mut vocabulary = HashMap::new();
    for doc in docs {
        for tok in tokenize(&doc.borrow().text) {
            let next = vocabulary.len();
            vocabulary.entry(tok).or_insert(next);
        }
    }
    let rows: Vec<SparseRow> = docs
        .iter()
        .map(|d| count_features(&vocabulary, &d.borrow().text))
        .collect();

    let params = match kind {
        ModelKind::Mnb => fit_mnb(&rows, &labels, &per_class, vocabulary.len(), hp.alpha),
        ModelKind::SgdLinear => fit_sgd(&rows, &labels, classes.len(), vocabulary.len(), hp, seed),
    };
    Ok(ClassifierModel {
        kind,
        classes: classes.to_vec(),
        vocabulary,
        params,
    })
}

fn fit_mnb(rows: &[SparseRow], labels: &[usize], per_class: &[usize], n_features: usize, alpha: f64) -> Params {
    let n_classes = per_class.len();
    let mut feature_count = vec![vec![0.0; n_features]; n_classes];
    for (row, &c) in rows.iter().zip(labels) {
        for &(f, n) in row {
            feature_count[c][f] += n;
        }
    }
    let total = labels.len() as f64;
    let log_prior = per_class.iter().map(|&n| (n as f64 / total).ln()).collect();
    let log_likelihood = feature_count
        .iter()
        .map(|counts| {
            let denom = counts.iter().sum::<f64>() + alpha * n_features as f64;
            counts.iter().map(|n| ((n + alpha) / denom).ln()).collect()
        })
        .collect();
    Params::Mnb {
        log_prior,
        log_likelihood,
        feature_count,
    }
}

/// One-vs-rest logistic regression, plain SGD with L2 weight decay.
///
/// Weights are stored as `scale * v` so the decay step is O(1) per sample
/// instead of O(|V|).
fn fit_sgd(
    rows: &[SparseRow],
    labels: &[usize],
    n_classes: usize,
    n_features: usize,
    hp: &Hyperparams,
    seed: u64,
) -> Params {
    let mut rng = seed::rng(seed, &["sgd"]);
    let mut v = vec![vec![0.0; n_features]; n_classes];
    let mut scale = vec![1.0f64; n_classes];
    let mut bias = vec![0.0; n_classes];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut loss_history = Vec::with_capacity(hp.epochs);
    let decay = 1.0 - hp.learning_rate * hp.l2;

    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = &rows[i];
            for c in 0..n_classes {
                let y = if labels[i] == c { 1.0 } else { 0.0 };
                let z = scale[c] * row.iter().map(|&(f, n)| v[c][f] * n).sum::<f64>() + bias[c];
                let g = sigmoid(z) - y;
                scale[c] *= decay;
                if scale[c] < 1e-9 {
                    for w in &mut v[c] {
                        *w *= scale[c];
                    }
                    scale[c] = 1.0;
                }
                let step = hp.learning_rate * g / scale[c];
                for &(f, n) in row {
                    v[c][f] -= step * n;
                }
                bias[c] -= hp.learning_rate * g;
            }
        }
        let weights: Vec<Vec<f64>> = v
            .iter()
            .zip(&scale)
            .map(|(vc, s)| vc.iter().map(|w| w * s).collect())
            .collect();
        loss_history.push(sgd_objective(rows, labels, &weights, &bias, hp.l2));
    }
    let weights = v
        .into_iter()
        .zip(&scale)
        .map(|(vc, s)| vc.into_iter().map(|w| w * s).collect())
        .collect();
    Params::SgdLinear {
        weights,
        bias,
        loss_history,
    }
}

fn sgd_objective(rows: &[SparseRow], labels: &[usize], weights: &[Vec<f64>], bias: &[f64], l2: f64) -> f64 {
    let mut loss = 0.0;
    for (row, &label) in rows.iter().zip(labels) {
        for (c, (w, b)) in weights.iter().zip(bias).enumerate() {
            let z = row.iter().map(|&(f, n)| w[f] * n).sum::<f64>() + b;
            loss += if label == c { softplus(-z) } else { softplus(z) };
        }
    }
    let penalty: f64 = weights.iter().flatten().map(|w| w * w).sum();
    loss / rows.len() as f64 + 0.5 * l2 * penalty
}

/// Adapts any closure to [`Classifier`]. Mostly useful for tests and for
/// wrapping models that live in the same process.
pub struct FnClassifier<F> {
    classes: Vec<String>,
    f: F,
}

impl<F> FnClassifier<F>
where
    F: Fn(&str) -> Vec<f64> + Send + Sync,
{
    pub fn new(classes: Vec<String>, f: F) -> Self {
        FnClassifier { classes, f }
    }
}

impl<F> Classifier for FnClassifier<F>
where
    F: Fn(&str) -> Vec<f64> + Send + Sync,
{
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        let probs = (self.f)(text);
        if probs.len() != self.classes.len() {
            return Err(Error::Classifier(format!(
                "expected {} probabilities, got {}",
                self.classes.len(),
                probs.len()
            )));
        }
        Ok(probs)
    }
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ExternalResponse {
    probs: Vec<f64>,
    classes: Vec<String>,
}

struct Pipe {
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// A classifier running in a child process, spoken to in line-delimited JSON
/// over stdio: `{"text": ...}` in, `{"probs": [...], "classes": [...]}` out.
///
/// The class order is learned from a probe request with empty text at spawn
/// time, and every later response must report the same classes.
pub struct ExternalClassifier {
    classes: Vec<String>,
    child: Child,
    pipe: Mutex<Pipe>,
}

impl ExternalClassifier {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let pipe = Pipe {
            stdin: BufWriter::new(stdin),
            stdout: BufReader::new(stdout),
        };
        let mut this = ExternalClassifier {
            classes: Vec::new(),
            child,
            pipe: Mutex::new(pipe),
        };
        let probe = this.round_trip("")?;
        if probe.classes.len() < 2 {
            return Err(Error::Classifier("external classifier reported fewer than 2 classes".into()));
        }
        this.classes = probe.classes;
        Ok(this)
    }

    fn round_trip(&self, text: &str) -> Result<ExternalResponse> {
        let mut pipe = self.pipe.lock().unwrap_or_else(|p| p.into_inner());
        let broken = |e: std::io::Error| Error::Classifier(format!("external classifier pipe: {e}"));
        serde_json::to_writer(&mut pipe.stdin, &ExternalRequest { text })
            .map_err(|e| Error::Classifier(e.to_string()))?;
        pipe.stdin.write_all(b"\n").map_err(broken)?;
        pipe.stdin.flush().map_err(broken)?;
        let mut line = String::new();
        if pipe.stdout.read_line(&mut line).map_err(broken)? == 0 {
            return Err(Error::Classifier("external classifier closed its output".into()));
        }
        serde_json::from_str(&line)
            .map_err(|e| Error::Classifier(format!("bad response {:?}: {e}", line.trim_end())))
    }
}

impl Classifier for ExternalClassifier {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        let resp = self.round_trip(text)?;
        if resp.classes != self.classes {
            return Err(Error::Classifier("external classifier changed its class list".into()));
        }
        if resp.probs.len() != self.classes.len() || resp.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Classifier(format!("invalid probability vector {:?}", resp.probs)));
        }
        let sum: f64 = resp.probs.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Classifier("probability vector sums to zero".into()));
        }
        Ok(resp.probs.into_iter().map(|p| p / sum).collect())
    }
}

impl Drop for ExternalClassifier {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
