//! The noise-injection experiment: model grids, oracle evaluation of every
//! test instance under all 96 configurations, and per-level result rows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyze::{summarize_outcomes, InstanceOutcome, ResultRow};
use crate::calibrate::CalibratedEmbedding;
use crate::classify::{Hyperparams, ModelKind};
use crate::corpus::{make_folds, tokenize_spans, Corpus};
use crate::explain::LimeParams;
use crate::noise::{build_model_set_with, train_clean_models, BiasTable, ModelSet, NoiseKind};
use crate::oracle::{enumerate_configs, explain_if_correct, judge_scored, score_words, ToolConfig, TrustTuple};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub folds: usize,
    pub seed: u64,
    pub model_kinds: Vec<ModelKind>,
    pub noise_kinds: Vec<NoiseKind>,
    pub lime: LimeParams,
    pub hyperparams: Hyperparams,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            folds: 5,
            seed: 0,
            model_kinds: vec![ModelKind::Mnb],
            noise_kinds: vec![NoiseKind::Removal, NoiseKind::Label, NoiseKind::Bias],
            lime: LimeParams::default(),
            hyperparams: Hyperparams::default(),
        }
    }
}

/// One test instance under one model of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub model_set: String,
    pub noise_kind: NoiseKind,
    pub fold: usize,
    pub level: u32,
    pub id: String,
    pub predicted: String,
    pub correct: bool,
    /// Trust tuple per configuration, present when the prediction is correct.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust: Option<Vec<TrustTuple>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub results: Vec<ResultRow>,
    pub instances: Vec<InstanceRecord>,
}

/// Judges every test instance of every cell of `set` under `configs`.
/// Each correct instance is explained once; the explanation is then judged
/// under all configurations.
pub fn evaluate_model_set(
    set: &ModelSet,
    ensemble: &[CalibratedEmbedding],
    configs: &[ToolConfig],
    lime: &LimeParams,
    seed: u64,
) -> Result<Vec<InstanceRecord>> {
    if ensemble.is_empty() {
        return Err(Error::invalid("the embedding ensemble is empty"));
    }
    let jobs: Vec<(usize, usize, usize)> = set
        .folds
        .iter()
        .enumerate()
        .flat_map(|(f, cells)| {
            (0..cells.models.len()).flat_map(move |m| (0..cells.test.len()).map(move |d| (f, m, d)))
        })
        .collect();
    let model_set = set.id();
    jobs.par_iter()
        .map(|&(f, m, d)| {
            let cells = &set.folds[f];
            let (level, model) = &cells.models[m];
            let doc = &cells.test[d];
            let cell_seed = seed::derive(
                seed,
                &["explain", set.model_kind.as_str(), &cells.fold.to_string(), &level.to_string()],
            );
            let (predicted, trust) = if tokenize_spans(&doc.text).is_empty() {
                use crate::classify::Classifier;
                let predicted = model.classes()[model.predict(&doc.text)?].clone();
                let trust = (predicted == doc.label).then(|| vec![TrustTuple::UNDEFINED; configs.len()]);
                (predicted, trust)
            } else {
                match explain_if_correct(model.as_ref(), doc, lime, cell_seed)? {
                    Err(predicted) => (predicted, None),
                    Ok(explanation) => {
                        let words = score_words(&explanation, ensemble);
                        let trust = configs
                            .iter()
                            .map(|cfg| judge_scored(&words, ensemble, cfg).map(|v| v.trust))
                            .collect::<Result<Vec<_>>>()?;
                        (explanation.predicted_class, Some(trust))
                    }
                }
            };
            Ok(InstanceRecord {
                model_set: model_set.clone(),
                noise_kind: set.noise_kind,
                fold: cells.fold,
                level: *level,
                id: doc.id.clone(),
                correct: trust.is_some(),
                predicted,
                trust,
            })
        })
        .collect()
}

pub fn result_rows(set_id: &str, noise_kind: NoiseKind, records: &[InstanceRecord], n_configs: usize) -> Result<Vec<ResultRow>> {
    let outcomes: Vec<InstanceOutcome> = records
        .iter()
        .map(|r| InstanceOutcome {
            fold: r.fold,
            level: r.level,
            id: r.id.clone(),
            trust: r.trust.clone(),
        })
        .collect();
    summarize_outcomes(set_id, noise_kind, &outcomes, n_configs)
}

/// Runs the whole grid: for each model kind, one fold plan and one set of
/// clean models shared by every noise kind.
pub fn run_experiment(
    corpus: &Corpus,
    settings: &ExperimentSettings,
    ensemble: &[CalibratedEmbedding],
    bias: Option<&BiasTable>,
) -> Result<ExperimentOutput> {
    if settings.model_kinds.is_empty() || settings.noise_kinds.is_empty() {
        return Err(Error::invalid("the experiment needs at least one model kind and one noise kind"));
    }
    let configs = enumerate_configs();
    let plan = make_folds(corpus, settings.folds, settings.seed)?;
    let mut results = Vec::new();
    let mut instances = Vec::new();
    for &model_kind in &settings.model_kinds {
        let clean = train_clean_models(corpus, &plan, model_kind, &settings.hyperparams, settings.seed)?;
        for &noise_kind in &settings.noise_kinds {
            let set = build_model_set_with(
                corpus,
                &plan,
                &clean,
                model_kind,
                noise_kind,
                &settings.hyperparams,
                bias,
                settings.seed,
            )?;
            log::info!("evaluating model set {} ({} models)", set.id(), set.cell_count());
            let records = evaluate_model_set(&set, ensemble, &configs, &settings.lime, settings.seed)?;
            results.extend(result_rows(&set.id(), noise_kind, &records, configs.len())?);
            instances.extend(records);
        }
    }
    Ok(ExperimentOutput { results, instances })
}
