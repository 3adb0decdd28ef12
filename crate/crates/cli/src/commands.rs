use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use wordtrust::analyze::{analyze as analyze_results, ResultRow};
use wordtrust::calibrate::{build_pairs, calibrate as calibrate_model, load_thesaurus, load_word_list, CalibratedEmbedding, Calibration, WordPairSet};
use wordtrust::classify::{train, Classifier, ExternalClassifier, Hyperparams, ModelKind};
use wordtrust::corpus::{load_corpus, tokenize, Corpus};
use wordtrust::embed::{load_vectors, EmbeddingModel, VectorFormat};
use wordtrust::evalgt::{load_ground_truth, metrics_from_records, stratified_sample};
use wordtrust::experiment::{run_experiment, ExperimentSettings};
use wordtrust::explain::{lime_explain, Explanation, LimeParams};
use wordtrust::noise::{load_bias_pool, BiasTable, NoiseKind};
use wordtrust::oracle::{enumerate_configs, explain_if_correct, judge_scored, score_words, Judgment, ToolConfig, VerdictRecord};
use wordtrust::{jsonl, seed, Error};
use wordtrust_annotate::server::{self, AppState};
use wordtrust_annotate::PoolItem;

use crate::{AnalyzeArgs, CalibrateArgs, CliError, Common, EnsembleArgs, ExplainArgs, JudgeArgs, LimeArgs, MetricsArgs, ModelArgs, NoiseRunArgs, SampleArgs, ServeArgs, ToolArgs};

type Result<T> = std::result::Result<T, CliError>;

/// Written beside every command's outputs.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config_file: Option<String>,
    seed: u64,
    inputs: BTreeMap<String, Vec<String>>,
    output_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    tool_config: Option<String>,
    settings: serde_json::Value,
}

struct Run {
    command: &'static str,
    common: Common,
    seed: u64,
    out: PathBuf,
    inputs: BTreeMap<String, Vec<String>>,
}

impl Run {
    fn start(command: &'static str, common: &Common) -> Result<Self> {
        if let Some(jobs) = common.jobs {
            if jobs == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
        let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
        Ok(Run {
            command,
            common: common.clone(),
            seed: common.seed.unwrap_or(0),
            out,
            inputs: BTreeMap::new(),
        })
    }

    fn input(&mut self, name: &str, paths: &[&Path]) {
        if !paths.is_empty() {
            self.inputs
                .insert(name.to_string(), paths.iter().map(|p| p.display().to_string()).collect());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn finish(self, tool_config: Option<String>, settings: serde_json::Value) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_file: self.common.config.as_ref().map(|p| p.display().to_string()),
            seed: self.seed,
            inputs: self.inputs,
            output_dir: self.out.display().to_string(),
            tool_config,
            settings,
        };
        jsonl::write_json(&self.out.join("manifest.json"), &manifest)?;
        Ok(())
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

fn parsed<T: std::str::FromStr<Err = Error>>(value: Option<&String>, default: T) -> Result<T> {
    value.map(|v| v.parse()).transpose().map(|v| v.unwrap_or(default)).map_err(CliError::from)
}

fn lime_params(l: &LimeArgs) -> LimeParams {
    let d = LimeParams::default();
    LimeParams {
        n_samples: l.samples.unwrap_or(d.n_samples),
        top_k: l.top_k.unwrap_or(d.top_k),
        kernel_width: l.kernel_width.unwrap_or(d.kernel_width),
        ridge: l.ridge.unwrap_or(d.ridge),
    }
}

fn load_embeddings(paths: &[PathBuf], format: Option<&String>) -> Result<Vec<EmbeddingModel>> {
    let format = parsed(format, VectorFormat::Word2vecText)?;
    paths
        .iter()
        .map(|p| {
            log::info!("loading {}", p.display());
            load_vectors(p, format).map_err(CliError::from)
        })
        .collect()
}

fn load_ensemble(e: &EnsembleArgs, run: &mut Run) -> Result<Vec<CalibratedEmbedding>> {
    if e.embeddings.is_empty() {
        return Err(CliError::Usage("missing --embeddings".into()));
    }
    run.input("embeddings", &e.embeddings.iter().map(PathBuf::as_path).collect::<Vec<_>>());
    let models = load_embeddings(&e.embeddings, e.format.as_ref())?;
    let calibrations: Vec<Calibration> = if !e.calibrations.is_empty() {
        if e.calibrations.len() != models.len() {
            return Err(CliError::Usage(format!(
                "{} calibrations given for {} embeddings",
                e.calibrations.len(),
                models.len()
            )));
        }
        run.input("calibrations", &e.calibrations.iter().map(PathBuf::as_path).collect::<Vec<_>>());
        e.calibrations.iter().map(|p| jsonl::read_json(p)).collect::<wordtrust::Result<_>>()?
    } else {
        let pairs_path = e
            .pairs
            .as_ref()
            .ok_or_else(|| CliError::Usage("either --calibrations or --pairs is required".into()))?;
        run.input("pairs", &[pairs_path]);
        let pairs = WordPairSet::read_csv(pairs_path)?;
        models.iter().map(|m| calibrate_model(m, &pairs)).collect::<wordtrust::Result<_>>()?
    };
    Ok(models
        .into_iter()
        .zip(calibrations)
        .map(|(m, c)| {
            if c.model != m.name {
                log::warn!("calibration for {:?} applied to embedding {:?}", c.model, m.name);
            }
            log::info!("{}: tau {:.4}, auc {:.4}", m.name, c.tau, c.auc);
            CalibratedEmbedding::new(Arc::new(m), &c)
        })
        .collect())
}

/// The corpus to process and the classifier to apply to it.
fn load_model(m: &ModelArgs, seed: u64, run: &mut Run) -> Result<(Corpus, Box<dyn Classifier>)> {
    let corpus_path = required(m.corpus.as_ref(), "corpus")?;
    run.input("corpus", &[corpus_path]);
    let corpus = load_corpus(corpus_path)?;
    let model: Box<dyn Classifier> = if let Some(cmd) = &m.external {
        if m.model.is_some() || m.train.is_some() {
            return Err(CliError::Usage("--external excludes --model and --train".into()));
        }
        let mut parts = cmd.split_whitespace().map(String::from);
        let program = parts.next().ok_or_else(|| CliError::Usage("empty --external".into()))?;
        Box::new(ExternalClassifier::spawn(&program, &parts.collect::<Vec<_>>())?)
    } else {
        let kind = parsed(m.model.as_ref(), ModelKind::Mnb)?;
        let train_corpus = match &m.train {
            Some(p) => {
                run.input("train", &[p]);
                load_corpus(p)?
            }
            None => corpus.clone(),
        };
        let s = seed::derive(seed, &["train", kind.as_str()]);
        Box::new(train(&train_corpus.documents, &train_corpus.classes, kind, &Hyperparams::default(), s)?)
    };
    Ok((corpus, model))
}

fn tool_configs(t: &ToolArgs) -> Result<(Vec<(Option<usize>, ToolConfig)>, String)> {
    let individual = t.exclusion_range.is_some()
        || t.weighting.is_some()
        || t.relatedness.is_some()
        || t.explanation_threshold.is_some()
        || t.top_n.is_some()
        || t.trust.is_some();
    match t.tool_config.as_deref() {
        Some("all") => {
            if individual {
                return Err(CliError::Usage("--tool-config all excludes per-field tool flags".into()));
            }
            Ok((enumerate_configs().into_iter().enumerate().map(|(i, c)| (Some(i), c)).collect(), "all-96".into()))
        }
        None | Some("default") => {
            let d = ToolConfig::default();
            let cfg = ToolConfig {
                exclusion_range: t.exclusion_range.unwrap_or(d.exclusion_range),
                weighting: t.weighting.unwrap_or(d.weighting),
                relatedness_method: parsed(t.relatedness.as_ref(), d.relatedness_method)?,
                explanation_threshold: t.explanation_threshold.unwrap_or(d.explanation_threshold),
                top_n: t.top_n.unwrap_or(d.top_n),
                trust_method: parsed(t.trust.as_ref(), d.trust_method)?,
            };
            if cfg.exclusion_range < 0.0 || cfg.top_n == 0 {
                return Err(CliError::Usage("exclusion range must be ≥ 0 and top-n ≥ 1".into()));
            }
            Ok((vec![(None, cfg)], cfg.to_string()))
        }
        Some(other) => Err(CliError::Usage(format!("--tool-config must be `all` or `default`, not {other:?}"))),
    }
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut run = Run::start("calibrate", &a.common)?;
    if a.embeddings.is_empty() {
        return Err(CliError::Usage("missing --embeddings".into()));
    }
    let pairs = match (&a.pairs, &a.common_words, &a.thesaurus) {
        (Some(p), None, None) => {
            run.input("pairs", &[p]);
            WordPairSet::read_csv(p)?
        }
        (None, Some(words), Some(thesaurus)) => {
            run.input("common_words", &[words]);
            run.input("thesaurus", &[thesaurus]);
            let words = load_word_list(words)?;
            let thesaurus = load_thesaurus(thesaurus)?;
            let related: usize = words.iter().filter_map(|w| thesaurus.get(w)).map(Vec::len).sum();
            let pairs = build_pairs(&words, &thesaurus, a.unrelated.unwrap_or(related.max(1)), run.seed)?;
            pairs.write_csv(&run.path("pairs.csv"))?;
            pairs
        }
        _ => {
            return Err(CliError::Usage(
                "give either --pairs or both --common-words and --thesaurus".into(),
            ))
        }
    };
    run.input("embeddings", &a.embeddings.iter().map(PathBuf::as_path).collect::<Vec<_>>());
    let models = load_embeddings(&a.embeddings, a.format.as_ref())?;
    let mut outputs = Vec::new();
    for m in &models {
        let cal = calibrate_model(m, &pairs)?;
        log::info!("{}: tau {:.4}, auc {:.4}, f1 {:.4}", m.name, cal.tau, cal.auc, cal.f1);
        let file = format!("{}.calibration.json", m.name);
        jsonl::write_json(&run.path(&file), &cal)?;
        outputs.push(file);
    }
    run.finish(None, serde_json::json!({ "outputs": outputs, "pairs": pairs.pairs.len() }))
}

pub fn explain(a: ExplainArgs) -> Result<()> {
    let mut run = Run::start("explain", &a.common)?;
    let (corpus, model) = load_model(&a.model, run.seed, &mut run)?;
    let lime = lime_params(&a.lime);
    let classes = model.classes().to_vec();
    let explanations: Vec<Option<Explanation>> = corpus
        .documents
        .par_iter()
        .map(|d| {
            if tokenize(&d.text).is_empty() {
                log::warn!("instance {} has no words; skipped", d.id);
                return Ok(None);
            }
            let predicted = &classes[model.predict(&d.text)?];
            lime_explain(model.as_ref(), &d.id, &d.text, predicted, &lime, run.seed).map(Some)
        })
        .collect::<wordtrust::Result<_>>()?;
    let explanations: Vec<Explanation> = explanations.into_iter().flatten().collect();
    jsonl::write(&run.path("explanations.jsonl"), &explanations)?;
    run.finish(None, serde_json::json!({ "lime": lime, "model": a.model.model, "external": a.model.external }))
}

pub fn judge(a: JudgeArgs) -> Result<()> {
    let mut run = Run::start("judge", &a.common)?;
    let (configs, label) = tool_configs(&a.tool)?;
    let (corpus, model) = load_model(&a.model, run.seed, &mut run)?;
    let ensemble = load_ensemble(&a.ensemble, &mut run)?;
    let lime = lime_params(&a.lime);
    let judged = corpus
        .documents
        .par_iter()
        .map(|d| -> Result<(Vec<VerdictRecord>, Option<Explanation>)> {
            if tokenize(&d.text).is_empty() {
                log::warn!("instance {} has no words; skipped", d.id);
                return Ok((Vec::new(), None));
            }
            match explain_if_correct(model.as_ref(), d, &lime, run.seed)? {
                Err(predicted) => {
                    let j = Judgment::Skipped { predicted };
                    Ok((configs.iter().map(|(i, _)| VerdictRecord::new(&d.id, *i, &j)).collect(), None))
                }
                Ok(explanation) => {
                    let words = score_words(&explanation, &ensemble);
                    let mut records = Vec::with_capacity(configs.len());
                    for (i, cfg) in &configs {
                        let verdict = judge_scored(&words, &ensemble, cfg)?;
                        let j = Judgment::Judged { explanation: explanation.clone(), verdict };
                        records.push(VerdictRecord::new(&d.id, *i, &j));
                    }
                    Ok((records, Some(explanation)))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut verdicts = Vec::new();
    let mut explanations = Vec::new();
    for (v, e) in judged {
        verdicts.extend(v);
        explanations.extend(e);
    }
    let judged_count = explanations.len();
    jsonl::write(&run.path("verdicts.jsonl"), &verdicts)?;
    jsonl::write(&run.path("explanations.jsonl"), &explanations)?;
    log::info!("judged {judged_count} of {} instances", corpus.documents.len());
    run.finish(
        Some(label),
        serde_json::json!({ "lime": lime, "model": a.model.model, "external": a.model.external, "judged": judged_count }),
    )
}

pub fn noise_run(a: NoiseRunArgs) -> Result<()> {
    let mut run = Run::start("noise-run", &a.common)?;
    let corpus_path = required(a.corpus.as_ref(), "corpus")?;
    run.input("corpus", &[corpus_path]);
    let corpus = load_corpus(corpus_path)?;
    let ensemble = load_ensemble(&a.ensemble, &mut run)?;
    let defaults = ExperimentSettings::default();
    let model_kinds = if a.models.is_empty() {
        defaults.model_kinds.clone()
    } else {
        a.models.iter().map(|m| m.parse()).collect::<wordtrust::Result<Vec<ModelKind>>>()?
    };
    let noise_kinds = if a.noise.is_empty() {
        defaults.noise_kinds.clone()
    } else {
        a.noise.iter().map(|m| m.parse()).collect::<wordtrust::Result<Vec<NoiseKind>>>()?
    };
    let bias = match &a.bias_pool {
        Some(p) => {
            run.input("bias_pool", &[p]);
            Some(BiasTable::from_pool(&load_bias_pool(p)?, &corpus.classes, run.seed)?)
        }
        None if noise_kinds.contains(&NoiseKind::Bias) => {
            return Err(CliError::Usage("bias noise needs --bias-pool".into()));
        }
        None => None,
    };
    let settings = ExperimentSettings {
        folds: a.folds.unwrap_or(defaults.folds),
        seed: run.seed,
        model_kinds,
        noise_kinds,
        lime: lime_params(&a.lime),
        hyperparams: Hyperparams::default(),
    };
    let out = run_experiment(&corpus, &settings, &ensemble, bias.as_ref())?;
    jsonl::write(&run.path("results.jsonl"), &out.results)?;
    if a.instances.unwrap_or(false) {
        jsonl::write(&run.path("instances.jsonl"), &out.instances)?;
    }
    run.finish(
        Some("all-96".into()),
        serde_json::json!({ "experiment": settings, "bias_table": bias, "instances": out.instances.len() }),
    )
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut run = Run::start("analyze", &a.common)?;
    let results = required(a.results.as_ref(), "results")?;
    run.input("results", &[results]);
    let rows: Vec<ResultRow> = jsonl::read(results)?;
    let report = analyze_results(&rows)?;
    log::info!(
        "selected adjusted={} noise={:?} config #{} ({})",
        report.selected.method.adjusted,
        report.selected.method.noise_subset,
        report.selected.config_index,
        report.selected.config_label
    );
    jsonl::write_json(&run.path("report.json"), &report)?;
    let label = report.selected.config_label.clone();
    run.finish(Some(label), serde_json::json!({ "rows": rows.len() }))
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let mut run = Run::start("sample", &a.common)?;
    let corpus_path = required(a.corpus.as_ref(), "corpus")?;
    let judged = required(a.judged.as_ref(), "judged")?;
    run.input("corpus", &[corpus_path]);
    run.input("judged", &[judged]);
    let corpus = load_corpus(corpus_path)?;
    let verdicts: Vec<VerdictRecord> = jsonl::read(&judged.join("verdicts.jsonl"))?;
    if verdicts.iter().any(|v| v.config.is_some()) {
        return Err(CliError::Usage("sample needs a judge run with a single tool configuration".into()));
    }
    let explanations: HashMap<String, Explanation> = jsonl::read::<Explanation>(&judged.join("explanations.jsonl"))?
        .into_iter()
        .map(|e| (e.instance_id.clone(), e))
        .collect();
    let mut candidates = Vec::new();
    for v in verdicts.iter().filter(|v| !v.skipped) {
        let (Some(verdict), Some(e), Some(doc)) = (v.verdict, explanations.get(&v.id), corpus.get(&v.id)) else {
            return Err(Error::Data(format!("instance {} lacks its verdict, explanation or text", v.id)).into());
        };
        candidates.push(PoolItem {
            id: v.id.clone(),
            text: doc.text.clone(),
            classes: corpus.classes.clone(),
            predicted: e.predicted_class.clone(),
            explanation: e.entries.clone(),
            oracle: verdict,
        });
    }
    let n = required(a.n, "n")?;
    let jitter = a.jitter.unwrap_or(0.075);
    let picked = stratified_sample(&candidates.iter().map(|c| c.oracle).collect::<Vec<_>>(), n, jitter, run.seed)?;
    let pool: Vec<PoolItem> = picked.into_iter().map(|i| candidates[i].clone()).collect();
    jsonl::write(&run.path("pool.jsonl"), &pool)?;
    run.finish(None, serde_json::json!({ "n": n, "jitter": jitter, "candidates": candidates.len() }))
}

pub fn metrics(a: MetricsArgs) -> Result<()> {
    let mut run = Run::start("metrics", &a.common)?;
    let gt = required(a.ground_truth.as_ref(), "ground-truth")?;
    run.input("ground_truth", &[gt]);
    let m = metrics_from_records(&load_ground_truth(gt)?)?;
    log::info!(
        "trustworthy P/R/F1 {:.2}/{:.2}/{:.2}; untrustworthy {:.2}/{:.2}/{:.2}",
        m.trustworthy.precision,
        m.trustworthy.recall,
        m.trustworthy.f1,
        m.untrustworthy.precision,
        m.untrustworthy.recall,
        m.untrustworthy.f1
    );
    jsonl::write_json(&run.path("metrics.json"), &m)?;
    run.finish(None, serde_json::json!({ "records": m.records }))
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let pool_path = required(a.pool.as_ref(), "pool")?;
    let data_dir = required(a.data_dir.clone(), "data-dir")?;
    let mut common = a.common.clone();
    common.out.get_or_insert(data_dir.clone());
    let mut run = Run::start("serve", &common)?;
    run.input("pool", &[pool_path]);
    let pool = wordtrust_annotate::load_pool(pool_path)?;
    let lease_ms = a.lease_secs.unwrap_or(900) * 1000;
    let host = a.host.clone().unwrap_or_else(|| "127.0.0.1".into());
    let port = a.port.unwrap_or(8080);
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| CliError::Usage(format!("bad address {host}:{port}: {e}")))?;
    let state = AppState::open(pool, lease_ms, &data_dir)?;
    run.finish(None, serde_json::json!({ "addr": addr.to_string(), "lease_secs": lease_ms / 1000 }))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(server::serve(state, addr))
        .map_err(|e| CliError::Core(Error::Data(format!("annotation service on {addr}: {e}"))))
}
