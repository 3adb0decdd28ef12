use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use wordtrust::analyze::{analyze, SlopeCalc};
use wordtrust::calibrate::{calibrate, CalibratedEmbedding, WordPairSet};
use wordtrust::classify::{Hyperparams, ModelKind};
use wordtrust::corpus::load_corpus;
use wordtrust::embed::{load_vectors, VectorFormat};
use wordtrust::experiment::{run_experiment, ExperimentSettings};
use wordtrust::explain::LimeParams;
use wordtrust::noise::{load_bias_pool, BiasTable, NoiseKind};

fn toy(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy").join(name)
}

#[test]
fn bias_noise_lowers_trust_and_removal_does_not() {
    let start = Instant::now();
    let corpus = load_corpus(&toy("corpus.jsonl")).unwrap();
    let pairs = WordPairSet::read_csv(&toy("pairs.csv")).unwrap();
    let ensemble: Vec<CalibratedEmbedding> = ["vectors_a.vec", "vectors_b.vec"]
        .iter()
        .map(|f| {
            let m = load_vectors(&toy(f), VectorFormat::Word2vecText).unwrap();
            let cal = calibrate(&m, &pairs).unwrap();
            eprintln!("{f}: {cal:?}");
            CalibratedEmbedding::new(Arc::new(m), &cal)
        })
        .collect();
    let pool = load_bias_pool(&toy("bias_pool.txt")).unwrap();
    let bias = BiasTable::from_pool(&pool, &corpus.classes, 11).unwrap();
    let settings = ExperimentSettings {
        folds: 5,
        seed: 11,
        model_kinds: vec![ModelKind::Mnb],
        noise_kinds: vec![NoiseKind::Removal, NoiseKind::Bias],
        lime: LimeParams { n_samples: 300, ..LimeParams::default() },
        hyperparams: Hyperparams::default(),
    };
    let out = run_experiment(&corpus, &settings, &ensemble, Some(&bias)).unwrap();
    let report = analyze(&out.results).unwrap();
    eprintln!("selected {:?} in {:?}", report.selected, start.elapsed());
    for s in &report.selected_slopes {
        eprintln!("{} {:?} adj={} {:?} {:?}", s.model_set, s.slope_calc, s.adjusted, s.slope, s.points);
    }
    let ratio = |kind: NoiseKind| {
        report
            .selected_slopes
            .iter()
            .find(|s| s.noise_kind == kind && s.slope_calc == SlopeCalc::Ratio)
            .and_then(|s| s.slope)
            .unwrap()
    };
    let (b, r) = (ratio(NoiseKind::Bias), ratio(NoiseKind::Removal));
    assert!(b <= -0.1, "bias slope {b}");
    assert!(r.abs() < b.abs() / 2.0, "removal slope {r}");
}
