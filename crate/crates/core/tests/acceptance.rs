//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always print.
//!
//! cargo test --release --test acceptance

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use knowcage::attention::{AttentionScope, ConceptAwareAttention, DotProductAttention};
use knowcage::classifier::{class_weights, interpolate_probs, predicted_labels};
use knowcage::corpus::stratified_kfold;
use knowcage::fixtures::{planted_signal_corpus, PlantedConfig};
use knowcage::gradcheck::{gradcheck_all, GRADCHECK_TOLERANCE};
use knowcage::graph::NodeKind;
use knowcage::lexicon::ConceptLexicon;
use knowcage::numerics::{ParamGroup, ParamStore, Tape, Tensor};
use knowcage::pipeline::{planted_signal_config, Experiment};
use knowcage::training::{lr_schedule, precision_recall_f1, train, train_context_only};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let reports = match gradcheck_all(0) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let worst = reports.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    outcome(
        reports.len() == 9 && worst < GRADCHECK_TOLERANCE && elapsed < Duration::from_secs(60),
        format!("9 encoder x attention pairs, max relative error {worst:.2e}, {elapsed:.1?}"),
    )
}

fn graph_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let cases = 40;
    for _ in 0..cases {
        let n_docs = rng.gen_range(1..=20);
        let docs: Vec<Vec<usize>> = (0..n_docs)
            .map(|_| (0..rng.gen_range(1..9)).map(|_| rng.gen_range(0..common::VOCAB.len())).collect())
            .collect();
        let mapping: Vec<Option<usize>> = (0..common::VOCAB.len())
            .map(|_| rng.gen_bool(0.4).then(|| rng.gen_range(0..common::NAMES.len())))
            .collect();
        worst = worst.max(common::oracle_deviation(&docs, &mapping, rng.gen_range(1..6)));
    }
    outcome(worst <= 1e-12, format!("{cases} corpora of 1-20 documents, max deviation {worst:.1e}"))
}

fn attention_reduction() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let n = 7 + seed as usize;
        let mut store = ParamStore::new();
        let att = ConceptAwareAttention::new(&mut store, "a", 6, 5, AttentionScope::AllNodes, seed);
        let dot = DotProductAttention::new(&mut store, "d", 6, 5, seed + 50);
        for id in att.queries {
            store.set_value(id, store.value(dot.query).clone()).unwrap();
        }
        store.set_value(att.key, store.value(dot.key).clone()).unwrap();
        store.set_value(att.value, store.value(dot.value).clone()).unwrap();
        let x_id = store.glorot("x", ParamGroup::Graph, n, 6, seed + 99);
        let kinds: Vec<NodeKind> = (0..n).map(|i| NodeKind::ALL[(i * 5 + seed as usize) % 3]).collect();
        let mut tape = Tape::new();
        let x = tape.constant(store.value(x_id).map(|v| 3.0 * v));
        let a = att.forward(&mut tape, &store, x, &kinds).unwrap();
        let b = dot.forward(&mut tape, &store, x).unwrap();
        worst = worst.max(tape.value(a.output).zip_map(tape.value(b.output), |p, q| p - q).unwrap().max_abs());
    }
    outcome(worst <= 1e-10, format!("5 random fixtures, max difference {worst:.1e}"))
}

/// Labels with exactly `tp`, `fp`, `fn_` counts (no true negatives).
fn confusion(tp: usize, fp: usize, fn_: usize) -> (Vec<u8>, Vec<u8>) {
    let truth = [vec![1; tp], vec![0; fp], vec![1; fn_]].concat();
    let pred = [vec![1; tp], vec![1; fp], vec![0; fn_]].concat();
    (truth, pred)
}

fn metric_arithmetic() -> Outcome {
    // P = 111/125 = 0.888, R = 429/500 = 0.858
    let (t, p) = confusion(15873, 2002, 2627);
    let a = precision_recall_f1(&t, &p).unwrap();
    // P = 433/500 = 0.866, R = 959/1000 = 0.959
    let (t, p) = confusion(415247, 64253, 17753);
    let b = precision_recall_f1(&t, &p).unwrap();
    let ok = (a.precision - 0.888).abs() < 1e-12
        && (a.recall - 0.858).abs() < 1e-12
        && (a.f1 - 0.873).abs() <= 0.0005
        && (b.precision - 0.866).abs() < 1e-12
        && (b.recall - 0.959).abs() < 1e-12
        && (b.f1 - 0.910).abs() <= 0.0005;
    outcome(ok, format!("(0.888, 0.858) -> F1 {:.4}; (0.866, 0.959) -> F1 {:.4}", a.f1, b.f1))
}

fn loss_weights() -> Outcome {
    let balanced = class_weights(1209, 1209, false).unwrap();
    let skewed = class_weights(809, 191, false).unwrap();
    outcome(
        balanced == (0.5, 0.5) && skewed.0 == 0.191,
        format!("(1209, 1209) -> {balanced:?}; (809, 191) -> w+ = {}", skewed.0),
    )
}

fn interpolation_endpoints() -> Outcome {
    let exp = knowcage::gradcheck::fixture_experiment(1).unwrap();
    let mut config = knowcage::training::TrainConfig { epochs: 25, seed: 4, ..Default::default() };
    config.model.encoder.hidden_dim = 6;
    config.model.lambda = 0.0;
    let rows = [0, 1, 2];
    let full = train(&exp.inputs, &exp.labels, &rows, &config).unwrap();
    let ctx = train_context_only(&exp.inputs.doc_embeddings, &exp.labels, &rows, &config).unwrap();
    let p_full = full.model.predict(&full.store, &exp.inputs).unwrap().p;
    let mut tape = Tape::new();
    let x = tape.constant(exp.inputs.doc_embeddings.clone());
    let p_ctx = ctx.model.forward(&mut tape, &ctx.store, x).unwrap();
    let bitwise = &p_full == tape.value(p_ctx);

    let p_g = Tensor::from_rows(&[[0.05, 0.95], [0.9, 0.1]]).unwrap();
    let p_c = Tensor::from_rows(&[[0.7, 0.3], [0.4, 0.6]]).unwrap();
    let p = interpolate_probs(&p_g, &p_c, 0.9).unwrap();
    let flipped = predicted_labels(&p) == predicted_labels(&p_g) && predicted_labels(&p) != predicted_labels(&p_c);
    outcome(
        bitwise && flipped,
        format!("lambda 0 bitwise equal to context branch: {bitwise}; lambda 0.9 follows graph argmax: {flipped}"),
    )
}

fn planted_signal() -> Outcome {
    let start = Instant::now();
    let seed = 7;
    let (corpus, lexicon) = planted_signal_corpus(&PlantedConfig::default());
    let fold = stratified_kfold(&corpus, 5, seed).unwrap().remove(0);
    let (exp_config, train_config) = planted_signal_config(seed);
    let run = |lex: &ConceptLexicon| {
        let exp = Experiment::build(corpus.clone(), lex, None, &exp_config, seed).unwrap();
        let (outcome, metrics) = exp.run_fold(&fold, &train_config).unwrap();
        (metrics.f1, outcome.history.len())
    };
    let (full, epochs) = run(&lexicon);
    let (ablated, _) = run(&ConceptLexicon::new());
    let elapsed = start.elapsed();
    outcome(
        full >= 0.85 && ablated < full && epochs <= 200 && elapsed < Duration::from_secs(300),
        format!("held-out F1 {full:.4} after {epochs} epochs, lexicon removed {ablated:.4}, {elapsed:.1?}"),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_knowcage"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run binary");
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        // the resolved config records the output directory itself
        .filter(|p| p.file_name().is_some_and(|n| n != "config.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let common = ["--seed", "11", "--hidden-dim", "16", "--epochs", "15", "--folds", "3", "--lambdas", "0,0.5,0.9"];
    let commands = ["build-graph", "export-graph", "train", "cross-validate", "sweep-lambda", "gradcheck"];
    let mut failures = Vec::new();
    let mut files = 0;
    for cmd in commands {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let mut args = vec![cmd];
                args.extend(common);
                let (ok, stdout) = run_cli(&args, dir.path());
                (ok, stdout, snapshot(dir.path()))
            })
            .collect();
        files += runs[0].2.len();
        if !(runs[0].0 && runs[1].0 && runs[0] == runs[1]) {
            failures.push(cmd);
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} commands rerun with seed 11, {files} output files byte-identical", commands.len())
        } else {
            format!("differing or failing: {failures:?}")
        },
    )
}

fn scheduler() -> Outcome {
    let base = 1e-3;
    let before = lr_schedule(base, 29, 30, 0.1);
    let after = lr_schedule(base, 30, 30, 0.1);
    outcome(
        before == base && after == base * 0.1 && (after - 1e-4).abs() < 1e-18,
        format!("step 29 -> {before:e}, step 30 -> {after:e}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradient_correctness),
        ("graph oracle", graph_oracle),
        ("attention reduction", attention_reduction),
        ("metric arithmetic", metric_arithmetic),
        ("loss weights", loss_weights),
        ("interpolation endpoints", interpolation_endpoints),
        ("planted signal end-to-end", planted_signal),
        ("determinism", determinism),
        ("scheduler", scheduler),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = check();
        println!("[{}] {} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
