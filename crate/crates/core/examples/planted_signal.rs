//! Trains on a generated corpus whose labels are reachable only through
//! lexicon concepts, then repeats the run with the lexicon removed.
//!
//! cargo run --release --example planted_signal

use knowcage::fixtures::{planted_signal_corpus, PlantedConfig};
use knowcage::lexicon::ConceptLexicon;
use knowcage::corpus::stratified_kfold;
use knowcage::pipeline::{planted_signal_config, Experiment};

fn main() -> knowcage::Result<()> {
    let seed = 7;
    let (corpus, lexicon) = planted_signal_corpus(&PlantedConfig::default());
    let fold = stratified_kfold(&corpus, 5, seed)?.remove(0);
    let (exp_config, train_config) = planted_signal_config(seed);

    for (name, lex) in [("with lexicon", lexicon), ("lexicon removed", ConceptLexicon::new())] {
        let start = std::time::Instant::now();
        let experiment = Experiment::build(corpus.clone(), &lex, None, &exp_config, seed)?;
        let (outcome, metrics) = experiment.run_fold(&fold, &train_config)?;
        let last = outcome.history.last().expect("at least one epoch");
        println!(
            "{name:>16}: held-out F1 {:.4} (P {:.4}, R {:.4}) after {} epochs, final loss {:.5}, {:.1?}",
            metrics.f1,
            metrics.precision,
            metrics.recall,
            outcome.history.len(),
            last.loss,
            start.elapsed()
        );
    }
    Ok(())
}
