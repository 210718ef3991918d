//! Builds the heterogeneous graph for the bundled demo corpus and prints
//! its node counts, edge counts per kind pair and a few edges.
//!
//! cargo run --example build_graph

use knowcage::corpus::Corpus;
use knowcage::fixtures::{demo_corpus, demo_lexicon};
use knowcage::graph::{build_graph, normalize_adjacency, GraphParams};

fn main() -> knowcage::Result<()> {
    let corpus: Corpus = demo_corpus()?;
    let lexicon = demo_lexicon()?;
    let docs = corpus.tokenized(false);
    let graph = build_graph(&docs, &lexicon, &GraphParams::default())?;

    let stats = graph.stats();
    println!(
        "{} nodes = {} documents + {} words + {} concepts, {} windows",
        stats.n, stats.n_docs, stats.n_words, stats.n_concepts, stats.window_count
    );
    for (pair, count) in &stats.edges {
        println!("  {pair:<16} {count}");
    }

    if let Some(node) = graph.word_node("lipitor") {
        let concepts: Vec<&str> = graph.word_concepts[node - graph.n_docs]
            .iter()
            .map(|&u| graph.node_ids[graph.n_docs + u].as_str())
            .collect();
        println!("`lipitor` triggers {concepts:?}");
    }

    let a_hat = normalize_adjacency(&graph.adjacency);
    let tsv = graph.edge_list_tsv(&a_hat);
    println!("first normalized edges:");
    for line in tsv.lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
