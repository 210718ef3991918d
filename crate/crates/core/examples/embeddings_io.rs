//! Writes document embeddings in the binary KCEM format and as TSV, reads
//! both back and checks that they match the corpus order.
//!
//! cargo run --example embeddings_io

use knowcage::embeddings::{hashed_embeddings, load_embeddings, DocEmbeddingMatrix};
use knowcage::fixtures::demo_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = demo_corpus()?;
    let docs = corpus.tokenized(false);
    let emb = hashed_embeddings(&docs, 16, 0)?;
    println!("{} documents, {} dimensions", emb.n_docs(), emb.dim());

    let dir = tempfile::tempdir()?;
    let kcem = dir.path().join("demo.kcem");
    emb.write_kcem(&kcem)?;
    let tsv = dir.path().join("demo.tsv");
    std::fs::write(&tsv, emb.to_tsv())?;

    let from_kcem = load_embeddings(&kcem)?;
    let from_tsv = load_embeddings(&tsv)?;
    // KCEM stores f32 values
    let max_dev = emb
        .values()
        .data()
        .iter()
        .zip(from_kcem.values().data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "KCEM: {} bytes, ids equal: {}, max deviation {max_dev:.2e}",
        emb.to_kcem_bytes().len(),
        from_kcem.ids() == emb.ids()
    );
    println!("TSV round trip identical: {}", from_tsv == emb);
    from_kcem.check_alignment(&corpus)?;

    let truncated = &emb.to_kcem_bytes()[..40];
    match DocEmbeddingMatrix::from_kcem_bytes(truncated) {
        Ok(_) => println!("truncated file unexpectedly parsed"),
        Err(e) => println!("truncated file rejected: {e}"),
    }
    Ok(())
}
