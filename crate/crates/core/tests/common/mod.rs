//! Brute-force graph oracle shared by the integration tests.

use std::collections::{BTreeMap, BTreeSet};

use knowcage::corpus::{preprocess, tokenize, Corpus, Document, TokenizedDocument};
use knowcage::graph::{build_graph, GraphParams, HeteroTextGraph, NodeKind};
use knowcage::lexicon::{ConceptEntry, ConceptLexicon};
use knowcage::numerics::Tensor;

pub const VOCAB: [&str; 12] = [
    "lipitor", "aspirin", "pain", "muscle", "headache", "nausea", "tired", "sleep", "dose", "rash", "knee", "back",
];
pub const NAMES: [&str; 5] = ["atorvastatin", "muscle pain", "cephalgia", "nausea", "skin rash eruption"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Unit {
    Word(String),
    Concept(String),
}

fn name_tokens(name: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokenize(&preprocess(name, false)) {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Dense adjacency recomputed by counting windows directly.
fn brute_force(docs: &[TokenizedDocument], lexicon: &BTreeMap<String, String>, window: usize, g: &HeteroTextGraph) -> Tensor {
    let concepts_of = |w: &str| lexicon.get(w).map(|n| name_tokens(n)).unwrap_or_default();
    let node_of = |u: &Unit| match u {
        Unit::Word(w) => g.word_node(w).expect("word node"),
        Unit::Concept(c) => g.concept_node(c).expect("concept node"),
    };

    let mut windows: Vec<BTreeSet<Unit>> = Vec::new();
    for d in docs {
        let t = &d.tokens;
        let spans: Vec<&[String]> = if t.is_empty() {
            vec![]
        } else if t.len() <= window {
            vec![&t[..]]
        } else {
            (0..=t.len() - window).map(|s| &t[s..s + window]).collect()
        };
        for span in spans {
            let mut set = BTreeSet::new();
            for w in span {
                set.insert(Unit::Word(w.clone()));
                for c in concepts_of(w) {
                    set.insert(Unit::Concept(c));
                }
            }
            windows.push(set);
        }
    }
    let n_windows = windows.len() as f64;
    let units: BTreeSet<Unit> = windows.iter().flatten().cloned().collect();

    let mut a = Tensor::zeros(g.n(), g.n());
    let units: Vec<Unit> = units.into_iter().collect();
    for (x, ux) in units.iter().enumerate() {
        for uy in &units[x + 1..] {
            let both = windows.iter().filter(|s| s.contains(ux) && s.contains(uy)).count() as f64;
            if both == 0.0 {
                continue;
            }
            let px = windows.iter().filter(|s| s.contains(ux)).count() as f64 / n_windows;
            let py = windows.iter().filter(|s| s.contains(uy)).count() as f64 / n_windows;
            let pmi = ((both / n_windows) / (px * py)).ln();
            if pmi > 0.0 {
                a.set(node_of(ux), node_of(uy), pmi);
                a.set(node_of(uy), node_of(ux), pmi);
            }
        }
    }

    let bags: Vec<Vec<Unit>> = docs
        .iter()
        .map(|d| {
            let mut bag = Vec::new();
            for w in &d.tokens {
                bag.push(Unit::Word(w.clone()));
                for c in concepts_of(w) {
                    bag.push(Unit::Concept(c));
                }
            }
            bag
        })
        .collect();
    let n_docs = docs.len() as f64;
    for (i, bag) in bags.iter().enumerate() {
        for u in bag.iter().collect::<BTreeSet<_>>() {
            let tf = bag.iter().filter(|v| *v == u).count() as f64;
            let df = bags.iter().filter(|b| b.contains(u)).count() as f64;
            let w = tf * (n_docs / df).ln();
            if w > 0.0 {
                a.set(i, node_of(u), w);
                a.set(node_of(u), i, w);
            }
        }
    }
    a
}

#[allow(dead_code)]
pub fn corpus_strategy() -> impl proptest::strategy::Strategy<Value = (Vec<Vec<usize>>, Vec<Option<usize>>, usize)> {
    (
        proptest::collection::vec(proptest::collection::vec(0..VOCAB.len(), 1..9), 1..=20),
        proptest::collection::vec(proptest::option::weighted(0.4, 0..NAMES.len()), VOCAB.len()),
        1usize..6,
    )
}

/// Largest deviation between the built adjacency and the oracle, after
/// asserting the edge-typing invariants.
pub fn oracle_deviation(doc_words: &[Vec<usize>], mapping: &[Option<usize>], window: usize) -> f64 {
    let corpus = Corpus::new(
        doc_words
            .iter()
            .enumerate()
            .map(|(i, ws)| Document {
                id: format!("d{i}"),
                text: ws.iter().map(|&w| VOCAB[w]).collect::<Vec<_>>().join(" "),
                label: (i % 2) as u8,
            })
            .collect(),
    )
    .unwrap();
    let mut lex_map = BTreeMap::new();
    let mut lexicon = ConceptLexicon::new();
    for (w, m) in mapping.iter().enumerate() {
        if let Some(n) = m {
            lex_map.insert(VOCAB[w].to_string(), NAMES[*n].to_string());
            lexicon
                .insert(ConceptEntry {
                    term: VOCAB[w].into(),
                    cui: format!("X{n}"),
                    preferred_name: NAMES[*n].into(),
                })
                .unwrap();
        }
    }
    let docs = corpus.tokenized(false);
    let g = build_graph(&docs, &lexicon, &GraphParams { window_size: window, min_word_freq: 1 }).unwrap();
    let expected = brute_force(&docs, &lex_map, window, &g);
    let actual = g.adjacency.to_dense();
    // edge typing: no document-document weight, PMI strictly positive
    for (i, j, w) in g.adjacency.iter() {
        assert!(!(g.kinds[i] == NodeKind::Document && g.kinds[j] == NodeKind::Document));
        if g.kinds[i] != NodeKind::Document && g.kinds[j] != NodeKind::Document {
            assert!(w > 0.0);
        }
    }
    assert!(g.adjacency.is_symmetric());
    actual.zip_map(&expected, |a, e| a - e).unwrap().max_abs()
}

