//! Small shipped datasets: the gradient-check fixture, a demo corpus and
//! lexicon, and a generator for corpora with a planted concept signal.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document};
use crate::error::Result;
use crate::lexicon::{ConceptEntry, ConceptLexicon};

/// Three documents over five words, two of which map to concepts.
pub fn gradcheck_corpus() -> Corpus {
    let docs = [
        ("g1", "lipitor muscle pain", 1),
        ("g2", "aspirin headache", 0),
        ("g3", "lipitor headache pain", 1),
    ];
    Corpus::new(
        docs.iter()
            .map(|&(id, text, label)| Document {
                id: id.into(),
                text: text.into(),
                label,
            })
            .collect(),
    )
    .expect("valid fixture corpus")
}

pub fn gradcheck_lexicon() -> ConceptLexicon {
    [
        ("lipitor", "FX0001", "atorvastatin"),
        ("headache", "FX0002", "cephalgia"),
    ]
    .into_iter()
    .map(|(term, cui, name)| ConceptEntry {
        term: term.into(),
        cui: cui.into(),
        preferred_name: name.into(),
    })
    .collect()
}

pub const DEMO_CORPUS_JSONL: &str = include_str!("../data/demo_corpus.jsonl");
pub const DEMO_LEXICON_TSV: &str = include_str!("../data/demo_lexicon.tsv");

/// Shape of a generated planted-signal corpus.
#[derive(Clone, Debug)]
pub struct PlantedConfig {
    pub n_docs: usize,
    pub noise_words_per_doc: usize,
    pub concept_positive: &'static str,
    pub concept_negative: &'static str,
    /// Distinct concept subtypes per class, each naming one extra concept
    /// token shared by that subtype's documents. Zero gives bare class
    /// tokens.
    pub subtypes_per_class: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_docs: 200,
            noise_words_per_doc: 8,
            concept_positive: "myopathy",
            concept_negative: "analgesia",
            subtypes_per_class: 5,
            seed: 7,
        }
    }
}

const NOISE_WORDS: [&str; 40] = [
    "today", "morning", "felt", "doctor", "pharmacy", "week", "dose", "started", "taking", "night",
    "tablet", "refill", "prescribed", "daily", "month", "family", "work", "sleep", "water", "food",
    "checked", "clinic", "nurse", "visit", "appointment", "insurance", "bottle", "label", "brand", "generic",
    "switched", "continued", "evening", "weekend", "office", "friend", "usual", "routine", "schedule", "home",
];

const POSITIVE_SUBTYPES: [&str; 8] = [
    "skeletal", "proximal", "necrotizing", "inflammatory", "toxic", "acute", "diffuse", "focal",
];
const NEGATIVE_SUBTYPES: [&str; 8] = [
    "topical", "oral", "regional", "local", "spinal", "epidural", "nerve", "surface",
];

/// A balanced corpus in which each document carries one unique drug-like
/// word plus class-independent noise. The label is recoverable only through
/// the lexicon: every positive document's unique word maps to a concept
/// named `"<subtype> <concept_positive>"`, every negative one to
/// `"<subtype> <concept_negative>"`, with subtypes drawn per class.
pub fn planted_signal_corpus(config: &PlantedConfig) -> (Corpus, ConceptLexicon) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut labels: Vec<u8> = (0..config.n_docs).map(|i| u8::from(i % 2 == 0)).collect();
    labels.shuffle(&mut rng);
    let mut docs = Vec::with_capacity(config.n_docs);
    let mut lexicon = ConceptLexicon::new();
    for (i, &label) in labels.iter().enumerate() {
        let signal = format!("agent{i:03}x");
        let mut tokens: Vec<String> = (0..config.noise_words_per_doc)
            .map(|_| NOISE_WORDS[rng.gen_range(0..NOISE_WORDS.len())].to_string())
            .collect();
        let at = rng.gen_range(0..=tokens.len());
        tokens.insert(at, signal.clone());
        docs.push(Document {
            id: format!("p{i:03}"),
            text: tokens.join(" "),
            label,
        });
        let (class_token, subtypes) = if label == 1 {
            (config.concept_positive, &POSITIVE_SUBTYPES)
        } else {
            (config.concept_negative, &NEGATIVE_SUBTYPES)
        };
        let k = config.subtypes_per_class.min(subtypes.len());
        let concept = if k == 0 {
            class_token.to_string()
        } else {
            format!("{} {class_token}", subtypes[rng.gen_range(0..k)])
        };
        lexicon
            .insert(ConceptEntry {
                term: signal,
                cui: format!("CP{i:05}"),
                preferred_name: concept,
            })
            .expect("valid entry");
    }
    (Corpus::new(docs).expect("valid generated corpus"), lexicon)
}

/// The demo corpus bundled with the crate.
pub fn demo_corpus() -> Result<Corpus> {
    let docs = DEMO_CORPUS_JSONL
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<Document>(l).map_err(Into::into))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(docs)
}

pub fn demo_lexicon() -> Result<ConceptLexicon> {
    crate::lexicon::parse_lexicon(DEMO_LEXICON_TSV, std::path::Path::new("demo_lexicon.tsv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphParams};

    #[test]
    fn gradcheck_fixture_shape() {
        let g = build_graph(&gradcheck_corpus().tokenized(false), &gradcheck_lexicon(), &GraphParams::default()).unwrap();
        assert_eq!((g.n_docs, g.n_words, g.n_concepts), (3, 5, 2));
    }

    #[test]
    fn planted_corpus_is_balanced_and_deterministic() {
        let (a, lex) = planted_signal_corpus(&PlantedConfig::default());
        let (b, _) = planted_signal_corpus(&PlantedConfig::default());
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), (100, 100));
        assert_eq!(lex.len(), 200);
        let g = build_graph(&a.tokenized(false), &lex, &GraphParams::default()).unwrap();
        assert_eq!(g.n_concepts, 12);
    }

    #[test]
    fn demo_data_loads() {
        let corpus = demo_corpus().unwrap();
        let lex = demo_lexicon().unwrap();
        assert!(corpus.len() >= 20);
        assert_eq!(lex.len(), 50);
    }
}
