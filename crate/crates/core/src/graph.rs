//! Knowledge-augmented heterogeneous text graph.
//!
//! Nodes are ordered documents first, then words, then concepts. Word and
//! concept nodes are jointly called *units*; unit `u` is node `n_docs + u`.
//! Unit–unit edges carry positive PMI over sliding windows, document–unit
//! edges carry TF-IDF. Documents are never linked to each other.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenizedDocument;
use crate::error::{Error, Result};
use crate::lexicon::{concept_tokens, ConceptLexicon};
use crate::numerics::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Document,
    Word,
    Concept,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Document, NodeKind::Word, NodeKind::Concept];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Document => "document",
            NodeKind::Word => "word",
            NodeKind::Concept => "concept",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Whether an edge between these kinds may carry weight.
pub fn edge_allowed(a: NodeKind, b: NodeKind) -> bool {
    !(a == NodeKind::Document && b == NodeKind::Document)
}

/// Canonical `"x-y"` label for an unordered kind pair, documents first.
pub fn kind_pair_name(a: NodeKind, b: NodeKind) -> String {
    let (x, y) = if a <= b { (a, b) } else { (b, a) };
    format!("{}-{}", x.name(), y.name())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphParams {
    pub window_size: usize,
    /// Words seen fewer times than this across the corpus are dropped.
    pub min_word_freq: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            window_size: 20,
            min_word_freq: 1,
        }
    }
}

/// One element of an augmented window.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WindowUnit {
    Word(String),
    Concept(String),
}

/// Consecutive windows of `window_size` tokens, or the whole document when
/// it is not longer than one window.
pub fn sliding_windows<T>(tokens: &[T], window_size: usize) -> Vec<&[T]> {
    assert!(window_size >= 1, "window size must be positive");
    if tokens.is_empty() {
        return Vec::new();
    }
    if tokens.len() <= window_size {
        return vec![tokens];
    }
    tokens.windows(window_size).collect()
}

/// The distinct units of a window: every token as a word unit plus the
/// concept tokens of every token found in the lexicon.
pub fn augment_window_with_concepts(
    window: &[String],
    lexicon: &ConceptLexicon,
) -> BTreeSet<WindowUnit> {
    let mut units = BTreeSet::new();
    for tok in window {
        units.insert(WindowUnit::Word(tok.clone()));
        if let Some(entry) = lexicon.lookup(tok) {
            for c in concept_tokens(entry) {
                units.insert(WindowUnit::Concept(c));
            }
        }
    }
    units
}

/// Window co-occurrence counts over unit indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CooccurrenceStats {
    pub window_count: usize,
    pub unit_count: Vec<usize>,
    pair_count: HashMap<(usize, usize), usize>,
}

impl CooccurrenceStats {
    pub fn new(n_units: usize) -> Self {
        Self {
            window_count: 0,
            unit_count: vec![0; n_units],
            pair_count: HashMap::new(),
        }
    }

    /// Records one window given its distinct, sorted unit indices.
    pub fn add_window(&mut self, units: &[usize]) {
        self.window_count += 1;
        for (k, &a) in units.iter().enumerate() {
            self.unit_count[a] += 1;
            for &b in &units[k + 1..] {
                *self.pair_count.entry((a, b)).or_insert(0) += 1;
            }
        }
    }

    pub fn pair_count(&self, i: usize, j: usize) -> usize {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.pair_count.get(&key).copied().unwrap_or(0)
    }

    /// Pairs `(i, j)`, `i < j`, with a nonzero count, sorted.
    pub fn pairs(&self) -> Vec<((usize, usize), usize)> {
        let mut v: Vec<_> = self.pair_count.iter().map(|(&k, &c)| (k, c)).collect();
        v.sort_unstable();
        v
    }

    pub fn merge(&mut self, other: &CooccurrenceStats) {
        self.window_count += other.window_count;
        for (a, b) in self.unit_count.iter_mut().zip(&other.unit_count) {
            *a += b;
        }
        for (&k, &c) in &other.pair_count {
            *self.pair_count.entry(k).or_insert(0) += c;
        }
    }
}

/// `ln(pair · windows / (count_i · count_j))`; negative infinity when the
/// pair never shares a window.
pub fn compute_pmi(stats: &CooccurrenceStats, i: usize, j: usize) -> f64 {
    let pair = stats.pair_count(i, j);
    if pair == 0 {
        return f64::NEG_INFINITY;
    }
    let num = pair as f64 * stats.window_count as f64;
    let den = stats.unit_count[i] as f64 * stats.unit_count[j] as f64;
    (num / den).ln()
}

/// Per-document unit frequencies and document frequencies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TermDocumentCounts {
    pub n_docs: usize,
    pub term_freq: Vec<BTreeMap<usize, usize>>,
    pub doc_freq: Vec<usize>,
}

/// `tf · ln(n_docs / df)`; zero when the unit is absent from the document.
pub fn compute_tfidf(counts: &TermDocumentCounts, unit: usize, doc: usize) -> f64 {
    let tf = counts.term_freq[doc].get(&unit).copied().unwrap_or(0);
    if tf == 0 {
        return 0.0;
    }
    let df = counts.doc_freq[unit];
    tf as f64 * (counts.n_docs as f64 / df as f64).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroTextGraph {
    pub node_ids: Vec<String>,
    pub kinds: Vec<NodeKind>,
    pub n_docs: usize,
    pub n_words: usize,
    pub n_concepts: usize,
    pub adjacency: SparseMatrix,
    /// For each word unit, the concept units it triggers.
    pub word_concepts: Vec<Vec<usize>>,
    pub cooccurrence: CooccurrenceStats,
    pub term_counts: TermDocumentCounts,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n: usize,
    pub n_docs: usize,
    pub n_words: usize,
    pub n_concepts: usize,
    pub window_count: usize,
    /// Undirected edge count per kind pair.
    pub edges: BTreeMap<String, usize>,
}

impl HeteroTextGraph {
    pub fn n(&self) -> usize {
        self.kinds.len()
    }

    pub fn words(&self) -> &[String] {
        &self.node_ids[self.n_docs..self.n_docs + self.n_words]
    }

    pub fn concepts(&self) -> &[String] {
        &self.node_ids[self.n_docs + self.n_words..]
    }

    pub fn doc_nodes(&self) -> Vec<usize> {
        (0..self.n_docs).collect()
    }

    /// Node index of a word token.
    pub fn word_node(&self, token: &str) -> Option<usize> {
        self.words().iter().position(|w| w == token).map(|p| self.n_docs + p)
    }

    /// Node index of a concept token.
    pub fn concept_node(&self, token: &str) -> Option<usize> {
        self.concepts()
            .iter()
            .position(|c| c == token)
            .map(|p| self.n_docs + self.n_words + p)
    }

    pub fn stats(&self) -> GraphStats {
        let mut edges = BTreeMap::new();
        for (i, j, _) in self.adjacency.iter() {
            if i < j {
                *edges.entry(kind_pair_name(self.kinds[i], self.kinds[j])).or_insert(0) += 1;
            }
        }
        GraphStats {
            n: self.n(),
            n_docs: self.n_docs,
            n_words: self.n_words,
            n_concepts: self.n_concepts,
            window_count: self.cooccurrence.window_count,
            edges,
        }
    }

    /// Edge list of `matrix` (the adjacency or its normalization), one line
    /// per undirected edge with `src <= dst`, sorted by node index. Weights
    /// carry 17 significant digits.
    pub fn edge_list_tsv(&self, matrix: &SparseMatrix) -> String {
        let mut out = String::from("src\tdst\tkind_pair\tweight\n");
        for (i, j, w) in matrix.iter() {
            if i <= j {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{:.16e}",
                    self.node_ids[i],
                    self.node_ids[j],
                    kind_pair_name(self.kinds[i], self.kinds[j]),
                    w
                )
                .expect("write to string");
            }
        }
        out
    }

    pub fn write_edge_list(&self, matrix: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.edge_list_tsv(matrix)).map_err(|e| Error::io(path, e))
    }
}

/// Builds the graph over the whole corpus (training and held-out documents).
pub fn build_graph(
    docs: &[TokenizedDocument],
    lexicon: &ConceptLexicon,
    params: &GraphParams,
) -> Result<HeteroTextGraph> {
    if params.window_size == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        for t in &d.tokens {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let words: Vec<String> = freq
        .iter()
        .filter(|(_, &c)| c >= params.min_word_freq)
        .map(|(w, _)| (*w).to_string())
        .collect();
    if words.is_empty() {
        return Err(Error::Build("empty vocabulary".into()));
    }
    let word_index: HashMap<&str, usize> =
        words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();

    let concept_names: BTreeSet<String> = words
        .iter()
        .filter_map(|w| lexicon.lookup(w))
        .flat_map(concept_tokens)
        .collect();
    let concepts: Vec<String> = concept_names.into_iter().collect();
    let concept_index: HashMap<&str, usize> =
        concepts.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let n_docs = docs.len();
    let n_words = words.len();
    let n_concepts = concepts.len();
    let n_units = n_words + n_concepts;

    let word_concepts: Vec<Vec<usize>> = words
        .iter()
        .map(|w| {
            lexicon
                .lookup(w)
                .map(|e| {
                    concept_tokens(e)
                        .iter()
                        .map(|c| n_words + concept_index[c.as_str()])
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();

    let doc_units: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .filter_map(|t| word_index.get(t.as_str()).copied())
                .collect()
        })
        .collect();

    let mut cooccurrence = CooccurrenceStats::new(n_units);
    let mut term_freq = Vec::with_capacity(n_docs);
    let mut doc_freq = vec![0usize; n_units];
    let mut scratch = Vec::new();
    for words_in_doc in &doc_units {
        for window in sliding_windows(words_in_doc, params.window_size) {
            scratch.clear();
            for &w in window {
                scratch.push(w);
                scratch.extend_from_slice(&word_concepts[w]);
            }
            scratch.sort_unstable();
            scratch.dedup();
            cooccurrence.add_window(&scratch);
        }
        let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
        for &w in words_in_doc {
            *tf.entry(w).or_insert(0) += 1;
            for &c in &word_concepts[w] {
                *tf.entry(c).or_insert(0) += 1;
            }
        }
        for &u in tf.keys() {
            doc_freq[u] += 1;
        }
        term_freq.push(tf);
    }
    let term_counts = TermDocumentCounts {
        n_docs,
        term_freq,
        doc_freq,
    };

    let mut triplets = Vec::new();
    for ((a, b), _) in cooccurrence.pairs() {
        let pmi = compute_pmi(&cooccurrence, a, b);
        if pmi > 0.0 {
            triplets.push((n_docs + a, n_docs + b, pmi));
            triplets.push((n_docs + b, n_docs + a, pmi));
        }
    }
    for doc in 0..n_docs {
        for &u in term_counts.term_freq[doc].keys() {
            let w = compute_tfidf(&term_counts, u, doc);
            if w > 0.0 {
                triplets.push((doc, n_docs + u, w));
                triplets.push((n_docs + u, doc, w));
            }
        }
    }
    let n = n_docs + n_units;
    let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;

    let mut node_ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    node_ids.extend(words.iter().cloned());
    node_ids.extend(concepts.iter().cloned());
    let mut kinds = vec![NodeKind::Document; n_docs];
    kinds.extend(std::iter::repeat_n(NodeKind::Word, n_words));
    kinds.extend(std::iter::repeat_n(NodeKind::Concept, n_concepts));

    Ok(HeteroTextGraph {
        node_ids,
        kinds,
        n_docs,
        n_words,
        n_concepts,
        adjacency,
        word_concepts,
        cooccurrence,
        term_counts,
    })
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency(adjacency: &SparseMatrix) -> SparseMatrix {
    let [n, _] = adjacency.shape();
    let with_loops = SparseMatrix::from_triplets(
        n,
        n,
        adjacency.iter().chain((0..n).map(|i| (i, i, 1.0))),
    )
    .expect("square adjacency");
    let inv_sqrt: Vec<f64> = with_loops.row_sums().iter().map(|d| 1.0 / d.sqrt()).collect();
    SparseMatrix::from_triplets(
        n,
        n,
        with_loops
            .iter()
            .map(|(i, j, v)| (i, j, inv_sqrt[i] * v * inv_sqrt[j])),
    )
    .expect("square adjacency")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::ConceptEntry;

    fn tdoc(id: &str, text: &str) -> TokenizedDocument {
        TokenizedDocument {
            id: id.into(),
            tokens: text.split_whitespace().map(String::from).collect(),
            label: 0,
        }
    }

    fn lex(pairs: &[(&str, &str)]) -> ConceptLexicon {
        pairs
            .iter()
            .enumerate()
            .map(|(i, (t, n))| ConceptEntry {
                term: (*t).into(),
                cui: format!("C{i:07}"),
                preferred_name: (*n).into(),
            })
            .collect()
    }

    #[test]
    fn window_examples() {
        let abc = ["a", "b", "c"];
        assert_eq!(sliding_windows(&abc, 20), vec![&abc[..]]);
        let abcd = ["a", "b", "c", "d"];
        assert_eq!(sliding_windows(&abcd, 3), vec![&abcd[0..3], &abcd[1..4]]);
        assert!(sliding_windows::<&str>(&[], 5).is_empty());
    }

    #[test]
    fn augmentation_examples() {
        let l = lex(&[("lipitor", "atorvastatin"), ("zocor", "statin"), ("crestor", "statin")]);
        let w = |s: &str| WindowUnit::Word(s.into());
        let c = |s: &str| WindowUnit::Concept(s.into());
        let units = augment_window_with_concepts(&["lipitor".into(), "pain".into()], &l);
        assert_eq!(units, [w("lipitor"), w("pain"), c("atorvastatin")].into_iter().collect());
        let units = augment_window_with_concepts(&["pain".into()], &l);
        assert_eq!(units, [w("pain")].into_iter().collect());
        let units = augment_window_with_concepts(&["zocor".into(), "crestor".into()], &l);
        assert_eq!(units.iter().filter(|u| matches!(u, WindowUnit::Concept(_))).count(), 1);
    }

    #[test]
    fn pmi_examples() {
        let mut s = CooccurrenceStats::new(2);
        s.add_window(&[0, 1]);
        s.add_window(&[0, 1]);
        assert_eq!(compute_pmi(&s, 0, 1), 0.0);

        let mut s = CooccurrenceStats::new(4);
        s.add_window(&[0, 1]);
        s.add_window(&[2]);
        s.add_window(&[3]);
        s.add_window(&[2, 3]);
        assert!((compute_pmi(&s, 0, 1) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(compute_pmi(&s, 0, 2), f64::NEG_INFINITY);
    }

    #[test]
    fn tfidf_examples() {
        let docs = [tdoc("a", "x y y"), tdoc("b", "x"), tdoc("c", "x"), tdoc("d", "x")];
        let g = build_graph(&docs, &ConceptLexicon::new(), &GraphParams::default()).unwrap();
        let x = g.word_node("x").unwrap() - g.n_docs;
        let y = g.word_node("y").unwrap() - g.n_docs;
        assert_eq!(compute_tfidf(&g.term_counts, x, 0), 0.0);
        assert!((compute_tfidf(&g.term_counts, y, 0) - 2.0 * 4f64.ln()).abs() < 1e-15);
        assert_eq!(compute_tfidf(&g.term_counts, y, 1), 0.0);
        // "x" is everywhere: no document edge survives
        assert!((0..4).all(|d| g.adjacency.get(d, g.n_docs + x) == 0.0));
    }

    #[test]
    fn two_doc_fixture_with_one_concept() {
        let docs = [tdoc("d0", "lipitor pain muscle"), tdoc("d1", "pain sleep")];
        let g = build_graph(&docs, &lex(&[("lipitor", "atorvastatin")]), &GraphParams::default())
            .unwrap();
        assert_eq!(g.n_concepts, 1);
        assert_eq!(g.n(), 2 + g.n_words + 1);
        let c = g.concept_node("atorvastatin").unwrap();
        assert!(g.adjacency.get(0, c) > 0.0);
        assert_eq!(g.adjacency.get(1, c), 0.0);
        let stats = g.stats();
        assert_eq!(stats.edges["document-concept"], 1);
        assert!(!stats.edges.contains_key("document-document"));
    }

    #[test]
    fn empty_lexicon_degenerates_to_word_graph() {
        let docs = [tdoc("d0", "a b"), tdoc("d1", "b c")];
        let g = build_graph(&docs, &ConceptLexicon::new(), &GraphParams::default()).unwrap();
        assert_eq!(g.n_concepts, 0);
        assert_eq!(g.n(), 2 + 3);
    }

    #[test]
    fn empty_vocabulary_is_build_error() {
        let docs = [tdoc("d0", ""), tdoc("d1", "")];
        assert!(matches!(
            build_graph(&docs, &ConceptLexicon::new(), &GraphParams::default()),
            Err(Error::Build(_))
        ));
    }

    #[test]
    fn min_word_freq_drops_rare_words() {
        let docs = [tdoc("d0", "a b b"), tdoc("d1", "b c")];
        let params = GraphParams {
            min_word_freq: 2,
            ..GraphParams::default()
        };
        let g = build_graph(&docs, &ConceptLexicon::new(), &params).unwrap();
        assert_eq!(g.words(), ["b"]);
    }

    #[test]
    fn word_and_concept_with_same_token_are_distinct() {
        let docs = [tdoc("d0", "lipitor pain"), tdoc("d1", "aspirin")];
        let g = build_graph(&docs, &lex(&[("lipitor", "pain")]), &GraphParams::default()).unwrap();
        let w = g.word_node("pain").unwrap();
        let c = g.concept_node("pain").unwrap();
        assert_ne!(w, c);
        assert_eq!(g.kinds[w], NodeKind::Word);
        assert_eq!(g.kinds[c], NodeKind::Concept);
    }

    #[test]
    fn normalization_examples() {
        let iso = normalize_adjacency(&SparseMatrix::from_triplets(3, 3, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap());
        assert_eq!(iso.row(2).collect::<Vec<_>>(), vec![(2, 1.0)]);
        let pair = normalize_adjacency(&SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap());
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((pair.get(i, j) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_list_is_sorted_and_deterministic() {
        let docs = [tdoc("d0", "lipitor pain muscle"), tdoc("d1", "pain sleep")];
        let l = lex(&[("lipitor", "atorvastatin")]);
        let g = build_graph(&docs, &l, &GraphParams::default()).unwrap();
        let a = g.edge_list_tsv(&g.adjacency);
        let b = build_graph(&docs, &l, &GraphParams::default()).unwrap().edge_list_tsv(&g.adjacency);
        assert_eq!(a, b);
        let first = a.lines().nth(1).unwrap();
        assert_eq!(first.split('\t').count(), 4);
        let weight = first.split('\t').nth(3).unwrap();
        let mantissa = weight.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }
}
