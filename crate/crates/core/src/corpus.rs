//! Labeled document collections: loading, text cleanup, tokenization and
//! stratified folds.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

const STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Reserved tweet tokens dropped in tweet mode.
const TWEET_RESERVED: [&str; 2] = ["rt", "fav"];

/// Binary document label; `1` marks an adverse drug event.
pub type Label = u8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: Label,
}

/// An ordered collection of documents with unique ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    class_counts: (usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// `.tsv` and `.tab` map to TSV, everything else to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut counts = (0, 0);
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Validation(format!("duplicate document id `{}`", d.id)));
            }
            match d.label {
                0 => counts.0 += 1,
                1 => counts.1 += 1,
                other => {
                    return Err(Error::Validation(format!(
                        "document `{}` has label {other}, expected 0 or 1",
                        d.id
                    )))
                }
            }
        }
        Ok(Self {
            documents,
            class_counts: counts,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// `(N0, N1)`: negative and positive document counts.
    pub fn class_counts(&self) -> (usize, usize) {
        self.class_counts
    }

    pub fn labels(&self) -> Vec<Label> {
        self.documents.iter().map(|d| d.label).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    /// Preprocesses and tokenizes every document.
    pub fn tokenized(&self, tweet_mode: bool) -> Vec<TokenizedDocument> {
        self.documents
            .iter()
            .map(|d| TokenizedDocument {
                id: d.id.clone(),
                tokens: tokenize(&preprocess(&d.text, tweet_mode)),
                label: d.label,
            })
            .collect()
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: String,
    text: String,
    label: Label,
}

/// Reads a corpus in JSONL or TSV form, keeping file order.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut documents = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc = match format {
            CorpusFormat::Jsonl => {
                let rec: JsonRecord = serde_json::from_str(line)
                    .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
                Document {
                    id: rec.id,
                    text: rec.text,
                    label: rec.label,
                }
            }
            CorpusFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                let [id, text, label] = fields[..] else {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("expected 3 tab-separated fields, found {}", fields.len()),
                    ));
                };
                let label = label
                    .trim()
                    .parse::<Label>()
                    .map_err(|e| Error::parse(path, line_no, format!("label `{label}`: {e}")))?;
                Document {
                    id: id.to_string(),
                    text: text.to_string(),
                    label,
                }
            }
        };
        if doc.label > 1 {
            return Err(Error::parse(
                path,
                line_no,
                format!("label {} is not 0 or 1", doc.label),
            ));
        }
        documents.push(doc);
    }
    Corpus::new(documents)
}

/// Writes a corpus as JSONL.
pub fn write_corpus_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for d in corpus.documents() {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.lines().map(str::trim).filter(|w| !w.is_empty()).collect())
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

fn tweet_patterns() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S*|@\w+").expect("valid pattern"))
}

fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2300..=0x23FF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0xFE00..=0xFE0F
        | 0x200D
        | 0x20E3
        | 0xE0020..=0xE007F)
}

/// Lowercases and cleans `text`: NFKC normalization, then removal of
/// punctuation, numeric-only tokens and stop words. In tweet mode URLs,
/// @-mentions, emoji, reserved markers (`RT`, `FAV`) and hashtag signs are
/// removed first; hashtag words are kept.
pub fn preprocess(text: &str, tweet_mode: bool) -> String {
    let lowered: String = text.nfkc().collect::<String>().to_lowercase();
    let mut text: String = lowered.nfkc().collect();
    if tweet_mode {
        text = tweet_patterns().replace_all(&text, " ").into_owned();
        text = text
            .chars()
            .map(|c| if is_emoji(c) { ' ' } else { c })
            .collect();
    }
    let spaced: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || is_combining_mark(c) {
                c
            } else {
                ' '
            }
        })
        .collect();
    let kept: Vec<&str> = spaced
        .split_whitespace()
        .filter(|tok| !tok.chars().all(char::is_numeric))
        .filter(|tok| !is_stopword(tok))
        .filter(|tok| !(tweet_mode && TWEET_RESERVED.contains(tok)))
        .collect();
    kept.join(" ")
}

/// Whitespace split; empty fields are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Document indices (in corpus order) of one train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    pub fn train_ids<'a>(&self, corpus: &'a Corpus) -> Vec<&'a str> {
        self.train.iter().map(|&i| corpus.documents[i].id.as_str()).collect()
    }

    pub fn test_ids<'a>(&self, corpus: &'a Corpus) -> Vec<&'a str> {
        self.test.iter().map(|&i| corpus.documents[i].id.as_str()).collect()
    }

    /// Every document in the training part.
    pub fn all_train(n: usize) -> Self {
        Self {
            train: (0..n).collect(),
            test: Vec::new(),
        }
    }
}

/// `k` stratified folds. Each class is shuffled with a seeded generator and
/// dealt round-robin across folds, continuing the deal where the previous
/// class stopped so fold sizes differ by at most one.
pub fn stratified_kfold(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let (n0, n1) = corpus.class_counts();
    if n0 < k || n1 < k {
        return Err(Error::Config(format!(
            "{k}-fold stratification needs at least {k} documents per class, found {n0} negative and {n1} positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; corpus.len()];
    let mut next = 0;
    for class in [0, 1] {
        let mut members: Vec<usize> = corpus
            .documents
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == class)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..corpus.len()).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect())
}

/// Reads a fixed split file: `id \t train|test` per line. Documents not
/// listed are left out of both parts.
pub fn load_split(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Fold> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: HashMap<&str, usize> = corpus
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i))
        .collect();
    let mut part = vec![None; corpus.len()];
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, which)) = line.split_once('\t') else {
            return Err(Error::parse(path, idx + 1, "expected `id<TAB>train|test`"));
        };
        let &doc = index
            .get(id)
            .ok_or_else(|| Error::parse(path, idx + 1, format!("unknown document id `{id}`")))?;
        part[doc] = Some(match which.trim() {
            "train" => true,
            "test" => false,
            other => {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("split must be train or test, found `{other}`"),
                ))
            }
        });
    }
    let mut fold = Fold {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (i, p) in part.into_iter().enumerate() {
        match p {
            Some(true) => fold.train.push(i),
            Some(false) => fold.test.push(i),
            None => {}
        }
    }
    Ok(fold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn doc(id: &str, label: Label) -> Document {
        Document {
            id: id.into(),
            text: format!("text of {id}"),
            label,
        }
    }

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn stopword_list_has_179_entries() {
        assert_eq!(stopwords().len(), 179);
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess("I took 2 pills of Lipitor.", false), "took pills lipitor");
        assert_eq!(preprocess("", false), "");
        assert_eq!(
            preprocess("RT @bob check https://x.co #insomnia!!", true),
            "check insomnia"
        );
    }

    #[test]
    fn tweet_mode_strips_emoji_and_reserved() {
        assert_eq!(preprocess("fav 😀 headache,rt again💊", true), "headache");
        // outside tweet mode mentions keep their word and urls break apart
        assert_eq!(preprocess("@doc see www.x.org", false), "doc see www x org");
    }

    #[test]
    fn nfkc_before_lowercase() {
        assert_eq!(preprocess("ＬＩＰＩＴＯＲ ﬁne", false), "lipitor fine");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("took pills lipitor"), ["took", "pills", "lipitor"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a  b"), ["a", "b"]);
    }

    #[test]
    fn loads_jsonl_and_counts() {
        let f = write_tmp(
            "{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n{\"id\":\"b\",\"text\":\"y\",\"label\":0}\n\n{\"id\":\"c\",\"text\":\"z\",\"label\":1}\n",
            ".jsonl",
        );
        let c = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.class_counts(), (1, 2));
        assert_eq!(c.documents()[2].id, "c");
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let f = write_tmp("", ".jsonl");
        let c = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!((c.len(), c.class_counts()), (0, (0, 0)));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n{\"id\":\"b\"}\n", ".jsonl");
        match load_corpus(f.path(), CorpusFormat::Jsonl) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = write_tmp("a\tx\t1\nb\ty\n", ".tsv");
        match load_corpus(f.path(), CorpusFormat::Tsv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = write_tmp("a\tx\t7\n", ".tsv");
        assert!(matches!(load_corpus(f.path(), CorpusFormat::Tsv), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_id_is_validation_error() {
        let f = write_tmp("a\tx\t1\na\ty\t0\n", ".tsv");
        assert!(matches!(load_corpus(f.path(), CorpusFormat::Tsv), Err(Error::Validation(_))));
    }

    #[test]
    fn perfect_stratification_on_ten_docs() {
        let docs = (0..10).map(|i| doc(&format!("d{i}"), (i % 2) as Label)).collect();
        let c = Corpus::new(docs).unwrap();
        let folds = stratified_kfold(&c, 5, 1).unwrap();
        for f in &folds {
            let pos = f.test.iter().filter(|&&i| c.documents()[i].label == 1).count();
            assert_eq!((f.test.len(), pos), (2, 1));
        }
        assert_eq!(folds, stratified_kfold(&c, 5, 1).unwrap());
        assert_ne!(folds, stratified_kfold(&c, 5, 2).unwrap());
    }

    #[test]
    fn cadec_shaped_fold_sizes() {
        let docs = (0..7474)
            .map(|i| doc(&format!("d{i}"), Label::from(i < 2478)))
            .collect();
        let c = Corpus::new(docs).unwrap();
        for f in stratified_kfold(&c, 10, 0).unwrap() {
            assert!(f.test.len() == 747 || f.test.len() == 748, "{}", f.test.len());
            assert_eq!(f.test.len() + f.train.len(), 7474);
        }
    }

    #[test]
    fn too_few_members_is_config_error() {
        let docs = vec![doc("a", 1), doc("b", 0), doc("c", 0)];
        let c = Corpus::new(docs).unwrap();
        assert!(matches!(stratified_kfold(&c, 2, 0), Err(Error::Config(_))));
        assert!(matches!(stratified_kfold(&c, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn split_file_parses() {
        let c = Corpus::new(vec![doc("a", 1), doc("b", 0), doc("c", 0)]).unwrap();
        let f = write_tmp("a\ttrain\nc\ttest\nb\ttrain\n", ".tsv");
        let fold = load_split(f.path(), &c).unwrap();
        assert_eq!(fold.train, [0, 1]);
        assert_eq!(fold.test, [2]);
        let f = write_tmp("zz\ttrain\n", ".tsv");
        assert!(load_split(f.path(), &c).is_err());
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(text in "\\PC{0,60}", tweet in any::<bool>()) {
            let once = preprocess(&text, tweet);
            prop_assert_eq!(preprocess(&once, tweet), once.clone());
        }

        #[test]
        fn folds_partition_and_stay_stratified(
            labels in proptest::collection::vec(0u8..2, 8..80),
            k in 2usize..5,
            seed in any::<u64>(),
        ) {
            let docs: Vec<Document> = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| doc(&format!("d{i}"), l))
                .collect();
            let c = Corpus::new(docs).unwrap();
            let (n0, n1) = c.class_counts();
            prop_assert_eq!((n0, n1), (
                labels.iter().filter(|&&l| l == 0).count(),
                labels.iter().filter(|&&l| l == 1).count(),
            ));
            prop_assume!(n0 >= k && n1 >= k);
            let folds = stratified_kfold(&c, k, seed).unwrap();
            let mut seen = vec![0; c.len()];
            for f in &folds {
                for &i in &f.test { seen[i] += 1; }
                let pos = f.test.iter().filter(|&&i| labels[i] == 1).count() as f64;
                let expected = n1 as f64 / k as f64;
                prop_assert!((pos - expected).abs() <= 1.0);
                let size = f.test.len() as f64;
                prop_assert!((size - c.len() as f64 / k as f64).abs() <= 1.0);
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }
    }
}
