//! Surface term → concept lookup standing in for a UMLS metathesaurus.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::debug;

use crate::corpus::{preprocess, tokenize};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptEntry {
    pub term: String,
    pub cui: String,
    pub preferred_name: String,
}

/// Exact single-token lookup table. Keys are lowercase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConceptLexicon {
    entries: BTreeMap<String, ConceptEntry>,
}

impl ConceptLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; a later entry for the same term replaces the earlier one.
    pub fn insert(&mut self, entry: ConceptEntry) -> Result<()> {
        if entry.cui.trim().is_empty() || entry.preferred_name.trim().is_empty() {
            return Err(Error::Validation(format!(
                "lexicon entry for `{}` needs a CUI and a preferred name",
                entry.term
            )));
        }
        let key = entry.term.to_lowercase();
        if let Some(old) = self.entries.get(&key) {
            debug!("lexicon term `{key}`: {} replaced by {}", old.cui, entry.cui);
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn lookup(&self, token: &str) -> Option<&ConceptEntry> {
        self.entries.get(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConceptEntry> {
        self.entries.values()
    }
}

impl FromIterator<ConceptEntry> for ConceptLexicon {
    fn from_iter<I: IntoIterator<Item = ConceptEntry>>(iter: I) -> Self {
        let mut lex = ConceptLexicon::new();
        for e in iter {
            lex.insert(e).expect("valid lexicon entry");
        }
        lex
    }
}

/// Reads `term \t cui \t preferred_name` lines (UTF-8, no header).
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<ConceptLexicon> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&raw, path)
}

/// Parses lexicon text; `path` only labels error messages.
pub fn parse_lexicon(raw: &str, path: &Path) -> Result<ConceptLexicon> {
    let mut lex = ConceptLexicon::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [term, cui, name] = fields[..] else {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("expected term, cui and preferred name; found {} fields", fields.len()),
            ));
        };
        lex.insert(ConceptEntry {
            term: term.trim().to_string(),
            cui: cui.trim().to_string(),
            preferred_name: name.trim().to_string(),
        })
        .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
    }
    Ok(lex)
}

/// Concept-node tokens of an entry: its preferred name run through the same
/// preprocessing as document text. Duplicates are removed, first occurrence
/// kept.
pub fn concept_tokens(entry: &ConceptEntry) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for tok in tokenize(&preprocess(&entry.preferred_name, false)) {
        if !out.contains(&tok) {
            out.push(tok);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn entry(term: &str, cui: &str, name: &str) -> ConceptEntry {
        ConceptEntry {
            term: term.into(),
            cui: cui.into(),
            preferred_name: name.into(),
        }
    }

    fn tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_and_looks_up() {
        let f = tmp("lipitor\tC0593906\tatorvastatin\n");
        let lex = load_lexicon(f.path()).unwrap();
        assert_eq!(lex.lookup("lipitor").unwrap().preferred_name, "atorvastatin");
        assert!(lex.lookup("aspirin").is_none());
    }

    #[test]
    fn empty_file_gives_empty_lexicon() {
        let lex = load_lexicon(tmp("").path()).unwrap();
        assert!(lex.is_empty());
        assert!(lex.lookup("anything").is_none());
    }

    #[test]
    fn last_duplicate_wins() {
        let f = tmp("pain\tC1\tache\npain\tC2\tsoreness\n");
        let lex = load_lexicon(f.path()).unwrap();
        assert_eq!(lex.lookup("pain").unwrap().cui, "C2");
        assert_eq!(lex.len(), 1);
    }

    #[test]
    fn missing_column_reports_line() {
        let f = tmp("ok\tC1\tfine\nbroken\tC2\n");
        assert!(matches!(load_lexicon(f.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn uppercase_terms_are_keyed_lowercase() {
        let lex: ConceptLexicon = [entry("Lipitor", "C1", "atorvastatin")].into_iter().collect();
        assert!(lex.lookup("lipitor").is_some());
    }

    #[test]
    fn concept_token_examples() {
        assert_eq!(concept_tokens(&entry("x", "C1", "atorvastatin")), ["atorvastatin"]);
        assert_eq!(concept_tokens(&entry("x", "C1", "Pain in the chest")), ["pain", "chest"]);
        assert!(concept_tokens(&entry("x", "C1", "The")).is_empty());
        assert_eq!(concept_tokens(&entry("x", "C1", "pain pain")), ["pain"]);
    }
}
