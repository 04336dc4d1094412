//! Synonym lexicon for the replacement-style mutation operators.

use super::TextError;
use std::collections::HashMap;
use std::path::Path;

/// Maps a headword to its synonyms and exposes a flat word pool for the
/// random replacement/insertion operators.
#[derive(Debug)]
pub struct SynonymLexicon {
    synonyms: HashMap<String, Vec<String>>,
    pool: Vec<String>,
}

const BUILTIN_SYNONYMS: &str = include_str!("../../assets/synonyms.tsv");

impl SynonymLexicon {
    /// Lexicon with no entries; replacement operators degrade gracefully.
    pub fn empty() -> Self {
        Self {
            synonyms: HashMap::new(),
            pool: Vec::new(),
        }
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_SYNONYMS, "<builtin>").expect("bundled synonyms are well-formed")
    }

    /// Loads `head<TAB>synonym<TAB>synonym...` lines.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TextError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)?;
        Self::parse(&content, &path.display().to_string())
    }

    fn parse(content: &str, origin: &str) -> Result<Self, TextError> {
        let mut synonyms: HashMap<String, Vec<String>> = HashMap::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t').map(str::trim);
            let Some(head) = fields.next().filter(|h| !h.is_empty()) else {
                return Err(TextError::LexiconFormat {
                    path: origin.to_string(),
                    line: idx + 1,
                    msg: "missing headword".to_string(),
                });
            };
            let syns: Vec<String> = fields
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            if syns.is_empty() {
                return Err(TextError::LexiconFormat {
                    path: origin.to_string(),
                    line: idx + 1,
                    msg: format!("headword `{head}` has no synonyms"),
                });
            }
            synonyms.insert(head.to_ascii_lowercase(), syns);
        }
        // Deterministic pool order: sorted heads, then their synonyms in file order.
        let mut heads: Vec<&String> = synonyms.keys().collect();
        heads.sort();
        let mut pool = Vec::new();
        for head in heads {
            pool.push(head.clone());
            pool.extend(synonyms[head].iter().cloned());
        }
        Ok(Self { synonyms, pool })
    }

    pub fn is_empty(&self) -> bool {
        self.synonyms.is_empty()
    }

    /// Synonyms for a word, looked up case-insensitively with surrounding
    /// punctuation ignored.
    pub fn synonyms_of(&self, word: &str) -> Option<&[String]> {
        let key: String = word
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        self.synonyms.get(&key).map(Vec::as_slice)
    }

    /// Every known word in a stable order.
    pub fn pool(&self) -> &[String] {
        &self.pool
    }
}
