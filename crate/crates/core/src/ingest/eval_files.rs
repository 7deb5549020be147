use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTriple {
    pub left: String,
    pub right: String,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalogySection {
    Semantic,
    Syntactic,
}

impl AnalogySection {
    /// Sections named `gram*` are syntactic.
    pub fn from_name(name: &str) -> Self {
        if name.trim().starts_with("gram") {
            AnalogySection::Syntactic
        } else {
            AnalogySection::Semantic
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnalogySection::Semantic => "semantic",
            AnalogySection::Syntactic => "syntactic",
        }
    }
}

/// `a : b :: c : d`, tagged with the section it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyQuad {
    pub words: [String; 4],
    pub section_name: String,
    pub section: AnalogySection,
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// `w1 w2 score` per line, whitespace or tab separated; `#` lines skipped.
pub fn parse_similarity(text: &str) -> Result<Vec<SimilarityTriple>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::parse(
                "similarity file",
                Some(k + 1),
                format!("expected 3 fields, found {}", f.len()),
            ));
        }
        let score = f[2]
            .parse::<f64>()
            .map_err(|e| Error::parse("similarity file", Some(k + 1), format!("score {:?}: {e}", f[2])))?;
        out.push(SimilarityTriple {
            left: f[0].to_owned(),
            right: f[1].to_owned(),
            score,
        });
    }
    Ok(out)
}

pub fn load_similarity_file(path: impl AsRef<Path>) -> Result<Vec<SimilarityTriple>> {
    let path = path.as_ref();
    parse_similarity(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Google analogy format: `: section` headers followed by four-word lines.
pub fn parse_analogy(text: &str) -> Result<Vec<AnalogyQuad>> {
    let mut out = Vec::new();
    let mut section_name = String::from("default");
    for (k, line) in text.lines().enumerate() {
        if is_skippable(line) {
            continue;
        }
        if let Some(name) = line.trim().strip_prefix(':') {
            section_name = name.trim().to_owned();
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let words: [&str; 4] = f.as_slice().try_into().map_err(|_| {
            Error::parse(
                "analogy file",
                Some(k + 1),
                format!("expected 4 words, found {}", f.len()),
            )
        })?;
        out.push(AnalogyQuad {
            words: words.map(str::to_owned),
            section: AnalogySection::from_name(&section_name),
            section_name: section_name.clone(),
        });
    }
    Ok(out)
}

pub fn load_analogy_file(path: impl AsRef<Path>) -> Result<Vec<AnalogyQuad>> {
    let path = path.as_ref();
    parse_analogy(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_lines() {
        let t = parse_similarity("# header\ncat dog 7.5\ncar\tautomobile\t9\n").unwrap();
        assert_eq!(
            t[0],
            SimilarityTriple {
                left: "cat".into(),
                right: "dog".into(),
                score: 7.5
            }
        );
        assert_eq!(t.len(), 2);
        let err = parse_similarity("cat dog 1\ncat 7.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(2), .. }), "{err}");
        assert!(parse_similarity("a b high\n").is_err());
    }

    #[test]
    fn analogy_sections() {
        let text = ": capital-common-countries\nathens greece baghdad iraq\n: gram1-adjective-to-adverb\namazing amazingly apparent apparently\n";
        let q = parse_analogy(text).unwrap();
        assert_eq!(q[0].section, AnalogySection::Semantic);
        assert_eq!(q[0].words[3], "iraq");
        assert_eq!(q[1].section, AnalogySection::Syntactic);
        assert_eq!(q[1].section_name, "gram1-adjective-to-adverb");
        let err = parse_analogy(": x\na b c\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(2), .. }));
    }
}
