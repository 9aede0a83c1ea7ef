//! Informal-language pattern counters.
//!
//! Four counters over whitespace-split words:
//! - slang: words found in a user-supplied dictionary (case-folded);
//! - all-capital: words of at least two characters, all uppercase;
//! - redundant: immediate consecutive duplicate words (case-sensitive);
//! - non-capital start: sentences whose first alphabetic character is
//!   lowercase.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PatternReport {
    pub slang: usize,
    pub all_capital: usize,
    pub redundant: usize,
    pub non_capital_start: usize,
}

/// Load a slang dictionary: one term per line, case-folded, blank lines
/// ignored.
pub fn load_slang_dict(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read slang dictionary {path:?}: {e}")))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Count the four informal patterns over a set of sentences. Without a
/// dictionary the slang count is zero.
pub fn count_informal_patterns<S: AsRef<str>>(
    sentences: &[S],
    slang_dict: Option<&HashSet<String>>,
) -> PatternReport {
    let mut report = PatternReport::default();
    for sentence in sentences {
        let sentence = sentence.as_ref();
        if let Some(first_alpha) = sentence.chars().find(|c| c.is_alphabetic()) {
            if first_alpha.is_lowercase() {
                report.non_capital_start += 1;
            }
        }
        let words: Vec<&str> = sentence.split_whitespace().collect();
        for (i, word) in words.iter().enumerate() {
            if word.chars().count() >= 2 && word.chars().all(|c| c.is_uppercase()) {
                report.all_capital += 1;
            }
            if i > 0 && words[i - 1] == *word {
                report.redundant += 1;
            }
            if let Some(dict) = slang_dict {
                if dict.contains(&word.to_lowercase()) {
                    report.slang += 1;
                }
            }
        }
    }
    report
}
