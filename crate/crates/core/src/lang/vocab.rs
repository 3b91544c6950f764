use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialogue::Dialogue;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::oracle::Answer;

/// Word list with dense ids. The five special symbols always occupy ids 0..5;
/// every other word reached the corpus frequency threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub word: String,
    pub count: u64,
    pub id: usize,
}

impl Vocabulary {
    pub const UNK: usize = 0;
    pub const SOQ: usize = 1;
    pub const EOQ: usize = 2;
    pub const YES: usize = 3;
    pub const NO: usize = 4;
    pub const SPECIALS: [&'static str; 5] = ["<unk>", "<soq>", "<eoq>", "yes", "no"];
    pub const N_SPECIAL: usize = 5;

    /// Builds a vocabulary from `(word, count)` pairs listed in id order after
    /// the specials.
    pub fn from_counts(learnable: Vec<(String, u64)>, min_count: u64) -> Result<Self> {
        let mut words: Vec<String> = Self::SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0; Self::N_SPECIAL];
        for (word, count) in learnable {
            if Self::SPECIALS.contains(&word.as_str()) {
                return Err(Error::Config(format!("`{word}` is reserved")));
            }
            words.push(word);
            counts.push(count);
        }
        let index: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if index.len() != words.len() {
            return Err(Error::Config("vocabulary words are not unique".into()));
        }
        Ok(Vocabulary { words, counts, min_count, index })
    }

    /// Total number of ids, specials included.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of learnable (non-special) words.
    pub fn learnable_len(&self) -> usize {
        self.words.len() - Self::N_SPECIAL
    }

    pub fn learnable_words(&self) -> &[String] {
        &self.words[Self::N_SPECIAL..]
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn id_or_unk(&self, word: &str) -> usize {
        self.id(word).unwrap_or(Self::UNK)
    }

    pub fn is_special(id: usize) -> bool {
        id < Self::N_SPECIAL
    }

    pub fn answer_id(answer: Answer) -> usize {
        match answer {
            Answer::Yes => Self::YES,
            Answer::No => Self::NO,
        }
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect()
    }

    pub fn entries(&self) -> Vec<VocabEntry> {
        self.words
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(id, (word, &count))| VocabEntry { word: word.clone(), count, id })
            .collect()
    }
}

/// Counts question tokens (answers are never counted) and keeps those seen
/// at least `min_count` times, ordered by descending count then text.
pub fn build_vocabulary(corpus: &[Dialogue], min_count: u64) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for dialogue in corpus {
        for tokens in dialogue.question_tokens() {
            for token in tokens {
                *counts.entry(token).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_count && !Vocabulary::SPECIALS.contains(&w.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_counts(kept, min_count)
}

pub fn write_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    jsonl::write(path, &vocab.entries())
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let entries: Vec<VocabEntry> = jsonl::read(path)?;
    let bad = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    for (i, e) in entries.iter().enumerate() {
        if e.id != i {
            return Err(bad(i + 1, format!("id {} out of order", e.id)));
        }
        if i < Vocabulary::N_SPECIAL && e.word != Vocabulary::SPECIALS[i] {
            return Err(bad(i + 1, format!("expected special `{}`", Vocabulary::SPECIALS[i])));
        }
    }
    if entries.len() < Vocabulary::N_SPECIAL {
        return Err(bad(entries.len(), "missing special entries".into()));
    }
    let learnable: Vec<(String, u64)> =
        entries[Vocabulary::N_SPECIAL..].iter().map(|e| (e.word.clone(), e.count)).collect();
    let min_count = learnable.iter().map(|(_, c)| *c).min().unwrap_or(1);
    Vocabulary::from_counts(learnable, min_count)
}
