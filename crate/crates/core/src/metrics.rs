//! Task accuracy and the dialogue-quality metrics: games with repeated
//! questions (GRQ), mutual overlap (MO), novel questions (NQ) and global
//! recall (GR).

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LengthMode;
use crate::dialogue::Dialogue;
use crate::error::{Error, Result};
use crate::lang::{normalize, tokenize, Vocabulary};
use crate::oracle::OracleConfig;
use crate::scene::Scene;
use crate::selfplay::{play_games, LengthPolicy, PlayedGame, Questioner};

const MAX_ORDER: usize = 4;

fn ngram_counts<S: AsRef<str> + Eq + std::hash::Hash>(tokens: &[S], n: usize) -> HashMap<&[S], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU without smoothing. Orders run from 1 to min(4, |candidate|)
/// with uniform weights; clipped counts use the maximum count over the
/// references; the brevity penalty uses the reference length closest to the
/// candidate (shorter wins ties). Any zero precision makes the score 0.
pub fn bleu4<S: AsRef<str> + Eq + std::hash::Hash>(candidate: &[S], references: &[Vec<S>]) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::EmptyCandidate);
    }
    if references.is_empty() {
        return Err(Error::EmptySet("bleu references"));
    }
    let c = candidate.len();
    let orders = c.min(MAX_ORDER);
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<&[S], usize> = HashMap::new();
        for r in references {
            for (gram, count) in ngram_counts(r, n) {
                let e = max_ref.entry(gram).or_insert(0);
                *e = (*e).max(count);
            }
        }
        let clipped: usize = cand.iter().map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0))).sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped as f64 / (c - n + 1) as f64).ln();
    }
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * (log_sum / orders as f64).exp())
}

/// Mean over questions of BLEU-4 against the other questions of the same
/// dialogue. A dialogue with a single question scores 0.
pub fn mutual_overlap_dialogue(dialogue: &Dialogue) -> f64 {
    let questions: Vec<Vec<String>> = dialogue.question_tokens().collect();
    mutual_overlap(&questions)
}

pub fn mutual_overlap(questions: &[Vec<String>]) -> f64 {
    if questions.len() < 2 {
        return 0.0;
    }
    let total: f64 = (0..questions.len())
        .map(|i| {
            let others: Vec<Vec<String>> =
                questions.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| q.clone()).collect();
            bleu4(&questions[i], &others).unwrap_or(0.0)
        })
        .sum();
    total / questions.len() as f64
}

/// Unweighted mean of dialogue MO; 0 for an empty corpus.
pub fn corpus_mo(corpus: &[Dialogue]) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    let scores: Vec<f64> = corpus.par_iter().map(mutual_overlap_dialogue).collect();
    scores.iter().sum::<f64>() / corpus.len() as f64
}

pub fn has_repeated_question(dialogue: &Dialogue) -> bool {
    let mut seen = HashSet::new();
    dialogue.turns.iter().any(|t| !seen.insert(normalize(&t.q)))
}

/// Percentage of games whose dialogue repeats some question verbatim.
pub fn grq(corpus: &[Dialogue]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let repeated = corpus.iter().filter(|d| has_repeated_question(d)).count();
    Ok(100.0 * repeated as f64 / corpus.len() as f64)
}

/// Normalized question strings of a training corpus.
pub fn training_questions(corpus: &[Dialogue]) -> BTreeSet<String> {
    corpus.iter().flat_map(|d| d.turns.iter().map(|t| normalize(&t.q))).collect()
}

/// Mean per-dialogue count of questions absent from the training questions;
/// repeated unseen questions count once per occurrence.
pub fn novel_questions(corpus: &[Dialogue], training: &BTreeSet<String>) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    let unseen: usize = corpus
        .iter()
        .map(|d| d.turns.iter().filter(|t| !training.contains(&normalize(&t.q))).count())
        .sum();
    unseen as f64 / corpus.len() as f64
}

/// Percentage of the learnable vocabulary used anywhere in the corpus.
pub fn global_recall(corpus: &[Dialogue], vocab: &Vocabulary) -> Result<f64> {
    if vocab.learnable_len() == 0 {
        return Err(Error::EmptyVocabulary);
    }
    let used: HashSet<usize> = corpus
        .iter()
        .flat_map(|d| d.turns.iter().flat_map(|t| tokenize(&t.q)))
        .filter_map(|w| vocab.id(&w))
        .filter(|&id| !Vocabulary::is_special(id))
        .collect();
    Ok(100.0 * used.len() as f64 / vocab.learnable_len() as f64)
}

pub fn accuracy(games: &[PlayedGame]) -> Result<f64> {
    if games.is_empty() {
        return Err(Error::EmptySet("played games"));
    }
    Ok(100.0 * games.iter().filter(|g| g.success).count() as f64 / games.len() as f64)
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pct_human: u8,
    pub pct_generated: u8,
    /// `None` for the purely human training set.
    pub length_mode: Option<LengthMode>,
    pub acc: f64,
    pub grq: f64,
    pub mo: f64,
    pub nq: f64,
    pub gr: f64,
}

impl ReportRow {
    pub const CSV_HEADER: &'static str = "pct_human,pct_generated,length_mode,acc,grq,mo,nq,gr";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.2},{:.2},{:.4},{:.4},{:.2}",
            self.pct_human,
            self.pct_generated,
            self.length_mode.map_or("-", LengthMode::name),
            self.acc,
            self.grq,
            self.mo,
            self.nq,
            self.gr
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("bad report row `{line}`: {m}"));
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", fields.len())));
        }
        let num = |i: usize| fields[i].parse::<f64>().map_err(|e| bad(e.to_string()));
        let pct = |i: usize| fields[i].parse::<u8>().map_err(|e| bad(e.to_string()));
        Ok(ReportRow {
            pct_human: pct(0)?,
            pct_generated: pct(1)?,
            length_mode: match fields[2] {
                "-" => None,
                m => Some(m.parse()?),
            },
            acc: num(3)?,
            grq: num(4)?,
            mo: num(5)?,
            nq: num(6)?,
            gr: num(7)?,
        })
    }

    pub fn in_range(&self) -> bool {
        let pct = |x: f64| (0.0..=100.0).contains(&x);
        pct(self.acc) && pct(self.grq) && pct(self.gr) && (0.0..=1.0).contains(&self.mo) && self.nq >= 0.0
    }
}

/// Plays every test scene for `turns` questions and scores the played corpus.
/// `composition` labels the row with the training-set mixture.
pub fn evaluate(
    questioner: &Questioner,
    test_scenes: &[Scene],
    oracle_cfg: &OracleConfig,
    training: &BTreeSet<String>,
    turns: usize,
    composition: (u8, Option<LengthMode>),
    seed: u64,
) -> Result<(ReportRow, Vec<PlayedGame>)> {
    let games = play_games(questioner, test_scenes, oracle_cfg, &LengthPolicy::Fixed(turns), seed)?;
    let corpus: Vec<Dialogue> = games.iter().map(|g| g.dialogue.clone()).collect();
    let row = ReportRow {
        pct_human: composition.0,
        pct_generated: 100 - composition.0,
        length_mode: composition.1,
        acc: accuracy(&games)?,
        grq: grq(&corpus)?,
        mo: corpus_mo(&corpus),
        nq: novel_questions(&corpus, training),
        gr: global_recall(&corpus, questioner.vocab)?,
    };
    Ok((row, games))
}

/// Aligned markdown table; arrows mark whether higher or lower is better.
pub fn markdown_table(rows: &[(ReportRow, bool)]) -> String {
    let header = ["training set", "ACC ↑", "GRQ ↓", "MO ↓", "NQ ↑", "GR ↑"];
    let mut lines: Vec<[String; 6]> = vec![header.map(str::to_string)];
    for (r, ablation) in rows {
        let mut name = format!("{}/{}", r.pct_human, r.pct_generated);
        if let Some(m) = r.length_mode {
            name.push(' ');
            name.push_str(m.name());
        }
        if *ablation {
            name.push_str(" (ablation only)");
        }
        lines.push([
            name,
            format!("{:.2}", r.acc),
            format!("{:.2}", r.grq),
            format!("{:.4}", r.mo),
            format!("{:.4}", r.nq),
            format!("{:.2}", r.gr),
        ]);
    }
    let widths: Vec<usize> = (0..6).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let fmt = |cells: &[String; 6]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                let pad = " ".repeat(w - cell.chars().count());
                if c == 0 { format!("{cell}{pad}") } else { format!("{pad}{cell}") }
            })
            .collect();
        format!("| {} |", padded.join(" | "))
    };
    let mut out = fmt(&lines[0]);
    out.push('\n');
    let rule: Vec<String> =
        widths.iter().enumerate().map(|(c, &w)| if c == 0 { "-".repeat(w) } else { format!("{}:", "-".repeat(w - 1)) }).collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for l in &lines[1..] {
        out.push_str(&fmt(l));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{Source, Turn};
    use crate::oracle::Answer;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn dialogue(questions: &[&str]) -> Dialogue {
        Dialogue {
            game_id: 0,
            scene_id: 0,
            source: Source::Generated,
            turns: questions.iter().map(|q| Turn { q: q.to_string(), a: Answer::No }).collect(),
            guess: 0,
            success: false,
        }
    }

    #[test]
    fn bleu_identical_and_disjoint() {
        for q in ["red", "is it red", "is it a red car ?"] {
            assert_eq!(bleu4(&toks(q), &[toks(q)]).unwrap(), 1.0);
        }
        assert_eq!(bleu4(&toks("a b c"), &[toks("d e f")]).unwrap(), 0.0);
        assert!(matches!(bleu4::<String>(&[], &[toks("a")]), Err(Error::EmptyCandidate)));
    }

    #[test]
    fn bleu_hand_counted_case() {
        let score = bleu4(&toks("is it the red car ?"), &[toks("is it the red cat ?")]).unwrap();
        let expected = (5.0f64 / 6.0 * 3.0 / 5.0 * 2.0 / 4.0 * 1.0 / 3.0).powf(0.25);
        assert!((expected - (1.0f64 / 12.0).powf(0.25)).abs() < 1e-15);
        assert!((score - expected).abs() < 1e-9);
        assert!((score - 0.5373).abs() < 1e-4);
    }

    #[test]
    fn bleu_brevity_penalty_and_closest_reference() {
        // candidate of 2 against references of length 3 and 5: r = 3
        let score = bleu4(&toks("a b"), &[toks("a b c"), toks("a b c d e")]).unwrap();
        assert!((score - (1.0f64 - 1.5).exp()).abs() < 1e-12);
        // tie between 1 and 3 for a 2-token candidate picks the shorter: no penalty
        let tie = bleu4(&toks("a b"), &[toks("a"), toks("a b c")]).unwrap();
        assert!((tie - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mutual_overlap_examples() {
        assert_eq!(mutual_overlap_dialogue(&dialogue(&["is it red ?", "is it red ?"])), 1.0);
        assert_eq!(mutual_overlap_dialogue(&dialogue(&["is it red ?"])), 0.0);
        let mo = mutual_overlap_dialogue(&dialogue(&["is it red ?", "is it red ?", "left side please"]));
        assert!((mo - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grq_counts_games() {
        let mut corpus: Vec<Dialogue> = (0..7).map(|_| dialogue(&["is it red ?", "is it blue ?"])).collect();
        corpus.extend((0..3).map(|_| dialogue(&["is it red ?", "Is it RED?"])));
        assert_eq!(grq(&corpus).unwrap(), 30.0);
        // the same question in two different games is not a repetition
        assert_eq!(grq(&[dialogue(&["is it red ?"]), dialogue(&["is it red ?"])]).unwrap(), 0.0);
        assert!(grq(&[]).is_err());
    }

    #[test]
    fn novel_question_counts() {
        let training = training_questions(&[dialogue(&["is it red ?", "is it a cat ?"])]);
        assert_eq!(novel_questions(&[dialogue(&["is it red ?", "is it a cat ?"])], &training), 0.0);
        let d = dialogue(&["is it red ?", "is it blue ?", "is it a cat ?", "is it blue ?", "is it red ?"]);
        assert_eq!(novel_questions(&[d], &training), 2.0);
    }

    #[test]
    fn global_recall_counts() {
        let words: Vec<(String, u64)> = (0..200).map(|i| (format!("w{i}"), 3)).collect();
        let vocab = Vocabulary::from_counts(words, 3).unwrap();
        let used: Vec<String> = (0..42).map(|i| format!("w{i}")).collect();
        let corpus = vec![dialogue(&[&used[..21].join(" "), &used[21..].join(" "), "w0 yes <unk>"])];
        assert_eq!(global_recall(&corpus, &vocab).unwrap(), 21.0);
        assert_eq!(global_recall(&[dialogue(&["zzz ?"])], &vocab).unwrap(), 0.0);
    }

    #[test]
    fn report_row_csv() {
        let row = ReportRow {
            pct_human: 50,
            pct_generated: 50,
            length_mode: Some(LengthMode::Fixed),
            acc: 48.1,
            grq: 22.5,
            mo: 0.18,
            nq: 0.37,
            gr: 21.2,
        };
        let line = row.csv_line();
        assert_eq!(line, "50,50,fixed,48.10,22.50,0.1800,0.3700,21.20");
        assert_eq!(ReportRow::parse_csv_line(&line).unwrap(), row);
        assert!(row.in_range());
    }
}
