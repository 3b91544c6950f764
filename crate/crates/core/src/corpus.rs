//! Mixed training sets: game-aligned replacement of human dialogues by
//! generated ones, batches guaranteed to carry both sources, and training-set
//! statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, Source};
use crate::error::{Error, Result};
use crate::lang::build_vocabulary;
use crate::metrics;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthMode {
    Fixed,
    Variable,
}

impl LengthMode {
    pub fn name(self) -> &'static str {
        match self {
            LengthMode::Fixed => "fixed",
            LengthMode::Variable => "variable",
        }
    }
}

impl fmt::Display for LengthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LengthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(LengthMode::Fixed),
            "variable" => Ok(LengthMode::Variable),
            other => Err(Error::Config(format!("unknown length mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixSpec {
    pub pct_human: u8,
    pub length_mode: LengthMode,
    pub seed: u64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pct_human > 100 {
            return Err(Error::Config(format!("pct_human {} exceeds 100", self.pct_human)));
        }
        Ok(())
    }

    pub fn pct_generated(&self) -> u8 {
        100 - self.pct_human
    }

    /// Number of games replaced in a corpus of `n` human games:
    /// floor((1 - pct_human/100) * n).
    pub fn replaced_count(&self, n: usize) -> usize {
        n * usize::from(self.pct_generated()) / 100
    }
}

/// Companion file of a mixed dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixManifest {
    pub pct_human: u8,
    pub length_mode: LengthMode,
    pub seed: u64,
    pub replaced_game_ids: Vec<u64>,
}

/// All human game ids in a seeded random order. Taking prefixes of this
/// ranking makes replacement sets nested across proportions.
pub fn replacement_ranking(human: &[Dialogue], seed: u64) -> Vec<u64> {
    let mut ids: Vec<u64> = human.iter().map(|d| d.game_id).collect();
    ids.sort_unstable();
    ids.shuffle(&mut stream_rng(seed, "mix-ranking", 0));
    ids
}

/// Replaces a seeded subset of human games by the generated dialogue of the
/// same game. The output keeps the human order and size.
pub fn mix_corpora(human: &[Dialogue], generated: &[Dialogue], spec: &MixSpec) -> Result<(Vec<Dialogue>, MixManifest)> {
    spec.validate()?;
    let ranking = replacement_ranking(human, spec.seed);
    let mut replaced: Vec<u64> = ranking[..spec.replaced_count(human.len())].to_vec();
    let by_game: BTreeMap<u64, &Dialogue> = generated.iter().map(|d| (d.game_id, d)).collect();
    let missing: Vec<u64> = replaced.iter().copied().filter(|id| !by_game.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::Alignment(missing));
    }
    let human_by_game: BTreeMap<u64, &Dialogue> = human.iter().map(|d| (d.game_id, d)).collect();
    let mut fixed_len = None;
    for id in &replaced {
        let g = by_game[id];
        let ok = match spec.length_mode {
            LengthMode::Variable => g.turns.len() == human_by_game[id].turns.len(),
            LengthMode::Fixed => *fixed_len.get_or_insert(g.turns.len()) == g.turns.len(),
        };
        if !ok || g.scene_id != human_by_game[id].scene_id {
            return Err(Error::LengthPolicy { game_id: *id, mode: spec.length_mode.name() });
        }
    }
    let replace: BTreeSet<u64> = replaced.iter().copied().collect();
    let mixed = human
        .iter()
        .map(|d| if replace.contains(&d.game_id) { by_game[&d.game_id].clone() } else { d.clone() })
        .collect();
    replaced.sort_unstable();
    let manifest = MixManifest {
        pct_human: spec.pct_human,
        length_mode: spec.length_mode,
        seed: spec.seed,
        replaced_game_ids: replaced,
    };
    Ok((mixed, manifest))
}

/// Indices into the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

pub fn make_batches(dataset: &[Dialogue], batch_size: usize, seed: u64) -> Vec<Batch> {
    let sources: Vec<Source> = dataset.iter().map(|d| d.source).collect();
    make_batches_for_sources(&sources, batch_size, seed)
}

/// Seeded shuffle then sequential slicing. When both sources are present, a
/// full batch that came out single-source swaps one element with the nearest
/// element of the other source in the closest batch that can spare it. The
/// last partial batch is exempt. Every full batch ends up mixed whenever each
/// source has at least as many items as there are full batches.
pub fn make_batches_for_sources(sources: &[Source], batch_size: usize, seed: u64) -> Vec<Batch> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.shuffle(&mut stream_rng(seed, "batches", 0));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    let n_full = sources.len() / batch_size;
    let has_both = sources.contains(&Source::Human) && sources.contains(&Source::Generated);
    if has_both && batch_size >= 2 {
        for i in 0..n_full {
            repair(&mut batches, i, n_full, sources);
        }
    }
    batches.into_iter().map(|indices| Batch { indices }).collect()
}

fn count_of(batch: &[usize], sources: &[Source], source: Source) -> usize {
    batch.iter().filter(|&&i| sources[i] == source).count()
}

fn repair(batches: &mut [Vec<usize>], i: usize, n_full: usize, sources: &[Source]) {
    let present = sources[batches[i][0]];
    if !batches[i].iter().all(|&k| sources[k] == present) {
        return;
    }
    let wanted = match present {
        Source::Human => Source::Generated,
        Source::Generated => Source::Human,
    };
    // a donor must stay mixed after giving one away, unless it is exempt
    let can_donate = |j: usize, batches: &[Vec<usize>]| {
        let have = count_of(&batches[j], sources, wanted);
        if j >= n_full {
            have >= 1
        } else {
            have >= 2
        }
    };
    for dist in 1..batches.len() {
        let candidates = [i.checked_sub(dist), Some(i + dist)];
        for j in candidates.into_iter().flatten().filter(|&j| j < batches.len()) {
            if !can_donate(j, batches) {
                continue;
            }
            // nearest element of the wanted source: first one when the donor
            // lies after batch i, last one when before
            let pos = if j > i {
                batches[j].iter().position(|&k| sources[k] == wanted)
            } else {
                batches[j].iter().rposition(|&k| sources[k] == wanted)
            }
            .expect("donor holds the wanted source");
            let own = if j > i { batches[i].len() - 1 } else { 0 };
            let taken = batches[j][pos];
            batches[j][pos] = batches[i][own];
            batches[i][own] = taken;
            return;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub pct_human: u8,
    pub pct_generated: u8,
    /// `None` for purely human corpora.
    pub length_mode: Option<LengthMode>,
    pub voc_size: usize,
    pub mo: f64,
    pub grq: f64,
}

impl StatsRow {
    pub const CSV_HEADER: &'static str = "pct_human,pct_generated,length_mode,voc_size,mo,grq";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.2}",
            self.pct_human,
            self.pct_generated,
            self.length_mode.map_or("-", LengthMode::name),
            self.voc_size,
            self.mo,
            self.grq
        )
    }
}

/// Proportions and length mode read off the corpus itself: the generated
/// share rounded to a whole percent, fixed iff all generated dialogues have
/// the same length.
pub fn infer_composition(corpus: &[Dialogue]) -> (u8, Option<LengthMode>) {
    let generated: Vec<&Dialogue> = corpus.iter().filter(|d| d.source == Source::Generated).collect();
    let pct_generated = if corpus.is_empty() {
        0
    } else {
        ((generated.len() * 200 + corpus.len()) / (2 * corpus.len())) as u8
    };
    let mode = if generated.is_empty() {
        None
    } else if generated.iter().all(|d| d.turns.len() == generated[0].turns.len()) {
        Some(LengthMode::Fixed)
    } else {
        Some(LengthMode::Variable)
    };
    (100 - pct_generated, mode)
}

pub fn corpus_stats(corpus: &[Dialogue], min_count: u64) -> Result<StatsRow> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (pct_human, length_mode) = infer_composition(corpus);
    Ok(StatsRow {
        pct_human,
        pct_generated: 100 - pct_human,
        length_mode,
        voc_size: build_vocabulary(corpus, min_count)?.learnable_len(),
        mo: metrics::corpus_mo(corpus),
        grq: metrics::grq(corpus)?,
    })
}
