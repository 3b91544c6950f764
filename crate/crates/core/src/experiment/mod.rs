//! The full two-step pipeline: human-proxy corpus, base model, self-play,
//! mixed training sets, retraining and evaluation, repeated over replicate
//! seeds.

mod config;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{CheckpointChoice, ExperimentConfig, MixEntry, KEYS};
pub use manifest::{file_digest, Manifest, OutputLock};

use crate::corpus::{corpus_stats, mix_corpora, LengthMode, MixSpec, StatsRow};
use crate::dialogue::{write_dialogues, Dialogue};
use crate::error::{Error, Result};
use crate::lang::{build_vocabulary, write_vocabulary, Vocabulary};
use crate::metrics::{self, evaluate, ReportRow};
use crate::model::{init_params, train_with_validation, Checkpoint, Example, ModelConfig, TrainOutcome};
use crate::rng::derive_seed;
use crate::scene::{generate_scene_range, write_scenes, Scene};
use crate::selfplay::{generate_selfplay_corpus, LengthPolicy, Questioner};
use crate::teacher::collect_teacher_corpus;

/// Binds each dialogue to its scene.
pub fn examples<'a>(corpus: &[Dialogue], scenes: &'a [Scene], vocab: &Vocabulary) -> Result<Vec<Example<'a>>> {
    let by_id: BTreeMap<u64, &Scene> = scenes.iter().map(|s| (s.scene_id, s)).collect();
    corpus
        .iter()
        .map(|d| {
            let scene = by_id.get(&d.scene_id).ok_or(Error::MissingScene(d.scene_id))?;
            Ok(Example::new(d, scene, vocab))
        })
        .collect()
}

/// A model trained from scratch on one corpus, with the vocabulary built
/// from that corpus.
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub outcome: TrainOutcome,
}

pub fn train_on_corpus(
    corpus: &[Dialogue],
    scenes: &[Scene],
    validation: Option<(&[Dialogue], &[Scene])>,
    cfg: &ModelConfig,
    min_count: u64,
    seed: u64,
) -> Result<TrainedModel> {
    let vocab = build_vocabulary(corpus, min_count)?;
    let train_set = examples(corpus, scenes, &vocab)?;
    let val_set = validation.map(|(d, s)| examples(d, s, &vocab)).transpose()?;
    let params = init_params(cfg, &vocab, derive_seed(seed, "init", 0))?;
    let outcome = train_with_validation(params, &train_set, val_set.as_deref(), cfg, derive_seed(seed, "shuffle", 0))?;
    let checkpoint = Checkpoint { config: *cfg, vocab, params: outcome.last.clone() };
    Ok(TrainedModel { checkpoint, outcome })
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage { stage: name, source: Box::new(e) },
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = format!("{}\n", StatsRow::CSV_HEADER);
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{}\n", ReportRow::CSV_HEADER);
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

fn mean_report(rows: &[&ReportRow]) -> ReportRow {
    let n = rows.len() as f64;
    let avg = |f: fn(&ReportRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
    ReportRow {
        pct_human: rows[0].pct_human,
        pct_generated: rows[0].pct_generated,
        length_mode: rows[0].length_mode,
        acc: avg(|r| r.acc),
        grq: avg(|r| r.grq),
        mo: avg(|r| r.mo),
        nq: avg(|r| r.nq),
        gr: avg(|r| r.gr),
    }
}

fn mean_stats(rows: &[&StatsRow]) -> StatsRow {
    let n = rows.len() as f64;
    StatsRow {
        pct_human: rows[0].pct_human,
        pct_generated: rows[0].pct_generated,
        length_mode: rows[0].length_mode,
        voc_size: (rows.iter().map(|r| r.voc_size as f64).sum::<f64>() / n).round() as usize,
        mo: rows.iter().map(|r| r.mo).sum::<f64>() / n,
        grq: rows.iter().map(|r| r.grq).sum::<f64>() / n,
    }
}

/// Results of one replicate seed.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub stats: Vec<(MixEntry, StatsRow)>,
    pub report: Vec<(MixEntry, ReportRow)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub seeds: Vec<SeedResult>,
    /// Means over replicate seeds, in configuration order.
    pub stats: Vec<(MixEntry, StatsRow)>,
    pub report: Vec<(MixEntry, ReportRow)>,
}

impl ExperimentResult {
    pub fn row(&self, mix: &MixEntry) -> Option<&ReportRow> {
        self.report.iter().find(|(m, _)| m == mix).map(|(_, r)| r)
    }
}

/// Compositions whose training-set statistics are reported: the human set,
/// both purely generated sets and every configured mix.
fn stats_entries(cfg: &ExperimentConfig) -> Vec<MixEntry> {
    let mut entries = vec![MixEntry { pct_human: 100, length_mode: None }];
    for mode in [LengthMode::Fixed, LengthMode::Variable] {
        entries.push(MixEntry { pct_human: 0, length_mode: Some(mode) });
    }
    for m in &cfg.mixes {
        if !entries.contains(m) {
            entries.push(*m);
        }
    }
    entries
}

pub fn replicate_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, "replicate", r as u64)
}

/// Runs one replicate in `dir`, writing every intermediate artifact.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path, progress: &mut dyn FnMut(&str)) -> Result<SeedResult> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (train_scenes, val_scenes, test_scenes) = stage("gen-scenes", || {
        let train = generate_scene_range(0, cfg.n_train_scenes, seed, &cfg.scene)?;
        let val = generate_scene_range(cfg.validation_start(), cfg.n_validation_scenes, seed, &cfg.scene)?;
        let test = generate_scene_range(cfg.test_start(), cfg.n_test_scenes, seed, &cfg.scene)?;
        write_scenes(&dir.join("scenes_train.jsonl"), &train)?;
        write_scenes(&dir.join("scenes_validation.jsonl"), &val)?;
        write_scenes(&dir.join("scenes_test.jsonl"), &test)?;
        Ok((train, val, test))
    })?;

    let (human, human_val) = stage("collect-human", || {
        let (human, report) = collect_teacher_corpus(&train_scenes, &cfg.teacher, seed)?;
        let (human_val, _) = collect_teacher_corpus(&val_scenes, &cfg.teacher, seed)?;
        write_dialogues(&dir.join("human.jsonl"), &human)?;
        write_dialogues(&dir.join("human_validation.jsonl"), &human_val)?;
        write_json(&dir.join("human_collect.json"), &report)?;
        if human.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok((human, human_val))
    })?;
    progress(&format!("human corpus: {} dialogues", human.len()));

    let train_seed = derive_seed(seed, "train", 0);
    let fit = |corpus: &[Dialogue], tag: &str| -> Result<TrainedModel> {
        let validation = (!human_val.is_empty()).then_some((human_val.as_slice(), val_scenes.as_slice()));
        let model = train_on_corpus(corpus, &train_scenes, validation, &cfg.model, cfg.min_count, train_seed)?;
        model.checkpoint.save(&dir.join(format!("model_{tag}.ckpt")))?;
        write_vocabulary(&dir.join(format!("vocab_{tag}.jsonl")), &model.checkpoint.vocab)?;
        write_json(&dir.join(format!("trainlog_{tag}.json")), &model.outcome.log)?;
        Ok(model)
    };

    let human_entry = MixEntry { pct_human: 100, length_mode: None };
    let base = stage("train", || fit(&human, &human_entry.tag()))?;
    progress("base model trained");

    let generated: BTreeMap<LengthMode, Vec<Dialogue>> = stage("selfplay", || {
        let params = match (cfg.selfplay_checkpoint, &base.outcome.best) {
            (CheckpointChoice::BestVal, Some((_, best))) => best,
            _ => &base.checkpoint.params,
        };
        let questioner = Questioner {
            params,
            vocab: &base.checkpoint.vocab,
            decode: cfg.model.decode,
            max_question_len: cfg.model.max_question_len,
        };
        let mut out = BTreeMap::new();
        for (mode, policy) in [
            (LengthMode::Fixed, LengthPolicy::Fixed(cfg.fixed_turns)),
            (LengthMode::Variable, LengthPolicy::match_human(&human)),
        ] {
            let scenes: Vec<Scene> = match mode {
                LengthMode::Fixed => train_scenes.clone(),
                // only games with a human counterpart have a length to match
                LengthMode::Variable => {
                    let ids: BTreeSet<u64> = human.iter().map(|d| d.game_id).collect();
                    train_scenes.iter().filter(|s| ids.contains(&s.scene_id)).cloned().collect()
                }
            };
            let corpus = generate_selfplay_corpus(&questioner, &scenes, &cfg.selfplay_oracle, &policy, seed)?;
            write_dialogues(&dir.join(format!("generated_{}.jsonl", mode.name())), &corpus)?;
            out.insert(mode, corpus);
        }
        Ok(out)
    })?;
    progress("self-play corpora generated");

    let datasets: Vec<(MixEntry, Vec<Dialogue>)> = stage("mix", || {
        let mix_seed = derive_seed(seed, "mix", 0);
        let mut out = Vec::new();
        for entry in stats_entries(cfg) {
            let corpus = match entry.length_mode {
                None => human.clone(),
                Some(mode) => {
                    let spec = MixSpec { pct_human: entry.pct_human, length_mode: mode, seed: mix_seed };
                    let (mixed, manifest) = mix_corpora(&human, &generated[&mode], &spec)?;
                    write_dialogues(&dir.join(format!("data_{}.jsonl", entry.tag())), &mixed)?;
                    write_json(&dir.join(format!("mix_{}.json", entry.tag())), &manifest)?;
                    mixed
                }
            };
            out.push((entry, corpus));
        }
        Ok(out)
    })?;

    let stats: Vec<(MixEntry, StatsRow)> = stage("stats", || {
        let rows = datasets
            .iter()
            .map(|(e, d)| {
                let mut row = corpus_stats(d, cfg.min_count)?;
                // label with the configured composition rather than the inferred one
                row.pct_human = e.pct_human;
                row.pct_generated = 100 - e.pct_human;
                row.length_mode = e.length_mode;
                Ok((*e, row))
            })
            .collect::<Result<Vec<_>>>()?;
        let plain: Vec<StatsRow> = rows.iter().map(|(_, r)| r.clone()).collect();
        write_text(&dir.join("stats.csv"), &stats_csv(&plain))?;
        Ok(rows)
    })?;

    let mut report = Vec::new();
    for mix in &cfg.mixes {
        let corpus = &datasets.iter().find(|(e, _)| e == mix).expect("every mix has a dataset").1;
        let model = if mix.length_mode.is_none() {
            None
        } else {
            Some(stage("train", || fit(corpus, &mix.tag()))?)
        };
        let checkpoint = model.as_ref().map_or(&base.checkpoint, |m| &m.checkpoint);
        let row = stage("evaluate", || {
            let questioner = Questioner {
                params: &checkpoint.params,
                vocab: &checkpoint.vocab,
                decode: cfg.model.decode,
                max_question_len: cfg.model.max_question_len,
            };
            let training = metrics::training_questions(corpus);
            let (row, games) = evaluate(
                &questioner,
                &test_scenes,
                &cfg.eval_oracle,
                &training,
                cfg.eval_turns,
                (mix.pct_human, mix.length_mode),
                derive_seed(seed, "eval", 0),
            )?;
            let played: Vec<Dialogue> = games.into_iter().map(|g| g.dialogue).collect();
            write_dialogues(&dir.join(format!("eval_{}.jsonl", mix.tag())), &played)?;
            Ok(row)
        })?;
        progress(&format!("{mix}: {}", row.csv_line()));
        report.push((*mix, row));
    }
    stage("report", || {
        let rows: Vec<ReportRow> = report.iter().map(|(_, r)| r.clone()).collect();
        write_text(&dir.join("report.csv"), &report_csv(&rows))
    })?;
    Ok(SeedResult { seed, stats, report })
}

/// Runs every replicate and writes the averaged tables, the markdown report
/// and the manifest into the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<ExperimentResult> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let _lock = OutputLock::acquire(out)?;
    write_text(&out.join("config.txt"), &cfg.to_text())?;

    let mut seeds = Vec::with_capacity(cfg.n_seeds);
    for r in 0..cfg.n_seeds {
        let seed = replicate_seed(cfg.seed, r);
        progress(&format!("replicate {r} (seed {seed})"));
        seeds.push(run_seed(cfg, seed, &seed_dir(out, r), progress)?);
    }

    let stats: Vec<(MixEntry, StatsRow)> = stats_entries(cfg)
        .into_iter()
        .map(|e| {
            let rows: Vec<&StatsRow> =
                seeds.iter().map(|s| &s.stats.iter().find(|(m, _)| *m == e).expect("entry").1).collect();
            (e, mean_stats(&rows))
        })
        .collect();
    let report: Vec<(MixEntry, ReportRow)> = cfg
        .mixes
        .iter()
        .map(|e| {
            let rows: Vec<&ReportRow> =
                seeds.iter().map(|s| &s.report.iter().find(|(m, _)| m == e).expect("entry").1).collect();
            (*e, mean_report(&rows))
        })
        .collect();

    stage("report", || {
        let plain_stats: Vec<StatsRow> = stats.iter().map(|(_, r)| r.clone()).collect();
        write_text(&out.join("stats.csv"), &stats_csv(&plain_stats))?;
        let (ablation, main): (Vec<_>, Vec<_>) = report.iter().partition(|(e, _)| e.is_ablation());
        let rows = |v: &[&(MixEntry, ReportRow)]| v.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>();
        write_text(&out.join("report.csv"), &report_csv(&rows(&main)))?;
        write_text(&out.join("report_ablation.csv"), &report_csv(&rows(&ablation)))?;
        let table: Vec<(ReportRow, bool)> = report.iter().map(|(e, r)| (r.clone(), e.is_ablation())).collect();
        let md = format!(
            "# Results\n\nMeans over {} replicate seeds, {} questions per test game.\n\n{}",
            cfg.n_seeds,
            cfg.eval_turns,
            metrics::markdown_table(&table)
        );
        write_text(&out.join("report.md"), &md)?;
        let replicate_seeds = (0..cfg.n_seeds).map(|r| replicate_seed(cfg.seed, r)).collect();
        Manifest::build(out, cfg.seed, replicate_seeds)?.write(&out.join("manifest.json"))
    })?;
    Ok(ExperimentResult { seeds, stats, report })
}

pub fn seed_dir(out: &Path, r: usize) -> PathBuf {
    out.join(format!("seed-{r}"))
}
