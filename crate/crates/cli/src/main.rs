use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use selfmix::corpus::{corpus_stats, infer_composition, mix_corpora, LengthMode, MixSpec, StatsRow};
use selfmix::dialogue::{read_dialogues, write_dialogues};
use selfmix::experiment::{run_experiment, train_on_corpus, ExperimentConfig};
use selfmix::metrics::{self, evaluate, ReportRow};
use selfmix::model::Checkpoint;
use selfmix::oracle::OracleConfig;
use selfmix::scene::{generate_scene_range, read_scenes, write_scenes};
use selfmix::selfplay::{generate_selfplay_corpus, LengthPolicy, Questioner};
use selfmix::teacher::collect_teacher_corpus;

#[derive(Parser)]
#[command(name = "selfmix", version, about = "Self-play data mixing for a referential guessing game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration shared by the stage commands: an optional config file and
/// `--key value` overrides using the config keys.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides such as `--model.epochs 10`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let mut rest = self.overrides.iter();
        while let Some(flag) = rest.next() {
            let Some(key) = flag.strip_prefix("--") else {
                return Err(selfmix::Error::Config(format!("unexpected argument `{flag}`")).into());
            };
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k, v.to_string()),
                None => {
                    let v = rest
                        .next()
                        .ok_or_else(|| selfmix::Error::Config(format!("missing value for `--{key}`")))?;
                    (key, v.clone())
                }
            };
            cfg.set(key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene set with ids start..start+n.
    GenScenes {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Play the scripted questioner on every scene and keep the filtered games.
    CollectHuman {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a questioner from scratch on a corpus.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Play a trained model against the oracle, one game per scene.
    Selfplay {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// Fixed turn budget.
        #[arg(long, conflicts_with = "match_human")]
        turns: Option<usize>,
        /// Take each game's turn budget from this human corpus.
        #[arg(long)]
        match_human: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        noise_rate: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace a share of the human games by their generated counterparts.
    Mix {
        #[arg(long)]
        human: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        pct_human: u8,
        #[arg(long)]
        length: LengthMode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the output path with `.manifest.json` appended.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Print the training-set statistics of a corpus.
    Stats {
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_count: u64,
        #[arg(long)]
        header: bool,
    },
    /// Play the test scenes and print one report row.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// The model's training corpus (for novel questions and the row label).
        #[arg(long)]
        training: PathBuf,
        #[arg(long, default_value_t = 5)]
        turns: usize,
        #[arg(long, default_value_t = 0.1)]
        noise_rate: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        header: bool,
        /// Also write the played games here.
        #[arg(long)]
        games: Option<PathBuf>,
    },
    /// Render a report CSV as a markdown table.
    Report {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole experiment grid.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn read_report(path: &Path) -> anyhow::Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| selfmix::Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(ReportRow::CSV_HEADER) {
        return Err(selfmix::Error::Parse { path: path.into(), line: 1, msg: "unexpected header".into() }.into());
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            ReportRow::parse_csv_line(l)
                .map_err(|e| selfmix::Error::Parse { path: path.into(), line: i + 2, msg: e.to_string() }.into())
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenScenes { n, start, seed, out, cfg } => {
            let cfg = cfg.load()?;
            write_scenes(&out, &generate_scene_range(start, n, seed, &cfg.scene)?)?;
        }
        Command::CollectHuman { scenes, seed, out, cfg } => {
            let cfg = cfg.load()?;
            let (corpus, report) = collect_teacher_corpus(&read_scenes(&scenes)?, &cfg.teacher, seed)?;
            write_dialogues(&out, &corpus)?;
            eprintln!(
                "played {} kept {} dropped {} failed, {} too long",
                report.played, report.kept, report.dropped_failed, report.dropped_long
            );
        }
        Command::Train { data, scenes, seed, out, cfg } => {
            let cfg = cfg.load()?;
            let corpus = read_dialogues(&data)?;
            let scenes = read_scenes(&scenes)?;
            let model = train_on_corpus(&corpus, &scenes, None, &cfg.model, cfg.min_count, seed)?;
            model.checkpoint.save(&out)?;
            if let Some(last) = model.outcome.log.epochs.last() {
                eprintln!("epoch {} qgen nll {:.4}", last.epoch, last.qgen);
            }
        }
        Command::Selfplay { model, scenes, turns, match_human, noise_rate, seed, out } => {
            let ck = Checkpoint::load(&model)?;
            let scenes = read_scenes(&scenes)?;
            let policy = match (turns, match_human) {
                (Some(k), None) => LengthPolicy::Fixed(k),
                (None, Some(path)) => LengthPolicy::match_human(&read_dialogues(&path)?),
                _ => bail!(selfmix::Error::Config("give exactly one of --turns and --match-human".into())),
            };
            let questioner = Questioner {
                params: &ck.params,
                vocab: &ck.vocab,
                decode: ck.config.decode,
                max_question_len: ck.config.max_question_len,
            };
            let corpus = generate_selfplay_corpus(&questioner, &scenes, &OracleConfig::new(noise_rate)?, &policy, seed)?;
            write_dialogues(&out, &corpus)?;
        }
        Command::Mix { human, generated, pct_human, length, seed, out, manifest } => {
            let spec = MixSpec { pct_human, length_mode: length, seed };
            let (mixed, record) = mix_corpora(&read_dialogues(&human)?, &read_dialogues(&generated)?, &spec)?;
            write_dialogues(&out, &mixed)?;
            let manifest = manifest.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".manifest.json");
                p.into()
            });
            let text = serde_json::to_string_pretty(&record)?;
            std::fs::write(&manifest, text + "\n").map_err(|e| selfmix::Error::io(&manifest, e))?;
        }
        Command::Stats { corpus, min_count, header } => {
            let row = corpus_stats(&read_dialogues(&corpus)?, min_count)?;
            if header {
                println!("{}", StatsRow::CSV_HEADER);
            }
            println!("{}", row.csv_line());
        }
        Command::Evaluate { model, scenes, training, turns, noise_rate, seed, header, games } => {
            let ck = Checkpoint::load(&model)?;
            let scenes = read_scenes(&scenes)?;
            let training = read_dialogues(&training)?;
            let questioner = Questioner {
                params: &ck.params,
                vocab: &ck.vocab,
                decode: ck.config.decode,
                max_question_len: ck.config.max_question_len,
            };
            let (row, played) = evaluate(
                &questioner,
                &scenes,
                &OracleConfig::new(noise_rate)?,
                &metrics::training_questions(&training),
                turns,
                infer_composition(&training),
                seed,
            )?;
            if let Some(path) = games {
                let dialogues: Vec<_> = played.into_iter().map(|g| g.dialogue).collect();
                write_dialogues(&path, &dialogues)?;
            }
            if header {
                println!("{}", ReportRow::CSV_HEADER);
            }
            println!("{}", row.csv_line());
        }
        Command::Report { csv, out } => {
            let rows = read_report(&csv)?;
            let table: Vec<(ReportRow, bool)> = rows.into_iter().map(|r| (r.clone(), r.pct_human == 0)).collect();
            let md = metrics::markdown_table(&table);
            match out {
                Some(path) => std::fs::write(&path, md).map_err(|e| selfmix::Error::io(&path, e))?,
                None => print!("{md}"),
            }
        }
        Command::Run { cfg } => {
            let cfg = cfg.load()?;
            let result = run_experiment(&cfg, &mut |msg| eprintln!("{msg}"))
                .with_context(|| format!("experiment in {}", cfg.output_dir.display()))?;
            println!("{}", ReportRow::CSV_HEADER);
            for (_, row) in &result.report {
                println!("{}", row.csv_line());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| {
        e.downcast_ref::<selfmix::Error>().is_some_and(selfmix::Error::is_validation)
            || e.downcast_ref::<serde_json::Error>().is_some()
    });
    if validation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
