//! Flat `key = value` experiment configuration with dotted section keys.
//!
//! Every key has a default, unknown keys are rejected and `#` starts a
//! comment. [`ExperimentConfig::to_text`] writes the canonical form, which
//! parses back to the same config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::LengthMode;
use crate::error::{Error, Result};
use crate::model::{DecodeMode, ModelConfig};
use crate::oracle::OracleConfig;
use crate::scene::SceneConfig;
use crate::teacher::TeacherConfig;

/// Which parameters play the self-play games.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointChoice {
    Last,
    BestVal,
}

impl CheckpointChoice {
    pub fn name(self) -> &'static str {
        match self {
            CheckpointChoice::Last => "last",
            CheckpointChoice::BestVal => "best_val",
        }
    }
}

impl FromStr for CheckpointChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(CheckpointChoice::Last),
            "best_val" => Ok(CheckpointChoice::BestVal),
            other => Err(Error::Config(format!("unknown checkpoint choice `{other}`"))),
        }
    }
}

/// One training-set composition: the human share and, unless the set is
/// purely human, how generated dialogue lengths were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MixEntry {
    pub pct_human: u8,
    pub length_mode: Option<LengthMode>,
}

impl MixEntry {
    pub fn tag(&self) -> String {
        match self.length_mode {
            None => format!("{}-{}", self.pct_human, 100 - self.pct_human),
            Some(m) => format!("{}-{}-{}", self.pct_human, 100 - self.pct_human, m.name()),
        }
    }

    pub fn is_ablation(&self) -> bool {
        self.pct_human == 0
    }
}

impl std::fmt::Display for MixEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.pct_human, 100 - self.pct_human)?;
        match self.length_mode {
            Some(m) => write!(f, "-{}", m.name()),
            None => Ok(()),
        }
    }
}

impl FromStr for MixEntry {
    type Err = Error;

    /// `75/25-fixed`, `50/50-variable`, `100/0`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad mix spec `{s}`; expected e.g. `75/25-fixed` or `100/0`"));
        let (ratio, mode) = match s.split_once('-') {
            Some((r, m)) => (r, Some(m.parse::<LengthMode>()?)),
            None => (s, None),
        };
        let (h, g) = ratio.split_once('/').ok_or_else(bad)?;
        let h: u8 = h.trim().parse().map_err(|_| bad())?;
        let g: u8 = g.trim().parse().map_err(|_| bad())?;
        if h as u16 + g as u16 != 100 {
            return Err(Error::Config(format!("mix spec `{s}` does not sum to 100")));
        }
        match (h, mode) {
            (100, Some(_)) => Err(Error::Config(format!("mix spec `{s}`: a purely human set has no length mode"))),
            (h, None) if h < 100 => Err(Error::Config(format!("mix spec `{s}` needs a length mode"))),
            _ => Ok(MixEntry { pct_human: h, length_mode: mode }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub n_train_scenes: usize,
    pub n_validation_scenes: usize,
    pub n_test_scenes: usize,
    pub teacher: TeacherConfig,
    pub min_count: u64,
    pub model: ModelConfig,
    pub selfplay_oracle: OracleConfig,
    pub fixed_turns: usize,
    pub selfplay_checkpoint: CheckpointChoice,
    pub eval_turns: usize,
    pub eval_oracle: OracleConfig,
    pub mixes: Vec<MixEntry>,
    pub seed: u64,
    pub n_seeds: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scene: SceneConfig::default(),
            n_train_scenes: 2000,
            n_validation_scenes: 200,
            n_test_scenes: 500,
            teacher: TeacherConfig::default(),
            min_count: 3,
            model: ModelConfig::default(),
            selfplay_oracle: OracleConfig { noise_rate: 0.1 },
            fixed_turns: 5,
            selfplay_checkpoint: CheckpointChoice::Last,
            eval_turns: 5,
            eval_oracle: OracleConfig { noise_rate: 0.1 },
            mixes: ["100/0", "75/25-fixed", "75/25-variable", "50/50-fixed", "50/50-variable"]
                .iter()
                .map(|s| s.parse().expect("valid default"))
                .collect(),
            seed: 1,
            n_seeds: 3,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`; expected true or false"))),
    }
}

fn parse_decode(key: &str, value: &str) -> Result<DecodeMode> {
    match value {
        "greedy" => Ok(DecodeMode::Greedy),
        "sample" => Ok(DecodeMode::Sample),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`; expected greedy or sample"))),
    }
}

pub const KEYS: &[&str] = &[
    "scene.min_objects",
    "scene.max_objects",
    "scene.grid_size",
    "data.n_train_scenes",
    "data.n_validation_scenes",
    "data.n_test_scenes",
    "teacher.noise_rate",
    "teacher.max_turns",
    "teacher.template_zipf",
    "vocab.min_count",
    "model.embed_dim",
    "model.hidden_dim",
    "model.learning_rate",
    "model.grad_clip",
    "model.modulo_n",
    "model.epochs",
    "model.batch_size",
    "model.decode",
    "model.max_question_len",
    "model.guesser_human_only",
    "selfplay.noise_rate",
    "selfplay.fixed_turns",
    "selfplay.checkpoint",
    "eval.turns",
    "eval.noise_rate",
    "mix.specs",
    "experiment.seed",
    "experiment.n_seeds",
    "experiment.output_dir",
];

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "scene.min_objects" => self.scene.min_objects = parse(key, v)?,
            "scene.max_objects" => self.scene.max_objects = parse(key, v)?,
            "scene.grid_size" => self.scene.grid_size = parse(key, v)?,
            "data.n_train_scenes" => self.n_train_scenes = parse(key, v)?,
            "data.n_validation_scenes" => self.n_validation_scenes = parse(key, v)?,
            "data.n_test_scenes" => self.n_test_scenes = parse(key, v)?,
            "teacher.noise_rate" => self.teacher.oracle.noise_rate = parse(key, v)?,
            "teacher.max_turns" => self.teacher.max_turns = parse(key, v)?,
            "teacher.template_zipf" => self.teacher.template_zipf = parse(key, v)?,
            "vocab.min_count" => self.min_count = parse(key, v)?,
            "model.embed_dim" => self.model.embed_dim = parse(key, v)?,
            "model.hidden_dim" => self.model.hidden_dim = parse(key, v)?,
            "model.learning_rate" => self.model.learning_rate = parse(key, v)?,
            "model.grad_clip" => self.model.grad_clip = parse(key, v)?,
            "model.modulo_n" => self.model.modulo_n = parse(key, v)?,
            "model.epochs" => self.model.epochs = parse(key, v)?,
            "model.batch_size" => self.model.batch_size = parse(key, v)?,
            "model.decode" => self.model.decode = parse_decode(key, v)?,
            "model.max_question_len" => self.model.max_question_len = parse(key, v)?,
            "model.guesser_human_only" => self.model.guesser_human_only = parse_bool(key, v)?,
            "selfplay.noise_rate" => self.selfplay_oracle.noise_rate = parse(key, v)?,
            "selfplay.fixed_turns" => self.fixed_turns = parse(key, v)?,
            "selfplay.checkpoint" => self.selfplay_checkpoint = v.parse()?,
            "eval.turns" => self.eval_turns = parse(key, v)?,
            "eval.noise_rate" => self.eval_oracle.noise_rate = parse(key, v)?,
            "mix.specs" => {
                self.mixes = v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
            }
            "experiment.seed" => self.seed = parse(key, v)?,
            "experiment.n_seeds" => self.n_seeds = parse(key, v)?,
            "experiment.output_dir" => self.output_dir = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse_text(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { path: origin.to_path_buf(), line: i + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(m) => err(m),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, path)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        Some(match key {
            "scene.min_objects" => self.scene.min_objects.to_string(),
            "scene.max_objects" => self.scene.max_objects.to_string(),
            "scene.grid_size" => self.scene.grid_size.to_string(),
            "data.n_train_scenes" => self.n_train_scenes.to_string(),
            "data.n_validation_scenes" => self.n_validation_scenes.to_string(),
            "data.n_test_scenes" => self.n_test_scenes.to_string(),
            "teacher.noise_rate" => self.teacher.oracle.noise_rate.to_string(),
            "teacher.max_turns" => self.teacher.max_turns.to_string(),
            "teacher.template_zipf" => self.teacher.template_zipf.to_string(),
            "vocab.min_count" => self.min_count.to_string(),
            "model.embed_dim" => m.embed_dim.to_string(),
            "model.hidden_dim" => m.hidden_dim.to_string(),
            "model.learning_rate" => m.learning_rate.to_string(),
            "model.grad_clip" => m.grad_clip.to_string(),
            "model.modulo_n" => m.modulo_n.to_string(),
            "model.epochs" => m.epochs.to_string(),
            "model.batch_size" => m.batch_size.to_string(),
            "model.decode" => match m.decode {
                DecodeMode::Greedy => "greedy".into(),
                DecodeMode::Sample => "sample".into(),
            },
            "model.max_question_len" => m.max_question_len.to_string(),
            "model.guesser_human_only" => m.guesser_human_only.to_string(),
            "selfplay.noise_rate" => self.selfplay_oracle.noise_rate.to_string(),
            "selfplay.fixed_turns" => self.fixed_turns.to_string(),
            "selfplay.checkpoint" => self.selfplay_checkpoint.name().into(),
            "eval.turns" => self.eval_turns.to_string(),
            "eval.noise_rate" => self.eval_oracle.noise_rate.to_string(),
            "mix.specs" => self.mixes.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
            "experiment.seed" => self.seed.to_string(),
            "experiment.n_seeds" => self.n_seeds.to_string(),
            "experiment.output_dir" => self.output_dir.display().to_string(),
            _ => return None,
        })
    }

    /// Canonical text form with every key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("known key")).expect("string write");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.teacher.validate()?;
        self.model.validate()?;
        self.selfplay_oracle.validate()?;
        self.eval_oracle.validate()?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_train_scenes == 0 || self.n_test_scenes == 0 {
            return fail("n_train_scenes and n_test_scenes must be at least 1");
        }
        if self.min_count == 0 {
            return fail("vocab.min_count must be at least 1");
        }
        if self.fixed_turns == 0 || self.eval_turns == 0 {
            return fail("turn budgets must be at least 1");
        }
        if self.n_seeds == 0 {
            return fail("experiment.n_seeds must be at least 1");
        }
        if self.mixes.is_empty() {
            return fail("mix.specs is empty");
        }
        let mut sorted = self.mixes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.mixes.len() {
            return fail("mix.specs lists a composition twice");
        }
        Ok(())
    }

    /// Scene id ranges: train, then validation, then test.
    pub fn validation_start(&self) -> u64 {
        self.n_train_scenes as u64
    }

    pub fn test_start(&self) -> u64 {
        (self.n_train_scenes + self.n_validation_scenes) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_text();
        assert_eq!(ExperimentConfig::parse_text(&text, Path::new("x")).unwrap(), cfg);
        let mut other = cfg.clone();
        other.set("model.learning_rate", "0.25").unwrap();
        other.set("mix.specs", "100/0, 0/100-fixed").unwrap();
        other.set("model.decode", "sample").unwrap();
        assert_eq!(ExperimentConfig::parse_text(&other.to_text(), Path::new("x")).unwrap(), other);
    }

    #[test]
    fn comments_defaults_and_errors() {
        let cfg = ExperimentConfig::parse_text("# c\n\nmodel.epochs = 4  # short\n", Path::new("c")).unwrap();
        assert_eq!(cfg.model.epochs, 4);
        assert_eq!(cfg.n_train_scenes, 2000);
        let err = ExperimentConfig::parse_text("model.epochs = 4\nmodel.bogus = 1\n", Path::new("c")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(ExperimentConfig::parse_text("model.epochs = x", Path::new("c")).is_err());
        assert!(ExperimentConfig::parse_text("model.epochs 4", Path::new("c")).is_err());
        assert!(ExperimentConfig::parse_text("model.epochs = 4\nmodel.epochs = 5", Path::new("c")).is_err());
    }

    #[test]
    fn mix_entries() {
        let e: MixEntry = "75/25-fixed".parse().unwrap();
        assert_eq!(e, MixEntry { pct_human: 75, length_mode: Some(LengthMode::Fixed) });
        assert_eq!(e.to_string(), "75/25-fixed");
        assert_eq!(e.tag(), "75-25-fixed");
        assert_eq!("100/0".parse::<MixEntry>().unwrap().length_mode, None);
        for bad in ["75/20-fixed", "50/50", "100/0-fixed", "x/y-fixed", "50/50-long"] {
            assert!(bad.parse::<MixEntry>().is_err(), "{bad}");
        }
        assert!("0/100-variable".parse::<MixEntry>().unwrap().is_ablation());
    }

    #[test]
    fn every_key_is_settable_and_listed() {
        let mut cfg = ExperimentConfig::default();
        for key in KEYS {
            let value = cfg.get(key).unwrap();
            cfg.set(key, &value).unwrap();
        }
        assert_eq!(cfg, ExperimentConfig::default());
        assert!(cfg.get("nope").is_none());
    }
}
