//! Played games as stored on disk: one JSON object per line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::lang::tokenize;
use crate::oracle::Answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub q: String,
    pub a: Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub game_id: u64,
    pub scene_id: u64,
    pub source: Source,
    pub turns: Vec<Turn>,
    pub guess: usize,
    pub success: bool,
}

impl Dialogue {
    pub fn question_tokens(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.turns.iter().map(|t| tokenize(&t.q))
    }
}

pub fn write_dialogues(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    jsonl::write(path, dialogues)
}

pub fn read_dialogues(path: &Path) -> Result<Vec<Dialogue>> {
    let dialogues: Vec<Dialogue> = jsonl::read(path)?;
    for (i, d) in dialogues.iter().enumerate() {
        if d.turns.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("game {} has no turns", d.game_id),
            });
        }
    }
    Ok(dialogues)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let d = Dialogue {
            game_id: 3,
            scene_id: 3,
            source: Source::Generated,
            turns: vec![Turn { q: "is it red ?".into(), a: Answer::Yes }],
            guess: 1,
            success: false,
        };
        let line = serde_json::to_string(&d).unwrap();
        assert_eq!(
            line,
            r#"{"game_id":3,"scene_id":3,"source":"generated","turns":[{"q":"is it red ?","a":"yes"}],"guess":1,"success":false}"#
        );
        let back: Dialogue = serde_json::from_str(&line).unwrap();
        assert_eq!(back, d);
    }
}
