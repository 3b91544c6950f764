//! Games between the trained questioner and the oracle.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, Source, Turn};
use crate::error::{Error, Result};
use crate::lang::{detokenize, Vocabulary};
use crate::model::{decode_question, encode_turn, guess, initial_state, DecodeMode, ModelParams};
use crate::oracle::{self, OracleConfig};
use crate::rng::stream_rng;
use crate::scene::Scene;

/// Turn budget used at evaluation time.
pub const EVAL_TURNS: usize = 5;

/// Everything needed to generate questions with a trained model.
#[derive(Debug, Clone, Copy)]
pub struct Questioner<'a> {
    pub params: &'a ModelParams,
    pub vocab: &'a Vocabulary,
    pub decode: DecodeMode,
    pub max_question_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayedGame {
    pub scene_id: u64,
    pub dialogue: Dialogue,
    pub guess: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LengthPolicy {
    Fixed(usize),
    /// Turn count per game id, taken from the human corpus.
    MatchHuman(BTreeMap<u64, usize>),
}

impl LengthPolicy {
    pub fn match_human(human: &[Dialogue]) -> Self {
        LengthPolicy::MatchHuman(human.iter().map(|d| (d.game_id, d.turns.len())).collect())
    }

    fn turns_for(&self, game_id: u64) -> Option<usize> {
        match self {
            LengthPolicy::Fixed(k) => Some(*k),
            LengthPolicy::MatchHuman(map) => map.get(&game_id).copied(),
        }
    }
}

/// Plays `turns` question/answer rounds from the scene-initialized state and
/// then guesses. Questions are recorded as generated, repetitions and
/// ungrammatical output included.
pub fn play_game<R: Rng + ?Sized>(
    questioner: &Questioner,
    scene: &Scene,
    oracle_cfg: &OracleConfig,
    turns: usize,
    rng: &mut R,
) -> PlayedGame {
    let params = questioner.params;
    let mut state = initial_state(params, scene);
    let mut dialogue_turns = Vec::with_capacity(turns);
    for _ in 0..turns {
        let ids = decode_question(params, &state, questioner.decode, questioner.max_question_len, rng);
        let words: Vec<&str> = ids.iter().map(|&id| questioner.vocab.word(id)).collect();
        let answer = oracle::answer(scene, &words, oracle_cfg, rng);
        state = encode_turn(params, &state, &ids, answer);
        dialogue_turns.push(Turn { q: detokenize(&words), a: answer });
    }
    let guess = guess(params, &state, scene);
    let success = guess == scene.target_index;
    PlayedGame {
        scene_id: scene.scene_id,
        dialogue: Dialogue {
            game_id: scene.scene_id,
            scene_id: scene.scene_id,
            source: Source::Generated,
            turns: dialogue_turns,
            guess,
            success,
        },
        guess,
        success,
    }
}

/// Plays one game per scene, in parallel with one rng stream per scene.
pub fn play_games(
    questioner: &Questioner,
    scenes: &[Scene],
    oracle_cfg: &OracleConfig,
    policy: &LengthPolicy,
    seed: u64,
) -> Result<Vec<PlayedGame>> {
    oracle_cfg.validate()?;
    if let LengthPolicy::Fixed(0) = policy {
        return Err(Error::Config("fixed turn budget must be at least 1".into()));
    }
    let missing: Vec<u64> = scenes.iter().map(|s| s.scene_id).filter(|&id| policy.turns_for(id).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Alignment(missing));
    }
    Ok(scenes
        .par_iter()
        .map(|scene| {
            let turns = policy.turns_for(scene.scene_id).expect("checked above");
            let mut rng = stream_rng(seed, "selfplay", scene.scene_id);
            play_game(questioner, scene, oracle_cfg, turns, &mut rng)
        })
        .collect())
}

/// One generated dialogue per scene; no success filter is applied.
pub fn generate_selfplay_corpus(
    questioner: &Questioner,
    scenes: &[Scene],
    oracle_cfg: &OracleConfig,
    policy: &LengthPolicy,
    seed: u64,
) -> Result<Vec<Dialogue>> {
    Ok(play_games(questioner, scenes, oracle_cfg, policy, seed)?.into_iter().map(|g| g.dialogue).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use crate::scene::{generate_scene_set, SceneConfig};

    fn vocab() -> Vocabulary {
        let words = ["is", "it", "a", "red", "blue", "car", "on", "the", "left", "?"];
        Vocabulary::from_counts(words.iter().map(|w| (w.to_string(), 5)).collect(), 3).unwrap()
    }

    #[test]
    fn budgets_are_honored() {
        let vocab = vocab();
        let params = init_params(&ModelConfig::default(), &vocab, 1).unwrap();
        let q = Questioner { params: &params, vocab: &vocab, decode: DecodeMode::Sample, max_question_len: 6 };
        let scenes = generate_scene_set(100, 3, &SceneConfig::default()).unwrap();
        let corpus = generate_selfplay_corpus(&q, &scenes, &OracleConfig::TRUTHFUL, &LengthPolicy::Fixed(5), 9).unwrap();
        assert_eq!(corpus.len(), 100);
        assert!(corpus.iter().all(|d| d.turns.len() == 5 && d.source == Source::Generated));

        let mut map: BTreeMap<u64, usize> = scenes.iter().map(|s| (s.scene_id, 1 + (s.scene_id % 4) as usize)).collect();
        map.insert(17, 3);
        let corpus = generate_selfplay_corpus(&q, &scenes, &OracleConfig::TRUTHFUL, &LengthPolicy::MatchHuman(map.clone()), 9)
            .unwrap();
        assert_eq!(corpus[17].game_id, 17);
        assert_eq!(corpus[17].turns.len(), 3);
        assert!(corpus.iter().all(|d| d.turns.len() == map[&d.game_id]));

        map.remove(&42);
        let err = generate_selfplay_corpus(&q, &scenes, &OracleConfig::TRUTHFUL, &LengthPolicy::MatchHuman(map), 9);
        assert!(matches!(err, Err(Error::Alignment(ids)) if ids == vec![42]));
    }

    #[test]
    fn deterministic_and_consistent() {
        let vocab = vocab();
        let params = init_params(&ModelConfig::default(), &vocab, 2).unwrap();
        let scenes = generate_scene_set(40, 5, &SceneConfig::default()).unwrap();
        for decode in [DecodeMode::Greedy, DecodeMode::Sample] {
            let q = Questioner { params: &params, vocab: &vocab, decode, max_question_len: 8 };
            let policy = LengthPolicy::Fixed(4);
            let a = play_games(&q, &scenes, &OracleConfig::new(0.1).unwrap(), &policy, 11).unwrap();
            let b = play_games(&q, &scenes, &OracleConfig::new(0.1).unwrap(), &policy, 11).unwrap();
            assert_eq!(a, b);
            for (g, s) in a.iter().zip(&scenes) {
                assert_eq!(g.success, g.guess == s.target_index);
                assert_eq!(g.dialogue.success, g.success);
            }
        }
    }

    #[test]
    fn untrained_model_plays_at_chance() {
        let vocab = vocab();
        let scenes = generate_scene_set(1000, 8, &SceneConfig::default()).unwrap();
        let chance: f64 = scenes.iter().map(|s| 1.0 / s.objects.len() as f64).sum::<f64>() / scenes.len() as f64;
        // average over several random initializations so that the guesser's
        // fixed preferences wash out
        let mut wins = 0usize;
        let inits = 5;
        for init in 0..inits {
            let params = init_params(&ModelConfig::default(), &vocab, 100 + init).unwrap();
            let q = Questioner { params: &params, vocab: &vocab, decode: DecodeMode::Greedy, max_question_len: 6 };
            let games = play_games(&q, &scenes, &OracleConfig::TRUTHFUL, &LengthPolicy::Fixed(5), init).unwrap();
            wins += games.iter().filter(|g| g.success).count();
        }
        let rate = wins as f64 / (inits as usize * scenes.len()) as f64;
        let sd = (chance * (1.0 - chance) / (inits as usize * scenes.len()) as f64).sqrt();
        assert!((rate - chance).abs() < 5.0 * sd + 0.02, "rate {rate} chance {chance}");
    }
}
