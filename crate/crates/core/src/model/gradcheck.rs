//! Finite-difference verification of the analytic gradients.

use rand::Rng;

use super::network::{batch_gradient, batch_loss, Example, Phase};
use super::params::{init_params, ModelConfig};
use crate::dialogue::{Dialogue, Source, Turn};
use crate::error::Result;
use crate::lang::Vocabulary;
use crate::oracle::Answer;
use crate::rng::stream_rng;
use crate::scene::{generate_scene_set, SceneConfig};

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Tiny model (E=4, H=6, |V|=20) on a random batch of dialogues mixing both
/// sources; compares every analytic gradient entry of the joint loss with a
/// central difference. Nothing outside this function is touched.
pub fn gradient_check(seed: u64) -> Result<GradCheckReport> {
    let learnable: Vec<(String, u64)> = (0..20 - Vocabulary::N_SPECIAL).map(|i| (format!("w{i}"), 3)).collect();
    let vocab = Vocabulary::from_counts(learnable, 3)?;
    let cfg = ModelConfig { embed_dim: 4, hidden_dim: 6, ..Default::default() };
    let params = init_params(&cfg, &vocab, seed)?;
    let scenes = generate_scene_set(4, seed, &SceneConfig { min_objects: 3, max_objects: 6, grid_size: 5 })?;

    let mut rng = stream_rng(seed, "gradcheck", 0);
    let dialogues: Vec<Dialogue> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let turns = (0..rng.random_range(1..=3))
                .map(|_| {
                    let len = rng.random_range(1..=4);
                    let words: Vec<String> = (0..len)
                        .map(|_| vocab.word(rng.random_range(Vocabulary::N_SPECIAL..vocab.len())).to_string())
                        .collect();
                    Turn { q: words.join(" "), a: Answer::from_bool(rng.random()) }
                })
                .collect();
            Dialogue {
                game_id: s.scene_id,
                scene_id: s.scene_id,
                source: if i % 2 == 0 { Source::Human } else { Source::Generated },
                turns,
                guess: 0,
                success: false,
            }
        })
        .collect();
    let examples: Vec<Example> = dialogues.iter().zip(&scenes).map(|(d, s)| Example::new(d, s, &vocab)).collect();
    let batch: Vec<&Example> = examples.iter().collect();

    let analytic: Vec<f64> = batch_gradient(&params, &batch, Phase::Joint, false).1.values().collect();
    let mut probe = params.clone();
    let mut max_rel_error: f64 = 0.0;
    let n = params.num_params();
    for k in 0..n {
        let original = *probe.scalar_mut(k);
        *probe.scalar_mut(k) = original + FD_STEP;
        let plus = batch_loss(&probe, &batch, Phase::Joint, false).total;
        *probe.scalar_mut(k) = original - FD_STEP;
        let minus = batch_loss(&probe, &batch, Phase::Joint, false).total;
        *probe.scalar_mut(k) = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        max_rel_error = max_rel_error.max(rel);
    }
    Ok(GradCheckReport { max_rel_error, checked: n })
}
