//! Scripted questioner producing the human-proxy corpus: it asks the most
//! balanced unasked question, never repeats itself and stops once the
//! target is pinned down.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, Source, Turn};
use crate::error::{Error, Result};
use crate::lang::{all_semantics, detokenize, realize, templates_for, QuestionSemantics};
use crate::oracle::{self, eval_predicate, Answer, OracleConfig};
use crate::rng::stream_rng;
use crate::scene::Scene;

/// Games with this many turns or more never enter a training corpus.
pub const HUMAN_TURN_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeacherState {
    pub candidate_set: Vec<usize>,
    pub asked: BTreeSet<QuestionSemantics>,
}

impl TeacherState {
    pub fn new(scene: &Scene) -> Self {
        TeacherState { candidate_set: (0..scene.objects.len()).collect(), asked: BTreeSet::new() }
    }

    /// Records the question and keeps only candidates consistent with the answer.
    pub fn observe(&mut self, scene: &Scene, semantics: QuestionSemantics, answer: Answer) {
        self.asked.insert(semantics);
        self.candidate_set
            .retain(|&i| eval_predicate(&scene.objects[i], semantics) == answer.is_yes());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub oracle: OracleConfig,
    pub max_turns: usize,
    /// Exponent of the rank weights used to pick a paraphrase; 0 is uniform.
    pub template_zipf: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig { oracle: OracleConfig::TRUTHFUL, max_turns: 8, template_zipf: 1.6 }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        self.oracle.validate()?;
        if self.max_turns == 0 {
            return Err(Error::Config("teacher max_turns must be at least 1".into()));
        }
        if !(self.template_zipf >= 0.0 && self.template_zipf.is_finite()) {
            return Err(Error::Config("template_zipf must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExhaustedQuestions;

/// Picks the unasked question whose yes/no split of the candidates is most
/// balanced; questions that do not split the candidates are never asked.
pub fn next_teacher_question<R: Rng + ?Sized>(
    scene: &Scene,
    state: &TeacherState,
    template_zipf: f64,
    rng: &mut R,
) -> std::result::Result<(QuestionSemantics, usize), ExhaustedQuestions> {
    let n = state.candidate_set.len();
    let mut best: Vec<QuestionSemantics> = Vec::new();
    let mut best_gap = usize::MAX;
    for sem in all_semantics() {
        if state.asked.contains(&sem) {
            continue;
        }
        let yes = state
            .candidate_set
            .iter()
            .filter(|&&i| eval_predicate(&scene.objects[i], sem))
            .count();
        if yes == 0 || yes == n {
            continue;
        }
        let gap = yes.abs_diff(n - yes);
        if gap < best_gap {
            best_gap = gap;
            best.clear();
        }
        if gap == best_gap {
            best.push(sem);
        }
    }
    if best.is_empty() {
        return Err(ExhaustedQuestions);
    }
    let semantics = best[rng.random_range(0..best.len())];
    Ok((semantics, sample_template(semantics, template_zipf, rng)))
}

fn sample_template<R: Rng + ?Sized>(semantics: QuestionSemantics, zipf: f64, rng: &mut R) -> usize {
    let candidates: Vec<_> = templates_for(semantics.kind()).collect();
    let weights: Vec<f64> = candidates.iter().map(|t| ((t.rank + 1) as f64).powf(-zipf)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (t, w) in candidates.iter().zip(&weights) {
        if u < *w {
            return t.template_id;
        }
        u -= w;
    }
    candidates.last().expect("every kind has templates").template_id
}

/// Plays one scene with the teacher. The guess is the surviving candidate,
/// or a uniform draw among survivors (all objects if none survive).
pub fn play_teacher_game<R: Rng + ?Sized>(scene: &Scene, cfg: &TeacherConfig, rng: &mut R) -> Dialogue {
    let mut state = TeacherState::new(scene);
    let mut turns = Vec::new();
    while state.candidate_set.len() > 1 && turns.len() < cfg.max_turns {
        let Ok((semantics, template_id)) = next_teacher_question(scene, &state, cfg.template_zipf, rng) else {
            break;
        };
        let tokens = realize(semantics, template_id).expect("template kind matches semantics");
        let answer = oracle::answer(scene, &tokens, &cfg.oracle, rng);
        state.observe(scene, semantics, answer);
        turns.push(Turn { q: detokenize(&tokens), a: answer });
    }
    let pool: Vec<usize> = if state.candidate_set.is_empty() {
        (0..scene.objects.len()).collect()
    } else {
        state.candidate_set.clone()
    };
    let guess = pool[rng.random_range(0..pool.len())];
    Dialogue {
        game_id: scene.scene_id,
        scene_id: scene.scene_id,
        source: Source::Human,
        success: guess == scene.target_index,
        turns,
        guess,
    }
}

/// The filter applied to human data: successful games under 20 turns.
pub fn passes_human_filter(dialogue: &Dialogue) -> bool {
    dialogue.success && !dialogue.turns.is_empty() && dialogue.turns.len() < HUMAN_TURN_LIMIT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CollectReport {
    pub played: usize,
    pub kept: usize,
    pub dropped_failed: usize,
    pub dropped_long: usize,
}

pub fn collect_teacher_corpus(
    scenes: &[Scene],
    cfg: &TeacherConfig,
    seed: u64,
) -> Result<(Vec<Dialogue>, CollectReport)> {
    cfg.validate()?;
    let played: Vec<Dialogue> = scenes
        .par_iter()
        .map(|scene| play_teacher_game(scene, cfg, &mut stream_rng(seed, "teacher", scene.scene_id)))
        .collect();
    let mut report = CollectReport { played: played.len(), ..Default::default() };
    let mut kept = Vec::with_capacity(played.len());
    for d in played {
        if passes_human_filter(&d) {
            kept.push(d);
        } else if d.success {
            report.dropped_long += 1;
        } else {
            report.dropped_failed += 1;
        }
    }
    report.kept = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Category, Color, SceneObject, Size};

    fn object(id: usize, category: Category, color: Color, size: Size, x: u8, y: u8) -> SceneObject {
        SceneObject { id, category, color, size, cell_x: x, cell_y: y }
    }

    #[test]
    fn balanced_split_prefers_color() {
        // two red, two blue; categories all equal; positions unsplittable by region
        let scene = Scene {
            scene_id: 0,
            objects: vec![
                object(0, Category::Cat, Color::Red, Size::Small, 0, 0),
                object(1, Category::Cat, Color::Red, Size::Small, 1, 0),
                object(2, Category::Cat, Color::Blue, Size::Small, 0, 1),
                object(3, Category::Cat, Color::Blue, Size::Small, 1, 1),
            ],
            target_index: 0,
        };
        let state = TeacherState::new(&scene);
        for seed in 0..30 {
            let (sem, _) = next_teacher_question(&scene, &state, 1.0, &mut stream_rng(seed, "t", 0)).unwrap();
            assert!(
                sem == QuestionSemantics::ColorIs(Color::Red) || sem == QuestionSemantics::ColorIs(Color::Blue),
                "picked {sem}"
            );
        }
    }

    #[test]
    fn zero_information_category_is_never_asked() {
        let scene = Scene {
            scene_id: 0,
            objects: vec![
                object(0, Category::Dog, Color::Red, Size::Small, 0, 0),
                object(1, Category::Dog, Color::Blue, Size::Large, 4, 0),
                object(2, Category::Dog, Color::Green, Size::Medium, 0, 4),
            ],
            target_index: 2,
        };
        for seed in 0..30 {
            let d = play_teacher_game(&scene, &TeacherConfig::default(), &mut stream_rng(seed, "t", 0));
            for t in &d.turns {
                let sem = crate::lang::parse_question(&crate::lang::tokenize(&t.q)).unwrap();
                assert!(!matches!(sem, QuestionSemantics::CategoryIs(_)), "asked {sem}");
            }
            assert!(d.success);
        }
    }

    #[test]
    fn exhausted_when_nothing_splits() {
        // identical attributes, positions in the same region class
        let scene = Scene {
            scene_id: 0,
            objects: vec![
                object(0, Category::Cup, Color::Red, Size::Small, 0, 0),
                object(1, Category::Cup, Color::Red, Size::Small, 1, 1),
                object(2, Category::Cup, Color::Red, Size::Small, 0, 1),
            ],
            target_index: 1,
        };
        let state = TeacherState::new(&scene);
        assert_eq!(
            next_teacher_question(&scene, &state, 1.0, &mut stream_rng(0, "t", 0)),
            Err(ExhaustedQuestions)
        );
        let d = play_teacher_game(&scene, &TeacherConfig::default(), &mut stream_rng(0, "t", 0));
        assert!(d.turns.is_empty());
    }

    #[test]
    fn eight_objects_three_binary_attributes_need_three_questions() {
        let mut objects = Vec::new();
        let cats = [Category::Cat, Category::Dog];
        let colors = [Color::Red, Color::Blue];
        let sizes = [Size::Small, Size::Large];
        for (i, &c) in cats.iter().enumerate() {
            for (j, &col) in colors.iter().enumerate() {
                for (k, &s) in sizes.iter().enumerate() {
                    objects.push(object(objects.len(), c, col, s, (i + 2 * k) as u8 % 2, j as u8 % 2));
                }
            }
        }
        for target in 0..8 {
            let scene = Scene { scene_id: target as u64, objects: objects.clone(), target_index: target };
            for seed in 0..5 {
                let d = play_teacher_game(&scene, &TeacherConfig::default(), &mut stream_rng(seed, "t", target as u64));
                assert!(d.success);
                assert!(d.turns.len() <= 3, "took {} turns", d.turns.len());
            }
        }
    }

    #[test]
    fn filter_drops_long_and_failed_games() {
        let long = Dialogue {
            game_id: 0,
            scene_id: 0,
            source: Source::Human,
            turns: vec![Turn { q: "is it red ?".into(), a: Answer::No }; 21],
            guess: 0,
            success: true,
        };
        assert!(!passes_human_filter(&long));
        let mut ok = long.clone();
        ok.turns.truncate(19);
        assert!(passes_human_filter(&ok));
        ok.success = false;
        assert!(!passes_human_filter(&ok));
    }

    #[test]
    fn teacher_games_never_reach_the_turn_limit() {
        // every asked question strictly shrinks the candidates, so even a
        // generous budget stays below the filter's 20-turn limit
        let cfg = TeacherConfig { max_turns: 25, ..Default::default() };
        let scenes = crate::scene::generate_scene_set(
            200,
            4,
            &crate::scene::SceneConfig { min_objects: 20, max_objects: 20, grid_size: 5 },
        )
        .unwrap();
        let (kept, report) = collect_teacher_corpus(&scenes, &cfg, 1).unwrap();
        assert_eq!(report.dropped_long, 0);
        assert!(kept.iter().all(|d| d.turns.len() < HUMAN_TURN_LIMIT));
    }
}
