//! Rule-based answerer with optional independent answer flips.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{parse_question, QuestionSemantics, Region};
use crate::scene::{Scene, SceneObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }

    pub fn flipped(self) -> Self {
        Answer::from_bool(!self.is_yes())
    }

    pub fn word(self) -> &'static str {
        match self {
            Answer::Yes => "yes",
            Answer::No => "no",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Probability of flipping a truthful answer.
    pub noise_rate: f64,
}

impl OracleConfig {
    pub const TRUTHFUL: OracleConfig = OracleConfig { noise_rate: 0.0 };

    pub fn new(noise_rate: f64) -> Result<Self> {
        let cfg = OracleConfig { noise_rate };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!("oracle noise {} is not a probability", self.noise_rate)));
        }
        Ok(())
    }
}

/// Ground truth on the 5x5 board: halves are two columns/rows wide, the
/// center is the single middle cell.
pub fn eval_predicate(object: &SceneObject, semantics: QuestionSemantics) -> bool {
    match semantics {
        QuestionSemantics::CategoryIs(c) => object.category == c,
        QuestionSemantics::ColorIs(c) => object.color == c,
        QuestionSemantics::SizeIs(s) => object.size == s,
        QuestionSemantics::RegionIs(region) => match region {
            Region::Left => object.cell_x <= 1,
            Region::Right => object.cell_x >= 3,
            Region::Top => object.cell_y <= 1,
            Region::Bottom => object.cell_y >= 3,
            Region::Center => object.cell_x == 2 && object.cell_y == 2,
        },
    }
}

/// Answers about the scene's target. Questions outside the grammar get "no"
/// and are never flipped.
pub fn answer<S: AsRef<str>, R: Rng + ?Sized>(
    scene: &Scene,
    question_tokens: &[S],
    cfg: &OracleConfig,
    rng: &mut R,
) -> Answer {
    match parse_question(question_tokens) {
        Ok(semantics) => {
            let truthful = Answer::from_bool(eval_predicate(scene.target(), semantics));
            if rng.random::<f64>() < cfg.noise_rate {
                truthful.flipped()
            } else {
                truthful
            }
        }
        Err(_) => Answer::No,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::scene::{Category, Color, Size};

    fn obj(color: Color, x: u8, y: u8) -> SceneObject {
        SceneObject { id: 0, category: Category::Car, color, size: Size::Small, cell_x: x, cell_y: y }
    }

    fn scene_with_target(target: SceneObject) -> Scene {
        let mut objects = vec![target, obj(Color::Blue, 4, 4), obj(Color::Green, 0, 4)];
        for (i, o) in objects.iter_mut().enumerate() {
            o.id = i;
        }
        Scene { scene_id: 0, objects, target_index: 0 }
    }

    fn q(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn predicate_examples() {
        assert!(eval_predicate(&obj(Color::Red, 0, 0), QuestionSemantics::ColorIs(Color::Red)));
        assert!(!eval_predicate(&obj(Color::Red, 0, 0), QuestionSemantics::RegionIs(Region::Right)));
        assert!(eval_predicate(&obj(Color::Red, 2, 2), QuestionSemantics::RegionIs(Region::Center)));
        assert!(!eval_predicate(&obj(Color::Red, 2, 1), QuestionSemantics::RegionIs(Region::Center)));
        assert!(eval_predicate(&obj(Color::Red, 3, 3), QuestionSemantics::RegionIs(Region::Bottom)));
        assert!(!eval_predicate(&obj(Color::Red, 2, 2), QuestionSemantics::RegionIs(Region::Left)));
    }

    #[test]
    fn truthful_and_flipped() {
        let scene = scene_with_target(obj(Color::Red, 1, 1));
        let mut rng = stream_rng(0, "t", 0);
        assert_eq!(answer(&scene, &q("is it red ?"), &OracleConfig::TRUTHFUL, &mut rng), Answer::Yes);
        assert_eq!(answer(&scene, &q("is it blue ?"), &OracleConfig::TRUTHFUL, &mut rng), Answer::No);
        let always = OracleConfig::new(1.0).unwrap();
        for _ in 0..100 {
            assert_eq!(answer(&scene, &q("is it red ?"), &always, &mut rng), Answer::No);
            assert_eq!(answer(&scene, &q("is it blue ?"), &always, &mut rng), Answer::Yes);
        }
    }

    #[test]
    fn unparseable_is_always_no() {
        let scene = scene_with_target(obj(Color::Red, 1, 1));
        let mut rng = stream_rng(0, "t", 0);
        for eps in [0.0, 0.5, 1.0] {
            let cfg = OracleConfig::new(eps).unwrap();
            for _ in 0..50 {
                assert_eq!(answer(&scene, &q("red red red ?"), &cfg, &mut rng), Answer::No);
            }
        }
    }

    #[test]
    fn flip_rate_concentrates() {
        let scene = scene_with_target(obj(Color::Red, 1, 1));
        let cfg = OracleConfig::new(0.1).unwrap();
        let mut rng = stream_rng(5, "flip", 0);
        let n = 100_000;
        let flips = (0..n)
            .filter(|_| answer(&scene, &q("is it red ?"), &cfg, &mut rng) == Answer::No)
            .count();
        let rate = flips as f64 / n as f64;
        assert!((rate - 0.1).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn rejects_bad_noise() {
        assert!(OracleConfig::new(1.5).is_err());
        assert!(OracleConfig::new(-0.1).is_err());
    }
}
