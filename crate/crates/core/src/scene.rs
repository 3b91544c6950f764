//! Synthetic game worlds: a handful of attributed objects on a 5x5 grid and a
//! secret target.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::rng::stream_rng;

/// Largest grid supported by the region predicates.
pub const MAX_GRID: u8 = 5;
pub const MIN_OBJECTS: usize = 3;
pub const MAX_OBJECTS: usize = 20;
const MAX_PLACEMENT_ATTEMPTS: usize = 100;

macro_rules! inventory {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn word(self) -> &'static str {
                match self {
                    $($name::$variant => $word),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_word(word: &str) -> Option<Self> {
                match word {
                    $($word => Some($name::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

inventory!(
    /// The 12 object categories.
    Category {
        Person => "person",
        Dog => "dog",
        Cat => "cat",
        Horse => "horse",
        Bird => "bird",
        Car => "car",
        Bus => "bus",
        Bicycle => "bicycle",
        Chair => "chair",
        Cup => "cup",
        Bottle => "bottle",
        Book => "book",
    }
);

inventory!(
    Color {
        Red => "red",
        Blue => "blue",
        Green => "green",
        Yellow => "yellow",
        White => "white",
        Black => "black",
        Brown => "brown",
        Orange => "orange",
    }
);

inventory!(
    Size {
        Small => "small",
        Medium => "medium",
        Large => "large",
    }
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: usize,
    pub category: Category,
    pub color: Color,
    pub size: Size,
    #[serde(rename = "x")]
    pub cell_x: u8,
    #[serde(rename = "y")]
    pub cell_y: u8,
}

impl SceneObject {
    fn key(&self) -> (Category, Color, Size, u8, u8) {
        (self.category, self.color, self.size, self.cell_x, self.cell_y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: u64,
    pub objects: Vec<SceneObject>,
    #[serde(rename = "target")]
    pub target_index: usize,
}

impl Scene {
    pub fn target(&self) -> &SceneObject {
        &self.objects[self.target_index]
    }

    /// Checks every scene invariant; used when scenes come from files.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.objects.len();
        if !(MIN_OBJECTS..=MAX_OBJECTS).contains(&n) {
            return Err(format!("scene {} has {n} objects", self.scene_id));
        }
        if self.target_index >= n {
            return Err(format!("scene {} target {} out of range", self.scene_id, self.target_index));
        }
        let mut seen = HashSet::new();
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.id != i {
                return Err(format!("scene {} object {i} has id {}", self.scene_id, obj.id));
            }
            if obj.cell_x >= MAX_GRID || obj.cell_y >= MAX_GRID {
                return Err(format!("scene {} object {i} lies outside the grid", self.scene_id));
            }
            if !seen.insert(obj.key()) {
                return Err(format!("scene {} has duplicate object {i}", self.scene_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    pub grid_size: u8,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { min_objects: MIN_OBJECTS, max_objects: 10, grid_size: MAX_GRID }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_objects < MIN_OBJECTS
            || self.min_objects > self.max_objects
            || self.max_objects > MAX_OBJECTS
        {
            return Err(Error::Config(format!(
                "object bounds must satisfy {MIN_OBJECTS} <= min ({}) <= max ({}) <= {MAX_OBJECTS}",
                self.min_objects, self.max_objects
            )));
        }
        if self.grid_size == 0 || self.grid_size > MAX_GRID {
            return Err(Error::Config(format!("grid size must be in 1..={MAX_GRID}")));
        }
        Ok(())
    }
}

pub fn generate_scene<R: Rng + ?Sized>(rng: &mut R, scene_id: u64, cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let n = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(n);
    let mut seen = HashSet::with_capacity(n);
    for id in 0..n {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let obj = SceneObject {
                id,
                category: Category::ALL[rng.random_range(0..Category::ALL.len())],
                color: Color::ALL[rng.random_range(0..Color::ALL.len())],
                size: Size::ALL[rng.random_range(0..Size::ALL.len())],
                cell_x: rng.random_range(0..cfg.grid_size),
                cell_y: rng.random_range(0..cfg.grid_size),
            };
            if seen.insert(obj.key()) {
                objects.push(obj);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::DuplicateObjects { attempts: MAX_PLACEMENT_ATTEMPTS });
        }
    }
    let target_index = rng.random_range(0..n);
    Ok(Scene { scene_id, objects, target_index })
}

/// Scenes with ids `start..start + n`. Each scene has its own stream, so the
/// scene with a given id is identical whatever range it is generated in.
pub fn generate_scene_range(start: u64, n: usize, seed: u64, cfg: &SceneConfig) -> Result<Vec<Scene>> {
    if n == 0 {
        return Err(Error::EmptySet("scene set of size 0"));
    }
    cfg.validate()?;
    (start..start + n as u64)
        .map(|id| generate_scene(&mut stream_rng(seed, "scene", id), id, cfg))
        .collect()
}

pub fn generate_scene_set(n: usize, seed: u64, cfg: &SceneConfig) -> Result<Vec<Scene>> {
    generate_scene_range(0, n, seed, cfg)
}

pub fn write_scenes(path: &Path, scenes: &[Scene]) -> Result<()> {
    jsonl::write(path, scenes)
}

pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    let scenes: Vec<Scene> = jsonl::read(path)?;
    for (i, scene) in scenes.iter().enumerate() {
        scene.validate().map_err(|msg| Error::Parse { path: path.to_path_buf(), line: i + 1, msg })?;
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(min: usize, max: usize) -> SceneConfig {
        SceneConfig { min_objects: min, max_objects: max, grid_size: 5 }
    }

    #[test]
    fn degenerate_range_gives_exact_count() {
        for seed in 0..20 {
            let s = generate_scene(&mut stream_rng(seed, "t", 0), 0, &cfg(3, 3)).unwrap();
            assert_eq!(s.objects.len(), 3);
        }
    }

    #[test]
    fn full_range_stays_in_bounds() {
        let s = generate_scene(&mut stream_rng(7, "t", 0), 0, &cfg(3, 20)).unwrap();
        assert!((3..=20).contains(&s.objects.len()));
        s.validate().unwrap();
    }

    #[test]
    fn bad_bounds_are_config_errors() {
        let mut rng = stream_rng(0, "t", 0);
        assert!(matches!(generate_scene(&mut rng, 0, &cfg(2, 5)), Err(Error::Config(_))));
        assert!(matches!(generate_scene(&mut rng, 0, &cfg(6, 5)), Err(Error::Config(_))));
        assert!(matches!(generate_scene(&mut rng, 0, &cfg(3, 21)), Err(Error::Config(_))));
    }

    #[test]
    fn set_ids_and_determinism() {
        let a = generate_scene_set(5, 1, &cfg(3, 20)).unwrap();
        let b = generate_scene_set(5, 1, &cfg(3, 20)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|s| s.scene_id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert_eq!(
            serde_json::to_string(&a[0]).unwrap(),
            serde_json::to_string(&b[0]).unwrap()
        );
        assert!(matches!(generate_scene_set(0, 1, &cfg(3, 20)), Err(Error::EmptySet(_))));
    }

    #[test]
    fn later_scenes_do_not_perturb_earlier_ones() {
        let short = generate_scene_set(3, 11, &cfg(3, 20)).unwrap();
        let long = generate_scene_set(30, 11, &cfg(3, 20)).unwrap();
        assert_eq!(short[..], long[..3]);
        let tail = generate_scene_range(2, 1, 11, &cfg(3, 20)).unwrap();
        assert_eq!(tail[0], long[2]);
    }

    #[test]
    fn object_count_histogram_spans_range() {
        let scenes = generate_scene_set(2000, 3, &cfg(3, 20)).unwrap();
        let mut hist = [0usize; 21];
        for s in &scenes {
            hist[s.objects.len()] += 1;
        }
        // 18 equally likely counts, ~111 each
        for (k, &count) in hist.iter().enumerate().skip(3) {
            assert!(count > 60 && count < 170, "count {k} seen {count} times");
        }
        assert_eq!(hist[..3].iter().sum::<usize>(), 0);
    }

    #[test]
    fn json_shape() {
        let s = generate_scene_set(1, 2, &cfg(3, 3)).unwrap().remove(0);
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert!(v.get("scene_id").is_some());
        assert!(v.get("target").is_some());
        let obj = &v["objects"][0];
        for key in ["id", "category", "color", "size", "x", "y"] {
            assert!(obj.get(key).is_some(), "missing {key}");
        }
    }
}
