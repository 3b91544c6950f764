use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Category, Color, Size};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Left,
    Right,
    Top,
    Bottom,
    Center,
}

impl Region {
    pub const ALL: &'static [Region] =
        &[Region::Left, Region::Right, Region::Top, Region::Bottom, Region::Center];

    pub fn word(self) -> &'static str {
        match self {
            Region::Left => "left",
            Region::Right => "right",
            Region::Top => "top",
            Region::Bottom => "bottom",
            Region::Center => "center",
        }
    }

    pub fn from_word(word: &str) -> Option<Self> {
        Region::ALL.iter().copied().find(|r| r.word() == word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionSemantics {
    CategoryIs(Category),
    ColorIs(Color),
    SizeIs(Size),
    RegionIs(Region),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuestionKind {
    Category,
    Color,
    Size,
    Region,
}

impl QuestionKind {
    pub const ALL: &'static [QuestionKind] =
        &[QuestionKind::Category, QuestionKind::Color, QuestionKind::Size, QuestionKind::Region];

    pub fn name(self) -> &'static str {
        match self {
            QuestionKind::Category => "category",
            QuestionKind::Color => "color",
            QuestionKind::Size => "size",
            QuestionKind::Region => "region",
        }
    }

    fn slot_value(self, word: &str) -> Option<QuestionSemantics> {
        match self {
            QuestionKind::Category => Category::from_word(word).map(QuestionSemantics::CategoryIs),
            QuestionKind::Color => Color::from_word(word).map(QuestionSemantics::ColorIs),
            QuestionKind::Size => Size::from_word(word).map(QuestionSemantics::SizeIs),
            QuestionKind::Region => Region::from_word(word).map(QuestionSemantics::RegionIs),
        }
    }
}

impl QuestionSemantics {
    pub fn kind(self) -> QuestionKind {
        match self {
            QuestionSemantics::CategoryIs(_) => QuestionKind::Category,
            QuestionSemantics::ColorIs(_) => QuestionKind::Color,
            QuestionSemantics::SizeIs(_) => QuestionKind::Size,
            QuestionSemantics::RegionIs(_) => QuestionKind::Region,
        }
    }

    pub fn slot_word(self) -> &'static str {
        match self {
            QuestionSemantics::CategoryIs(c) => c.word(),
            QuestionSemantics::ColorIs(c) => c.word(),
            QuestionSemantics::SizeIs(s) => s.word(),
            QuestionSemantics::RegionIs(r) => r.word(),
        }
    }
}

impl fmt::Display for QuestionSemantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.kind().name(), self.slot_word())
    }
}

/// Every askable question, in a fixed order.
pub fn all_semantics() -> Vec<QuestionSemantics> {
    let mut out = Vec::with_capacity(28);
    out.extend(Category::ALL.iter().map(|&c| QuestionSemantics::CategoryIs(c)));
    out.extend(Color::ALL.iter().map(|&c| QuestionSemantics::ColorIs(c)));
    out.extend(Size::ALL.iter().map(|&s| QuestionSemantics::SizeIs(s)));
    out.extend(Region::ALL.iter().map(|&r| QuestionSemantics::RegionIs(r)));
    out
}

const SLOT: &str = "_";

// Paraphrases per kind, most common first. The teacher samples them with
// rank-decaying weights, so the tail supplies rare words.
const CATEGORY_PATTERNS: &[&str] = &[
    "is it a _ ?",
    "is the object a _ ?",
    "is it the _ ?",
    "is this a _ ?",
    "is the target a _ ?",
    "could it be a _ ?",
    "is the thing a _ ?",
    "might it be a _ ?",
    "are we looking for a _ ?",
    "is the item a _ ?",
    "would it be a _ ?",
    "is that a _ ?",
    "do you mean a _ ?",
    "is your object a _ ?",
    "is the hidden object a _ ?",
    "is the secret thing a _ ?",
    "is the chosen item a _ ?",
    "is the mystery object a _ ?",
    "perhaps a _ ?",
    "maybe it is a _ ?",
];

const COLOR_PATTERNS: &[&str] = &[
    "is it _ ?",
    "is the object _ ?",
    "is it a _ one ?",
    "is its color _ ?",
    "is it colored _ ?",
    "is the thing _ ?",
    "is it painted _ ?",
    "is it mostly _ ?",
    "does it look _ ?",
    "is the target _ ?",
    "is the color _ ?",
    "would you say it is _ ?",
    "is it _ colored ?",
    "is the item _ in color ?",
    "is it a _ thing ?",
    "is the hue _ ?",
    "is it some shade of _ ?",
    "is it tinted _ ?",
];

const SIZE_PATTERNS: &[&str] = &[
    "is it a _ object ?",
    "is it _ in size ?",
    "is the size _ ?",
    "is it _ sized ?",
    "is the object a _ one ?",
    "would you call it _ ?",
    "is it rather _ ?",
    "is the target _ sized ?",
    "is it a fairly _ thing ?",
    "does it seem _ ?",
    "is its size _ ?",
    "is it quite _ ?",
    "is it relatively _ ?",
];

const REGION_PATTERNS: &[&str] = &[
    "is it on the _ ?",
    "is it in the _ ?",
    "is the object on the _ ?",
    "is it at the _ ?",
    "is it located on the _ ?",
    "is it placed in the _ ?",
    "is it toward the _ ?",
    "is the thing near the _ ?",
    "is it over on the _ ?",
    "is it in the _ part ?",
    "is it somewhere in the _ ?",
    "can it be found on the _ ?",
    "is it positioned at the _ ?",
    "is it in the _ area ?",
    "is it on the _ side ?",
    "is it in the _ region ?",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub template_id: usize,
    pub kind: QuestionKind,
    /// Rank of this paraphrase within its kind (0 = most common).
    pub rank: usize,
    pub pattern: Vec<&'static str>,
}

impl Template {
    fn slot_position(&self) -> usize {
        self.pattern.iter().position(|w| *w == SLOT).expect("pattern has a slot")
    }
}

pub fn templates() -> &'static [Template] {
    static TABLE: OnceLock<Vec<Template>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let groups = [
            (QuestionKind::Category, CATEGORY_PATTERNS),
            (QuestionKind::Color, COLOR_PATTERNS),
            (QuestionKind::Size, SIZE_PATTERNS),
            (QuestionKind::Region, REGION_PATTERNS),
        ];
        let mut table = Vec::new();
        for (kind, patterns) in groups {
            for (rank, pattern) in patterns.iter().enumerate() {
                table.push(Template {
                    template_id: table.len(),
                    kind,
                    rank,
                    pattern: pattern.split_whitespace().collect(),
                });
            }
        }
        table
    })
}

pub fn templates_for(kind: QuestionKind) -> impl Iterator<Item = &'static Template> {
    templates().iter().filter(move |t| t.kind == kind)
}

pub fn realize(semantics: QuestionSemantics, template_id: usize) -> Result<Vec<String>> {
    let template = templates().get(template_id).ok_or(Error::UnknownTemplate(template_id))?;
    if template.kind != semantics.kind() {
        return Err(Error::KindMismatch { template_id, kind: semantics.kind().name() });
    }
    Ok(template
        .pattern
        .iter()
        .map(|w| if *w == SLOT { semantics.slot_word() } else { w }.to_string())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unparseable;

impl fmt::Display for Unparseable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("question does not match the grammar")
    }
}

impl std::error::Error for Unparseable {}

/// Matches the tokens against every template, longest pattern first, and
/// returns the meaning of the first one whose slot holds a valid value.
pub fn parse_question<S: AsRef<str>>(tokens: &[S]) -> std::result::Result<QuestionSemantics, Unparseable> {
    static BY_LENGTH: OnceLock<Vec<&'static Template>> = OnceLock::new();
    let ordered = BY_LENGTH.get_or_init(|| {
        let mut v: Vec<&Template> = templates().iter().collect();
        v.sort_by(|a, b| b.pattern.len().cmp(&a.pattern.len()).then(a.template_id.cmp(&b.template_id)));
        v
    });
    for template in ordered.iter().filter(|t| t.pattern.len() == tokens.len()) {
        let slot = template.slot_position();
        let fixed_match = template
            .pattern
            .iter()
            .zip(tokens)
            .enumerate()
            .all(|(i, (p, t))| i == slot || *p == t.as_ref());
        if !fixed_match {
            continue;
        }
        if let Some(sem) = template.kind.slot_value(tokens[slot].as_ref()) {
            return Ok(sem);
        }
    }
    Err(Unparseable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn template_with(pattern: &str) -> usize {
        templates().iter().find(|t| t.pattern.join(" ") == pattern).unwrap().template_id
    }

    #[test]
    fn realize_examples() {
        let id = template_with("is it _ ?");
        assert_eq!(realize(QuestionSemantics::ColorIs(Color::Red), id).unwrap(), toks("is it red ?"));
        let id = template_with("is the object a _ ?");
        assert_eq!(
            realize(QuestionSemantics::CategoryIs(Category::Cat), id).unwrap(),
            toks("is the object a cat ?")
        );
    }

    #[test]
    fn realize_errors() {
        let color = template_with("is it _ ?");
        assert!(matches!(
            realize(QuestionSemantics::SizeIs(Size::Large), color),
            Err(Error::KindMismatch { .. })
        ));
        assert!(matches!(
            realize(QuestionSemantics::SizeIs(Size::Large), 10_000),
            Err(Error::UnknownTemplate(10_000))
        ));
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_question(&toks("is it red ?")), Ok(QuestionSemantics::ColorIs(Color::Red)));
        assert_eq!(parse_question(&toks("is it a cat ?")), Ok(QuestionSemantics::CategoryIs(Category::Cat)));
        assert_eq!(parse_question(&toks("cat cat cat ?")), Err(Unparseable));
        assert_eq!(parse_question(&toks("is it a purple ?")), Err(Unparseable));
        assert_eq!(parse_question::<String>(&[]), Err(Unparseable));
    }

    #[test]
    fn round_trip_over_full_cross_product() {
        for sem in all_semantics() {
            for t in templates_for(sem.kind()) {
                let tokens = realize(sem, t.template_id).unwrap();
                assert_eq!(parse_question(&tokens), Ok(sem), "template {:?}", t.pattern);
            }
        }
    }

    #[test]
    fn template_table_shape() {
        for &kind in QuestionKind::ALL {
            assert!(templates_for(kind).count() >= 3);
        }
        let mut seen = HashSet::new();
        for t in templates() {
            assert_eq!(*t.pattern.last().unwrap(), "?");
            assert_eq!(t.pattern.iter().filter(|w| **w == SLOT).count(), 1);
            assert!(seen.insert(t.pattern.clone()), "duplicate pattern {:?}", t.pattern);
        }
        assert_eq!(all_semantics().len(), 28);
    }

    #[test]
    fn slot_inventories_are_disjoint() {
        let mut words = HashSet::new();
        for sem in all_semantics() {
            assert!(words.insert(sem.slot_word()));
        }
    }
}
