//! Identifiers and the categorical label alphabet shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A registered platform user. Raters, authors, buyers and sponsors are all users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u64);

/// Raters are users; the alias keeps signatures readable.
pub type RaterId = UserId;

/// A rateable item: a research project or a referee report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u64);

/// A question channel of an item. Projects carry two channels
/// ([`Question::CONTRIBUTION`], [`Question::DESIGN`]); referee reports carry one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Question(pub u8);

impl Question {
    /// "Potential contribution" on projects; the only channel on reports.
    pub const CONTRIBUTION: Question = Question(0);
    /// "Research design" on projects.
    pub const DESIGN: Question = Question(1);
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a label inside a [`LabelSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u16);

impl Label {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelSetError {
    #[error("a label set needs at least two labels, got {0}")]
    TooFew(usize),
    #[error("duplicate label {0:?}")]
    Duplicate(String),
    #[error("unknown label {0:?}")]
    Unknown(String),
}

/// Ordered, duplicate-free set of at least two categorical labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(names: I) -> Result<Self, LabelSetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(LabelSetError::TooFew(names.len()));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(LabelSetError::Duplicate(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// The referee-report alphabet: unsatisfactory, satisfactory, exceptional.
    pub fn referee() -> Self {
        Self::new(["u", "s", "e"]).expect("static label set")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.names.len()).map(|i| Label(i as u16))
    }

    pub fn name(&self, label: Label) -> &str {
        &self.names[label.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Result<Label, LabelSetError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| Label(i as u16))
            .ok_or_else(|| LabelSetError::Unknown(name.to_string()))
    }

    pub fn contains(&self, label: Label) -> bool {
        label.index() < self.names.len()
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        Self::referee()
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = LabelSetError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        LabelSet::new(value)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(value: LabelSet) -> Self {
        value.names
    }
}

/// One rater's categorical label for one item on one question channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub rater: RaterId,
    pub item: ItemId,
    pub question: Question,
    pub label: Label,
    pub seq: u64,
}
