//! The closed set of twenty deliberative criteria and a total map keyed by them.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Highest level on the four-point annotation scale (0 = clearly not present,
/// 3 = clearly present).
pub const DEFAULT_MAX_LEVEL: u8 = 3;

/// Number of criteria.
pub const NUM_CRITERIA: usize = 20;

/// Deliberation dimension a criterion belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Rationality,
    Reciprocity,
    Civility,
    Storytelling,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Rationality => "rationality",
            Dimension::Reciprocity => "reciprocity",
            Dimension::Civility => "civility",
            Dimension::Storytelling => "storytelling",
        }
    }
}

/// One deliberative aspect. Declaration order is the canonical order used for
/// summation and serialization everywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Relevance,
    Fact,
    Opinion,
    Justification,
    SolutionProposals,
    AdditionalKnowledge,
    Question,
    ReferencingUsers,
    ReferencingMedium,
    ReferencingContents,
    ReferencingPersonal,
    ReferencingFormat,
    PoliteAddress,
    Respect,
    Screaming,
    Vulgar,
    Insult,
    Sarcasm,
    Discrimination,
    Storytelling,
}

impl Criterion {
    pub const ALL: [Criterion; NUM_CRITERIA] = [
        Criterion::Relevance,
        Criterion::Fact,
        Criterion::Opinion,
        Criterion::Justification,
        Criterion::SolutionProposals,
        Criterion::AdditionalKnowledge,
        Criterion::Question,
        Criterion::ReferencingUsers,
        Criterion::ReferencingMedium,
        Criterion::ReferencingContents,
        Criterion::ReferencingPersonal,
        Criterion::ReferencingFormat,
        Criterion::PoliteAddress,
        Criterion::Respect,
        Criterion::Screaming,
        Criterion::Vulgar,
        Criterion::Insult,
        Criterion::Sarcasm,
        Criterion::Discrimination,
        Criterion::Storytelling,
    ];

    /// Criteria whose individual predictions serve as toxicity indicators.
    pub const TOXICITY: [Criterion; 5] = [
        Criterion::Screaming,
        Criterion::Vulgar,
        Criterion::Insult,
        Criterion::Sarcasm,
        Criterion::Discrimination,
    ];

    /// Position in canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Canonical snake_case identifier.
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Relevance => "relevance",
            Criterion::Fact => "fact",
            Criterion::Opinion => "opinion",
            Criterion::Justification => "justification",
            Criterion::SolutionProposals => "solution_proposals",
            Criterion::AdditionalKnowledge => "additional_knowledge",
            Criterion::Question => "question",
            Criterion::ReferencingUsers => "referencing_users",
            Criterion::ReferencingMedium => "referencing_medium",
            Criterion::ReferencingContents => "referencing_contents",
            Criterion::ReferencingPersonal => "referencing_personal",
            Criterion::ReferencingFormat => "referencing_format",
            Criterion::PoliteAddress => "polite_address",
            Criterion::Respect => "respect",
            Criterion::Screaming => "screaming",
            Criterion::Vulgar => "vulgar",
            Criterion::Insult => "insult",
            Criterion::Sarcasm => "sarcasm",
            Criterion::Discrimination => "discrimination",
            Criterion::Storytelling => "storytelling",
        }
    }

    pub fn dimension(self) -> Dimension {
        use Criterion::*;
        match self {
            Relevance | Fact | Opinion | Justification | SolutionProposals
            | AdditionalKnowledge | Question => Dimension::Rationality,
            ReferencingUsers | ReferencingMedium | ReferencingContents | ReferencingPersonal
            | ReferencingFormat => Dimension::Reciprocity,
            PoliteAddress | Respect | Screaming | Vulgar | Insult | Sarcasm | Discrimination => {
                Dimension::Civility
            }
            Storytelling => Dimension::Storytelling,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Returned when a string is not one of the canonical identifiers. Synonyms
/// and alternative spellings are rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown criterion `{0}`")]
pub struct UnknownCriterion(pub String);

impl FromStr for Criterion {
    type Err = UnknownCriterion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCriterion(s.to_string()))
    }
}

impl Serialize for Criterion {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Criterion {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A total map from every criterion to a value, stored in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CriterionMap<T>([T; NUM_CRITERIA]);

impl<T> CriterionMap<T> {
    pub fn from_array(values: [T; NUM_CRITERIA]) -> Self {
        CriterionMap(values)
    }

    pub fn from_fn(mut f: impl FnMut(Criterion) -> T) -> Self {
        CriterionMap(std::array::from_fn(|i| f(Criterion::ALL[i])))
    }

    /// Entries in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (Criterion, &T)> + '_ {
        Criterion::ALL.iter().copied().zip(self.0.iter())
    }

    pub fn values(&self) -> &[T; NUM_CRITERIA] {
        &self.0
    }

    pub fn map<U>(&self, mut f: impl FnMut(Criterion, &T) -> U) -> CriterionMap<U> {
        CriterionMap::from_fn(|c| f(c, &self.0[c.index()]))
    }
}

impl<T: Copy> CriterionMap<T> {
    pub fn filled(value: T) -> Self {
        CriterionMap([value; NUM_CRITERIA])
    }
}

impl<T> Index<Criterion> for CriterionMap<T> {
    type Output = T;
    fn index(&self, c: Criterion) -> &T {
        &self.0[c.index()]
    }
}

impl<T> IndexMut<Criterion> for CriterionMap<T> {
    fn index_mut(&mut self, c: Criterion) -> &mut T {
        &mut self.0[c.index()]
    }
}

/// Serialized as a JSON object with keys in canonical order.
impl<T: Serialize> Serialize for CriterionMap<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(NUM_CRITERIA))?;
        for (c, v) in self.iter() {
            map.serialize_entry(c.as_str(), v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LevelMapError {
    #[error("unknown criterion `{0}`")]
    UnknownCriterion(String),
    #[error("{criterion}={value} is outside 0..={max}")]
    OutOfRange {
        criterion: Criterion,
        value: i64,
        max: u8,
    },
    #[error("no value for {0}")]
    Missing(Criterion),
}

/// Builds a total level map from `(name, value)` pairs. `None` values count as
/// missing; every criterion must end up with a value in `0..=max_level`.
pub fn level_map_from_entries<'a>(
    entries: impl IntoIterator<Item = (&'a str, Option<i64>)>,
    max_level: u8,
) -> Result<CriterionMap<u8>, LevelMapError> {
    let mut levels: CriterionMap<Option<u8>> = CriterionMap::filled(None);
    for (name, value) in entries {
        let criterion: Criterion = name
            .parse()
            .map_err(|_| LevelMapError::UnknownCriterion(name.to_string()))?;
        let Some(value) = value else { continue };
        if !(0..=i64::from(max_level)).contains(&value) {
            return Err(LevelMapError::OutOfRange {
                criterion,
                value,
                max: max_level,
            });
        }
        levels[criterion] = Some(value as u8);
    }
    if let Some((criterion, _)) = levels.iter().find(|(_, v)| v.is_none()) {
        return Err(LevelMapError::Missing(criterion));
    }
    Ok(levels.map(|_, v| v.expect("checked above")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn closed_set_of_twenty() {
        let ids: HashSet<_> = Criterion::ALL.iter().map(|c| c.as_str()).collect();
        assert_eq!(ids.len(), 20);
        for (i, c) in Criterion::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.as_str().parse::<Criterion>().unwrap(), *c);
        }
    }

    #[test]
    fn dimension_group_sizes() {
        let count = |d| Criterion::ALL.iter().filter(|c| c.dimension() == d).count();
        assert_eq!(count(Dimension::Rationality), 7);
        assert_eq!(count(Dimension::Reciprocity), 5);
        assert_eq!(count(Dimension::Civility), 7);
        assert_eq!(count(Dimension::Storytelling), 1);
    }

    #[test]
    fn synonyms_rejected() {
        for s in ["Justification", "insults", "solution proposals", "polite_form_of_address", ""] {
            assert!(s.parse::<Criterion>().is_err(), "{s}");
        }
    }

    #[test]
    fn serde_uses_canonical_ids() {
        let json = serde_json::to_string(&Criterion::SolutionProposals).unwrap();
        assert_eq!(json, "\"solution_proposals\"");
        let back: Criterion = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Criterion::SolutionProposals);
    }
}
