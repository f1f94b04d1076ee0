//! The six-primitive discrete action space and its one-line text grammar.
//!
//! Ranked actions travel as a single line `1.<label> 2.<label> ...` between
//! remote models, sample files and reports. Labels are byte-exact on output;
//! parsing is tolerant to case and to `-`/`_`/space separator drift.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActionError {
    #[error("cannot format an empty action list")]
    EmptyFormat,
    #[error("duplicate action `{0}` in ranked list")]
    Duplicate(Action),
    #[error("unknown action label `{0}`")]
    UnknownLabel(String),
}

/// A motion primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    MoveForward,
    MoveForwardLeft,
    MoveForwardRight,
    TurnLeft,
    TurnRight,
    Stop,
}

/// Lateral side of an action, used for deterministic left-before-right ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Left,
    Center,
    Right,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::MoveForward,
        Action::MoveForwardLeft,
        Action::MoveForwardRight,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Stop,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Action::MoveForward => "Move forward",
            Action::MoveForwardLeft => "Move forward-left",
            Action::MoveForwardRight => "Move forward-right",
            Action::TurnLeft => "Turn left",
            Action::TurnRight => "Turn right",
            Action::Stop => "Stop",
        }
    }

    /// Position in [`Action::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Efficiency tier: forward < diagonal < turn < stop.
    pub fn efficiency_rank(self) -> u8 {
        match self {
            Action::MoveForward => 0,
            Action::MoveForwardLeft | Action::MoveForwardRight => 1,
            Action::TurnLeft | Action::TurnRight => 2,
            Action::Stop => 3,
        }
    }

    pub fn side(self) -> Side {
        match self {
            Action::MoveForwardLeft | Action::TurnLeft => Side::Left,
            Action::MoveForwardRight | Action::TurnRight => Side::Right,
            Action::MoveForward | Action::Stop => Side::Center,
        }
    }

    /// Left/right swap; forward and stop map to themselves.
    pub fn mirrored(self) -> Action {
        match self {
            Action::MoveForwardLeft => Action::MoveForwardRight,
            Action::MoveForwardRight => Action::MoveForwardLeft,
            Action::TurnLeft => Action::TurnRight,
            Action::TurnRight => Action::TurnLeft,
            other => other,
        }
    }

    /// Matches a label ignoring case and treating `-`, `_` and whitespace runs
    /// as the same separator.
    pub fn from_label(text: &str) -> Option<Action> {
        let key = normalize_label(text);
        Action::ALL
            .into_iter()
            .find(|a| normalize_label(a.label()) == key)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        // Stored files use canonical labels only.
        Action::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| serde::de::Error::custom(ActionError::UnknownLabel(s)))
    }
}

fn normalize_label(text: &str) -> String {
    text.split(|c: char| c == '-' || c == '_' || c.is_whitespace())
        .filter(|part| !part.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Ordered, duplicate-free list of actions. Empty only as the parse-failure
/// sentinel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct RankedActions(Vec<Action>);

impl RankedActions {
    pub fn new(actions: Vec<Action>) -> Result<Self, ActionError> {
        let mut seen = [false; 6];
        for &a in &actions {
            if std::mem::replace(&mut seen[a.index()], true) {
                return Err(ActionError::Duplicate(a));
            }
        }
        Ok(RankedActions(actions))
    }

    pub fn empty() -> Self {
        RankedActions(Vec::new())
    }

    pub fn single(action: Action) -> Self {
        RankedActions(vec![action])
    }

    pub fn as_slice(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<Action> {
        self.0.first().copied()
    }

    pub fn contains(&self, action: Action) -> bool {
        self.0.contains(&action)
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        self.0.iter().copied()
    }

    pub fn into_vec(self) -> Vec<Action> {
        self.0
    }

    pub fn mirrored(&self) -> RankedActions {
        RankedActions(self.0.iter().map(|a| a.mirrored()).collect())
    }
}

impl Serialize for RankedActions {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RankedActions {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let actions = Vec::<Action>::deserialize(deserializer)?;
        RankedActions::new(actions).map_err(serde::de::Error::custom)
    }
}

/// Result of parsing free-form model output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedActions {
    pub actions: RankedActions,
    /// Numbered entries that matched no action label.
    pub unparsed_tokens: usize,
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[^0-9A-Za-z])([0-9]+)\s*[.)]").expect("valid regex"))
}

/// Parses `1.<action> 2.<action> ...` and reports how many numbered entries
/// were not recognised.
pub fn parse_ranked_actions_detailed(text: &str) -> ParsedActions {
    let re = marker_regex();
    // (index, token start, marker start)
    let mut markers: Vec<(u64, usize, usize)> = Vec::new();
    for caps in re.captures_iter(text) {
        let num = caps.get(1).expect("group 1");
        let whole = caps.get(0).expect("group 0");
        let index = num.as_str().parse::<u64>().unwrap_or(u64::MAX);
        markers.push((index, whole.end(), num.start()));
    }

    let mut entries: Vec<(u64, &str)> = markers
        .iter()
        .enumerate()
        .map(|(k, &(index, start, _))| {
            let end = markers.get(k + 1).map_or(text.len(), |m| m.2);
            (index, &text[start..end])
        })
        .collect();
    // Stable: equal indices keep textual order.
    entries.sort_by_key(|&(index, _)| index);

    let mut seen = [false; 6];
    let mut actions = Vec::new();
    let mut unparsed_tokens = 0;
    for (_, raw) in entries {
        let token = raw.trim().trim_matches(|c: char| {
            c.is_whitespace() || matches!(c, ',' | ';' | '|' | '.' | '<' | '>' | '*' | '"' | '\'' | '`')
        });
        match Action::from_label(token) {
            Some(a) => {
                if !std::mem::replace(&mut seen[a.index()], true) {
                    actions.push(a);
                }
            }
            None => unparsed_tokens += 1,
        }
    }
    if unparsed_tokens > 0 {
        log::debug!("{unparsed_tokens} unparsed token(s) in model output {text:?}");
    }
    ParsedActions {
        actions: RankedActions(actions),
        unparsed_tokens,
    }
}

/// Parses model output; unparseable input yields the empty sentinel.
pub fn parse_ranked_actions(text: &str) -> RankedActions {
    parse_ranked_actions_detailed(text).actions
}

pub fn format_ranked_actions(actions: &RankedActions) -> Result<String, ActionError> {
    if actions.is_empty() {
        return Err(ActionError::EmptyFormat);
    }
    Ok(actions
        .iter()
        .enumerate()
        .map(|(i, a)| format!("{}.{}", i + 1, a.label()))
        .collect::<Vec<_>>()
        .join(" "))
}
