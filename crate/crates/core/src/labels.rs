//! Posture and gesture vocabularies and the steering command table.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PostureLabel {
    GoStraight,
    TurnLeft,
    TurnRight,
    Stop,
    Reverse,
}

impl PostureLabel {
    pub const ALL: [PostureLabel; 5] = [
        PostureLabel::GoStraight,
        PostureLabel::TurnLeft,
        PostureLabel::TurnRight,
        PostureLabel::Stop,
        PostureLabel::Reverse,
    ];

    /// The four postures reachable from GoStraight, in training order.
    pub const SIDES: [PostureLabel; 4] = [
        PostureLabel::TurnLeft,
        PostureLabel::TurnRight,
        PostureLabel::Stop,
        PostureLabel::Reverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PostureLabel::GoStraight => "GoStraight",
            PostureLabel::TurnLeft => "TurnLeft",
            PostureLabel::TurnRight => "TurnRight",
            PostureLabel::Stop => "Stop",
            PostureLabel::Reverse => "Reverse",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short name used inside gesture names (`Go2Left`, `Left2Go`, ...).
    #[cfg(test)]
    fn short(self) -> &'static str {
        match self {
            PostureLabel::GoStraight => "Go",
            PostureLabel::TurnLeft => "Left",
            PostureLabel::TurnRight => "Right",
            PostureLabel::Stop => "Stop",
            PostureLabel::Reverse => "Reverse",
        }
    }
}

impl fmt::Display for PostureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PostureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PostureLabel::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPosture(s.to_string()))
    }
}

/// A transition between GoStraight and one of the four other postures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureLabel {
    Go2Left,
    Left2Go,
    Go2Right,
    Right2Go,
    Go2Stop,
    Stop2Go,
    Go2Reverse,
    Reverse2Go,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; 8] = [
        GestureLabel::Go2Left,
        GestureLabel::Left2Go,
        GestureLabel::Go2Right,
        GestureLabel::Right2Go,
        GestureLabel::Go2Stop,
        GestureLabel::Stop2Go,
        GestureLabel::Go2Reverse,
        GestureLabel::Reverse2Go,
    ];

    /// The gesture connecting two postures, if one exists.
    pub fn between(from: PostureLabel, to: PostureLabel) -> Option<GestureLabel> {
        use PostureLabel::*;
        let g = match (from, to) {
            (GoStraight, TurnLeft) => GestureLabel::Go2Left,
            (TurnLeft, GoStraight) => GestureLabel::Left2Go,
            (GoStraight, TurnRight) => GestureLabel::Go2Right,
            (TurnRight, GoStraight) => GestureLabel::Right2Go,
            (GoStraight, Stop) => GestureLabel::Go2Stop,
            (Stop, GoStraight) => GestureLabel::Stop2Go,
            (GoStraight, Reverse) => GestureLabel::Go2Reverse,
            (Reverse, GoStraight) => GestureLabel::Reverse2Go,
            _ => return None,
        };
        Some(g)
    }

    pub fn endpoints(self) -> (PostureLabel, PostureLabel) {
        use PostureLabel::*;
        match self {
            GestureLabel::Go2Left => (GoStraight, TurnLeft),
            GestureLabel::Left2Go => (TurnLeft, GoStraight),
            GestureLabel::Go2Right => (GoStraight, TurnRight),
            GestureLabel::Right2Go => (TurnRight, GoStraight),
            GestureLabel::Go2Stop => (GoStraight, Stop),
            GestureLabel::Stop2Go => (Stop, GoStraight),
            GestureLabel::Go2Reverse => (GoStraight, Reverse),
            GestureLabel::Reverse2Go => (Reverse, GoStraight),
        }
    }

    /// The posture that is not GoStraight.
    pub fn side(self) -> PostureLabel {
        let (a, b) = self.endpoints();
        if a == PostureLabel::GoStraight {
            b
        } else {
            a
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::Go2Left => "Go2Left",
            GestureLabel::Left2Go => "Left2Go",
            GestureLabel::Go2Right => "Go2Right",
            GestureLabel::Right2Go => "Right2Go",
            GestureLabel::Go2Stop => "Go2Stop",
            GestureLabel::Stop2Go => "Stop2Go",
            GestureLabel::Go2Reverse => "Go2Reverse",
            GestureLabel::Reverse2Go => "Reverse2Go",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GestureLabel::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::BadMessage(format!("unknown gesture `{s}`")))
    }
}

/// Any recognizable hand state: a held posture or a transition gesture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateLabel {
    Posture(PostureLabel),
    Gesture(GestureLabel),
}

impl StateLabel {
    /// All 13 labels, postures first.
    pub fn all() -> Vec<StateLabel> {
        PostureLabel::ALL
            .into_iter()
            .map(StateLabel::Posture)
            .chain(GestureLabel::ALL.into_iter().map(StateLabel::Gesture))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            StateLabel::Posture(p) => p.name(),
            StateLabel::Gesture(g) => g.name(),
        }
    }

    pub fn is_gesture(self) -> bool {
        matches!(self, StateLabel::Gesture(_))
    }

    pub fn command(self) -> SteeringCommand {
        map_to_command(self)
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<PostureLabel> for StateLabel {
    fn from(p: PostureLabel) -> Self {
        StateLabel::Posture(p)
    }
}

impl From<GestureLabel> for StateLabel {
    fn from(g: GestureLabel) -> Self {
        StateLabel::Gesture(g)
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(p) = s.parse::<PostureLabel>() {
            return Ok(StateLabel::Posture(p));
        }
        s.parse::<GestureLabel>()
            .map(StateLabel::Gesture)
            .map_err(|_| Error::BadMessage(format!("unknown state label `{s}`")))
    }
}

#[cfg(test)]
impl PostureLabel {
    fn gesture_name(self, to: PostureLabel) -> String {
        format!("{}2{}", self.short(), to.short())
    }
}

/// Wheelchair steering command, 1 through 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SteeringCommand(u8);

impl SteeringCommand {
    pub const FORWARD: SteeringCommand = SteeringCommand(1);
    pub const LEFT: SteeringCommand = SteeringCommand(2);
    pub const RIGHT: SteeringCommand = SteeringCommand(3);
    pub const STOP: SteeringCommand = SteeringCommand(4);
    pub const REVERSE: SteeringCommand = SteeringCommand(5);

    pub fn new(value: u8) -> Result<Self> {
        if (1..=5).contains(&value) {
            Ok(SteeringCommand(value))
        } else {
            Err(Error::InvalidParameter(format!("steering command {value} outside 1..=5")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for SteeringCommand {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        SteeringCommand::new(v)
    }
}

impl From<SteeringCommand> for u8 {
    fn from(c: SteeringCommand) -> u8 {
        c.0
    }
}

impl fmt::Display for SteeringCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Steering command for a recognized state. A gesture is assigned the
/// command of the posture it ends in.
pub fn map_to_command(label: StateLabel) -> SteeringCommand {
    let posture = match label {
        StateLabel::Posture(p) => p,
        StateLabel::Gesture(g) => g.endpoints().1,
    };
    match posture {
        PostureLabel::GoStraight => SteeringCommand::FORWARD,
        PostureLabel::TurnLeft => SteeringCommand::LEFT,
        PostureLabel::TurnRight => SteeringCommand::RIGHT,
        PostureLabel::Stop => SteeringCommand::STOP,
        PostureLabel::Reverse => SteeringCommand::REVERSE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_table_is_exhaustive() {
        let expected: [(&str, u8); 13] = [
            ("GoStraight", 1),
            ("Left2Go", 1),
            ("Right2Go", 1),
            ("Stop2Go", 1),
            ("Reverse2Go", 1),
            ("TurnLeft", 2),
            ("Go2Left", 2),
            ("TurnRight", 3),
            ("Go2Right", 3),
            ("Stop", 4),
            ("Go2Stop", 4),
            ("Reverse", 5),
            ("Go2Reverse", 5),
        ];
        let all = StateLabel::all();
        assert_eq!(all.len(), 13);
        for (name, cmd) in expected {
            let label: StateLabel = name.parse().unwrap();
            assert_eq!(map_to_command(label).value(), cmd, "{name}");
        }
    }

    #[test]
    fn every_gesture_touches_go_straight() {
        for g in GestureLabel::ALL {
            let (a, b) = g.endpoints();
            assert!(a == PostureLabel::GoStraight || b == PostureLabel::GoStraight);
            assert_eq!(GestureLabel::between(a, b), Some(g));
            assert_eq!(a.gesture_name(b), g.name());
        }
        assert_eq!(GestureLabel::between(PostureLabel::TurnLeft, PostureLabel::TurnRight), None);
    }

    #[test]
    fn steering_command_range() {
        assert!(SteeringCommand::new(0).is_err());
        assert!(SteeringCommand::new(6).is_err());
        assert_eq!(SteeringCommand::new(3).unwrap(), SteeringCommand::RIGHT);
    }
}
