//! The closed set of core behaviours and their canonical class indices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// One of the nine annotated core behaviours.
///
/// The discriminant is the canonical class index used by every model output,
/// confusion matrix and checkpoint (alphabetical order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviourLabel {
    CameraInteraction = 0,
    ClimbingDown = 1,
    ClimbingUp = 2,
    Hanging = 3,
    Running = 4,
    Sitting = 5,
    SittingOnBack = 6,
    Standing = 7,
    Walking = 8,
}

pub const NUM_BEHAVIOURS: usize = 9;

impl BehaviourLabel {
    pub const ALL: [BehaviourLabel; NUM_BEHAVIOURS] = [
        BehaviourLabel::CameraInteraction,
        BehaviourLabel::ClimbingDown,
        BehaviourLabel::ClimbingUp,
        BehaviourLabel::Hanging,
        BehaviourLabel::Running,
        BehaviourLabel::Sitting,
        BehaviourLabel::SittingOnBack,
        BehaviourLabel::Standing,
        BehaviourLabel::Walking,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviourLabel::CameraInteraction => "camera_interaction",
            BehaviourLabel::ClimbingDown => "climbing_down",
            BehaviourLabel::ClimbingUp => "climbing_up",
            BehaviourLabel::Hanging => "hanging",
            BehaviourLabel::Running => "running",
            BehaviourLabel::Sitting => "sitting",
            BehaviourLabel::SittingOnBack => "sitting_on_back",
            BehaviourLabel::Standing => "standing",
            BehaviourLabel::Walking => "walking",
        }
    }

    /// Class names in canonical index order, as stored in checkpoints.
    pub fn class_order() -> Vec<String> {
        Self::ALL.iter().map(|b| b.as_str().to_string()).collect()
    }
}

impl fmt::Display for BehaviourLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviourLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::UnknownBehaviour(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_mapping_is_alphabetical_and_total() {
        let names: Vec<_> = BehaviourLabel::ALL.iter().map(|b| b.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for (i, b) in BehaviourLabel::ALL.iter().enumerate() {
            assert_eq!(b.index(), i);
            assert_eq!(BehaviourLabel::from_index(i), Some(*b));
            assert_eq!(b.as_str().parse::<BehaviourLabel>().unwrap(), *b);
        }
        assert_eq!(BehaviourLabel::from_index(9), None);
    }

    #[test]
    fn auxiliary_behaviours_are_rejected() {
        for aux in ["eating", "scavenging", "Walking", ""] {
            assert!(matches!(
                aux.parse::<BehaviourLabel>(),
                Err(Error::UnknownBehaviour(_))
            ));
        }
    }
}
