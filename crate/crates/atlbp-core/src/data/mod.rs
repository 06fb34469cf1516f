//! Dataset schema and preparation: outcome labels, per-frame features,
//! labeled problem segments, JSONL ingestion, frame-rate downsampling,
//! feature normalization, and the split planners.

mod io;
mod prep;
mod split;

pub use io::{load_dataset, write_dataset, Dataset, DatasetHeader};
pub use prep::{downsample, Normalizer};
pub use split::{
    leave_users_out, personalization_split, random_kfold, Fold, SplitKind, SplitPlan,
};

use crate::error::{Error, Result};
use crate::numgrad::Vec64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// The seven problem outcomes, with stable integer codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutcomeLabel {
    /// Solved after exactly one incorrect attempt, no hints.
    ATT = 0,
    /// Attempted or asked for a hint, then skipped.
    GIVEUP = 1,
    /// Solved after more than one incorrect attempt, no hints.
    GUESS = 2,
    /// First action came too fast for the problem to have been read.
    NOTR = 3,
    /// Solved after seeing one or more hints.
    SHINT = 4,
    /// Skipped without attempting or asking for a hint.
    SKIP = 5,
    /// Solved on the first attempt.
    SOF = 6,
}

impl OutcomeLabel {
    pub const COUNT: usize = 7;

    pub const ALL: [OutcomeLabel; 7] = [
        OutcomeLabel::ATT,
        OutcomeLabel::GIVEUP,
        OutcomeLabel::GUESS,
        OutcomeLabel::NOTR,
        OutcomeLabel::SHINT,
        OutcomeLabel::SKIP,
        OutcomeLabel::SOF,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::Label(format!("code {code} out of range 0..7")))
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeLabel::ATT => "ATT",
            OutcomeLabel::GIVEUP => "GIVEUP",
            OutcomeLabel::GUESS => "GUESS",
            OutcomeLabel::NOTR => "NOTR",
            OutcomeLabel::SHINT => "SHINT",
            OutcomeLabel::SKIP => "SKIP",
            OutcomeLabel::SOF => "SOF",
        }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OutcomeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Label(s.to_string()))
    }
}

/// One frame's feature set: the traditional facial-analysis vector plus
/// optional raw affect and face-identity embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    pub psi: Vec64,
    pub rho: Option<Vec64>,
    pub xi: Option<Vec64>,
}

/// Identifies a segment stably across loads: user, session, and the
/// chronological problem index within the session.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentId {
    pub user_id: String,
    pub session_id: String,
    pub problem_index: u32,
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.user_id, self.session_id, self.problem_index)
    }
}

/// One labeled problem attempt: identity, outcome, source frame rate, and
/// the ordered frame sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub user_id: String,
    pub session_id: String,
    pub problem_index: u32,
    pub label: OutcomeLabel,
    pub fps: f64,
    pub frames: Vec<FrameFeatures>,
}

impl Segment {
    pub fn id(&self) -> SegmentId {
        SegmentId {
            user_id: self.user_id.clone(),
            session_id: self.session_id.clone(),
            problem_index: self.problem_index,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    #[test]
    fn label_codes_are_stable() {
        assert_eq!(OutcomeLabel::ATT.code(), 0);
        assert_eq!(OutcomeLabel::SOF.code(), 6);
        assert_eq!(OutcomeLabel::ALL.len(), OutcomeLabel::COUNT);
        for (i, l) in OutcomeLabel::ALL.iter().enumerate() {
            assert_eq!(l.code(), i);
            assert_eq!(OutcomeLabel::from_code(i).unwrap(), *l);
        }
        assert!(OutcomeLabel::from_code(7).is_err());
    }

    #[test]
    fn label_names_round_trip() {
        for l in OutcomeLabel::ALL {
            assert_eq!(OutcomeLabel::from_str(l.name()).unwrap(), l);
        }
        assert!(OutcomeLabel::from_str("BOGUS").is_err());
    }
}
