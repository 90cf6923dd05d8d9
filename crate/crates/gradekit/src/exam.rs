//! Domain model: exam parts, grades, frame sequences, submissions, datasets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A proficiency score on the 1-6 scale. Reference grades lie in `[1, 6]`;
/// predicted grades are unclipped and may fall outside that range.
pub type Grade = f64;

/// The five sections of the speaking exam, each eliciting a different
/// response type (short answers, read-aloud, long turns, opinion responses).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartId {
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl PartId {
    pub const ALL: [PartId; 5] = [PartId::P1, PartId::P2, PartId::P3, PartId::P4, PartId::P5];

    pub fn index(self) -> usize {
        match self {
            PartId::P1 => 0,
            PartId::P2 => 1,
            PartId::P3 => 2,
            PartId::P4 => 3,
            PartId::P5 => 4,
        }
    }
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index() + 1)
    }
}

impl FromStr for PartId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "P1" | "p1" => Ok(PartId::P1),
            "P2" | "p2" => Ok(PartId::P2),
            "P3" | "p3" => Ok(PartId::P3),
            "P4" | "p4" => Ok(PartId::P4),
            "P5" | "p5" => Ok(PartId::P5),
            other => Err(format!("unknown part {other:?} (expected P1..P5)")),
        }
    }
}

/// Which role a dataset plays in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Calibration,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Calibration => write!(f, "calibration"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Variable-length sequence of per-frame embedding vectors for one response,
/// stored row-major as a `T x D` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    part: PartId,
    num_frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FrameSequence {
    /// Builds a sequence from frame rows, validating that there is at least
    /// one frame, all rows share one width, and every entry is finite.
    pub fn new(part: PartId, frames: &[Vec<f64>]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        let dim = frames[0].len();
        if dim == 0 {
            return Err(Error::shape("frame width must be at least 1"));
        }
        let mut data = Vec::with_capacity(frames.len() * dim);
        for (i, row) in frames.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::shape(format!(
                    "frame {i} has width {}, expected {dim}",
                    row.len()
                )));
            }
            for &x in row {
                if !x.is_finite() {
                    return Err(Error::shape(format!("non-finite entry in frame {i}")));
                }
                data.push(x);
            }
        }
        Ok(FrameSequence {
            part,
            num_frames: frames.len(),
            dim,
            data,
        })
    }

    pub fn part(&self) -> PartId {
        self.part
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// One speaker's responses and reference grades across the exam parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub speaker_id: String,
    pub responses: BTreeMap<PartId, Vec<FrameSequence>>,
    pub ref_part_grades: BTreeMap<PartId, Grade>,
    pub ref_overall: Grade,
}

impl Submission {
    /// Checks the structural invariants: present parts carry at least one
    /// response, grades are finite and in `[1, 6]`, and when all five part
    /// grades are present the overall grade equals their mean within 1e-9.
    pub fn validate(&self) -> Result<()> {
        for (&part, responses) in &self.responses {
            if responses.is_empty() {
                return Err(Error::shape(format!(
                    "speaker {:?}: part {part} present with zero responses",
                    self.speaker_id
                )));
            }
            for r in responses {
                if r.part() != part {
                    return Err(Error::shape(format!(
                        "speaker {:?}: response tagged {} filed under {part}",
                        self.speaker_id,
                        r.part()
                    )));
                }
            }
        }
        for (&part, &g) in &self.ref_part_grades {
            if !g.is_finite() || !(1.0..=6.0).contains(&g) {
                return Err(Error::shape(format!(
                    "speaker {:?}: reference grade {g} for {part} outside [1, 6]",
                    self.speaker_id
                )));
            }
        }
        if !self.ref_overall.is_finite() {
            return Err(Error::InvalidScore(self.ref_overall));
        }
        if self.ref_part_grades.len() == PartId::ALL.len() {
            let mean = overall_grade(&self.ref_part_grades)?;
            if (mean - self.ref_overall).abs() > 1e-9 {
                return Err(Error::shape(format!(
                    "speaker {:?}: overall grade {} differs from part mean {}",
                    self.speaker_id, self.ref_overall, mean
                )));
            }
        }
        Ok(())
    }
}

/// An immutable collection of submissions playing one pipeline role.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub submissions: Vec<Submission>,
}

impl Dataset {
    pub fn new(split: Split, submissions: Vec<Submission>) -> Result<Self> {
        let ds = Dataset { split, submissions };
        ds.validate()?;
        Ok(ds)
    }

    /// Validates every submission and speaker-id uniqueness within the split.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for sub in &self.submissions {
            sub.validate()?;
            if !seen.insert(sub.speaker_id.as_str()) {
                return Err(Error::shape(format!(
                    "duplicate speaker id {:?} within split {}",
                    sub.speaker_id, self.split
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.submissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submissions.is_empty()
    }

    /// Reference overall grade per speaker, keyed by speaker id.
    pub fn overall_targets(&self) -> BTreeMap<String, Grade> {
        self.submissions
            .iter()
            .map(|s| (s.speaker_id.clone(), s.ref_overall))
            .collect()
    }
}

/// Mean of the five part grades. Each part contributes equally to the exam,
/// so the overall grade is their arithmetic average.
pub fn overall_grade(part_grades: &BTreeMap<PartId, Grade>) -> Result<Grade> {
    let mut sum = 0.0;
    for part in PartId::ALL {
        let g = part_grades.get(&part).ok_or(Error::MissingPart(part))?;
        if !g.is_finite() {
            return Err(Error::InvalidScore(*g));
        }
        sum += g;
    }
    Ok(sum / PartId::ALL.len() as f64)
}

const CEFR_LABELS: [&str; 6] = ["A1", "A2", "B1", "B2", "C1", "C2"];

/// Maps a score to the CEFR band of its nearest integer grade, clamping to
/// the 1-6 scale. Ties at .5 round half-up.
pub fn cefr_label(score: Grade) -> Result<&'static str> {
    if !score.is_finite() {
        return Err(Error::InvalidScore(score));
    }
    let nearest = score.round().clamp(1.0, 6.0) as usize;
    Ok(CEFR_LABELS[nearest - 1])
}
