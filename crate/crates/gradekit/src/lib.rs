//! Grading engine for multi-part spoken-language proficiency exams.
//!
//! The pipeline mirrors a production speaking-assessment stack operating on
//! pre-computed frame embeddings: per-part regression heads trained over
//! mean-pooled embedding sequences, ensembles of independently seeded heads,
//! per-part linear combination of one or more grader families fitted by
//! ordinary least squares on a calibration split, and a five-metric
//! evaluation report. A deterministic synthetic-data generator stands in for
//! proprietary exam corpora so the whole pipeline can be exercised end to end
//! at desk scale.

pub mod cli;
pub mod combine;
pub mod ensemble;
pub mod error;
pub mod exam;
pub mod io;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod synth;

pub use error::{Error, Result};
pub use exam::{cefr_label, overall_grade, Dataset, FrameSequence, Grade, PartId, Submission};
