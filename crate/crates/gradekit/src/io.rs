//! On-disk formats: JSON Lines datasets, prediction CSV files, and JSON
//! documents whose floats are written with 17 significant digits so that
//! 64-bit values round-trip losslessly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exam::{overall_grade, Dataset, FrameSequence, PartId, Split, Submission};

/// JSON formatter that prints every float with 17 significant digits.
///
/// `{:.16e}` emits one digit before the decimal point and sixteen after,
/// which is always enough to reproduce the exact 64-bit value on parse.
pub struct Precise17;

impl serde_json::ser::Formatter for Precise17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes `value` as JSON with 17-significant-digit floats.
pub fn to_json_precise<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise17);
    value.serialize(&mut ser)?;
    Ok(buf)
}

/// Writes `value` to `path` as JSON with 17-significant-digit floats.
pub fn write_json_precise<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let bytes = to_json_precise(value)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One line of the dataset file: a single response with its grades.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResponseRecord {
    speaker: String,
    part: PartId,
    frames: Vec<Vec<f64>>,
    ref_grade: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_overall: Option<f64>,
}

/// Loads a JSON-lines dataset. Frame matrices are validated (rectangular,
/// finite), records are grouped into submissions by speaker in order of
/// first appearance, and overall grades are recomputed from part grades
/// when absent or inconsistent beyond 1e-6.
///
/// The dataset split is inferred from the file stem (`train`, `calibration`,
/// `test`); unrecognized names default to `test`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);

    struct Partial {
        responses: BTreeMap<PartId, Vec<FrameSequence>>,
        ref_part_grades: BTreeMap<PartId, f64>,
        ref_overall: Option<f64>,
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_speaker: BTreeMap<String, Partial> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResponseRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e.to_string()))?;
        let seq = FrameSequence::new(rec.part, &rec.frames).map_err(|e| match e {
            Error::Shape(msg) => Error::shape(format!("line {line_no}: {msg}")),
            Error::EmptySequence => Error::parse(line_no, "record has no frames"),
            other => other,
        })?;
        if !rec.ref_grade.is_finite() {
            return Err(Error::parse(line_no, "ref_grade is not finite"));
        }

        if !by_speaker.contains_key(&rec.speaker) {
            order.push(rec.speaker.clone());
            by_speaker.insert(
                rec.speaker.clone(),
                Partial {
                    responses: BTreeMap::new(),
                    ref_part_grades: BTreeMap::new(),
                    ref_overall: None,
                },
            );
        }
        let partial = by_speaker.get_mut(&rec.speaker).unwrap();
        if let Some(&existing) = partial.ref_part_grades.get(&rec.part) {
            if existing != rec.ref_grade {
                return Err(Error::parse(
                    line_no,
                    format!(
                        "conflicting ref_grade for speaker {:?} part {}: {existing} vs {}",
                        rec.speaker, rec.part, rec.ref_grade
                    ),
                ));
            }
        }
        partial.ref_part_grades.insert(rec.part, rec.ref_grade);
        if let Some(o) = rec.ref_overall {
            partial.ref_overall = Some(o);
        }
        partial.responses.entry(rec.part).or_default().push(seq);
    }

    let mut submissions = Vec::with_capacity(order.len());
    for speaker in order {
        let partial = by_speaker.remove(&speaker).unwrap();
        let overall = resolve_overall(&speaker, &partial.ref_part_grades, partial.ref_overall)?;
        submissions.push(Submission {
            speaker_id: speaker,
            responses: partial.responses,
            ref_part_grades: partial.ref_part_grades,
            ref_overall: overall,
        });
    }

    Dataset::new(infer_split(path), submissions)
}

/// Picks the stored overall grade when consistent with the part grades,
/// recomputing it (with a warning) when the two disagree beyond 1e-6.
fn resolve_overall(
    speaker: &str,
    part_grades: &BTreeMap<PartId, f64>,
    stored: Option<f64>,
) -> Result<f64> {
    let computed = if part_grades.len() == PartId::ALL.len() {
        Some(overall_grade(part_grades)?)
    } else {
        None
    };
    match (stored, computed) {
        (Some(s), Some(c)) => {
            if (s - c).abs() > 1e-6 {
                log::warn!(
                    "speaker {speaker:?}: stored overall {s} disagrees with part mean {c}; using the mean"
                );
                Ok(c)
            } else {
                Ok(s)
            }
        }
        (Some(s), None) => Ok(s),
        (None, Some(c)) => Ok(c),
        (None, None) => Err(Error::parse(
            0,
            format!("speaker {speaker:?} has neither all five part grades nor an overall grade"),
        )),
    }
}

fn infer_split(path: &Path) -> Split {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if stem.starts_with("train") {
        Split::Train
    } else if stem.starts_with("cal") || stem.starts_with("dev") {
        Split::Calibration
    } else {
        Split::Test
    }
}

/// Writes a dataset as JSON lines, one record per response, submissions in
/// dataset order and parts in P1..P5 order. Floats carry 17 significant
/// digits, so `load_dataset(save_dataset(ds))` reproduces `ds` bit for bit.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    for sub in &dataset.submissions {
        for (&part, responses) in &sub.responses {
            let ref_grade = *sub.ref_part_grades.get(&part).ok_or_else(|| {
                Error::shape(format!(
                    "speaker {:?}: responses for {part} but no reference grade",
                    sub.speaker_id
                ))
            })?;
            for seq in responses {
                let rec = ResponseRecord {
                    speaker: sub.speaker_id.clone(),
                    part,
                    frames: seq.frames().map(|f| f.to_vec()).collect(),
                    ref_grade,
                    ref_overall: Some(sub.ref_overall),
                };
                let line = to_json_precise(&rec)?;
                out.write_all(&line)
                    .and_then(|_| out.write_all(b"\n"))
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
            }
        }
    }
    out.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Column a prediction row refers to: a single exam part or the overall grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PredPart {
    Part(PartId),
    Overall,
}

impl fmt::Display for PredPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredPart::Part(p) => write!(f, "{p}"),
            PredPart::Overall => write!(f, "overall"),
        }
    }
}

impl FromStr for PredPart {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("overall") {
            Ok(PredPart::Overall)
        } else {
            s.parse::<PartId>().map(PredPart::Part)
        }
    }
}

/// One row of a predictions CSV: `speaker,part,grader,score`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub speaker: String,
    pub part: PredPart,
    pub grader: String,
    pub score: f64,
}

/// Writes prediction rows as CSV with the `speaker,part,grader,score` header.
pub fn save_predictions(records: &[PredictionRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["speaker", "part", "grader", "score"])?;
    for r in records {
        w.write_record([
            r.speaker.as_str(),
            &r.part.to_string(),
            r.grader.as_str(),
            &format!("{}", r.score),
        ])?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a predictions CSV, validating the header and each row.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let header = rdr.headers()?.clone();
    let expected = ["speaker", "part", "grader", "score"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            1,
            format!("bad predictions header {header:?}, expected speaker,part,grader,score"),
        ));
    }
    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line_no = idx + 2;
        let row = row?;
        if row.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 fields, got {}", row.len()),
            ));
        }
        let part: PredPart = row[1]
            .parse()
            .map_err(|e: String| Error::parse(line_no, e))?;
        let score: f64 = row[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad score {:?}", &row[3])))?;
        if !score.is_finite() {
            return Err(Error::parse(line_no, "score is not finite"));
        }
        records.push(PredictionRecord {
            speaker: row[0].to_string(),
            part,
            grader: row[2].to_string(),
            score,
        });
    }
    Ok(records)
}
