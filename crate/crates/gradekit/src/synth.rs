//! Deterministic synthetic-data generator. Each speaker carries a latent
//! proficiency; per-part grades perturb it, and frame embeddings encode the
//! part grade through a fixed polynomial curve pushed through a seeded
//! orthonormal projection, so trained graders can recover it. Stands in for
//! proprietary exam corpora in tests and demos.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exam::{overall_grade, Dataset, FrameSequence, Grade, PartId, Split, Submission};
use crate::io::{PredPart, PredictionRecord};

/// Shape and noise parameters of the generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_calibration: usize,
    pub n_test: usize,
    /// Embedding width D; 16 keeps desk-scale runs fast.
    pub embedding_dim: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Responses per part, mirroring the exam structure: six marked short
    /// answers, eight read-aloud sentences, two single long turns, five
    /// opinion responses.
    pub responses_per_part: [usize; 5],
    /// Std of the per-part perturbation of the latent grade.
    pub part_noise_std: f64,
    /// Std of the per-frame embedding noise.
    pub frame_noise_std: f64,
    /// Per-grader prediction noise stds for grader views; graders beyond
    /// the list reuse its last entry.
    pub view_noise_std: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_train: 200,
            n_calibration: 100,
            n_test: 100,
            embedding_dim: 16,
            frames_min: 8,
            frames_max: 16,
            responses_per_part: [6, 8, 1, 1, 5],
            part_noise_std: 0.25,
            frame_noise_std: 0.1,
            view_noise_std: vec![0.3],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_calibration == 0 || self.n_test == 0 {
            return Err(Error::shape("split sizes must be at least 1".to_string()));
        }
        if self.embedding_dim < GRADE_FEATURES {
            return Err(Error::shape(format!(
                "embedding_dim must be at least {GRADE_FEATURES}"
            )));
        }
        if self.frames_min == 0 || self.frames_max < self.frames_min {
            return Err(Error::shape("invalid frame count range".to_string()));
        }
        if self.responses_per_part.contains(&0) {
            return Err(Error::shape(
                "responses per part must be at least 1".to_string(),
            ));
        }
        if self.part_noise_std < 0.0
            || self.frame_noise_std < 0.0
            || self.view_noise_std.iter().any(|&s| s < 0.0)
            || self.view_noise_std.is_empty()
        {
            return Err(Error::shape("noise stds must be non-negative".to_string()));
        }
        Ok(())
    }
}

/// Number of polynomial grade features; the embedding curve is
/// `[1, u, u^2, u^3]` with `u` the grade mapped to `[-1, 1]`.
const GRADE_FEATURES: usize = 4;

const SALT_PROJECTION: u64 = 1;
const SALT_SPEAKER: u64 = 2;
const SALT_VIEW: u64 = 3;

fn split_salt(split: Split) -> u64 {
    match split {
        Split::Train => 11,
        Split::Calibration => 12,
        Split::Test => 13,
    }
}

fn speaker_prefix(split: Split) -> &'static str {
    match split {
        Split::Train => "tr",
        Split::Calibration => "cal",
        Split::Test => "te",
    }
}

/// SplitMix64-style mixing of a seed with salt words; gives every speaker,
/// part and grader its own independent deterministic stream.
fn mix(seed: u64, salts: &[u64]) -> u64 {
    let mut z = seed;
    for &s in salts {
        z = z.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(s);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Polynomial features of a grade, on the grade axis rescaled to `[-1, 1]`.
fn grade_features(grade: f64) -> [f64; GRADE_FEATURES] {
    let u = (grade - 3.5) / 2.5;
    [1.0, u, u * u, u * u * u]
}

/// Seeded random projection with orthonormal columns mapping grade
/// features into the embedding space; fixed per (seed, part).
pub(crate) fn part_projection(spec: &SynthSpec, part: PartId) -> Vec<Vec<f64>> {
    let d = spec.embedding_dim;
    let mut rng =
        ChaCha8Rng::seed_from_u64(mix(spec.seed, &[SALT_PROJECTION, part.index() as u64]));
    let mut cols: Vec<Vec<f64>> = (0..GRADE_FEATURES)
        .map(|_| (0..d).map(|_| normal(&mut rng)).collect())
        .collect();
    // Gram-Schmidt.
    for j in 0..cols.len() {
        for i in 0..j {
            let dot: f64 = cols[j].iter().zip(&cols[i]).map(|(a, b)| a * b).sum();
            for t in 0..d {
                cols[j][t] -= dot * cols[i][t];
            }
        }
        let norm: f64 = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    cols
}

fn round_to_half(x: f64) -> f64 {
    (x * 2.0).round() / 2.0
}

fn speaker_rng(spec: &SynthSpec, split: Split, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(
        spec.seed,
        &[SALT_SPEAKER, split_salt(split), index as u64],
    ))
}

/// Draws the latent proficiency and the five reference part grades; the
/// references are the noisy latent clamped to `[1, 6]` and rounded to the
/// nearest half grade, mimicking examiner half-grades.
fn draw_part_grades(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> BTreeMap<PartId, Grade> {
    let latent = 1.0 + 5.0 * rng.gen::<f64>();
    PartId::ALL
        .into_iter()
        .map(|part| {
            let noisy = latent + spec.part_noise_std * normal(rng);
            (part, round_to_half(noisy.clamp(1.0, 6.0)))
        })
        .collect()
}

fn generate_split(spec: &SynthSpec, split: Split) -> Result<Dataset> {
    let n = match split {
        Split::Train => spec.n_train,
        Split::Calibration => spec.n_calibration,
        Split::Test => spec.n_test,
    };
    let projections: Vec<Vec<Vec<f64>>> = PartId::ALL
        .into_iter()
        .map(|p| part_projection(spec, p))
        .collect();

    let mut submissions = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = speaker_rng(spec, split, i);
        let grades = draw_part_grades(&mut rng, spec);
        let mut responses = BTreeMap::new();
        for part in PartId::ALL {
            let proj = &projections[part.index()];
            let features = grade_features(grades[&part]);
            let base: Vec<f64> = (0..spec.embedding_dim)
                .map(|t| {
                    features
                        .iter()
                        .enumerate()
                        .map(|(j, f)| f * proj[j][t])
                        .sum()
                })
                .collect();
            let mut seqs = Vec::with_capacity(spec.responses_per_part[part.index()]);
            for _ in 0..spec.responses_per_part[part.index()] {
                let t_frames = rng.gen_range(spec.frames_min..=spec.frames_max);
                let frames: Vec<Vec<f64>> = (0..t_frames)
                    .map(|_| {
                        base.iter()
                            .map(|&b| b + spec.frame_noise_std * normal(&mut rng))
                            .collect()
                    })
                    .collect();
                seqs.push(FrameSequence::new(part, &frames)?);
            }
            responses.insert(part, seqs);
        }
        let overall = overall_grade(&grades)?;
        submissions.push(Submission {
            speaker_id: format!("{}-{i:05}", speaker_prefix(split)),
            responses,
            ref_part_grades: grades,
            ref_overall: overall,
        });
    }
    Dataset::new(split, submissions)
}

/// Generates disjoint train/calibration/test datasets, deterministic in
/// `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    Ok((
        generate_split(spec, Split::Train)?,
        generate_split(spec, Split::Calibration)?,
        generate_split(spec, Split::Test)?,
    ))
}

/// Per-grader part predictions over the calibration and test populations,
/// plus the reference overall targets for both splits.
#[derive(Debug, Clone, PartialEq)]
pub struct GraderViews {
    pub grader_names: Vec<String>,
    pub calibration: Vec<PredictionRecord>,
    pub test: Vec<PredictionRecord>,
    pub calibration_targets: BTreeMap<String, Grade>,
    pub test_targets: BTreeMap<String, Grade>,
}

/// Simulates `n_graders` external grading systems: each grader's part
/// prediction is the reference part grade plus independent Gaussian noise
/// with that grader's std, so graders carry complementary errors and a
/// fitted combination provably helps in expectation. Shares the speaker
/// population (and references) of [`generate`] for the same spec.
pub fn generate_grader_views(spec: &SynthSpec, n_graders: usize) -> Result<GraderViews> {
    spec.validate()?;
    if n_graders < 2 {
        return Err(Error::Arity {
            expected: 2,
            got: n_graders,
        });
    }
    let grader_names: Vec<String> = (1..=n_graders).map(|g| format!("g{g:02}")).collect();
    let sigma = |g: usize| -> f64 {
        *spec
            .view_noise_std
            .get(g)
            .unwrap_or_else(|| spec.view_noise_std.last().unwrap())
    };

    let mut views = GraderViews {
        grader_names: grader_names.clone(),
        calibration: Vec::new(),
        test: Vec::new(),
        calibration_targets: BTreeMap::new(),
        test_targets: BTreeMap::new(),
    };
    for split in [Split::Calibration, Split::Test] {
        let n = match split {
            Split::Calibration => spec.n_calibration,
            _ => spec.n_test,
        };
        let (records, targets) = match split {
            Split::Calibration => (&mut views.calibration, &mut views.calibration_targets),
            _ => (&mut views.test, &mut views.test_targets),
        };
        for i in 0..n {
            let mut rng = speaker_rng(spec, split, i);
            let grades = draw_part_grades(&mut rng, spec);
            let speaker = format!("{}-{i:05}", speaker_prefix(split));
            targets.insert(speaker.clone(), overall_grade(&grades)?);
            for (g, name) in grader_names.iter().enumerate() {
                let mut view_rng = ChaCha8Rng::seed_from_u64(mix(
                    spec.seed,
                    &[SALT_VIEW, split_salt(split), i as u64, g as u64],
                ));
                for part in PartId::ALL {
                    records.push(PredictionRecord {
                        speaker: speaker.clone(),
                        part: PredPart::Part(part),
                        grader: name.clone(),
                        score: grades[&part] + sigma(g) * normal(&mut view_rng),
                    });
                }
            }
        }
    }
    Ok(views)
}
