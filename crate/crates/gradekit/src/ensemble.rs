//! Ensembles of independently seeded heads for one exam part; the ensemble
//! prediction is the uniform mean of member predictions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exam::{overall_grade, Dataset, Grade, PartId, Submission};
use crate::net::{load_model, mean_pool, save_model, RegressionHead};
use crate::optim::{train, TrainConfig};

/// Default number of ensemble members.
pub const DEFAULT_MEMBERS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GraderEnsemble {
    pub part: PartId,
    pub members: Vec<RegressionHead>,
    pub member_seeds: Vec<u64>,
}

/// Worker-thread cap for ensemble training: the `GRADEKIT_THREADS`
/// environment variable when set, otherwise the machine's parallelism.
fn worker_cap() -> usize {
    std::env::var("GRADEKIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Trains `k` members with seeds `base_seed..base_seed+k-1` and otherwise
/// identical configuration. Members are independent, so they may train on
/// worker threads; results are collected by member index, making the
/// ensemble independent of scheduling.
pub fn train_ensemble(
    dataset: &Dataset,
    cfg: &TrainConfig,
    k: usize,
    base_seed: u64,
) -> Result<GraderEnsemble> {
    Ok(train_ensemble_with_history(dataset, cfg, k, base_seed)?.0)
}

/// [`train_ensemble`] that also returns each member's per-epoch training
/// loss history.
pub fn train_ensemble_with_history(
    dataset: &Dataset,
    cfg: &TrainConfig,
    k: usize,
    base_seed: u64,
) -> Result<(GraderEnsemble, Vec<Vec<f64>>)> {
    if k == 0 {
        return Err(Error::Arity {
            expected: 1,
            got: 0,
        });
    }
    let member_seeds: Vec<u64> = (0..k as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let workers = worker_cap().min(k);

    type MemberResult = Result<(RegressionHead, Vec<f64>)>;
    let mut results: Vec<Option<MemberResult>> = Vec::new();
    results.resize_with(k, || None);

    if workers <= 1 {
        for (i, &seed) in member_seeds.iter().enumerate() {
            let mut member_cfg = cfg.clone();
            member_cfg.seed = seed;
            results[i] = Some(train(dataset, &member_cfg));
        }
    } else {
        std::thread::scope(|scope| {
            let (tx, rx) = std::sync::mpsc::channel();
            for chunk in member_seeds
                .iter()
                .enumerate()
                .collect::<Vec<_>>()
                .chunks(k.div_ceil(workers))
            {
                let tx = tx.clone();
                let chunk: Vec<(usize, u64)> = chunk.iter().map(|&(i, &s)| (i, s)).collect();
                scope.spawn(move || {
                    for (i, seed) in chunk {
                        let mut member_cfg = cfg.clone();
                        member_cfg.seed = seed;
                        let _ = tx.send((i, train(dataset, &member_cfg)));
                    }
                });
            }
            drop(tx);
            for (i, r) in rx {
                results[i] = Some(r);
            }
        });
    }

    let mut members = Vec::with_capacity(k);
    let mut histories = Vec::with_capacity(k);
    for r in results {
        let (head, history) = r.expect("every member index is trained")?;
        members.push(head);
        histories.push(history);
    }
    Ok((
        GraderEnsemble {
            part: cfg.part,
            members,
            member_seeds,
        },
        histories,
    ))
}

/// Ensemble grade for one submission's responses to the ensemble's part:
/// member predictions are averaged per response, then responses are
/// averaged with equal weight.
pub fn predict_part(ensemble: &GraderEnsemble, submission: &Submission) -> Result<Grade> {
    let responses = submission
        .responses
        .get(&ensemble.part)
        .filter(|r| !r.is_empty())
        .ok_or(Error::MissingPart(ensemble.part))?;
    let mut response_sum = 0.0;
    for seq in responses {
        let x = mean_pool(seq);
        let mut member_sum = 0.0;
        for member in &ensemble.members {
            member_sum += member.predict(&x)?;
        }
        response_sum += member_sum / ensemble.members.len() as f64;
    }
    Ok(response_sum / responses.len() as f64)
}

/// Scores every part with its ensemble and averages the five part scores
/// into the overall grade.
pub fn predict_submission(
    ensembles: &BTreeMap<PartId, GraderEnsemble>,
    submission: &Submission,
) -> Result<(BTreeMap<PartId, Grade>, Grade)> {
    let mut part_scores = BTreeMap::new();
    for part in PartId::ALL {
        let ens = ensembles.get(&part).ok_or(Error::MissingPart(part))?;
        part_scores.insert(part, predict_part(ens, submission)?);
    }
    let overall = overall_grade(&part_scores)?;
    Ok((part_scores, overall))
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleManifest {
    part: PartId,
    members: usize,
    member_seeds: Vec<u64>,
}

/// Writes the ensemble as a directory: `ensemble.json` plus one model file
/// per member.
pub fn save_ensemble(ensemble: &GraderEnsemble, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = EnsembleManifest {
        part: ensemble.part,
        members: ensemble.members.len(),
        member_seeds: ensemble.member_seeds.clone(),
    };
    let bytes = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(dir.join("ensemble.json"), bytes)
        .map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (i, member) in ensemble.members.iter().enumerate() {
        save_model(member, &dir.join(format!("member_{i:02}.json")))?;
    }
    Ok(())
}

pub fn load_ensemble(dir: &Path) -> Result<GraderEnsemble> {
    let manifest_path = dir.join("ensemble.json");
    let bytes = std::fs::read(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: EnsembleManifest = serde_json::from_slice(&bytes)?;
    let mut members = Vec::with_capacity(manifest.members);
    for i in 0..manifest.members {
        members.push(load_model(&dir.join(format!("member_{i:02}.json")))?);
    }
    if members.is_empty() {
        return Err(Error::shape("ensemble has no members".to_string()));
    }
    let arch = &members[0].architecture;
    if members.iter().any(|m| &m.architecture != arch) {
        return Err(Error::shape(
            "ensemble members disagree on architecture".to_string(),
        ));
    }
    Ok(GraderEnsemble {
        part: manifest.part,
        members,
        member_seeds: manifest.member_seeds,
    })
}
