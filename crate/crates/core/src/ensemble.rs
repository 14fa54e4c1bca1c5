//! Plurality voting over independently trained classifiers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::FrameSet;
use crate::error::{invalid, Error, Result};
use crate::model::{argmax, SeMsfn};
use crate::train::{predict_probabilities, report_for, Classifier, EvalReport};

/// How a split vote is settled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Highest mean member probability among the tied classes.
    #[default]
    MeanProbability,
    LowestIndex,
}

/// On-disk description of an ensemble. Relative member paths are resolved
/// against the directory of the spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<PathBuf>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(invalid!("an ensemble needs at least 2 members, got {}", self.members.len()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for m in &mut spec.members {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::util::write_atomic(path, text.as_bytes())
    }
}

/// Decides one frame. `probs[m]` is member `m`'s probability vector.
pub fn vote(probs: &[&[f32]], tie_break: TieBreak) -> Result<usize> {
    let k = probs.first().map_or(0, |p| p.len());
    if k == 0 || probs.iter().any(|p| p.len() != k) {
        return Err(invalid!("members must supply equal-length, non-empty probability vectors"));
    }
    let mut counts = vec![0usize; k];
    for p in probs {
        counts[argmax(p)] += 1;
    }
    let top = *counts.iter().max().expect("k > 0");
    let tied: Vec<usize> = (0..k).filter(|&c| counts[c] == top).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    Ok(match tie_break {
        TieBreak::LowestIndex => tied[0],
        TieBreak::MeanProbability => {
            let means: Vec<f64> = tied
                .iter()
                .map(|&c| {
                    let mut column: Vec<f64> = probs.iter().map(|p| p[c] as f64).collect();
                    column.sort_by(f64::total_cmp);
                    column.iter().sum::<f64>() / probs.len() as f64
                })
                .collect();
            tied[argmax(&means)]
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberScore {
    pub name: String,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReport {
    pub report: EvalReport,
    pub members: Vec<MemberScore>,
}

#[derive(Clone, Debug)]
pub struct Ensemble<C> {
    members: Vec<(String, C)>,
    pub tie_break: TieBreak,
}

impl<C: Classifier> Ensemble<C> {
    pub fn new(members: Vec<(String, C)>, tie_break: TieBreak) -> Result<Self> {
        if members.len() < 2 {
            return Err(invalid!("an ensemble needs at least 2 members, got {}", members.len()));
        }
        let k = members[0].1.num_classes();
        if let Some((name, m)) = members.iter().find(|(_, m)| m.num_classes() != k) {
            return Err(Error::Incompatible(format!(
                "member `{name}` has {} classes, expected {k}",
                m.num_classes()
            )));
        }
        Ok(Self { members, tie_break })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.members[0].1.num_classes()
    }

    /// Member probabilities indexed `[member][frame][class]`.
    fn member_probabilities(&self, set: &FrameSet, indices: &[usize], batch: usize) -> Result<Vec<Vec<Vec<f32>>>> {
        if self.num_classes() != set.num_classes() {
            return Err(Error::Incompatible(format!(
                "ensemble has {} classes, data has {}",
                self.num_classes(),
                set.num_classes()
            )));
        }
        self.members
            .iter()
            .map(|(_, m)| predict_probabilities(m, set, indices, batch))
            .collect()
    }

    fn votes(&self, probs: &[Vec<Vec<f32>>], n: usize) -> Result<Vec<usize>> {
        (0..n)
            .map(|f| {
                let rows: Vec<&[f32]> = probs.iter().map(|p| p[f].as_slice()).collect();
                vote(&rows, self.tie_break)
            })
            .collect()
    }

    pub fn predict(&self, set: &FrameSet, indices: &[usize], batch: usize) -> Result<Vec<usize>> {
        let probs = self.member_probabilities(set, indices, batch)?;
        self.votes(&probs, indices.len())
    }

    /// Ensemble report plus each member's own overall accuracy.
    pub fn evaluate(
        &self,
        set: &FrameSet,
        indices: &[usize],
        batch: usize,
        confusion_snr: Option<i32>,
    ) -> Result<EnsembleReport> {
        if indices.is_empty() {
            return Err(invalid!("test set is empty"));
        }
        let probs = self.member_probabilities(set, indices, batch)?;
        let mut members = Vec::with_capacity(self.members.len());
        for ((name, _), p) in self.members.iter().zip(&probs) {
            let predicted: Vec<usize> = p.iter().map(|row| argmax(row)).collect();
            members.push(MemberScore {
                name: name.clone(),
                accuracy: report_for(set, indices, &predicted, None)?.overall_accuracy(),
            });
        }
        let predicted = self.votes(&probs, indices.len())?;
        Ok(EnsembleReport {
            report: report_for(set, indices, &predicted, confusion_snr)?,
            members,
        })
    }
}

impl Ensemble<SeMsfn> {
    /// Loads every checkpoint and checks that the members agree on classes
    /// and input length.
    pub fn from_spec(spec: &EnsembleSpec) -> Result<Self> {
        spec.validate()?;
        let members = spec
            .members
            .iter()
            .map(|p| Ok((p.display().to_string(), SeMsfn::load(p)?)))
            .collect::<Result<Vec<_>>>()?;
        let length = members[0].1.config().input_length;
        if let Some((name, m)) = members.iter().find(|(_, m)| m.config().input_length != length) {
            return Err(Error::Incompatible(format!(
                "member `{name}` expects length {}, expected {length}",
                m.config().input_length
            )));
        }
        Self::new(members, spec.tie_break)
    }
}

pub fn ensemble_predict(spec: &EnsembleSpec, set: &FrameSet, indices: &[usize], batch: usize) -> Result<Vec<usize>> {
    Ensemble::from_spec(spec)?.predict(set, indices, batch)
}

pub fn ensemble_evaluate(
    spec: &EnsembleSpec,
    set: &FrameSet,
    indices: &[usize],
    batch: usize,
    confusion_snr: Option<i32>,
) -> Result<EnsembleReport> {
    Ensemble::from_spec(spec)?.evaluate(set, indices, batch, confusion_snr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_wins() {
        let a = [0.9, 0.1];
        let b = [0.2, 0.8];
        assert_eq!(vote(&[&a, &a, &b], TieBreak::MeanProbability).unwrap(), 0);
    }

    #[test]
    fn split_vote_follows_mean_probability() {
        let a = [0.51, 0.49, 0.0];
        let b = [0.05, 0.95, 0.0];
        assert_eq!(vote(&[&a, &b], TieBreak::MeanProbability).unwrap(), 1);
        assert_eq!(vote(&[&a, &b], TieBreak::LowestIndex).unwrap(), 0);
    }

    #[test]
    fn unanimous_vote_ignores_tie_break() {
        let a = [0.1, 0.2, 0.7];
        let b = [0.3, 0.3, 0.4];
        for tb in [TieBreak::MeanProbability, TieBreak::LowestIndex] {
            assert_eq!(vote(&[&a, &b], tb).unwrap(), 2);
        }
    }

    #[test]
    fn spec_round_trips_and_rejects_single_member() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        let spec = EnsembleSpec {
            members: vec!["a.ckpt".into(), "b.ckpt".into()],
            tie_break: TieBreak::LowestIndex,
        };
        spec.save(&path).unwrap();
        let back = EnsembleSpec::load(&path).unwrap();
        assert_eq!(back.members[0], dir.path().join("a.ckpt"));
        assert_eq!(back.tie_break, TieBreak::LowestIndex);
        std::fs::write(&path, r#"{"members": ["a.ckpt"]}"#).unwrap();
        assert!(EnsembleSpec::load(&path).is_err());
    }
}
