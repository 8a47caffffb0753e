//! The four zero-shot objective functions, each mapping judging records
//! for an instruction to a scalar where higher is better and 0 is the
//! attainable maximum.

use serde::{Deserialize, Serialize};

use crate::backend::ChatBackend;
use crate::error::{Error, Result};
use crate::judge::{
    self, JudgeOptions, PreferenceDistribution, PreferenceOutcome, PromptTemplate,
};
use crate::model::{Instruction, PairTask, UnlabeledDataset};

/// Floor applied to probabilities before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Fairness,
    Confidence,
    CfConfidence,
    Calibration,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 4] = [
        ObjectiveKind::Fairness,
        ObjectiveKind::Confidence,
        ObjectiveKind::CfConfidence,
        ObjectiveKind::Calibration,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::Fairness => "fairness",
            ObjectiveKind::Confidence => "confidence",
            ObjectiveKind::CfConfidence => "cf_confidence",
            ObjectiveKind::Calibration => "calibration",
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fairness" => Ok(ObjectiveKind::Fairness),
            "confidence" => Ok(ObjectiveKind::Confidence),
            "cf_confidence" | "cf-confidence" => Ok(ObjectiveKind::CfConfidence),
            "calibration" => Ok(ObjectiveKind::Calibration),
            other => Err(Error::Validation(format!("unknown objective kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveScore {
    pub instruction_id: String,
    pub kind: ObjectiveKind,
    pub value: f64,
    pub n_pairs: usize,
}

/// Negated mean absolute deviation of the decision rates from the uniform
/// prior. 0 iff the rates are exactly uniform; lower bound -(J-1)/J.
pub fn fairness(dist: &PreferenceDistribution) -> f64 {
    let j = dist.rates.len() as f64;
    let prior = 1.0 / j;
    -dist.rates.values().map(|r| (prior - r).abs()).sum::<f64>() / j
}

fn entropy_term(outcome: &PreferenceOutcome) -> f64 {
    outcome
        .probs
        .values()
        .map(|&p| if p <= 0.0 { 0.0 } else { p * p.max(PROB_FLOOR).ln() })
        .sum()
}

/// Mean negative entropy of the per-outcome label distributions. 0 for
/// deterministic outcomes, -ln(J) for uniform ones.
pub fn confidence(outcomes: &[PreferenceOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Precondition("no outcomes".into()));
    }
    Ok(outcomes.iter().map(entropy_term).sum::<f64>() / outcomes.len() as f64)
}

/// Content-free probe: negative entropy of the label distribution for a
/// render with every content slot blanked, shifted by ln(J) so that the
/// uniform (least template-biased) distribution scores 0 and any
/// overconfident one scores below. The unshifted negative entropy is
/// recoverable as `value - ln(J)`.
pub fn cf_confidence(
    instruction: &Instruction,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    verbalizer: &[String],
) -> Result<f64> {
    let context = judge::render_content_free(instruction, template);
    let probs = judge::label_probabilities(&context, verbalizer, backend)?;
    let neg_entropy: f64 = probs
        .values()
        .map(|&p| if p <= 0.0 { 0.0 } else { p * p.max(PROB_FLOOR).ln() })
        .sum();
    let j = verbalizer.len() as f64;
    Ok(-(neg_entropy + j.ln()))
}

/// Negated absolute mean log-ratio between the two labels across outcomes.
pub fn calibration(outcomes: &[PreferenceOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Precondition("no outcomes".into()));
    }
    let mut sum = 0.0;
    for outcome in outcomes {
        if outcome.probs.len() != 2 {
            return Err(Error::Precondition(
                "calibration is defined for binary verbalizers".into(),
            ));
        }
        let mut it = outcome.probs.values();
        let pa = it.next().unwrap().max(PROB_FLOOR);
        let pb = it.next().unwrap().max(PROB_FLOOR);
        sum += pa.ln() - pb.ln();
    }
    Ok(-(sum / outcomes.len() as f64).abs())
}

/// Score one instruction under one objective on a fixed pair sample.
/// Deterministic given a cached or simulated backend.
pub fn score_instruction(
    instruction: &Instruction,
    kind: ObjectiveKind,
    dataset: &UnlabeledDataset,
    pairs: &[PairTask],
    backend: &dyn ChatBackend,
    template: &PromptTemplate,
    options: JudgeOptions,
) -> Result<ObjectiveScore> {
    let value = match kind {
        ObjectiveKind::CfConfidence => {
            let verbalizer = dataset
                .aspect(&instruction.aspect)
                .map(|a| a.verbalizer.clone())
                .unwrap_or_else(|| vec!["A".to_string(), "B".to_string()]);
            cf_confidence(instruction, template, backend, &verbalizer)?
        }
        _ => {
            if pairs.is_empty() {
                return Err(Error::Precondition("empty pair list".into()));
            }
            let outcomes =
                judge::collect_outcomes(instruction, pairs, dataset, template, backend, options)?;
            match kind {
                ObjectiveKind::Fairness => {
                    let verbalizer: Vec<String> = outcomes[0].probs.keys().cloned().collect();
                    let dist = judge::distribution_from_outcomes(
                        &instruction.id,
                        &verbalizer,
                        &outcomes,
                    )?;
                    fairness(&dist)
                }
                ObjectiveKind::Confidence => confidence(&outcomes)?,
                ObjectiveKind::Calibration => calibration(&outcomes)?,
                ObjectiveKind::CfConfidence => unreachable!(),
            }
        }
    };
    Ok(ObjectiveScore {
        instruction_id: instruction.id.clone(),
        kind,
        value,
        n_pairs: if kind == ObjectiveKind::CfConfidence { 1 } else { pairs.len() },
    })
}
