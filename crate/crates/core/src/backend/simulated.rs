//! A deterministic, biased pairwise judge for mechanism tests.
//!
//! The judge decides with `p(choose A) = sigmoid(s(I) * (gamma * disc(I) *
//! (q_A - q_B) + beta + delta(I) + noise))` where `q` is the planted
//! per-candidate quality, `beta` is attached to the A slot, `delta(I)` is a
//! per-instruction offset, `s(I)` a per-instruction sharpness, and the
//! noise is a seeded function of the full prompt. `disc(I)` optionally
//! degrades quality discrimination as `|delta|` grows, so skewed
//! instructions also judge worse, not just unfairly.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{ChatBackend, ChatRequest, ChatResponse};
use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DeltaModel {
    /// No instruction bias.
    None,
    /// Seeded hash of the instruction text, uniform in [-range, range].
    Hash { seed: u64, range: f64 },
    /// Explicit per-instruction-text offsets; unknown texts get 0.
    Table { values: BTreeMap<String, f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SharpnessModel {
    Fixed { value: f64 },
    /// Seeded hash of the instruction text, uniform in [min, max].
    Hash { seed: u64, min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedEvaluatorParams {
    /// Quality sensitivity.
    pub gamma: f64,
    /// Added to the A-slot logit regardless of content.
    pub position_bias: f64,
    pub delta: DeltaModel,
    pub sharpness: SharpnessModel,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    /// disc(I) = 1 / (1 + discrimination_penalty * |delta(I)|).
    pub discrimination_penalty: f64,
}

impl Default for SimulatedEvaluatorParams {
    fn default() -> Self {
        SimulatedEvaluatorParams {
            gamma: 1.0,
            position_bias: 0.0,
            delta: DeltaModel::None,
            sharpness: SharpnessModel::Fixed { value: 1.0 },
            noise_sigma: 0.0,
            noise_seed: 0,
            discrimination_penalty: 0.0,
        }
    }
}

fn hash64(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn uniform_from_hash(parts: &[&str], lo: f64, hi: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(parts));
    rng.gen_range(lo..hi)
}

impl SimulatedEvaluatorParams {
    pub fn delta_of(&self, instruction_text: &str) -> f64 {
        match &self.delta {
            DeltaModel::None => 0.0,
            DeltaModel::Hash { seed, range } => uniform_from_hash(
                &["delta", &seed.to_string(), instruction_text],
                -*range,
                *range,
            ),
            DeltaModel::Table { values } => {
                values.get(instruction_text).copied().unwrap_or(0.0)
            }
        }
    }

    pub fn sharpness_of(&self, instruction_text: &str) -> f64 {
        match &self.sharpness {
            SharpnessModel::Fixed { value } => *value,
            SharpnessModel::Hash { seed, min, max } => {
                uniform_from_hash(&["sharp", &seed.to_string(), instruction_text], *min, *max)
            }
        }
    }

    fn noise_of(&self, prompt: &str) -> f64 {
        if self.noise_sigma == 0.0 {
            return 0.0;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(hash64(&["noise", &self.noise_seed.to_string(), prompt]));
        let z: f64 = rng.sample(StandardNormal);
        self.noise_sigma * z
    }
}

pub struct SimulatedBackend {
    params: SimulatedEvaluatorParams,
    /// Planted quality per candidate text; unknown texts (including the
    /// content-free "[N/A]") score 0.
    qualities: BTreeMap<String, f64>,
}

struct ParsedPairPrompt<'a> {
    first: &'a str,
    second: &'a str,
    instruction: &'a str,
}

const MARKER_SETS: &[(&str, &str, &str)] = &[
    ("\n\nSummary A: ", "\n\nSummary B: ", "\n\nQuestion: "),
    ("\n\nResponse Candidate A: ", "\n\nResponse Candidate B: ", "\n\nQuestion: "),
];

fn parse_pair_prompt(prompt: &str) -> Option<ParsedPairPrompt<'_>> {
    for (ma, mb, mq) in MARKER_SETS {
        let (a_start, rest) = match prompt.find(ma) {
            Some(i) => (i + ma.len(), &prompt[i + ma.len()..]),
            None => continue,
        };
        let b_rel = rest.find(mb)?;
        let first = &prompt[a_start..a_start + b_rel];
        let after_b = &rest[b_rel + mb.len()..];
        let q_rel = after_b.find(mq)?;
        let second = &after_b[..q_rel];
        let after_q = &after_b[q_rel + mq.len()..];
        let instruction = after_q.strip_suffix("\nAnswer:").unwrap_or(after_q);
        return Some(ParsedPairPrompt { first, second, instruction });
    }
    None
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SimulatedBackend {
    pub fn new(params: SimulatedEvaluatorParams) -> Self {
        SimulatedBackend { params, qualities: BTreeMap::new() }
    }

    pub fn with_quality(mut self, candidate_text: impl Into<String>, quality: f64) -> Self {
        self.qualities.insert(candidate_text.into(), quality);
        self
    }

    pub fn set_qualities(&mut self, qualities: BTreeMap<String, f64>) {
        self.qualities = qualities;
    }

    /// Plant qualities from the dataset's human scores for one aspect,
    /// keyed by candidate text.
    pub fn from_dataset_scores(
        params: SimulatedEvaluatorParams,
        dataset: &Dataset,
        aspect: &str,
    ) -> Result<Self> {
        let mut qualities = BTreeMap::new();
        for item in &dataset.items {
            let scores = item.aspect_scores.get(aspect).ok_or_else(|| {
                Error::Precondition(format!(
                    "item '{}' carries no scores for aspect '{}'",
                    item.id, aspect
                ))
            })?;
            for cand in &item.candidates {
                qualities.insert(cand.text.clone(), scores[&cand.id]);
            }
        }
        Ok(SimulatedBackend { params, qualities })
    }

    pub fn params(&self) -> &SimulatedEvaluatorParams {
        &self.params
    }

    pub fn qualities(&self) -> &BTreeMap<String, f64> {
        &self.qualities
    }

    fn quality(&self, text: &str) -> f64 {
        self.qualities.get(text).copied().unwrap_or(0.0)
    }

    /// Probability that the A slot wins for a rendered pairwise prompt.
    pub fn choose_a_probability(&self, prompt: &str) -> Option<f64> {
        let parsed = parse_pair_prompt(prompt)?;
        let p = &self.params;
        let delta = p.delta_of(parsed.instruction);
        let sharp = p.sharpness_of(parsed.instruction);
        let disc = 1.0 / (1.0 + p.discrimination_penalty * delta.abs());
        let gap = self.quality(parsed.first) - self.quality(parsed.second);
        let logit = sharp
            * (p.gamma * disc * gap + p.position_bias + delta + p.noise_of(prompt));
        Some(sigmoid(logit))
    }
}

impl ChatBackend for SimulatedBackend {
    fn id(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(&self.params).expect("params serialize"));
        hasher.update(serde_json::to_string(&self.qualities).expect("qualities serialize"));
        format!("simulated:{:x}", hasher.finalize())
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let prompt = request
            .messages
            .last()
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let p_a = self.choose_a_probability(prompt).ok_or_else(|| {
            Error::Protocol("simulated evaluator received a non-pairwise prompt".into())
        })?;
        let p_a = p_a.clamp(1e-12, 1.0 - 1e-12);
        let mut logprobs = BTreeMap::new();
        logprobs.insert("A".to_string(), p_a.ln());
        logprobs.insert("B".to_string(), (1.0 - p_a).ln());
        Ok(ChatResponse {
            text: if p_a >= 0.5 { "A".into() } else { "B".into() },
            first_token_logprobs: Some(logprobs),
        })
    }
}

/// Spearman agreement of the simulated judge against the dataset's planted
/// scores for one aspect. Deterministic given the params.
pub fn simulated_agreement_oracle(
    params: &SimulatedEvaluatorParams,
    dataset: &Dataset,
    aspect: &str,
) -> Result<f64> {
    let backend = SimulatedBackend::from_dataset_scores(params.clone(), dataset, aspect)?;
    let spec = dataset
        .aspect(aspect)
        .ok_or_else(|| Error::Precondition(format!("unknown aspect '{aspect}'")))?;
    let template = crate::judge::PromptTemplate::summarization();
    let report = crate::metaeval::agreement(
        &spec.seed_instruction,
        dataset,
        aspect,
        &template,
        &backend,
        false,
    )?;
    Ok(report.spearman_rho)
}
