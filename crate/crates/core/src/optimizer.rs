//! Greedy zero-shot prompt optimization: an LLM paraphraser proposes
//! instruction candidates, each is scored on a fixed pair sample, and the
//! best candidate becomes the next incumbent.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatRequest};
use crate::error::{Error, Result};
use crate::judge::{self, JudgeOptions, PromptTemplate};
use crate::metaeval;
use crate::model::{Dataset, Instruction, PairTask, UnlabeledDataset};
use crate::objectives::{self, ObjectiveKind, ObjectiveScore};

pub const PARAPHRASE_TEMPLATE: &str = include_str!("../templates/paraphrase.txt");

const PARAPHRASE_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub epochs: u32,
    pub population: u32,
    pub pairs_per_instruction: usize,
    pub objective: ObjectiveKind,
    pub paraphraser_temperature: f64,
    /// Include the incumbent in each epoch's selection pool so the best
    /// objective value never regresses. `false` selects from the new
    /// candidates only.
    pub elitism: bool,
    pub seed: u64,
    pub debias: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            epochs: 5,
            population: 5,
            pairs_per_instruction: 2400,
            objective: ObjectiveKind::Fairness,
            paraphraser_temperature: 0.9,
            elitism: true,
            seed: 0,
            debias: false,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.population < 1 || self.pairs_per_instruction < 1 {
            return Err(Error::Validation(
                "epochs, population, and pairs_per_instruction must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Default per-instruction sampling budget by benchmark layout.
pub fn default_pairs_budget(dataset_name: &str) -> usize {
    let name = dataset_name.to_ascii_lowercase();
    if name.contains("summeval") {
        2400
    } else if name.contains("newsroom") || name.contains("news_room") || name.contains("news room")
    {
        840
    } else if name.contains("topicalchat") || name.contains("topical_chat") {
        1200
    } else {
        2400
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub epoch: u32,
    pub index: u32,
    pub instruction: Instruction,
    pub objective: ObjectiveScore,
    pub rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Candidate(ScoredCandidate),
    EpochEnd { epoch: u32, incumbent_id: String, incumbent_value: f64 },
    Summary { best: ScoredCandidate, initial_value: f64, final_value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub candidates: Vec<ScoredCandidate>,
    pub incumbent_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub epochs: Vec<EpochRecord>,
    pub initial: ScoredCandidate,
    pub best: ScoredCandidate,
}

/// Line-delimited trace sink with optional persistence. Opening an
/// existing file replays its records, which lets an interrupted run resume
/// at the first unscored candidate.
pub struct TraceLog {
    writer: Option<BufWriter<std::fs::File>>,
    resume: Vec<TraceLine>,
    emitted: Vec<TraceLine>,
}

impl TraceLog {
    pub fn in_memory() -> Self {
        TraceLog { writer: None, resume: Vec::new(), emitted: Vec::new() }
    }

    pub fn open_append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut resume = Vec::new();
        if path.exists() {
            let file = std::fs::File::open(path)?;
            for line in std::io::BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                resume.push(serde_json::from_str(&line)?);
            }
        }
        let writer = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(TraceLog { writer: Some(writer), resume, emitted: Vec::new() })
    }

    pub fn resumed_lines(&self) -> &[TraceLine] {
        &self.resume
    }

    fn emit(&mut self, line: TraceLine) -> Result<()> {
        if let Some(w) = &mut self.writer {
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.emitted.push(line);
        Ok(())
    }

    fn resumed_candidate(&self, epoch: u32, index: u32) -> Option<&ScoredCandidate> {
        self.resume.iter().find_map(|l| match l {
            TraceLine::Candidate(c) if c.epoch == epoch && c.index == index => Some(c),
            _ => None,
        })
    }

    fn resumed_epoch_end(&self, epoch: u32) -> bool {
        self.resume
            .iter()
            .any(|l| matches!(l, TraceLine::EpochEnd { epoch: e, .. } if *e == epoch))
    }

    pub fn all_lines(&self) -> Vec<TraceLine> {
        let mut all = self.resume.clone();
        all.extend(self.emitted.iter().cloned());
        all
    }
}

pub fn paraphrase_prompt(incumbent_text: &str, aspect: &str) -> String {
    PARAPHRASE_TEMPLATE
        .replace("[ASPECT]", aspect)
        .replace("[INSTRUCTION]", incumbent_text)
}

fn paraphrase_once(
    backend: &dyn ChatBackend,
    prompt: &str,
    temperature: f64,
    sample_index: u32,
) -> Result<String> {
    let mut request = ChatRequest::single_user(prompt);
    request.temperature = temperature;
    request.max_tokens = 512;
    request.sample_index = sample_index;
    let response = backend.complete(&request)?;
    Ok(response.text.trim().to_string())
}

/// Ask the paraphraser for `s` candidates derived from the incumbent. Each
/// must be non-empty and keep the aspect keyword; failing drafts are
/// regenerated up to a retry budget, after which the incumbent text is
/// kept with a warning.
pub fn propose_candidates(
    incumbent: &Instruction,
    s: u32,
    paraphraser: &dyn ChatBackend,
    aspect: &str,
    temperature: f64,
    epoch: u32,
) -> Result<Vec<Instruction>> {
    let prompt = paraphrase_prompt(&incumbent.text, aspect);
    let mut candidates = Vec::with_capacity(s as usize);
    let per_slot = PARAPHRASE_RETRIES + 1;
    for i in 0..s {
        let base_index = (epoch * s + i) * per_slot;
        let mut accepted: Option<String> = None;
        for attempt in 0..per_slot {
            let text = paraphrase_once(paraphraser, &prompt, temperature, base_index + attempt)?;
            let valid = !text.is_empty() && text.contains(aspect);
            let duplicate = text == incumbent.text;
            if valid && !duplicate {
                accepted = Some(text);
                break;
            }
            if valid && duplicate && attempt == per_slot - 1 {
                log::warn!(
                    "paraphrase candidate {i} duplicates the incumbent after {per_slot} attempts; accepting"
                );
                accepted = Some(text);
            }
        }
        let text = accepted.unwrap_or_else(|| {
            log::warn!(
                "paraphrase candidate {i} invalid after {per_slot} attempts; keeping incumbent text"
            );
            incumbent.text.clone()
        });
        candidates.push(Instruction {
            id: format!("e{epoch}c{i}"),
            text,
            aspect: incumbent.aspect.clone(),
            parent_id: Some(incumbent.id.clone()),
            epoch,
        });
    }
    Ok(candidates)
}

fn score_candidate(
    instruction: &Instruction,
    kind: ObjectiveKind,
    dataset: &UnlabeledDataset,
    pairs: &[PairTask],
    backend: &dyn ChatBackend,
    template: &PromptTemplate,
    options: JudgeOptions,
) -> Result<(ObjectiveScore, BTreeMap<String, f64>)> {
    let outcomes = judge::collect_outcomes(instruction, pairs, dataset, template, backend, options)?;
    let verbalizer: Vec<String> = outcomes[0].probs.keys().cloned().collect();
    let dist = judge::distribution_from_outcomes(&instruction.id, &verbalizer, &outcomes)?;
    let value = match kind {
        ObjectiveKind::Fairness => objectives::fairness(&dist),
        ObjectiveKind::Confidence => objectives::confidence(&outcomes)?,
        ObjectiveKind::Calibration => objectives::calibration(&outcomes)?,
        ObjectiveKind::CfConfidence => {
            objectives::cf_confidence(instruction, template, backend, &verbalizer)?
        }
    };
    Ok((
        ObjectiveScore {
            instruction_id: instruction.id.clone(),
            kind,
            value,
            n_pairs: pairs.len(),
        },
        dist.rates,
    ))
}

/// The full greedy loop. All candidates within one run are scored on the
/// same seeded pair sample, so score differences reflect the instructions
/// only. On backend failure the partial trace is already persisted in the
/// log.
pub fn zepo_optimize(
    seed_instruction: &Instruction,
    dataset: &UnlabeledDataset,
    config: &OptimizeConfig,
    evaluator: &dyn ChatBackend,
    paraphraser: &dyn ChatBackend,
    template: &PromptTemplate,
    log: &mut TraceLog,
) -> Result<OptimizationTrace> {
    config.validate()?;
    seed_instruction.validate()?;
    let options = JudgeOptions { debias: config.debias, fallback_votes: None };
    let pairs = judge::sample_pairs(dataset, config.pairs_per_instruction, config.seed)?;

    // Seed scoring is recorded as epoch 0.
    let initial = match log.resumed_candidate(0, 0) {
        Some(c) => c.clone(),
        None => {
            let (objective, rates) = score_candidate(
                seed_instruction,
                config.objective,
                dataset,
                &pairs,
                evaluator,
                template,
                options,
            )?;
            let c = ScoredCandidate {
                epoch: 0,
                index: 0,
                instruction: seed_instruction.clone(),
                objective,
                rates,
            };
            log.emit(TraceLine::Candidate(c.clone()))?;
            c
        }
    };

    // (value, epoch, index) with ties broken toward earlier records.
    let better = |a: &ScoredCandidate, b: &ScoredCandidate| {
        a.objective.value > b.objective.value
            || (a.objective.value == b.objective.value
                && (a.epoch, a.index) < (b.epoch, b.index))
    };

    let mut incumbent = initial.clone();
    let mut best_overall = initial.clone();
    let mut epochs = Vec::with_capacity(config.epochs as usize);

    for epoch in 1..=config.epochs {
        let candidates = propose_candidates(
            &incumbent.instruction,
            config.population,
            paraphraser,
            &incumbent.instruction.aspect,
            config.paraphraser_temperature,
            epoch,
        )?;
        let mut scored = Vec::with_capacity(candidates.len());
        for (i, candidate) in candidates.iter().enumerate() {
            let record = match log.resumed_candidate(epoch, i as u32) {
                Some(c) => c.clone(),
                None => {
                    let (objective, rates) = score_candidate(
                        candidate,
                        config.objective,
                        dataset,
                        &pairs,
                        evaluator,
                        template,
                        options,
                    )?;
                    let c = ScoredCandidate {
                        epoch,
                        index: i as u32,
                        instruction: candidate.clone(),
                        objective,
                        rates,
                    };
                    log.emit(TraceLine::Candidate(c.clone()))?;
                    c
                }
            };
            scored.push(record);
        }

        let mut epoch_best = scored[0].clone();
        for c in &scored[1..] {
            if better(c, &epoch_best) {
                epoch_best = c.clone();
            }
        }
        if better(&epoch_best, &best_overall) {
            best_overall = epoch_best.clone();
        }
        incumbent = if config.elitism {
            best_overall.clone()
        } else {
            epoch_best.clone()
        };
        if !log.resumed_epoch_end(epoch) {
            log.emit(TraceLine::EpochEnd {
                epoch,
                incumbent_id: incumbent.instruction.id.clone(),
                incumbent_value: incumbent.objective.value,
            })?;
        }
        epochs.push(EpochRecord {
            epoch,
            candidates: scored,
            incumbent_id: incumbent.instruction.id.clone(),
        });
    }

    let best = if config.elitism { best_overall } else { incumbent };
    let has_summary = log
        .resumed_lines()
        .iter()
        .any(|l| matches!(l, TraceLine::Summary { .. }));
    if !has_summary {
        log.emit(TraceLine::Summary {
            best: best.clone(),
            initial_value: initial.objective.value,
            final_value: best.objective.value,
        })?;
    }
    Ok(OptimizationTrace { epochs, initial, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveComparisonRow {
    pub instruction_id: String,
    pub scores: BTreeMap<String, f64>,
    pub agreement_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveComparisonReport {
    pub rows: Vec<ObjectiveComparisonRow>,
    /// Rank correlation of each objective with the agreement column;
    /// `None` marks "insufficient points".
    pub correlations: BTreeMap<String, Option<f64>>,
}

impl ObjectiveComparisonReport {
    pub fn insufficient(&self) -> bool {
        self.correlations.values().all(|c| c.is_none())
    }
}

/// Analysis path: needs human scores and is kept apart from optimization.
/// Scores every instruction under every objective kind on the shared pair
/// sample, measures its human agreement, and rank-correlates the two.
pub fn compare_objectives(
    instructions: &[Instruction],
    dataset: &Dataset,
    backend: &dyn ChatBackend,
    template: &PromptTemplate,
    pairs: &[PairTask],
    kinds: &[ObjectiveKind],
    aspect: &str,
    debias: bool,
) -> Result<ObjectiveComparisonReport> {
    if dataset.items.iter().any(|i| !i.aspect_scores.contains_key(aspect)) {
        return Err(Error::Precondition(format!(
            "compare-objectives needs human scores for aspect '{aspect}' on every item"
        )));
    }
    let unlabeled = dataset.unlabeled();
    let options = JudgeOptions { debias, fallback_votes: None };
    let mut rows = Vec::with_capacity(instructions.len());
    for instruction in instructions {
        let mut scores = BTreeMap::new();
        for &kind in kinds {
            let score = objectives::score_instruction(
                instruction,
                kind,
                &unlabeled,
                pairs,
                backend,
                template,
                options,
            )?;
            scores.insert(kind.name().to_string(), score.value);
        }
        let report = metaeval::agreement(instruction, dataset, aspect, template, backend, debias)?;
        rows.push(ObjectiveComparisonRow {
            instruction_id: instruction.id.clone(),
            scores,
            agreement_rho: report.spearman_rho,
        });
    }
    let rhos: Vec<f64> = rows.iter().map(|r| r.agreement_rho).collect();
    let mut correlations = BTreeMap::new();
    for &kind in kinds {
        let xs: Vec<f64> = rows.iter().map(|r| r.scores[kind.name()]).collect();
        let corr = metaeval::spearman(&xs, &rhos).ok();
        correlations.insert(kind.name().to_string(), corr);
    }
    Ok(ObjectiveComparisonReport { rows, correlations })
}
