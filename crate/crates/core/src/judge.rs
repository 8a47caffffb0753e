//! Turns (instruction, pair) into label probabilities and aggregates them
//! into a preference distribution; hosts permutation debiasing and the
//! pointwise baselines.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatRequest};
use crate::error::{Error, Result};
use crate::model::{enumerate_pairs, Instruction, PairTask, UnlabeledDataset, UnlabeledItem};

/// Tolerance for probability normalization and argmax ties.
pub const TIE_EPS: f64 = 1e-9;

pub const CONTENT_FREE_FILLER: &str = "[N/A]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Summarization,
    Dialog,
}

/// A pairwise prompt template with slot markers. Renders are exact string
/// substitutions, so byte-identical templates give byte-identical prompts
/// and stable cache keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub body: String,
}

impl PromptTemplate {
    pub fn summarization() -> Self {
        PromptTemplate {
            kind: TemplateKind::Summarization,
            body: include_str!("../templates/summarization.txt").to_string(),
        }
    }

    pub fn dialog() -> Self {
        PromptTemplate {
            kind: TemplateKind::Dialog,
            body: include_str!("../templates/dialog.txt").to_string(),
        }
    }

    pub fn from_file(path: impl AsRef<std::path::Path>, kind: TemplateKind) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        let template = PromptTemplate { kind, body };
        template.validate()?;
        Ok(template)
    }

    pub fn slots(&self) -> (&'static str, &'static str, &'static str) {
        match self.kind {
            TemplateKind::Summarization => ("[SOURCE_TEXT]", "[SUMMARY_1]", "[SUMMARY_2]"),
            TemplateKind::Dialog => ("[DIALOG_HISTORY]", "[RESPONSE_1]", "[RESPONSE_2]"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (source, first, second) = self.slots();
        for slot in [source, first, second, "[INSTRUCTION]"] {
            let count = self.body.matches(slot).count();
            if count != 1 {
                return Err(Error::Validation(format!(
                    "template must contain {slot} exactly once, found {count}"
                )));
            }
        }
        Ok(())
    }

    fn render(&self, source: &str, first: &str, second: &str, instruction: &str) -> String {
        let (s_slot, a_slot, b_slot) = self.slots();
        self.body
            .replace(s_slot, source)
            .replace(a_slot, first)
            .replace(b_slot, second)
            .replace("[INSTRUCTION]", instruction)
    }
}

/// Exact substitution; the A slot carries `pair.first`.
pub fn render_pairwise_prompt(
    item: &UnlabeledItem,
    pair: &PairTask,
    instruction: &Instruction,
    template: &PromptTemplate,
) -> Result<String> {
    let first = item
        .candidate(&pair.first)
        .ok_or_else(|| Error::Render(format!("candidate '{}' not in item '{}'", pair.first, item.id)))?;
    let second = item
        .candidate(&pair.second)
        .ok_or_else(|| Error::Render(format!("candidate '{}' not in item '{}'", pair.second, item.id)))?;
    Ok(template.render(&item.source_text, &first.text, &second.text, &instruction.text))
}

/// Template render with every content slot replaced by the filler; probes
/// bias induced by the template and instruction alone.
pub fn render_content_free(instruction: &Instruction, template: &PromptTemplate) -> String {
    template.render(
        CONTENT_FREE_FILLER,
        CONTENT_FREE_FILLER,
        CONTENT_FREE_FILLER,
        &instruction.text,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceOutcome {
    pub pair: PairTask,
    pub instruction_id: String,
    pub probs: BTreeMap<String, f64>,
    pub debiased: bool,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDistribution {
    pub instruction_id: String,
    pub rates: BTreeMap<String, f64>,
    pub n_pairs: usize,
}

impl PreferenceDistribution {
    pub fn rate(&self, label: &str) -> f64 {
        self.rates.get(label).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JudgeOptions {
    pub debias: bool,
    /// Majority-vote fallback when the endpoint exposes no logprobs:
    /// number of sampled completions. None disables the fallback.
    pub fallback_votes: Option<u32>,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions { debias: false, fallback_votes: None }
    }
}

fn lookup_label(logprobs: &BTreeMap<String, f64>, label: &str) -> Option<f64> {
    logprobs
        .get(label)
        .or_else(|| logprobs.get(&format!(" {label}")))
        .copied()
}

/// Restrict first-token logprobs to the verbalizer and renormalize.
pub fn label_probabilities(
    context: &str,
    verbalizer: &[String],
    backend: &dyn ChatBackend,
) -> Result<BTreeMap<String, f64>> {
    let (probs, _) = label_probabilities_opt(context, verbalizer, backend, None)?;
    Ok(probs)
}

/// Returns (probabilities, fallback_used).
pub fn label_probabilities_opt(
    context: &str,
    verbalizer: &[String],
    backend: &dyn ChatBackend,
    fallback_votes: Option<u32>,
) -> Result<(BTreeMap<String, f64>, bool)> {
    let top_k = (verbalizer.len() as u32).max(5);
    let request = ChatRequest::label_query(context, top_k);
    let response = backend.complete(&request)?;

    if let Some(logprobs) = &response.first_token_logprobs {
        let mut found = BTreeMap::new();
        let mut missing = Vec::new();
        for label in verbalizer {
            match lookup_label(logprobs, label) {
                Some(lp) => {
                    found.insert(label.clone(), lp);
                }
                None => missing.push(label.clone()),
            }
        }
        if missing.is_empty() {
            // Softmax restricted to the verbalizer labels.
            let max = found.values().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut probs: BTreeMap<String, f64> =
                found.iter().map(|(l, lp)| (l.clone(), (lp - max).exp())).collect();
            let sum: f64 = probs.values().sum();
            for p in probs.values_mut() {
                *p /= sum;
            }
            return Ok((probs, false));
        }
        if fallback_votes.is_none() {
            return Err(Error::Capability(format!(
                "verbalizer labels {missing:?} absent from top-{top_k} logprobs"
            )));
        }
    } else if fallback_votes.is_none() {
        return Err(Error::Capability("backend returned no logprobs".into()));
    }

    let votes = fallback_votes.unwrap();
    let mut counts: BTreeMap<String, u32> =
        verbalizer.iter().map(|l| (l.clone(), 0)).collect();
    for i in 0..votes {
        let mut req = ChatRequest::single_user(context);
        req.temperature = 1.0;
        req.sample_index = i;
        let resp = backend.complete(&req)?;
        let text = resp.text.trim();
        if let Some(label) = verbalizer.iter().find(|l| text.starts_with(l.as_str())) {
            *counts.get_mut(label).unwrap() += 1;
        }
    }
    let total: u32 = counts.values().sum();
    if total == 0 {
        return Err(Error::Capability(
            "sampling fallback produced no verbalizer label".into(),
        ));
    }
    let probs = counts
        .into_iter()
        .map(|(l, c)| (l, c as f64 / total as f64))
        .collect();
    Ok((probs, true))
}

/// Judge one ordered pair. With `debias`, both slot orders are rendered and
/// each candidate's win probability is averaged across them (Balanced
/// Position Calibration), reported in the original pair's slot frame.
pub fn judge_pair(
    item: &UnlabeledItem,
    pair: &PairTask,
    instruction: &Instruction,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    options: JudgeOptions,
) -> Result<PreferenceOutcome> {
    let verbalizer = vec!["A".to_string(), "B".to_string()];
    judge_pair_with_verbalizer(item, pair, instruction, template, backend, options, &verbalizer)
}

pub fn judge_pair_with_verbalizer(
    item: &UnlabeledItem,
    pair: &PairTask,
    instruction: &Instruction,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    options: JudgeOptions,
    verbalizer: &[String],
) -> Result<PreferenceOutcome> {
    let context = render_pairwise_prompt(item, pair, instruction, template)?;
    let (probs, fallback_a) =
        label_probabilities_opt(&context, verbalizer, backend, options.fallback_votes)?;

    if !options.debias {
        return Ok(PreferenceOutcome {
            pair: pair.clone(),
            instruction_id: instruction.id.clone(),
            probs,
            debiased: false,
            fallback_used: fallback_a,
        });
    }

    if verbalizer.len() != 2 {
        return Err(Error::Precondition(
            "permutation debiasing requires a binary verbalizer".into(),
        ));
    }
    let swapped = pair.swapped();
    let context_swapped = render_pairwise_prompt(item, &swapped, instruction, template)?;
    let (probs_swapped, fallback_b) =
        label_probabilities_opt(&context_swapped, verbalizer, backend, options.fallback_votes)?;

    let (la, lb) = (&verbalizer[0], &verbalizer[1]);
    // pair.first sits in slot A originally and slot B after the swap.
    let first_win = (probs[la] + probs_swapped[lb]) / 2.0;
    let second_win = (probs[lb] + probs_swapped[la]) / 2.0;
    let mut debiased = BTreeMap::new();
    debiased.insert(la.clone(), first_win);
    debiased.insert(lb.clone(), second_win);
    Ok(PreferenceOutcome {
        pair: pair.clone(),
        instruction_id: instruction.id.clone(),
        probs: debiased,
        debiased: true,
        fallback_used: fallback_a || fallback_b,
    })
}

/// Labels attaining the outcome's maximum probability, within `TIE_EPS`.
pub fn argmax_labels(probs: &BTreeMap<String, f64>) -> Vec<&str> {
    let max = probs.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    probs
        .iter()
        .filter(|(_, p)| **p >= max - TIE_EPS)
        .map(|(l, _)| l.as_str())
        .collect()
}

/// Decision-rate vector over the verbalizer: each outcome contributes its
/// full weight to the strict argmax label, split equally on ties.
pub fn distribution_from_outcomes(
    instruction_id: &str,
    verbalizer: &[String],
    outcomes: &[PreferenceOutcome],
) -> Result<PreferenceDistribution> {
    if outcomes.is_empty() {
        return Err(Error::Precondition("no outcomes to aggregate".into()));
    }
    let mut rates: BTreeMap<String, f64> =
        verbalizer.iter().map(|l| (l.clone(), 0.0)).collect();
    for outcome in outcomes {
        let winners = argmax_labels(&outcome.probs);
        let share = 1.0 / winners.len() as f64;
        for w in winners {
            *rates.get_mut(w).ok_or_else(|| {
                Error::Validation(format!("outcome label '{w}' not in verbalizer"))
            })? += share;
        }
    }
    let n = outcomes.len() as f64;
    for r in rates.values_mut() {
        *r /= n;
    }
    Ok(PreferenceDistribution {
        instruction_id: instruction_id.to_string(),
        rates,
        n_pairs: outcomes.len(),
    })
}

/// Judge every pair and return the raw outcomes in input order.
pub fn collect_outcomes(
    instruction: &Instruction,
    pairs: &[PairTask],
    dataset: &UnlabeledDataset,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    options: JudgeOptions,
) -> Result<Vec<PreferenceOutcome>> {
    let verbalizer: Vec<String> = dataset
        .aspects
        .iter()
        .find(|a| a.name == instruction.aspect)
        .map(|a| a.verbalizer.clone())
        .unwrap_or_else(|| vec!["A".to_string(), "B".to_string()]);
    let mut outcomes = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let item = dataset
            .item(&pair.item_id)
            .ok_or_else(|| Error::Precondition(format!("unknown item '{}'", pair.item_id)))?;
        outcomes.push(judge_pair_with_verbalizer(
            item,
            pair,
            instruction,
            template,
            backend,
            options,
            &verbalizer,
        )?);
    }
    Ok(outcomes)
}

pub fn preference_distribution(
    instruction: &Instruction,
    pairs: &[PairTask],
    dataset: &UnlabeledDataset,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    options: JudgeOptions,
) -> Result<PreferenceDistribution> {
    if pairs.is_empty() {
        return Err(Error::Precondition("empty pair list".into()));
    }
    let outcomes = collect_outcomes(instruction, pairs, dataset, template, backend, options)?;
    let verbalizer: Vec<String> = outcomes[0].probs.keys().cloned().collect();
    distribution_from_outcomes(&instruction.id, &verbalizer, &outcomes)
}

/// Uniform draws with replacement over the global ordered-pair universe,
/// deterministically derived from the seed.
pub fn sample_pairs(dataset: &UnlabeledDataset, n: usize, seed: u64) -> Result<Vec<PairTask>> {
    if n == 0 {
        return Err(Error::Precondition("n must be >= 1".into()));
    }
    let universe: Vec<PairTask> = dataset.items.iter().flat_map(enumerate_pairs).collect();
    if universe.is_empty() {
        return Err(Error::Precondition(
            "dataset has no item with >=2 candidates".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let mut task = universe[rng.gen_range(0..universe.len())].clone();
            task.seed_index = i as u64;
            task
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseMode {
    Argmax,
    Weighted,
}

const SCORE_TOKENS: [&str; 5] = ["1", "2", "3", "4", "5"];

/// Likert-scale pointwise baseline over the score tokens 1..5.
pub fn pointwise_score(
    item: &UnlabeledItem,
    candidate_id: &str,
    instruction: &Instruction,
    backend: &dyn ChatBackend,
    mode: PointwiseMode,
) -> Result<f64> {
    let candidate = item
        .candidate(candidate_id)
        .ok_or_else(|| Error::Render(format!("candidate '{candidate_id}' not in item '{}'", item.id)))?;
    let context = format!(
        "Source text: {}\n\nSummary: {}\n\nQuestion: {}\nAnswer:",
        item.source_text, candidate.text, instruction.text
    );
    let request = ChatRequest::label_query(&context, 5);
    let response = backend.complete(&request)?;
    let logprobs = response
        .first_token_logprobs
        .ok_or_else(|| Error::Capability("backend returned no logprobs".into()))?;
    let mut found = Vec::new();
    for token in SCORE_TOKENS {
        if let Some(lp) = lookup_label(&logprobs, token) {
            found.push((token, lp));
        }
    }
    if found.is_empty() {
        return Err(Error::Capability("no score token in top-k logprobs".into()));
    }
    let max = found.iter().map(|(_, lp)| *lp).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<(f64, f64)> = found
        .iter()
        .map(|(t, lp)| (t.parse::<f64>().unwrap(), (lp - max).exp()))
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    match mode {
        PointwiseMode::Weighted => Ok(weights.iter().map(|(s, w)| s * w / total).sum()),
        PointwiseMode::Argmax => {
            let (score, _) = weights
                .iter()
                .cloned()
                .fold((0.0, f64::NEG_INFINITY), |acc, (s, w)| if w > acc.1 { (s, w) } else { acc });
            Ok(score)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, SimulatedBackend, SimulatedEvaluatorParams};
    use crate::model::Candidate;

    fn test_item() -> UnlabeledItem {
        UnlabeledItem {
            id: "i".into(),
            source_text: "S".into(),
            candidates: vec![
                Candidate { id: "a".into(), text: "X".into() },
                Candidate { id: "b".into(), text: "Y".into() },
            ],
        }
    }

    fn pair() -> PairTask {
        PairTask { item_id: "i".into(), first: "a".into(), second: "b".into(), seed_index: 0 }
    }

    fn instr() -> Instruction {
        Instruction::seed("seed", "Q", "coherence")
    }

    #[test]
    fn render_matches_canonical_shape() {
        let rendered = render_pairwise_prompt(
            &test_item(),
            &pair(),
            &instr(),
            &PromptTemplate::summarization(),
        )
        .unwrap();
        assert_eq!(
            rendered,
            "Source text: S\n\nSummary A: X\n\nSummary B: Y\n\nQuestion: Q\nAnswer:"
        );
    }

    #[test]
    fn swapped_pair_exchanges_slots() {
        let template = PromptTemplate::summarization();
        let rendered =
            render_pairwise_prompt(&test_item(), &pair().swapped(), &instr(), &template).unwrap();
        assert_eq!(
            rendered,
            "Source text: S\n\nSummary A: Y\n\nSummary B: X\n\nQuestion: Q\nAnswer:"
        );
    }

    #[test]
    fn instruction_keyword_survives_render() {
        let instruction = Instruction::seed("s", "Compare the coherence of both.", "coherence");
        let rendered = render_pairwise_prompt(
            &test_item(),
            &pair(),
            &instruction,
            &PromptTemplate::summarization(),
        )
        .unwrap();
        assert!(rendered.contains("Compare the coherence of both."));
    }

    #[test]
    fn missing_candidate_is_render_error() {
        let mut p = pair();
        p.second = "zzz".into();
        let err = render_pairwise_prompt(&test_item(), &p, &instr(), &PromptTemplate::summarization())
            .unwrap_err();
        assert!(matches!(err, Error::Render(_)));
    }

    #[test]
    fn label_probabilities_softmax_restriction() {
        let mut lp = BTreeMap::new();
        lp.insert("A".to_string(), -0.1);
        lp.insert("B".to_string(), -2.4);
        lp.insert("C".to_string(), -3.0);
        let backend = ScriptedBackend::with_logprobs("t", lp);
        let labels = vec!["A".to_string(), "B".to_string()];
        let probs = label_probabilities("ctx", &labels, &backend).unwrap();
        let expected = (-0.1f64).exp() / ((-0.1f64).exp() + (-2.4f64).exp());
        assert!((probs["A"] - expected).abs() < 1e-12);
        assert!((probs["A"] - 0.9089).abs() < 1e-4);
        assert!((probs["A"] + probs["B"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_logprobs_give_half() {
        let mut lp = BTreeMap::new();
        lp.insert("A".to_string(), -1.0);
        lp.insert("B".to_string(), -1.0);
        let backend = ScriptedBackend::with_logprobs("t", lp);
        let labels = vec!["A".to_string(), "B".to_string()];
        let probs = label_probabilities("ctx", &labels, &backend).unwrap();
        assert_eq!(probs["A"], 0.5);
        assert_eq!(probs["B"], 0.5);
    }

    #[test]
    fn missing_label_is_capability_error_without_fallback() {
        let mut lp = BTreeMap::new();
        lp.insert("A".to_string(), -0.1);
        let backend = ScriptedBackend::with_logprobs("t", lp);
        let labels = vec!["A".to_string(), "B".to_string()];
        let err = label_probabilities("ctx", &labels, &backend).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
    }

    #[test]
    fn sampling_fallback_majority() {
        let backend = ScriptedBackend::texts("t", &["A", "B", "A", "A"]);
        let labels = vec!["A".to_string(), "B".to_string()];
        let (probs, used) =
            label_probabilities_opt("ctx", &labels, &backend, Some(4)).unwrap();
        assert!(used);
        assert_eq!(probs["A"], 0.75);
        assert_eq!(probs["B"], 0.25);
    }

    #[test]
    fn debias_neutralizes_pure_position_bias() {
        let backend = SimulatedBackend::new(SimulatedEvaluatorParams {
            gamma: 0.0,
            position_bias: 1.5,
            ..SimulatedEvaluatorParams::default()
        });
        let template = PromptTemplate::summarization();
        let raw = judge_pair(
            &test_item(),
            &pair(),
            &instr(),
            &template,
            &backend,
            JudgeOptions::default(),
        )
        .unwrap();
        assert!(raw.probs["A"] > 0.5);
        let debiased = judge_pair(
            &test_item(),
            &pair(),
            &instr(),
            &template,
            &backend,
            JudgeOptions { debias: true, fallback_votes: None },
        )
        .unwrap();
        assert!((debiased.probs["A"] - 0.5).abs() < 1e-9);
        assert!(debiased.debiased);
    }

    #[test]
    fn debias_is_identity_for_symmetric_judge() {
        let backend = SimulatedBackend::new(SimulatedEvaluatorParams::default())
            .with_quality("X", 0.8)
            .with_quality("Y", 0.1);
        let template = PromptTemplate::summarization();
        let raw = judge_pair(&test_item(), &pair(), &instr(), &template, &backend, JudgeOptions::default())
            .unwrap();
        let debiased = judge_pair(
            &test_item(),
            &pair(),
            &instr(),
            &template,
            &backend,
            JudgeOptions { debias: true, fallback_votes: None },
        )
        .unwrap();
        assert!((raw.probs["A"] - debiased.probs["A"]).abs() < 1e-9);
    }

    #[test]
    fn debias_antisymmetry_under_slot_swap() {
        let backend = SimulatedBackend::new(SimulatedEvaluatorParams {
            gamma: 1.0,
            position_bias: 0.7,
            ..SimulatedEvaluatorParams::default()
        })
        .with_quality("X", 0.6)
        .with_quality("Y", -0.3);
        let template = PromptTemplate::summarization();
        let opts = JudgeOptions { debias: true, fallback_votes: None };
        let fwd = judge_pair(&test_item(), &pair(), &instr(), &template, &backend, opts).unwrap();
        let rev =
            judge_pair(&test_item(), &pair().swapped(), &instr(), &template, &backend, opts).unwrap();
        assert!((fwd.probs["A"] - rev.probs["B"]).abs() < 1e-12);
        assert!((fwd.probs["B"] - rev.probs["A"]).abs() < 1e-12);
    }

    #[test]
    fn distribution_counting() {
        let mk = |pa: f64| PreferenceOutcome {
            pair: pair(),
            instruction_id: "s".into(),
            probs: [("A".to_string(), pa), ("B".to_string(), 1.0 - pa)].into(),
            debiased: false,
            fallback_used: false,
        };
        let verb = vec!["A".to_string(), "B".to_string()];
        let dist =
            distribution_from_outcomes("s", &verb, &[mk(0.9), mk(0.8), mk(0.6), mk(0.2)]).unwrap();
        assert_eq!(dist.rate("A"), 0.75);
        assert_eq!(dist.rate("B"), 0.25);

        let ties = distribution_from_outcomes("s", &verb, &[mk(0.5), mk(0.5)]).unwrap();
        assert_eq!(ties.rate("A"), 0.5);

        let all_a = distribution_from_outcomes("s", &verb, &[mk(0.9), mk(0.7)]).unwrap();
        assert_eq!(all_a.rate("A"), 1.0);
    }

    #[test]
    fn empty_outcomes_rejected() {
        let verb = vec!["A".to_string(), "B".to_string()];
        assert!(matches!(
            distribution_from_outcomes("s", &verb, &[]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn sample_pairs_deterministic_and_balanced() {
        let dataset = UnlabeledDataset {
            name: "d".into(),
            aspects: vec![],
            items: vec![test_item()],
        };
        let a = sample_pairs(&dataset, 4000, 7).unwrap();
        let b = sample_pairs(&dataset, 4000, 7).unwrap();
        assert_eq!(a, b);
        // Both slot orders reachable; split within 3 sigma of binomial.
        let n_ab = a.iter().filter(|p| p.first == "a").count() as f64;
        let n = a.len() as f64;
        let sigma = (n * 0.25).sqrt();
        assert!((n_ab - n / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn pointwise_modes() {
        let mk_backend = |ps: [f64; 5]| {
            let mut lp = BTreeMap::new();
            for (i, p) in ps.iter().enumerate() {
                if *p > 0.0 {
                    lp.insert((i + 1).to_string(), p.ln());
                }
            }
            ScriptedBackend::with_logprobs("t", lp)
        };
        let item = test_item();
        let backend = mk_backend([0.1, 0.2, 0.4, 0.2, 0.1]);
        let w = pointwise_score(&item, "a", &instr(), &backend, PointwiseMode::Weighted).unwrap();
        assert!((w - 3.0).abs() < 1e-12);
        let backend = mk_backend([0.1, 0.2, 0.4, 0.2, 0.1]);
        let a = pointwise_score(&item, "a", &instr(), &backend, PointwiseMode::Argmax).unwrap();
        assert_eq!(a, 3.0);

        let backend = mk_backend([0.0, 0.0, 0.0, 0.0, 1.0]);
        let w = pointwise_score(&item, "a", &instr(), &backend, PointwiseMode::Weighted).unwrap();
        assert!((w - 5.0).abs() < 1e-12);

        let backend = mk_backend([0.5, 0.5, 0.0, 0.0, 0.0]);
        let w = pointwise_score(&item, "a", &instr(), &backend, PointwiseMode::Weighted).unwrap();
        assert!((w - 1.5).abs() < 1e-12);
    }

    #[test]
    fn template_slot_validation() {
        PromptTemplate::summarization().validate().unwrap();
        PromptTemplate::dialog().validate().unwrap();
        let broken = PromptTemplate {
            kind: TemplateKind::Summarization,
            body: "Summary A: [SUMMARY_1] and [SUMMARY_1]".into(),
        };
        assert!(broken.validate().is_err());
    }
}
