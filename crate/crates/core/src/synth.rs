//! Synthetic datasets with planted per-candidate qualities, for driving
//! the simulated judge in studies and tests.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::{AspectSpec, Candidate, Dataset, EvalItem, Instruction};

/// Items with qualities drawn from a standard normal; the human scores for
/// `aspect` are the qualities themselves.
pub fn synthetic_dataset(
    n_items: usize,
    n_candidates: usize,
    aspect: &str,
    seed_instruction_text: &str,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..n_items)
        .map(|i| {
            let candidates: Vec<Candidate> = (0..n_candidates)
                .map(|c| Candidate {
                    id: format!("i{i}c{c}"),
                    text: format!("candidate text {i}/{c}"),
                })
                .collect();
            let scores: BTreeMap<String, f64> = candidates
                .iter()
                .map(|c| (c.id.clone(), rng.sample::<f64, _>(StandardNormal)))
                .collect();
            EvalItem {
                id: format!("i{i}"),
                source_text: format!("source text {i}"),
                candidates,
                aspect_scores: [(aspect.to_string(), scores)].into(),
            }
        })
        .collect();
    Dataset {
        name: "synthetic".into(),
        aspects: vec![AspectSpec {
            name: aspect.into(),
            seed_instruction: Instruction::seed("seed", seed_instruction_text, aspect),
            verbalizer: vec!["A".into(), "B".into()],
        }],
        items,
    }
}

/// Candidate-text -> planted quality map for one aspect.
pub fn planted_qualities(dataset: &Dataset, aspect: &str) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for item in &dataset.items {
        if let Some(scores) = item.aspect_scores.get(aspect) {
            for cand in &item.candidates {
                out.insert(cand.text.clone(), scores[&cand.id]);
            }
        }
    }
    out
}
