//! Domain types and dataset ingestion shared by the judging, optimization,
//! and meta-evaluation paths.
//!
//! Human scores live next to the items in the dataset file, but the
//! optimizer only ever sees an [`UnlabeledDataset`] with the scores
//! stripped at the type level.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A candidate evaluation prompt with lineage metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub text: String,
    pub aspect: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    /// Generation index; 0 for the seed instruction.
    #[serde(default)]
    pub epoch: u32,
}

impl Instruction {
    pub fn seed(id: impl Into<String>, text: impl Into<String>, aspect: impl Into<String>) -> Self {
        Instruction {
            id: id.into(),
            text: text.into(),
            aspect: aspect.into(),
            parent_id: None,
            epoch: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "instruction '{}' has empty text",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub text: String,
}

/// One source text with its response candidates and optional human scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub source_text: String,
    pub candidates: Vec<Candidate>,
    /// aspect -> candidate id -> human score. Absent entirely for
    /// unlabeled data; when an aspect is present it must cover every
    /// candidate of the item.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aspect_scores: BTreeMap<String, BTreeMap<String, f64>>,
}

impl EvalItem {
    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }
}

/// An ordered pair drawn from one item. `first` occupies the A slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairTask {
    pub item_id: String,
    pub first: String,
    pub second: String,
    /// Draw index when sampled; 0 for enumerated pairs.
    #[serde(default)]
    pub seed_index: u64,
}

impl PairTask {
    /// The same candidates with the slots exchanged.
    pub fn swapped(&self) -> PairTask {
        PairTask {
            item_id: self.item_id.clone(),
            first: self.second.clone(),
            second: self.first.clone(),
            seed_index: self.seed_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectSpec {
    pub name: String,
    pub seed_instruction: Instruction,
    /// Ordered label set the judge decides over.
    #[serde(default = "default_verbalizer")]
    pub verbalizer: Vec<String>,
}

fn default_verbalizer() -> Vec<String> {
    vec!["A".to_string(), "B".to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub aspects: Vec<AspectSpec>,
    pub items: Vec<EvalItem>,
}

/// The optimizer-facing view of a dataset: same items, no scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledItem {
    pub id: String,
    pub source_text: String,
    pub candidates: Vec<Candidate>,
}

impl UnlabeledItem {
    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledDataset {
    pub name: String,
    pub aspects: Vec<AspectSpec>,
    pub items: Vec<UnlabeledItem>,
}

impl UnlabeledDataset {
    pub fn item(&self, id: &str) -> Option<&UnlabeledItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn aspect(&self, name: &str) -> Option<&AspectSpec> {
        self.aspects.iter().find(|a| a.name == name)
    }
}

impl Dataset {
    pub fn item(&self, id: &str) -> Option<&EvalItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn aspect(&self, name: &str) -> Option<&AspectSpec> {
        self.aspects.iter().find(|a| a.name == name)
    }

    /// Strip human scores. This is the only dataset form the optimizer
    /// accepts, so score leakage into the zero-shot path is a type error.
    pub fn unlabeled(&self) -> UnlabeledDataset {
        UnlabeledDataset {
            name: self.name.clone(),
            aspects: self.aspects.clone(),
            items: self
                .items
                .iter()
                .map(|i| UnlabeledItem {
                    id: i.id.clone(),
                    source_text: i.source_text.clone(),
                    candidates: i.candidates.clone(),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Validation(format!("duplicate item id '{}'", item.id)));
            }
            if item.candidates.len() < 2 {
                return Err(Error::Validation(format!(
                    "item '{}': >=2 candidates required, got {}",
                    item.id,
                    item.candidates.len()
                )));
            }
            let mut cand_ids = HashSet::new();
            for cand in &item.candidates {
                if cand.text.is_empty() {
                    return Err(Error::Validation(format!(
                        "item '{}': candidate '{}' has empty text",
                        item.id, cand.id
                    )));
                }
                if !cand_ids.insert(cand.id.as_str()) {
                    return Err(Error::Validation(format!(
                        "item '{}': duplicate candidate id '{}'",
                        item.id, cand.id
                    )));
                }
            }
            // An aspect's scores must cover every candidate or be absent.
            for (aspect, scores) in &item.aspect_scores {
                for cand in &item.candidates {
                    if !scores.contains_key(&cand.id) {
                        return Err(Error::Validation(format!(
                            "item '{}': aspect_scores for '{}' missing candidate '{}'",
                            item.id, aspect, cand.id
                        )));
                    }
                }
                for cand_id in scores.keys() {
                    if item.candidate(cand_id).is_none() {
                        return Err(Error::Validation(format!(
                            "item '{}': aspect_scores for '{}' references unknown candidate '{}'",
                            item.id, aspect, cand_id
                        )));
                    }
                }
            }
        }
        for aspect in &self.aspects {
            aspect.seed_instruction.validate()?;
            let distinct: HashSet<_> = aspect.verbalizer.iter().collect();
            if aspect.verbalizer.len() < 2 || distinct.len() != aspect.verbalizer.len() {
                return Err(Error::Validation(format!(
                    "aspect '{}': verbalizer needs >=2 distinct labels",
                    aspect.name
                )));
            }
        }
        Ok(())
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let dataset: Dataset =
        serde_json::from_str(&raw).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    dataset.validate()?;
    Ok(dataset)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    dataset.validate()?;
    let raw = serde_json::to_string_pretty(dataset)?;
    std::fs::write(path, raw)?;
    Ok(())
}

/// All ordered pairs (i, j), i != j, within one item, in deterministic order.
pub fn enumerate_pairs(item: &UnlabeledItem) -> Vec<PairTask> {
    let mut pairs = Vec::with_capacity(item.candidates.len() * item.candidates.len());
    for a in &item.candidates {
        for b in &item.candidates {
            if a.id != b.id {
                pairs.push(PairTask {
                    item_id: item.id.clone(),
                    first: a.id.clone(),
                    second: b.id.clone(),
                    seed_index: 0,
                });
            }
        }
    }
    pairs
}
