//! Human-alignment measurement: pairwise-to-score aggregation, Spearman
//! correlation, instruction sensitivity studies, and the quadratic fit of
//! agreement against the preference rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::ChatBackend;
use crate::error::{Error, Result};
use crate::judge::{
    self, argmax_labels, JudgeOptions, PreferenceOutcome, PromptTemplate, TIE_EPS,
};
use crate::model::{enumerate_pairs, Dataset, Instruction, PairTask, UnlabeledItem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub instruction_id: String,
    pub aspect: String,
    pub spearman_rho: f64,
    /// Items that contributed a per-item correlation.
    pub n_items: usize,
    /// Items skipped for lacking score or winrate variance.
    pub skipped_items: usize,
    pub debiased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
    /// -b / (2a); reported only for concave fits (a < 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub instruction_id: String,
    pub preference_rate: f64,
    pub spearman_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub aspect: String,
    pub debiased: bool,
    pub points: Vec<SensitivityPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<QuadraticFit>,
    /// Set when no fit was possible (fewer than 3 distinct x values).
    pub degenerate: bool,
}

/// Average ranks (1-based), ties sharing the mean of their rank block.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Spearman's rho with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least 2 points".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
        .ok_or_else(|| Error::UndefinedCorrelation("constant vector".into()))
}

/// Per-candidate score in [0, 1]: (wins + 0.5 * ties) / comparisons, from
/// the argmax of each outcome. Outcomes must all belong to `item`.
pub fn aggregate_winrates(
    item: &UnlabeledItem,
    outcomes: &[PreferenceOutcome],
) -> Result<BTreeMap<String, f64>> {
    let mut wins: BTreeMap<&str, f64> =
        item.candidates.iter().map(|c| (c.id.as_str(), 0.0)).collect();
    let mut counts: BTreeMap<&str, usize> =
        item.candidates.iter().map(|c| (c.id.as_str(), 0)).collect();
    for outcome in outcomes {
        let labels: Vec<&String> = outcome.probs.keys().collect();
        if labels.len() != 2 {
            return Err(Error::Precondition("winrates need binary outcomes".into()));
        }
        let winners = argmax_labels(&outcome.probs);
        let (first, second) = (outcome.pair.first.as_str(), outcome.pair.second.as_str());
        for id in [first, second] {
            *counts
                .get_mut(id)
                .ok_or_else(|| Error::Aggregation(vec![id.to_string()]))? += 1;
        }
        if winners.len() == 2 {
            *wins.get_mut(first).unwrap() += 0.5;
            *wins.get_mut(second).unwrap() += 0.5;
        } else if winners[0] == labels[0].as_str() {
            *wins.get_mut(first).unwrap() += 1.0;
        } else {
            *wins.get_mut(second).unwrap() += 1.0;
        }
    }
    let uncovered: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c == 0)
        .map(|(id, _)| id.to_string())
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::Aggregation(uncovered));
    }
    Ok(item
        .candidates
        .iter()
        .map(|c| (c.id.clone(), wins[c.id.as_str()] / counts[c.id.as_str()] as f64))
        .collect())
}

/// Stable bottom-up merge sort of one item's candidates using the pairwise
/// judge as comparator; O(n log n) judge calls. Returns candidate ids,
/// best first. Ties preserve input order.
pub fn rank_by_comparison<F>(item: &UnlabeledItem, mut judge_prob: F) -> Result<Vec<String>>
where
    F: FnMut(&PairTask) -> Result<f64>,
{
    if item.candidates.len() < 2 {
        return Err(Error::Precondition("need >=2 candidates to rank".into()));
    }
    let mut current: Vec<Vec<usize>> =
        (0..item.candidates.len()).map(|i| vec![i]).collect();
    while current.len() > 1 {
        let mut next = Vec::with_capacity(current.len() / 2 + 1);
        let mut chunks = current.chunks(2);
        for chunk in &mut chunks {
            if chunk.len() == 1 {
                next.push(chunk[0].clone());
                continue;
            }
            let (left, right) = (&chunk[0], &chunk[1]);
            let mut merged = Vec::with_capacity(left.len() + right.len());
            let (mut i, mut j) = (0, 0);
            while i < left.len() && j < right.len() {
                let pair = PairTask {
                    item_id: item.id.clone(),
                    first: item.candidates[left[i]].id.clone(),
                    second: item.candidates[right[j]].id.clone(),
                    seed_index: 0,
                };
                let p_first = judge_prob(&pair)?;
                // Ties keep the left (earlier-input) element first.
                if p_first >= 0.5 - TIE_EPS {
                    merged.push(left[i]);
                    i += 1;
                } else {
                    merged.push(right[j]);
                    j += 1;
                }
            }
            merged.extend_from_slice(&left[i..]);
            merged.extend_from_slice(&right[j..]);
            next.push(merged);
        }
        current = next;
    }
    Ok(current
        .remove(0)
        .into_iter()
        .map(|i| item.candidates[i].id.clone())
        .collect())
}

/// Per-item winrate-vs-human-score correlation, averaged across items with
/// variance on both sides.
pub fn agreement(
    instruction: &Instruction,
    dataset: &Dataset,
    aspect: &str,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    debias: bool,
) -> Result<AgreementReport> {
    let unlabeled = dataset.unlabeled();
    let options = JudgeOptions { debias, fallback_votes: None };
    let mut rhos = Vec::new();
    let mut skipped = 0usize;
    for item in &dataset.items {
        let scores = item.aspect_scores.get(aspect).ok_or_else(|| {
            Error::Precondition(format!(
                "item '{}' has no human scores for aspect '{aspect}'",
                item.id
            ))
        })?;
        let view = unlabeled.item(&item.id).expect("same items");
        let pairs = enumerate_pairs(view);
        let outcomes =
            judge::collect_outcomes(instruction, &pairs, &unlabeled, template, backend, options)?;
        let winrates = aggregate_winrates(view, &outcomes)?;
        let xs: Vec<f64> = item.candidates.iter().map(|c| winrates[&c.id]).collect();
        let ys: Vec<f64> = item.candidates.iter().map(|c| scores[&c.id]).collect();
        match spearman(&xs, &ys) {
            Ok(rho) => rhos.push(rho),
            Err(Error::UndefinedCorrelation(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if rhos.is_empty() {
        return Err(Error::UndefinedCorrelation(
            "no item had score and winrate variance".into(),
        ));
    }
    Ok(AgreementReport {
        instruction_id: instruction.id.clone(),
        aspect: aspect.to_string(),
        spearman_rho: rhos.iter().sum::<f64>() / rhos.len() as f64,
        n_items: rhos.len(),
        skipped_items: skipped,
        debiased: debias,
    })
}

/// Ordinary least squares fit of y = a x^2 + b x + c.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Option<QuadraticFit> {
    let mut distinct: Vec<f64> = points.iter().map(|(x, _)| *x).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mut sx = [0.0f64; 5];
    let (mut sy, mut sxy, mut sx2y) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let mut xp = 1.0;
        for s in sx.iter_mut() {
            *s += xp;
            xp *= x;
        }
        sy += y;
        sxy += x * y;
        sx2y += x * x * y;
    }
    // Normal equations for [a, b, c] in y = a x^2 + b x + c.
    let m = [
        [sx[4], sx[3], sx[2], sx2y],
        [sx[3], sx[2], sx[1], sxy],
        [sx[2], sx[1], sx[0], sy],
    ];
    let coeffs = solve3(m)?;
    let (a, b, c) = (coeffs[0], coeffs[1], coeffs[2]);
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(x, y) in points {
        let pred = a * x * x + b * x + c;
        ss_res += (y - pred).powi(2);
        ss_tot += (y - mean_y).powi(2);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    let vertex = if a < 0.0 { Some(-b / (2.0 * a)) } else { None };
    Some(QuadraticFit { a, b, c, r_squared, vertex })
}

fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| {
            m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap()
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let factor = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= factor * m[col][k];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// One (preference rate, agreement) point per instruction, plus the
/// quadratic fit when at least 3 distinct rates exist.
pub fn sensitivity_report(
    instructions: &[Instruction],
    dataset: &Dataset,
    aspect: &str,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    debias: bool,
    pairs: &[PairTask],
) -> Result<SensitivityReport> {
    if pairs.is_empty() {
        return Err(Error::Precondition("empty pair sample".into()));
    }
    let unlabeled = dataset.unlabeled();
    let options = JudgeOptions { debias, fallback_votes: None };
    let spec = dataset
        .aspect(aspect)
        .ok_or_else(|| Error::Precondition(format!("unknown aspect '{aspect}'")))?;
    let first_label = spec.verbalizer[0].clone();
    let mut points = Vec::with_capacity(instructions.len());
    for instruction in instructions {
        let dist = judge::preference_distribution(
            instruction,
            pairs,
            &unlabeled,
            template,
            backend,
            options,
        )?;
        let report = agreement(instruction, dataset, aspect, template, backend, debias)?;
        points.push(SensitivityPoint {
            instruction_id: instruction.id.clone(),
            preference_rate: dist.rate(&first_label),
            spearman_rho: report.spearman_rho,
        });
    }
    let xy: Vec<(f64, f64)> =
        points.iter().map(|p| (p.preference_rate, p.spearman_rho)).collect();
    let fit = fit_quadratic(&xy);
    let degenerate = fit.is_none();
    Ok(SensitivityReport {
        aspect: aspect.to_string(),
        debiased: debias,
        points,
        fit,
        degenerate,
    })
}
