// Manual calibration sweeps for the simulated-judge mechanism.
// Run with: cargo test -p fairpref --test explore -- --ignored --nocapture

use std::collections::BTreeMap;

use fairpref::backend::{
    DeltaModel, EchoParaphraser, SharpnessModel, SimulatedBackend, SimulatedEvaluatorParams,
};
use fairpref::judge::{self, PromptTemplate};
use fairpref::metaeval;
use fairpref::model::Instruction;
use fairpref::objectives::ObjectiveKind;
use fairpref::optimizer::{self, OptimizeConfig, TraceLog};
use fairpref::synth;

const ASPECT: &str = "coherence";

fn family(deltas: &[f64]) -> (Vec<Instruction>, BTreeMap<String, f64>) {
    let mut instructions = Vec::new();
    let mut table = BTreeMap::new();
    for (k, &d) in deltas.iter().enumerate() {
        let text = format!("Judge the coherence of both summaries, variant {k}.");
        instructions.push(Instruction {
            id: format!("m{k}"),
            text: text.clone(),
            aspect: ASPECT.into(),
            parent_id: None,
            epoch: 0,
        });
        table.insert(text, d);
    }
    (instructions, table)
}

#[test]
#[ignore]
fn sweep_quadratic_shape() {
    let dataset = synth::synthetic_dataset(24, 8, ASPECT, "Judge the coherence.", 7);
    let qualities = synth::planted_qualities(&dataset, ASPECT);
    let deltas: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.3).collect();
    let (instructions, table) = family(&deltas);
    for (sigma, sharp_max, disc) in [(0.8, 2.0, 0.5), (0.7, 2.0, 0.8), (0.9, 1.8, 0.6)] {
        let params = SimulatedEvaluatorParams {
            gamma: 1.0,
            position_bias: 0.0,
            delta: DeltaModel::Table { values: table.clone() },
            sharpness: SharpnessModel::Hash { seed: 3, min: 0.5, max: sharp_max },
            noise_sigma: sigma,
            noise_seed: 11,
            discrimination_penalty: disc,
        };
        let mut backend = SimulatedBackend::new(params);
        backend.set_qualities(qualities.clone());
        let template = PromptTemplate::summarization();
        let pairs = judge::sample_pairs(&dataset.unlabeled(), 1500, 0).unwrap();
        let report = metaeval::sensitivity_report(
            &instructions,
            &dataset,
            ASPECT,
            &template,
            &backend,
            false,
            &pairs,
        )
        .unwrap();
        println!("--- sigma={sigma} sharp_max={sharp_max} disc={disc}");
        for p in &report.points {
            println!("  p={:.3} rho={:.3}", p.preference_rate, p.spearman_rho);
        }
        if let Some(fit) = &report.fit {
            println!(
                "  fit a={:.3} b={:.3} c={:.3} r2={:.3} vertex={:?}",
                fit.a, fit.b, fit.c, fit.r_squared, fit.vertex
            );
        }
    }
}

#[test]
#[ignore]
fn sweep_objective_ordering() {
    let dataset = synth::synthetic_dataset(24, 8, ASPECT, "Judge the coherence.", 7);
    let qualities = synth::planted_qualities(&dataset, ASPECT);
    let deltas: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.3).collect();
    let (instructions, table) = family(&deltas);
    let params = SimulatedEvaluatorParams {
        gamma: 1.0,
        position_bias: 0.0,
        delta: DeltaModel::Table { values: table.clone() },
        sharpness: SharpnessModel::Hash { seed: 3, min: 0.5, max: 2.0 },
        noise_sigma: 0.8,
        noise_seed: 11,
        discrimination_penalty: 0.5,
    };
    let mut backend = SimulatedBackend::new(params);
    backend.set_qualities(qualities.clone());
    let template = PromptTemplate::summarization();
    let pairs = judge::sample_pairs(&dataset.unlabeled(), 1500, 0).unwrap();
    let report = optimizer::compare_objectives(
        &instructions,
        &dataset,
        &backend,
        &template,
        &pairs,
        &ObjectiveKind::ALL,
        ASPECT,
        false,
    )
    .unwrap();
    for (kind, corr) in &report.correlations {
        println!("{kind}: {:?}", corr.map(|c| (c * 1000.0).round() / 1000.0));
    }
    for row in &report.rows {
        println!(
            "  {} rho={:.3} scores={:?}",
            row.instruction_id,
            row.agreement_rho,
            row.scores
                .iter()
                .map(|(k, v)| format!("{k}={v:.3}"))
                .collect::<Vec<_>>()
        );
    }
}

fn find_biased_seed(params: &SimulatedEvaluatorParams, min_abs: f64) -> String {
    for k in 0..200 {
        let text = format!("Judge the coherence of both summaries. seedvariant {k}");
        if params.delta_of(&text) >= min_abs {
            return text;
        }
    }
    panic!("no biased seed found");
}

#[test]
#[ignore]
fn sweep_optimization_gain() {
    let template = PromptTemplate::summarization();
    let mut improved_p = 0;
    let mut improved_rho = 0;
    let n_seeds = 20;
    for seed in 0..n_seeds {
        let dataset = synth::synthetic_dataset(12, 6, ASPECT, "Judge the coherence.", 100 + seed);
        let qualities = synth::planted_qualities(&dataset, ASPECT);
        let params = SimulatedEvaluatorParams {
            gamma: 1.0,
            position_bias: 0.0,
            delta: DeltaModel::Hash { seed: 40 + seed, range: 1.5 },
            sharpness: SharpnessModel::Fixed { value: 1.0 },
            noise_sigma: 0.8,
            noise_seed: 11 + seed,
            discrimination_penalty: 1.0,
        };
        let seed_text = find_biased_seed(&params, 1.2);
        let seed_instr = Instruction::seed("seed", seed_text, ASPECT);
        let mut backend = SimulatedBackend::new(params);
        backend.set_qualities(qualities.clone());
        let config = OptimizeConfig {
            epochs: 5,
            population: 5,
            pairs_per_instruction: 200,
            seed,
            ..OptimizeConfig::default()
        };
        let mut tlog = TraceLog::in_memory();
        let trace = optimizer::zepo_optimize(
            &seed_instr,
            &dataset.unlabeled(),
            &config,
            &backend,
            &EchoParaphraser,
            &template,
            &mut tlog,
        )
        .unwrap();
        let p0 = trace.initial.rates["A"];
        let p1 = trace.best.rates["A"];
        let rho0 = metaeval::agreement(&seed_instr, &dataset, ASPECT, &template, &backend, false)
            .unwrap()
            .spearman_rho;
        let rho1 = metaeval::agreement(
            &trace.best.instruction,
            &dataset,
            ASPECT,
            &template,
            &backend,
            false,
        )
        .unwrap()
        .spearman_rho;
        println!(
            "seed {seed}: p {p0:.3}->{p1:.3}  rho {rho0:.3}->{rho1:.3}  best={}",
            trace.best.instruction.id
        );
        if (p1 - 0.5).abs() <= (p0 - 0.5).abs() {
            improved_p += 1;
        }
        if rho1 >= rho0 {
            improved_rho += 1;
        }
    }
    println!("fairer: {improved_p}/{n_seeds}  rho>=: {improved_rho}/{n_seeds}");
}

#[test]
#[ignore]
fn sweep_debias_stacking() {
    let template = PromptTemplate::summarization();
    let n_seeds = 20;
    let (mut sum_zepo, mut sum_debias, mut sum_both) = (0.0, 0.0, 0.0);
    for seed in 0..n_seeds {
        let dataset = synth::synthetic_dataset(12, 6, ASPECT, "Judge the coherence.", 100 + seed);
        let qualities = synth::planted_qualities(&dataset, ASPECT);
        let params = SimulatedEvaluatorParams {
            gamma: 1.0,
            position_bias: 1.0,
            delta: DeltaModel::Hash { seed: 40 + seed, range: 1.5 },
            sharpness: SharpnessModel::Fixed { value: 1.0 },
            noise_sigma: 0.8,
            noise_seed: 11 + seed,
            discrimination_penalty: 1.0,
        };
        let seed_text = find_biased_seed(&params, 1.2);
        let seed_instr = Instruction::seed("seed", seed_text, ASPECT);
        let mut backend = SimulatedBackend::new(params);
        backend.set_qualities(qualities.clone());

        let run = |debias: bool| {
            let config = OptimizeConfig {
                epochs: 5,
                population: 5,
                pairs_per_instruction: 200,
                seed,
                debias,
                ..OptimizeConfig::default()
            };
            let mut tlog = TraceLog::in_memory();
            let trace = optimizer::zepo_optimize(
                &seed_instr,
                &dataset.unlabeled(),
                &config,
                &backend,
                &EchoParaphraser,
                &template,
                &mut tlog,
            )
            .unwrap();
            metaeval::agreement(&trace.best.instruction, &dataset, ASPECT, &template, &backend, debias)
                .unwrap()
                .spearman_rho
        };
        let rho_zepo = run(false);
        let rho_both = run(true);
        let rho_debias =
            metaeval::agreement(&seed_instr, &dataset, ASPECT, &template, &backend, true)
                .unwrap()
                .spearman_rho;
        println!("seed {seed}: zepo={rho_zepo:.3} debias={rho_debias:.3} both={rho_both:.3}");
        sum_zepo += rho_zepo;
        sum_debias += rho_debias;
        sum_both += rho_both;
    }
    println!(
        "means: zepo={:.3} debias={:.3} both={:.3}",
        sum_zepo / n_seeds as f64,
        sum_debias / n_seeds as f64,
        sum_both / n_seeds as f64
    );
}
