mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairpref::judge::{self, JudgeOptions};
use fairpref::metaeval;
use fairpref::objectives::ObjectiveKind;
use fairpref::optimizer::{self, TraceLog};
use fairpref::{Error, Result};

use config::RunConfig;

/// Pairwise-evaluator toolkit: instruction optimization toward fair
/// preference distributions, judging, and meta-evaluation.
#[derive(Parser)]
#[command(name = "fairpref", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the aspect's instruction on unlabeled pairs.
    Optimize(Common),
    /// Judge sampled pairs and report the preference distribution.
    Judge(Common),
    /// Correlate judge winrates with the dataset's human scores.
    Agreement(Common),
    /// Preference rate vs agreement across instructions, with a quadratic fit.
    Sensitivity(Common),
    /// Rank-correlate every zero-shot objective with human agreement.
    CompareObjectives(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's random seed; the only entropy source.
    #[arg(long)]
    seed: Option<u64>,
    /// Average each pair over both slot orders.
    #[arg(long)]
    debias: bool,
    /// fairness | confidence | cf_confidence | calibration
    #[arg(long)]
    objective: Option<String>,
    /// Pair-sample budget per instruction.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    population: Option<u32>,
    /// Persist backend responses here; shareable between runs.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.optimize.seed = seed;
        }
        if self.debias {
            config.optimize.debias = true;
        }
        if let Some(objective) = &self.objective {
            objective.parse::<ObjectiveKind>()?;
            config.optimize.objective = objective.clone();
        }
        if let Some(pairs) = self.pairs {
            config.optimize.pairs = pairs;
        }
        if let Some(epochs) = self.epochs {
            config.optimize.epochs = epochs;
        }
        if let Some(population) = self.population {
            config.optimize.population = population;
        }
        if let Some(dir) = &self.cache_dir {
            config.cache_dir = Some(dir.clone());
        }
        if let Some(dir) = &self.out {
            config.output_dir = dir.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Optimize(args) => run(args, cmd_optimize),
        Command::Judge(args) => run(args, cmd_judge),
        Command::Agreement(args) => run(args, cmd_agreement),
        Command::Sensitivity(args) => run(args, cmd_sensitivity),
        Command::CompareObjectives(args) => run(args, cmd_compare_objectives),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(args: &Common, cmd: fn(&RunConfig) -> Result<()>) -> Result<()> {
    let config = args.load()?;
    std::fs::create_dir_all(&config.output_dir)?;
    cmd(&config)
}

/// 2 config/validation, 3 backend/transport, 4 analysis undefined,
/// 1 anything else.
fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Parse(_) | Error::Validation(_) | Error::Precondition(_) | Error::Render(_) => 2,
        Error::Transport { .. } | Error::Protocol(_) | Error::Capability(_) => 3,
        Error::UndefinedCorrelation(_) | Error::InsufficientPoints(_) | Error::Aggregation(_) => 4,
        _ => 1,
    }
}

fn write_report<T: serde::Serialize>(config: &RunConfig, stem: &str, report: &T) -> Result<PathBuf> {
    let path = config.output_dir.join(format!("{stem}-{}.json", config.run_id()));
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    std::fs::write(&path, body)?;
    Ok(path)
}

fn cmd_optimize(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    dataset.validate()?;
    let template = config.load_template()?;
    let evaluator = config.build_evaluator(&dataset)?;
    let paraphraser = config.build_paraphraser()?;
    let seed_instruction = config.instructions(&dataset)?.remove(0);
    let optimize_config = config.optimize_config()?;

    let run_id = config.run_id();
    let trace_path = config.output_dir.join(format!("optimize-{run_id}.trace.jsonl"));
    let mut log = TraceLog::open_append(&trace_path)?;
    if !log.resumed_lines().is_empty() {
        log::info!(
            "resuming from {} recorded lines in {}",
            log.resumed_lines().len(),
            trace_path.display()
        );
    }
    let trace = optimizer::zepo_optimize(
        &seed_instruction,
        &dataset.unlabeled(),
        &optimize_config,
        &evaluator,
        &paraphraser,
        &template,
        &mut log,
    )?;
    let best_path = write_report(config, "optimize-best", &trace.best)?;
    println!(
        "Initial: {:.3}  Optimized: {:.3}",
        trace.initial.objective.value, trace.best.objective.value
    );
    println!("Best instruction ({}): {}", trace.best.instruction.id, trace.best.instruction.text);
    println!("Trace: {}", trace_path.display());
    println!("Best: {}", best_path.display());
    Ok(())
}

fn cmd_judge(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    dataset.validate()?;
    let template = config.load_template()?;
    let evaluator = config.build_evaluator(&dataset)?;
    let instruction = config.instructions(&dataset)?.remove(0);
    let unlabeled = dataset.unlabeled();
    let pairs = judge::sample_pairs(&unlabeled, config.pairs_budget(), config.optimize.seed)?;
    let options = JudgeOptions { debias: config.optimize.debias, fallback_votes: None };
    let dist = judge::preference_distribution(
        &instruction,
        &pairs,
        &unlabeled,
        &template,
        &evaluator,
        options,
    )?;
    let path = write_report(config, "judge", &dist)?;
    for (label, rate) in &dist.rates {
        println!("p({label}) = {rate:.4}");
    }
    println!("Report: {}", path.display());
    Ok(())
}

fn cmd_agreement(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    dataset.validate()?;
    let template = config.load_template()?;
    let evaluator = config.build_evaluator(&dataset)?;
    let instruction = config.instructions(&dataset)?.remove(0);
    let report = metaeval::agreement(
        &instruction,
        &dataset,
        &config.aspect,
        &template,
        &evaluator,
        config.optimize.debias,
    )?;
    let path = write_report(config, "agreement", &report)?;
    println!(
        "Spearman rho = {:.4} over {} items ({} skipped)",
        report.spearman_rho, report.n_items, report.skipped_items
    );
    println!("Report: {}", path.display());
    Ok(())
}

fn cmd_sensitivity(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    dataset.validate()?;
    let template = config.load_template()?;
    let evaluator = config.build_evaluator(&dataset)?;
    let instructions = config.instructions(&dataset)?;
    let unlabeled = dataset.unlabeled();
    let pairs = judge::sample_pairs(&unlabeled, config.pairs_budget(), config.optimize.seed)?;
    let report = metaeval::sensitivity_report(
        &instructions,
        &dataset,
        &config.aspect,
        &template,
        &evaluator,
        config.optimize.debias,
        &pairs,
    )?;
    let path = write_report(config, "sensitivity", &report)?;
    for point in &report.points {
        println!(
            "{}: p = {:.4}, rho = {:.4}",
            point.instruction_id, point.preference_rate, point.spearman_rho
        );
    }
    if let Some(fit) = &report.fit {
        println!(
            "fit: a = {:.4}, b = {:.4}, c = {:.4}, r2 = {:.4}, vertex = {}",
            fit.a,
            fit.b,
            fit.c,
            fit.r_squared,
            fit.vertex.map_or("n/a".into(), |v| format!("{v:.4}")),
        );
    }
    println!("Report: {}", path.display());
    Ok(())
}

fn cmd_compare_objectives(config: &RunConfig) -> Result<()> {
    let dataset = config.load_dataset()?;
    dataset.validate()?;
    let template = config.load_template()?;
    let evaluator = config.build_evaluator(&dataset)?;
    let instructions = config.instructions(&dataset)?;
    let pairs = judge::sample_pairs(
        &dataset.unlabeled(),
        config.pairs_budget(),
        config.optimize.seed,
    )?;
    let report = optimizer::compare_objectives(
        &instructions,
        &dataset,
        &evaluator,
        &template,
        &pairs,
        &ObjectiveKind::ALL,
        &config.aspect,
        config.optimize.debias,
    )?;
    let path = write_report(config, "compare-objectives", &report)?;
    for (name, corr) in &report.correlations {
        match corr {
            Some(c) => println!("corr({name}, rho) = {c:.4}"),
            None => println!("corr({name}, rho) undefined"),
        }
    }
    println!("Report: {}", path.display());
    if report.insufficient() {
        return Err(Error::InsufficientPoints(format!(
            "{} instruction(s) give no rankable spread; need at least 2 distinct rows",
            report.rows.len()
        )));
    }
    Ok(())
}
