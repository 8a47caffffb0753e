//! Run configuration: a single TOML file capturing everything about a run
//! except the API key, which is pulled from the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fairpref::backend::{
    CachedBackend, ChatBackend, DeltaModel, EchoParaphraser, RemoteBackend, RemoteConfig,
    SharpnessModel, SimulatedBackend, SimulatedEvaluatorParams,
};
use fairpref::judge::{PromptTemplate, TemplateKind};
use fairpref::model::{Dataset, Instruction};
use fairpref::objectives::ObjectiveKind;
use fairpref::optimizer::{self, OptimizeConfig};
use fairpref::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub aspect: String,
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_file: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Optional explicit instruction list; falls back to the aspect's seed
    /// instruction when empty.
    #[serde(default)]
    pub instructions: Vec<InstructionEntry>,
    #[serde(default)]
    pub optimize: OptimizeSection,
    pub evaluator: BackendSpec,
    #[serde(default)]
    pub paraphraser: BackendSpec,
}

fn default_template() -> String {
    "summarization".into()
}

fn default_output_dir() -> PathBuf {
    "runs".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstructionEntry {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeSection {
    pub epochs: u32,
    pub population: u32,
    /// Pair-sample budget per instruction; 0 picks the per-benchmark
    /// default from the dataset name.
    pub pairs: usize,
    pub objective: String,
    pub paraphraser_temperature: f64,
    pub elitism: bool,
    pub seed: u64,
    pub debias: bool,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let d = OptimizeConfig::default();
        OptimizeSection {
            epochs: d.epochs,
            population: d.population,
            pairs: 0,
            objective: d.objective.name().into(),
            paraphraser_temperature: d.paraphraser_temperature,
            elitism: d.elitism,
            seed: d.seed,
            debias: d.debias,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Remote {
        endpoint: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    Simulated {
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default)]
        position_bias: f64,
        #[serde(default)]
        delta: DeltaSpec,
        #[serde(default)]
        sharpness: SharpnessSpec,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        noise_seed: u64,
        #[serde(default)]
        discrimination_penalty: f64,
        /// Extra candidate-text -> quality entries; merged over the
        /// qualities planted from the dataset's scores when present.
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        qualities: BTreeMap<String, f64>,
    },
    /// Deterministic offline paraphraser; not valid as an evaluator.
    #[default]
    Echo,
}

fn default_timeout_secs() -> u64 {
    60
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaSpec {
    #[default]
    None,
    Hash {
        seed: u64,
        range: f64,
    },
    Table {
        values: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SharpnessSpec {
    Fixed { value: f64 },
    Hash { seed: u64, min: f64, max: f64 },
}

impl Default for SharpnessSpec {
    fn default() -> Self {
        SharpnessSpec::Fixed { value: 1.0 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            Error::Validation(format!("cannot read config '{}': {e}", path.display()))
        })?;
        let config: RunConfig = toml::from_str(&raw)
            .map_err(|e| Error::Validation(format!("config '{}': {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.aspect.trim().is_empty() {
            return Err(Error::Validation("aspect must be non-empty".into()));
        }
        if !matches!(self.template.as_str(), "summarization" | "dialog") {
            return Err(Error::Validation(format!(
                "unknown template kind '{}' (expected summarization or dialog)",
                self.template
            )));
        }
        if matches!(self.evaluator, BackendSpec::Echo) {
            return Err(Error::Validation(
                "the echo backend cannot act as an evaluator".into(),
            ));
        }
        self.objective_kind()?;
        Ok(())
    }

    pub fn objective_kind(&self) -> Result<ObjectiveKind> {
        self.optimize.objective.parse()
    }

    pub fn template_kind(&self) -> TemplateKind {
        match self.template.as_str() {
            "dialog" => TemplateKind::Dialog,
            _ => TemplateKind::Summarization,
        }
    }

    pub fn load_template(&self) -> Result<PromptTemplate> {
        match &self.template_file {
            Some(path) => PromptTemplate::from_file(path, self.template_kind()),
            None => Ok(match self.template_kind() {
                TemplateKind::Dialog => PromptTemplate::dialog(),
                TemplateKind::Summarization => PromptTemplate::summarization(),
            }),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        fairpref::load_dataset(&self.dataset)
            .map_err(|e| Error::Validation(format!("dataset '{}': {e}", self.dataset.display())))
    }

    /// Instructions to analyze: the configured list, or the aspect's seed
    /// instruction when none are given.
    pub fn instructions(&self, dataset: &Dataset) -> Result<Vec<Instruction>> {
        if !self.instructions.is_empty() {
            return Ok(self
                .instructions
                .iter()
                .map(|e| Instruction::seed(&e.id, &e.text, &self.aspect))
                .collect());
        }
        let spec = dataset.aspect(&self.aspect).ok_or_else(|| {
            Error::Validation(format!(
                "dataset '{}' has no aspect '{}'",
                dataset.name, self.aspect
            ))
        })?;
        Ok(vec![spec.seed_instruction.clone()])
    }

    pub fn optimize_config(&self) -> Result<OptimizeConfig> {
        let config = OptimizeConfig {
            epochs: self.optimize.epochs,
            population: self.optimize.population,
            pairs_per_instruction: self.pairs_budget(),
            objective: self.objective_kind()?,
            paraphraser_temperature: self.optimize.paraphraser_temperature,
            elitism: self.optimize.elitism,
            seed: self.optimize.seed,
            debias: self.optimize.debias,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn pairs_budget(&self) -> usize {
        if self.optimize.pairs > 0 {
            self.optimize.pairs
        } else {
            optimizer::default_pairs_budget(
                self.dataset.file_stem().and_then(|s| s.to_str()).unwrap_or(""),
            )
        }
    }

    /// Hash of the resolved config; names every output file so runs with
    /// different settings never collide.
    pub fn run_id(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        format!("{:x}", hasher.finalize())[..12].to_string()
    }

    pub fn build_evaluator(&self, dataset: &Dataset) -> Result<CachedBackend<Arc<dyn ChatBackend>>> {
        let inner = build_backend(&self.evaluator, Some((dataset, &self.aspect)), "EVALUATOR_API_KEY")?;
        self.wrap_cache(inner)
    }

    pub fn build_paraphraser(&self) -> Result<CachedBackend<Arc<dyn ChatBackend>>> {
        let inner = build_backend(&self.paraphraser, None, "PARAPHRASER_API_KEY")?;
        self.wrap_cache(inner)
    }

    fn wrap_cache(
        &self,
        inner: Arc<dyn ChatBackend>,
    ) -> Result<CachedBackend<Arc<dyn ChatBackend>>> {
        match &self.cache_dir {
            Some(dir) => CachedBackend::with_dir(inner, dir),
            None => Ok(CachedBackend::new(inner)),
        }
    }
}

/// Expand `${VAR}` references against the process environment.
fn expand_env(value: &str) -> Result<String> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let tail = &rest[start + 2..];
        let end = tail
            .find('}')
            .ok_or_else(|| Error::Validation(format!("unterminated ${{...}} in '{value}'")))?;
        let name = &tail[..end];
        let resolved = std::env::var(name)
            .map_err(|_| Error::Validation(format!("environment variable '{name}' is not set")))?;
        out.push_str(&resolved);
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn build_backend(
    spec: &BackendSpec,
    planted: Option<(&Dataset, &str)>,
    default_key_env: &str,
) -> Result<Arc<dyn ChatBackend>> {
    match spec {
        BackendSpec::Remote { endpoint, model, api_key_env, timeout_secs } => {
            let key_env = api_key_env.as_deref().unwrap_or(default_key_env);
            let config = RemoteConfig {
                endpoint: expand_env(endpoint)?,
                model: expand_env(model)?,
                api_key: std::env::var(key_env).ok(),
                timeout: Duration::from_secs(*timeout_secs),
            };
            Ok(Arc::new(RemoteBackend::new(config)?))
        }
        BackendSpec::Simulated {
            gamma,
            position_bias,
            delta,
            sharpness,
            noise_sigma,
            noise_seed,
            discrimination_penalty,
            qualities,
        } => {
            let params = SimulatedEvaluatorParams {
                gamma: *gamma,
                position_bias: *position_bias,
                delta: match delta {
                    DeltaSpec::None => DeltaModel::None,
                    DeltaSpec::Hash { seed, range } => {
                        DeltaModel::Hash { seed: *seed, range: *range }
                    }
                    DeltaSpec::Table { values } => DeltaModel::Table { values: values.clone() },
                },
                sharpness: match sharpness {
                    SharpnessSpec::Fixed { value } => SharpnessModel::Fixed { value: *value },
                    SharpnessSpec::Hash { seed, min, max } => {
                        SharpnessModel::Hash { seed: *seed, min: *min, max: *max }
                    }
                },
                noise_sigma: *noise_sigma,
                noise_seed: *noise_seed,
                discrimination_penalty: *discrimination_penalty,
            };
            let mut backend = match planted {
                Some((dataset, aspect))
                    if dataset.items.iter().all(|i| i.aspect_scores.contains_key(aspect)) =>
                {
                    SimulatedBackend::from_dataset_scores(params, dataset, aspect)?
                }
                _ => SimulatedBackend::new(params),
            };
            if !qualities.is_empty() {
                let mut merged = backend.qualities().clone();
                merged.extend(qualities.clone());
                backend.set_qualities(merged);
            }
            Ok(Arc::new(backend))
        }
        BackendSpec::Echo => Ok(Arc::new(EchoParaphraser)),
    }
}
