//! TOML experiment configuration. Every block rejects unknown keys.
//!
//! All random streams derive from the top-level `seed`; the train/test split
//! keeps its own seed so that different master seeds share one split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{BaselineKind, ColumnKind, LoadOptions, SplitSpec};
use crate::error::{GesdError, Result};
use crate::explainers::ExplainerConfig;
use crate::metrics::EodVariant;
use crate::models::{ModelKind, ModelSpec};
use crate::moea::{audit_seeds, GenomeBounds, MoeaConfig};
use crate::seed::derive_seed;
use crate::selection::{SelectionMethod, SelectionWeights, DEFAULT_REFERENCE};
use crate::stability::{PerturbationConfig, StabilityVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub train: TrainBlock,
    #[serde(default)]
    pub gesd: GesdBlock,
    #[serde(default)]
    pub explainer: ExplainerBlock,
    #[serde(default)]
    pub moea: MoeaBlock,
    #[serde(default)]
    pub selection: SelectionBlock,
    #[serde(default)]
    pub metrics: MetricsBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    /// CSV path; relative paths are resolved against the config file's directory.
    pub path: PathBuf,
    pub label_column: String,
    pub group_column: String,
    /// Whether the group column is also a model input.
    #[serde(default = "yes")]
    pub include_sensitive: bool,
    pub schema: BTreeMap<String, ColumnKind>,
    #[serde(default)]
    pub split: SplitSpec,
}

fn yes() -> bool {
    true
}

impl DatasetBlock {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            label_column: self.label_column.clone(),
            group_column: self.group_column.clone(),
            schema: self.schema.clone(),
            include_sensitive: self.include_sensitive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub kind: ModelKind,
    pub hidden_widths: [usize; 2],
    pub batch_size: usize,
    pub l2_penalty: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        let spec = ModelSpec::mlp();
        ModelBlock {
            kind: spec.kind,
            hidden_widths: spec.hidden_widths,
            batch_size: 32,
            l2_penalty: 0.0,
        }
    }
}

impl ModelBlock {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            hidden_widths: self.hidden_widths,
        }
    }
}

/// Hyperparameters for `audit --train-inline`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainBlock {
    pub learning_rate: f64,
    pub epochs: u32,
    pub threshold: f64,
}

impl Default for TrainBlock {
    fn default() -> Self {
        TrainBlock {
            learning_rate: 0.01,
            epochs: 100,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GesdBlock {
    pub num_perturbations: usize,
    pub gaussian_scale: f64,
    pub mask_probability: f64,
    pub baseline: BaselineKind,
    /// Audited rows for `audit` and for the final re-audit in `select`.
    pub sample_size: usize,
    pub variant: StabilityVariant,
    pub rejection_filter: bool,
    pub stratified: bool,
}

impl Default for GesdBlock {
    fn default() -> Self {
        let p = PerturbationConfig::default();
        GesdBlock {
            num_perturbations: p.num_perturbations,
            gaussian_scale: p.gaussian_scale,
            mask_probability: p.mask_probability,
            baseline: p.baseline,
            sample_size: p.sample_size,
            variant: p.variant,
            rejection_filter: p.rejection_filter,
            stratified: p.stratified,
        }
    }
}

impl GesdBlock {
    pub fn perturbation(&self, seed: u64) -> PerturbationConfig {
        PerturbationConfig {
            num_perturbations: self.num_perturbations,
            gaussian_scale: self.gaussian_scale,
            mask_probability: self.mask_probability,
            baseline: self.baseline,
            sample_size: self.sample_size,
            seed,
            variant: self.variant,
            rejection_filter: self.rejection_filter,
            stratified: self.stratified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainerBlock {
    pub shap_samples: usize,
    pub lime_samples: usize,
    pub lime_kernel_width: Option<f64>,
    pub lime_ridge: f64,
    pub background_size: usize,
    pub normalize_before_aggregation: bool,
}

impl Default for ExplainerBlock {
    fn default() -> Self {
        let e = ExplainerConfig::default();
        ExplainerBlock {
            shap_samples: e.shap_samples,
            lime_samples: e.lime_samples,
            lime_kernel_width: e.lime_kernel_width,
            lime_ridge: e.lime_ridge,
            background_size: e.background_size,
            normalize_before_aggregation: e.normalize_before_aggregation,
        }
    }
}

impl ExplainerBlock {
    pub fn explainer(&self, seed: u64) -> ExplainerConfig {
        ExplainerConfig {
            shap_samples: self.shap_samples,
            lime_samples: self.lime_samples,
            lime_kernel_width: self.lime_kernel_width,
            lime_ridge: self.lime_ridge,
            background_size: self.background_size,
            seed,
            normalize_before_aggregation: self.normalize_before_aggregation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoeaBlock {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub sbx_eta: f64,
    pub mutation_eta: f64,
    pub mutation_prob: Option<f64>,
    pub bounds: GenomeBounds,
    /// Audited rows per evaluation inside the search loop.
    pub in_loop_sample_size: usize,
}

impl Default for MoeaBlock {
    fn default() -> Self {
        let m = MoeaConfig::default();
        MoeaBlock {
            population_size: m.population_size,
            generations: m.generations,
            crossover_prob: m.crossover_prob,
            sbx_eta: m.sbx_eta,
            mutation_eta: m.mutation_eta,
            mutation_prob: m.mutation_prob,
            bounds: m.bounds,
            in_loop_sample_size: 30,
        }
    }
}

impl MoeaBlock {
    pub fn moea(&self, master_seed: u64) -> MoeaConfig {
        MoeaConfig {
            population_size: self.population_size,
            generations: self.generations,
            crossover_prob: self.crossover_prob,
            sbx_eta: self.sbx_eta,
            mutation_eta: self.mutation_eta,
            mutation_prob: self.mutation_prob,
            master_seed,
            bounds: self.bounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionBlock {
    pub method: SelectionMethod,
    /// Weights on `(AUC, DP, GESD)`.
    pub weights: [f64; 3],
    /// Ideal point in normalized `(1 - AUC, DP, GESD)`; the front minimum when absent.
    pub ideal: Option<[f64; 3]>,
    pub reference: [f64; 3],
}

impl Default for SelectionBlock {
    fn default() -> Self {
        SelectionBlock {
            method: SelectionMethod::default(),
            weights: SelectionWeights::default().0,
            ideal: None,
            reference: DEFAULT_REFERENCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsBlock {
    pub eod_variant: EodVariant,
}

/// Seeds of every random stream used by a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub split: u64,
    pub train: u64,
    pub perturbation: u64,
    pub explainer: u64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; a relative dataset path is made
    /// relative to the config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GesdError::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.dataset.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset.path = dir.join(&cfg.dataset.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.label_column == self.dataset.group_column {
            return Err(GesdError::InvalidConfig("label and group columns must differ".into()));
        }
        if !(self.model.batch_size >= 1 && self.model.l2_penalty >= 0.0) {
            return Err(GesdError::InvalidConfig("batch_size must be >= 1 and l2_penalty >= 0".into()));
        }
        if self.model.kind == ModelKind::Mlp && self.model.hidden_widths.contains(&0) {
            return Err(GesdError::InvalidConfig("hidden widths must be positive".into()));
        }
        let t = &self.train;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) || t.epochs == 0 || !(0.0..=1.0).contains(&t.threshold) {
            return Err(GesdError::InvalidConfig(format!("invalid [train] block {t:?}")));
        }
        self.gesd.perturbation(0).validate()?;
        self.explainer.explainer(0).validate()?;
        self.moea.moea(0).validate()?;
        if self.moea.in_loop_sample_size == 0 {
            return Err(GesdError::InvalidConfig("in_loop_sample_size must be positive".into()));
        }
        SelectionWeights::new(self.selection.weights)?;
        if self.selection.reference.iter().any(|r| !r.is_finite()) {
            return Err(GesdError::InvalidConfig("reference point must be finite".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        let (perturbation, explainer) = audit_seeds(self.seed);
        Seeds {
            master: self.seed,
            split: self.dataset.split.seed,
            train: derive_seed(self.seed, &[3]),
            perturbation,
            explainer,
        }
    }

    pub fn perturbation(&self) -> PerturbationConfig {
        self.gesd.perturbation(self.seeds().perturbation)
    }

    pub fn explainer(&self) -> ExplainerConfig {
        self.explainer.explainer(self.seeds().explainer)
    }

    /// In-loop perturbation settings; the seed is replaced per evaluation.
    pub fn in_loop_perturbation(&self) -> PerturbationConfig {
        PerturbationConfig {
            sample_size: self.moea.in_loop_sample_size,
            ..self.gesd.perturbation(0)
        }
    }

    pub fn moea(&self) -> MoeaConfig {
        self.moea.moea(self.seed)
    }

    pub fn selection_weights(&self) -> SelectionWeights {
        SelectionWeights(self.selection.weights)
    }
}
