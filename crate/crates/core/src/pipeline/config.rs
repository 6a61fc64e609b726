use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{ExplainerConfig, Method};
use crate::dataset::{SplitSpec, SyntheticSpec, DEFAULT_LABEL_COLUMN};
use crate::error::{Error, Result};
use crate::evaluation::{TopkSpec, DEFAULT_TAIL_QUANTILE, DEFAULT_TAU};
use crate::mlp::MlpConfig;
use crate::rng::derive_seed;

pub const CONFIG_VERSION: u32 = 1;

/// Full pipeline configuration, read from a single JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitFractions,
    /// Standardize every split with statistics fit on the training split.
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub mlp: MlpConfig,
    pub background: BackgroundSpec,
    #[serde(default)]
    pub explanation: ExplanationSpec,
    #[serde(default = "default_explainers")]
    pub explainers: Vec<ExplainerConfig>,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
}

fn yes() -> bool {
    true
}

fn default_explainers() -> Vec<ExplainerConfig> {
    vec![ExplainerConfig::default()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        /// Relative paths resolve against the config file's directory.
        path: PathBuf,
        #[serde(default = "default_label")]
        label_column: String,
    },
    Synthetic {
        n: usize,
        d: usize,
        event_rate: f64,
        n_informative: usize,
        #[serde(default)]
        effect_sizes: Option<Vec<f64>>,
        #[serde(default)]
        noise_scale: f64,
    },
}

fn default_label() -> String {
    DEFAULT_LABEL_COLUMN.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// A background rate: a number, or `"original"` for the training split's
/// own event rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Value(f64),
    Named(RateKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKeyword {
    Original,
}

impl Rate {
    pub const ORIGINAL: Rate = Rate::Named(RateKeyword::Original);

    pub fn is_original(self) -> bool {
        matches!(self, Rate::Named(RateKeyword::Original))
    }

    /// Resolves against the natural rate `p0`.
    pub fn value(self, p0: f64) -> f64 {
        match self {
            Rate::Value(p) => p,
            Rate::Named(RateKeyword::Original) => p0,
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Value(p) => write!(f, "{p}"),
            Rate::Named(RateKeyword::Original) => f.write_str("original"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub size: usize,
    pub rates: Vec<Rate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// The source split as is.
    Full,
    /// Majority class under-sampled to the background's rate.
    Undersampled,
}

impl Variant {
    pub fn short(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Undersampled => "under",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplanationSpec {
    pub source: SplitName,
    pub variants: Vec<Variant>,
    /// Largest cluster count tried by the elbow search.
    pub k_max: usize,
    /// Skip the elbow search and use this many clusters.
    pub clusters: Option<usize>,
}

impl Default for ExplanationSpec {
    fn default() -> Self {
        Self {
            source: SplitName::Val,
            variants: vec![Variant::Full, Variant::Undersampled],
            k_max: 10,
            clusters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSpec {
    pub k_min: usize,
    pub k_max: usize,
    pub replicates: usize,
    pub level: f64,
    pub tail_quantile: f64,
    pub tau: f64,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        let t = TopkSpec::default();
        Self {
            k_min: t.k_min,
            k_max: t.k_max,
            replicates: t.replicates,
            level: t.level,
            tail_quantile: DEFAULT_TAIL_QUANTILE,
            tau: DEFAULT_TAU,
        }
    }
}

impl EvaluationSpec {
    pub fn topk(&self) -> TopkSpec {
        TopkSpec {
            k_min: self.k_min,
            k_max: self.k_max,
            replicates: self.replicates,
            level: self.level,
        }
    }
}

/// One (background rate, explanation variant, explainer) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub id: String,
    pub rate: Rate,
    pub variant: Variant,
    pub explainer: ExplainerConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let DataSource::Csv { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if let Some(spec) = self.synthetic_spec() {
            spec.validate()?;
        }
        self.split_spec().validate()?;
        self.mlp.validate()?;
        if self.background.size == 0 {
            return Err(Error::config("background size must be positive"));
        }
        if self.background.rates.is_empty() {
            return Err(Error::config("background rates must not be empty"));
        }
        for (i, r) in self.background.rates.iter().enumerate() {
            if let Rate::Value(p) = r {
                if !(*p > 0.0 && *p <= 0.5) {
                    return Err(Error::config(format!("background rate {p} outside (0, 0.5]")));
                }
            }
            if self.background.rates[..i].contains(r) {
                return Err(Error::config(format!("duplicate background rate {r}")));
            }
        }
        if self.explanation.variants.is_empty() {
            return Err(Error::config("explanation variants must not be empty"));
        }
        if self.explanation.k_max < 3 && self.explanation.clusters.is_none() {
            return Err(Error::config("explanation k_max ≥ 3"));
        }
        if self.explanation.clusters == Some(0) {
            return Err(Error::config("explanation clusters must be positive"));
        }
        if self.explainers.is_empty() {
            return Err(Error::config("at least one explainer is required"));
        }
        for (i, e) in self.explainers.iter().enumerate() {
            e.validate()?;
            if self.explainers[..i].iter().any(|o| o.method == e.method) {
                return Err(Error::config(format!("explainer {} listed twice", e.method.as_str())));
            }
        }
        let ev = &self.evaluation;
        if !(ev.tail_quantile > 0.0 && ev.tail_quantile < 0.5) {
            return Err(Error::config("tail_quantile must lie in (0, 0.5)"));
        }
        if !(ev.tau > 0.0) {
            return Err(Error::config("tau must be > 0"));
        }
        if let Some(d) = self.known_d() {
            self.validate_for(d)?;
        }
        Ok(())
    }

    /// Checks that depend on the feature count.
    pub fn validate_for(&self, d: usize) -> Result<()> {
        self.evaluation.topk().validate(d)
    }

    fn known_d(&self) -> Option<usize> {
        match &self.data {
            DataSource::Synthetic { d, .. } => Some(*d),
            DataSource::Csv { .. } => None,
        }
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match &self.data {
            DataSource::Synthetic {
                n,
                d,
                event_rate,
                n_informative,
                effect_sizes,
                noise_scale,
            } => {
                let mut spec = SyntheticSpec::new(*n, *d, *event_rate, *n_informative, derive_seed(self.seed, "synth", 0));
                if let Some(e) = effect_sizes {
                    spec.effect_sizes = e.clone();
                }
                spec.noise_scale = *noise_scale;
                Some(spec)
            }
            DataSource::Csv { .. } => None,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_frac: self.split.train,
            val_frac: self.split.val,
            test_frac: self.split.test,
            seed: derive_seed(self.seed, "split", 0),
        }
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            seed: derive_seed(self.seed, "mlp", 0),
            ..self.mlp.clone()
        }
    }

    pub fn background_seed(&self, rate: Rate) -> u64 {
        derive_seed(self.seed, &format!("background/{rate}"), 0)
    }

    pub fn undersample_seed(&self, rate: Rate) -> u64 {
        derive_seed(self.seed, &format!("undersample/{rate}"), 0)
    }

    pub fn cluster_seed(&self) -> u64 {
        derive_seed(self.seed, "clusters", 0)
    }

    pub fn topk_seed(&self) -> u64 {
        derive_seed(self.seed, "topk", 0)
    }

    pub fn full_model_auc_seed(&self) -> u64 {
        derive_seed(self.seed, "auc", 0)
    }

    /// Explainer seed for a background and method. The explanation variant
    /// is deliberately left out, so a row explained in both variants gets
    /// the same attribution.
    pub fn explainer_seed(&self, rate: Rate, method: Method) -> u64 {
        derive_seed(self.seed, &format!("explain/{rate}/{}", method.as_str()), 0)
    }

    /// Grid cells in a fixed order: rate, then variant, then explainer.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        for &rate in &self.background.rates {
            for &variant in &self.explanation.variants {
                for e in &self.explainers {
                    out.push(CellSpec {
                        id: format!("{rate}_{}_{}", variant.short(), e.method.as_str()),
                        rate,
                        variant,
                        explainer: ExplainerConfig {
                            seed: self.explainer_seed(rate, e.method),
                            ..e.clone()
                        },
                    });
                }
            }
        }
        out
    }
}
