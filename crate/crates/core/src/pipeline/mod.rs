//! Config-driven orchestration: data, split, train, balance, explain,
//! evaluate. Every stage can run on its own from the previous stage's files
//! under the output directory; [`run_pipeline`] runs them all in memory and
//! finishes with a manifest.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

pub use config::{
    BackgroundSpec, CellSpec, DataSource, EvaluationSpec, ExplanationSpec, PipelineConfig, Rate, RateKeyword,
    SplitFractions, SplitName, Variant, CONFIG_VERSION,
};

use crate::attribution::{explain_set, ShapMatrix};
use crate::balance::{
    compose_background, elbow_of, run_kmeans_with, undersample_explanation, wcss_curve, BackgroundSet, Clustering,
    ExplanationSet, KMeansOptions, MajorityClusters,
};
use crate::dataset::{
    generate_synthetic, load_csv, split_stratified, write_json, Dataset, SplitManifest, StandardizationStats,
    DEFAULT_LABEL_COLUMN,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    bootstrap_auc_ci, detect_abnormal, evaluate_topk, export_beeswarm, global_importance, write_wide_csv,
    AbnormalPoint, AucResult, ImportanceRanking, TopkCache, TopkTable,
};
use crate::mlp::{train_mlp, MlpModel};

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_csv(&self) -> PathBuf {
        self.root.join("data.csv")
    }

    pub fn split_csv(&self, name: &str) -> PathBuf {
        self.root.join("splits").join(format!("{name}.csv"))
    }

    pub fn model_json(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn balance_dir(&self) -> PathBuf {
        self.root.join("balance")
    }

    pub fn background_stem(rate: Rate) -> String {
        format!("background_{rate}")
    }

    pub fn explanation_stem(rate: Rate, variant: Variant) -> String {
        format!("explanation_{rate}_{}", variant.short())
    }

    pub fn cell_dir(&self, id: &str) -> PathBuf {
        self.root.join("cells").join(id)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.json")
    }

    fn relative(&self, p: &Path) -> String {
        let rel = p.strip_prefix(&self.root).unwrap_or(p);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage,
            source: Box::new(other),
        },
    })
}

/// A written file and, for CSV files, its data-row count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
}

#[derive(Debug, Default)]
struct Artifacts {
    list: Vec<Artifact>,
}

impl Artifacts {
    fn add(&mut self, layout: &Layout, path: &Path, rows: Option<usize>) {
        self.list.push(Artifact {
            path: layout.relative(path),
            rows,
        });
    }
}

// ---------------------------------------------------------------- stages

/// Train/validation/test partitions after optional standardization.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &Dataset {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// Loads the CSV source or synthesizes the corpus.
pub fn stage_data(cfg: &PipelineConfig) -> Result<Dataset> {
    let data = match &cfg.data {
        DataSource::Csv { path, label_column } => load_csv(path, label_column)?,
        DataSource::Synthetic { .. } => generate_synthetic(&cfg.synthetic_spec().expect("synthetic source"))?,
    };
    cfg.validate_for(data.d())?;
    Ok(data)
}

pub fn stage_split(cfg: &PipelineConfig, data: &Dataset) -> Result<(Splits, SplitManifest, Option<StandardizationStats>)> {
    let spec = cfg.split_spec();
    let split = split_stratified(data, &spec)?;
    let manifest = split.manifest(&spec);
    let (splits, stats) = if cfg.standardize {
        let stats = StandardizationStats::fit(&split.train)?;
        (
            Splits {
                train: stats.apply(&split.train)?,
                val: stats.apply(&split.val)?,
                test: stats.apply(&split.test)?,
            },
            Some(stats),
        )
    } else {
        (
            Splits {
                train: split.train,
                val: split.val,
                test: split.test,
            },
            None,
        )
    };
    Ok((splits, manifest, stats))
}

pub fn stage_train(cfg: &PipelineConfig, splits: &Splits) -> Result<MlpModel> {
    train_mlp(&splits.train, &splits.val, &cfg.mlp_config())
}

/// Test-split AUC of the all-feature model.
pub fn full_model_auc(cfg: &PipelineConfig, model: &MlpModel, test: &Dataset) -> Result<AucResult> {
    let scores = model.predict_proba(test.features())?;
    bootstrap_auc_ci(
        &scores,
        test.labels(),
        cfg.evaluation.replicates,
        cfg.evaluation.level,
        cfg.full_model_auc_seed(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub k: usize,
    /// WCSS at k = 1..=k_max (empty when the cluster count was fixed).
    pub wcss_curve: Vec<f64>,
    pub sizes: Vec<usize>,
}

/// Explanation data for one (rate, variant) pair.
#[derive(Debug, Clone)]
pub struct ExplanationEntry {
    pub rate: Rate,
    pub variant: Variant,
    /// False when the source was already at or above the rate and the full
    /// source is used unchanged.
    pub undersampled: bool,
    pub set: ExplanationSet,
}

#[derive(Debug, Clone)]
pub struct Balanced {
    pub backgrounds: Vec<(Rate, BackgroundSet)>,
    pub explanations: Vec<ExplanationEntry>,
    pub clusters: Option<ClusterInfo>,
}

impl Balanced {
    pub fn background(&self, rate: Rate) -> &BackgroundSet {
        &self.backgrounds.iter().find(|(r, _)| *r == rate).expect("background per rate").1
    }

    pub fn explanation(&self, rate: Rate, variant: Variant) -> &ExplanationEntry {
        self.explanations
            .iter()
            .find(|e| e.rate == rate && e.variant == variant)
            .expect("explanation per rate and variant")
    }
}

fn needs_undersampling(rate: Rate, source: &Dataset) -> bool {
    !rate.is_original() && rate.value(source.event_rate()) > source.event_rate()
}

fn cluster_majority(cfg: &PipelineConfig, source: &Dataset) -> Result<(Clustering, ClusterInfo)> {
    let points = source.features().select_rows(&source.class_indices(0));
    let opts = KMeansOptions::default();
    let seed = cfg.cluster_seed();
    let (k, curve) = match cfg.explanation.clusters {
        Some(k) => (k, Vec::new()),
        None => {
            let curve = wcss_curve(&points, cfg.explanation.k_max.min(points.rows()), seed, &opts)?;
            (elbow_of(&curve), curve)
        }
    };
    let clustering = run_kmeans_with(&points, k, seed, &opts)?;
    let info = ClusterInfo {
        k,
        wcss_curve: curve,
        sizes: clustering.cluster_sizes(),
    };
    Ok((clustering, info))
}

/// Backgrounds from the training split; explanation sets from the
/// configured source split. The majority class is clustered once and the
/// clustering shared by every rate.
pub fn stage_balance(cfg: &PipelineConfig, splits: &Splits) -> Result<Balanced> {
    let p0 = splits.train.event_rate();
    let backgrounds = cfg
        .background
        .rates
        .iter()
        .map(|&rate| {
            compose_background(&splits.train, cfg.background.size, rate.value(p0), cfg.background_seed(rate))
                .map(|b| (rate, b))
        })
        .collect::<Result<Vec<_>>>()?;

    let source = splits.get(cfg.explanation.source);
    let wants_clusters = cfg.explanation.variants.contains(&Variant::Undersampled)
        && cfg.background.rates.iter().any(|&r| needs_undersampling(r, source));
    let clusters = if wants_clusters {
        Some(cluster_majority(cfg, source)?)
    } else {
        None
    };

    let mut explanations = Vec::new();
    for &rate in &cfg.background.rates {
        for &variant in &cfg.explanation.variants {
            let entry = if variant == Variant::Undersampled && needs_undersampling(rate, source) {
                let (clustering, _) = clusters.as_ref().expect("clustered");
                let set = undersample_explanation(
                    source,
                    rate.value(p0),
                    MajorityClusters::Precomputed(clustering),
                    cfg.undersample_seed(rate),
                )?;
                ExplanationEntry {
                    rate,
                    variant,
                    undersampled: true,
                    set,
                }
            } else {
                ExplanationEntry {
                    rate,
                    variant,
                    undersampled: false,
                    set: ExplanationSet::original(source),
                }
            };
            explanations.push(entry);
        }
    }
    Ok(Balanced {
        backgrounds,
        explanations,
        clusters: clusters.map(|(_, info)| info),
    })
}

pub fn stage_explain(model: &MlpModel, background: &Dataset, rows: &Dataset, cell: &CellSpec) -> Result<ShapMatrix> {
    explain_set(model, background.features(), rows.features(), rows.feature_names(), &cell.explainer)
}

/// Per-cell evaluation outputs.
#[derive(Debug, Clone)]
pub struct CellEvaluation {
    pub ranking: ImportanceRanking,
    pub abnormal: Vec<AbnormalPoint>,
    /// Empty when top-k retraining was skipped.
    pub topk: TopkTable,
}

/// Ranking, abnormal points and, given the splits, the top-k table.
pub fn stage_evaluate(
    cfg: &PipelineConfig,
    shap: &ShapMatrix,
    rows: &Dataset,
    topk: Option<(&Splits, &TopkCache)>,
) -> Result<CellEvaluation> {
    let ranking = global_importance(shap)?;
    let abnormal = detect_abnormal(&shap.phi, rows.features(), cfg.evaluation.tail_quantile, cfg.evaluation.tau)?;
    let topk = match topk {
        Some((splits, cache)) => evaluate_topk(
            &ranking,
            &cfg.evaluation.topk(),
            &splits.train,
            &splits.val,
            &splits.test,
            &cfg.mlp,
            cfg.topk_seed(),
            Some(cache),
        )?,
        None => TopkTable { rows: Vec::new() },
    };
    Ok(CellEvaluation {
        ranking,
        abnormal,
        topk,
    })
}

// ---------------------------------------------------------------- writers

fn write_splits(layout: &Layout, splits: &Splits, arts: &mut Artifacts) -> Result<()> {
    ensure_dir(&layout.root.join("splits"))?;
    for (name, ds) in SPLIT_NAMES.iter().zip([&splits.train, &splits.val, &splits.test]) {
        let p = layout.split_csv(name);
        ds.write_csv(&p, DEFAULT_LABEL_COLUMN)?;
        arts.add(layout, &p, Some(ds.n()));
    }
    Ok(())
}

fn write_balance(layout: &Layout, balanced: &Balanced, arts: &mut Artifacts) -> Result<()> {
    let dir = layout.balance_dir();
    ensure_dir(&dir)?;
    for (rate, bg) in &balanced.backgrounds {
        let stem = Layout::background_stem(*rate);
        bg.write(&dir, &stem)?;
        arts.add(layout, &dir.join(format!("{stem}.csv")), Some(bg.rows.n()));
        arts.add(layout, &dir.join(format!("{stem}.json")), None);
    }
    for e in &balanced.explanations {
        let stem = Layout::explanation_stem(e.rate, e.variant);
        e.set.write(&dir, &stem)?;
        arts.add(layout, &dir.join(format!("{stem}.csv")), Some(e.set.len()));
        arts.add(layout, &dir.join(format!("{stem}.json")), None);
    }
    if let Some(c) = &balanced.clusters {
        let p = dir.join("clusters.json");
        write_json(&p, c)?;
        arts.add(layout, &p, None);
    }
    Ok(())
}

fn write_shap(layout: &Layout, id: &str, shap: &ShapMatrix, arts: &mut Artifacts) -> Result<()> {
    let dir = layout.cell_dir(id);
    ensure_dir(&dir)?;
    let csv = dir.join("shap.csv");
    shap.write_csv(&csv)?;
    arts.add(layout, &csv, Some(shap.n()));
    let json = dir.join("shap.json");
    shap.write_json(&json)?;
    arts.add(layout, &json, None);
    Ok(())
}

fn write_evaluation(
    layout: &Layout,
    id: &str,
    shap: &ShapMatrix,
    rows: &Dataset,
    eval: &CellEvaluation,
    arts: &mut Artifacts,
) -> Result<()> {
    let dir = layout.cell_dir(id);
    ensure_dir(&dir)?;
    let ranking = dir.join("ranking.json");
    write_json(&ranking, &eval.ranking)?;
    arts.add(layout, &ranking, None);
    let export = export_beeswarm(&shap.phi, rows.features(), &eval.ranking, &dir, "beeswarm")?;
    arts.add(layout, &dir.join("beeswarm.csv"), Some(export.points.len()));
    arts.add(layout, &dir.join("beeswarm.svg"), None);
    let abnormal = dir.join("abnormal.json");
    write_json(&abnormal, &eval.abnormal)?;
    arts.add(layout, &abnormal, None);
    let topk = dir.join("topk.csv");
    eval.topk.write_csv(&topk)?;
    arts.add(layout, &topk, Some(eval.topk.rows.len()));
    Ok(())
}

/// Column label in the wide top-k table.
fn column_label(cell: &CellSpec) -> String {
    format!("{} {}", cell.rate, cell.variant.short())
}

/// One wide table per explainer method. A cell whose explanation data was
/// left unchanged under the under-sampled variant duplicates its full-variant
/// neighbour and is not given a column.
fn write_wide_tables(
    layout: &Layout,
    cfg: &PipelineConfig,
    done: &[(CellSpec, bool, TopkTable)],
    arts: &mut Artifacts,
) -> Result<()> {
    for e in &cfg.explainers {
        let cols: Vec<(String, &TopkTable)> = done
            .iter()
            .filter(|(c, undersampled, _)| {
                c.explainer.method == e.method && (c.variant == Variant::Full || *undersampled)
            })
            .map(|(c, _, t)| (column_label(c), t))
            .collect();
        if cols.is_empty() {
            continue;
        }
        let p = layout.root.join(format!("topk_{}.csv", e.method.as_str()));
        write_wide_csv(&p, &cols)?;
        let n = cols.iter().flat_map(|(_, t)| t.rows.iter().map(|r| r.k)).collect::<std::collections::BTreeSet<_>>();
        arts.add(layout, &p, Some(n.len()));
    }
    let long = layout.root.join("topk_long.csv");
    let mut w = csv::Writer::from_path(&long)?;
    w.write_record(["cell", "k", "auc", "ci_low", "ci_high", "features"])?;
    let mut n = 0;
    for (c, _, t) in done {
        for r in &t.rows {
            let feats: Vec<String> = r.features.iter().map(usize::to_string).collect();
            w.write_record([
                c.id.clone(),
                r.k.to_string(),
                r.result.auc.to_string(),
                r.result.ci_low.to_string(),
                r.result.ci_high.to_string(),
                feats.join(" "),
            ])?;
            n += 1;
        }
    }
    w.flush().map_err(|e| Error::io(&long, e))?;
    arts.add(layout, &long, Some(n));
    Ok(())
}

// ---------------------------------------------------------------- manifest

pub const MANIFEST_FORMAT: &str = "balshap-manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub rows: usize,
    pub features: usize,
    pub event_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub informative_features: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test_auc: AucResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundInfo {
    pub rate: Rate,
    pub p: f64,
    pub seed: u64,
    pub size: usize,
    pub achieved_rate: f64,
    pub minority: usize,
    pub majority: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationInfo {
    pub rate: Rate,
    pub variant: Variant,
    pub undersampled: bool,
    pub seed: u64,
    pub rows: usize,
    pub minority: usize,
    pub majority: usize,
    pub achieved_rate: f64,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub id: String,
    pub rate: Rate,
    pub variant: Variant,
    pub method: String,
    pub explainer_seed: u64,
    pub background_rows: usize,
    pub explanation_rows: usize,
    pub base_value: f64,
    pub max_efficiency_gap: f64,
    pub ranking: Vec<usize>,
    pub abnormal_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub config: PipelineConfig,
    pub stages_completed: Vec<String>,
    pub data: Option<DataInfo>,
    pub split: Option<SplitManifest>,
    pub model: Option<ModelInfo>,
    pub clustering: Option<ClusterInfo>,
    pub backgrounds: Vec<BackgroundInfo>,
    pub explanations: Vec<ExplanationInfo>,
    pub cells: Vec<CellInfo>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    /// The echoed config has its output directory blanked, so a run moved
    /// to another directory produces the same manifest.
    fn new(cfg: &PipelineConfig) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: 1,
            complete: false,
            failed_stage: None,
            error: None,
            seed: cfg.seed,
            config: PipelineConfig {
                output_dir: PathBuf::new(),
                ..cfg.clone()
            },
            stages_completed: Vec::new(),
            data: None,
            split: None,
            model: None,
            clustering: None,
            backgrounds: Vec::new(),
            explanations: Vec::new(),
            cells: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        crate::dataset::read_json(path)
    }
}

/// Wall-clock seconds, kept apart from the manifest so that every other
/// output is byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<StageTiming>,
    pub cells: Vec<CellTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub id: String,
    pub explanation_rows: usize,
    pub explain_seconds: f64,
    pub evaluate_seconds: f64,
}

impl Timings {
    pub fn read(path: &Path) -> Result<Self> {
        crate::dataset::read_json(path)
    }
}

// ---------------------------------------------------------------- runner

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run only this grid cell.
    pub cell: Option<String>,
    /// Skip top-k retraining (rankings, beeswarms and abnormal points are
    /// still produced).
    pub skip_topk: bool,
}

/// Summary returned by [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub timings: Timings,
}

pub fn select_cells(cfg: &PipelineConfig, only: Option<&str>) -> Result<Vec<CellSpec>> {
    let cells = cfg.cells();
    match only {
        None => Ok(cells),
        Some(id) => {
            let picked: Vec<CellSpec> = cells.iter().filter(|c| c.id == id).cloned().collect();
            if picked.is_empty() {
                let ids: Vec<&str> = cells.iter().map(|c| c.id.as_str()).collect();
                return Err(Error::config(format!("unknown cell {id:?}; known cells: {}", ids.join(", "))));
            }
            Ok(picked)
        }
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    layout: Layout,
    manifest: Manifest,
    timings: Timings,
    arts: Artifacts,
}

impl Runner<'_> {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        info!("stage {name}");
        let t = Instant::now();
        let out = staged(name, f(self))?;
        self.timings.stages.push(StageTiming {
            stage: name.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        self.manifest.stages_completed.push(name.into());
        Ok(out)
    }

    fn run(&mut self, opts: &RunOptions) -> Result<()> {
        let cfg = self.cfg;
        let cells = staged("config", select_cells(cfg, opts.cell.as_deref()))?;
        let data = self.stage("data", |r| {
            let data = stage_data(cfg)?;
            r.manifest.data = Some(DataInfo {
                rows: data.n(),
                features: data.d(),
                event_rate: data.event_rate(),
                synthetic_seed: cfg.synthetic_spec().map(|s| s.seed),
                informative_features: cfg.synthetic_spec().map(|s| s.informative_indices()),
            });
            Ok(data)
        })?;
        let splits = self.stage("split", |r| {
            let (splits, manifest, stats) = stage_split(cfg, &data)?;
            write_splits(&r.layout, &splits, &mut r.arts)?;
            if let Some(stats) = stats {
                let p = r.layout.root.join("splits").join("standardization.json");
                write_json(&p, &stats)?;
                r.arts.add(&r.layout, &p, None);
            }
            r.manifest.split = Some(manifest);
            Ok(splits)
        })?;
        drop(data);
        let model = self.stage("train", |r| {
            let model = stage_train(cfg, &splits)?;
            let p = r.layout.model_json();
            model.save_json(&p)?;
            r.arts.add(&r.layout, &p, None);
            let t = model.training();
            r.manifest.model = Some(ModelInfo {
                seed: t.seed,
                epochs_run: t.epochs_run,
                best_epoch: t.best_epoch,
                best_val_loss: t.best_val_loss,
                test_auc: full_model_auc(cfg, &model, &splits.test)?,
            });
            Ok(model)
        })?;
        let balanced = self.stage("balance", |r| {
            let b = stage_balance(cfg, &splits)?;
            write_balance(&r.layout, &b, &mut r.arts)?;
            r.manifest.clustering = b.clusters.clone();
            r.manifest.backgrounds = b
                .backgrounds
                .iter()
                .map(|(rate, bg)| {
                    let minority = bg.rows.minority_count();
                    BackgroundInfo {
                        rate: *rate,
                        p: bg.p,
                        seed: bg.seed,
                        size: bg.size,
                        achieved_rate: bg.achieved_rate,
                        minority,
                        majority: bg.rows.n() - minority,
                    }
                })
                .collect();
            r.manifest.explanations = b
                .explanations
                .iter()
                .map(|e| {
                    let minority = e.set.rows.minority_count();
                    ExplanationInfo {
                        rate: e.rate,
                        variant: e.variant,
                        undersampled: e.undersampled,
                        seed: e.set.seed,
                        rows: e.set.len(),
                        minority,
                        majority: e.set.len() - minority,
                        achieved_rate: e.set.achieved_rate,
                        clusters: e.set.k,
                    }
                })
                .collect();
            Ok(b)
        })?;

        let shaps = self.stage("explain", |r| {
            let mut out = Vec::with_capacity(cells.len());
            for cell in &cells {
                let bg = balanced.background(cell.rate);
                let expl = balanced.explanation(cell.rate, cell.variant);
                info!("explaining cell {} ({} rows)", cell.id, expl.set.len());
                let t = Instant::now();
                let shap = stage_explain(&model, &bg.rows, &expl.set.rows, cell)?;
                r.timings.cells.push(CellTiming {
                    id: cell.id.clone(),
                    explanation_rows: expl.set.len(),
                    explain_seconds: t.elapsed().as_secs_f64(),
                    evaluate_seconds: 0.0,
                });
                write_shap(&r.layout, &cell.id, &shap, &mut r.arts)?;
                out.push(shap);
            }
            Ok(out)
        })?;

        self.stage("evaluate", |r| {
            let cache = TopkCache::new();
            let mut done = Vec::new();
            for (i, (cell, shap)) in cells.iter().zip(&shaps).enumerate() {
                let expl = balanced.explanation(cell.rate, cell.variant);
                let t = Instant::now();
                let topk = (!opts.skip_topk).then_some((&splits, &cache));
                let eval = stage_evaluate(cfg, shap, &expl.set.rows, topk)?;
                write_evaluation(&r.layout, &cell.id, shap, &expl.set.rows, &eval, &mut r.arts)?;
                r.timings.cells[i].evaluate_seconds = t.elapsed().as_secs_f64();
                r.manifest.cells.push(CellInfo {
                    id: cell.id.clone(),
                    rate: cell.rate,
                    variant: cell.variant,
                    method: cell.explainer.method.as_str().into(),
                    explainer_seed: cell.explainer.seed,
                    background_rows: balanced.background(cell.rate).rows.n(),
                    explanation_rows: shap.n(),
                    base_value: shap.base_value,
                    max_efficiency_gap: shap.max_efficiency_gap(),
                    ranking: eval.ranking.order.clone(),
                    abnormal_points: eval.abnormal.len(),
                });
                done.push((cell.clone(), expl.undersampled, eval.topk));
            }
            if !opts.skip_topk {
                write_wide_tables(&r.layout, cfg, &done, &mut r.arts)?;
            }
            Ok(())
        })?;
        Ok(())
    }
}

/// Runs every stage and writes `manifest.json` and `timings.json` last. On
/// failure the manifest is still written, with `complete: false` and the
/// failing stage recorded.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    ensure_dir(layout.root())?;
    let mut runner = Runner {
        cfg,
        layout,
        manifest: Manifest::new(cfg),
        timings: Timings::default(),
        arts: Artifacts::default(),
    };
    let outcome = runner.run(opts);
    let Runner {
        layout,
        mut manifest,
        timings,
        arts,
        ..
    } = runner;
    manifest.artifacts = arts.list;
    match &outcome {
        Ok(()) => manifest.complete = true,
        Err(e) => {
            if let Error::Stage { stage, source } = e {
                manifest.failed_stage = Some((*stage).into());
                manifest.error = Some(source.to_string());
            } else {
                manifest.error = Some(e.to_string());
            }
        }
    }
    write_json(&layout.manifest(), &manifest)?;
    write_json(&layout.timings(), &timings)?;
    outcome.map(|()| RunReport { manifest, timings })
}

// ---------------------------------------------------------------- standalone stages

fn load_splits(layout: &Layout) -> Result<Splits> {
    let load = |name| load_csv(&layout.split_csv(name), DEFAULT_LABEL_COLUMN);
    Ok(Splits {
        train: load("train")?,
        val: load("val")?,
        test: load("test")?,
    })
}

/// Writes the synthetic corpus to `data.csv`.
pub fn run_synth(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let spec = cfg
        .synthetic_spec()
        .ok_or_else(|| Error::config("synth needs a synthetic data source"))?;
    let layout = Layout::new(&cfg.output_dir);
    ensure_dir(layout.root())?;
    let data = staged("data", generate_synthetic(&spec))?;
    let p = layout.data_csv();
    staged("data", data.write_csv(&p, DEFAULT_LABEL_COLUMN))?;
    Ok(p)
}

/// Splits (and standardizes) the data. A synthetic source is read back from
/// `data.csv` when `synth` has already written it.
pub fn run_split(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    ensure_dir(layout.root())?;
    let data = if cfg.synthetic_spec().is_some() && layout.data_csv().exists() {
        staged("data", load_csv(&layout.data_csv(), DEFAULT_LABEL_COLUMN))?
    } else {
        staged("data", stage_data(cfg))?
    };
    staged("split", (|| {
        let (splits, manifest, stats) = stage_split(cfg, &data)?;
        write_splits(&layout, &splits, &mut Artifacts::default())?;
        write_json(&layout.root.join("splits").join("split.json"), &manifest)?;
        if let Some(stats) = stats {
            write_json(&layout.root.join("splits").join("standardization.json"), &stats)?;
        }
        Ok(())
    })())
}

pub fn run_train(cfg: &PipelineConfig) -> Result<MlpModel> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    staged("train", (|| {
        let splits = load_splits(&layout)?;
        let model = stage_train(cfg, &splits)?;
        model.save_json(&layout.model_json())?;
        Ok(model)
    })())
}

pub fn run_balance(cfg: &PipelineConfig) -> Result<Balanced> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    staged("balance", (|| {
        let splits = load_splits(&layout)?;
        let b = stage_balance(cfg, &splits)?;
        write_balance(&layout, &b, &mut Artifacts::default())?;
        Ok(b)
    })())
}

fn load_balanced_rows(layout: &Layout, stem: &str) -> Result<Dataset> {
    load_csv(&layout.balance_dir().join(format!("{stem}.csv")), DEFAULT_LABEL_COLUMN)
}

pub fn run_explain(cfg: &PipelineConfig, only: Option<&str>) -> Result<Vec<ShapMatrix>> {
    cfg.validate()?;
    let cells = select_cells(cfg, only)?;
    let layout = Layout::new(&cfg.output_dir);
    staged("explain", (|| {
        let model = MlpModel::load_json(&layout.model_json())?;
        cells
            .iter()
            .map(|cell| {
                let bg = load_balanced_rows(&layout, &Layout::background_stem(cell.rate))?;
                let rows = load_balanced_rows(&layout, &Layout::explanation_stem(cell.rate, cell.variant))?;
                let shap = stage_explain(&model, &bg, &rows, cell)?;
                write_shap(&layout, &cell.id, &shap, &mut Artifacts::default())?;
                Ok(shap)
            })
            .collect()
    })())
}

pub fn run_evaluate(cfg: &PipelineConfig, only: Option<&str>) -> Result<Vec<CellEvaluation>> {
    cfg.validate()?;
    let cells = select_cells(cfg, only)?;
    let layout = Layout::new(&cfg.output_dir);
    staged("evaluate", (|| {
        let splits = load_splits(&layout)?;
        let cache = TopkCache::new();
        let mut done = Vec::new();
        let mut out = Vec::new();
        for cell in &cells {
            let dir = layout.cell_dir(&cell.id);
            let shap = ShapMatrix::read_json(&dir.join("shap.json"))?;
            let stem = Layout::explanation_stem(cell.rate, cell.variant);
            let rows = load_balanced_rows(&layout, &stem)?;
            let sidecar: crate::balance::ExplanationSidecar =
                crate::dataset::read_json(&layout.balance_dir().join(format!("{stem}.json")))?;
            let eval = stage_evaluate(cfg, &shap, &rows, Some((&splits, &cache)))?;
            write_evaluation(&layout, &cell.id, &shap, &rows, &eval, &mut Artifacts::default())?;
            // unchanged (reference) sets carry no clustering
            done.push((cell.clone(), sidecar.clusters > 0, eval.topk.clone()));
            out.push(eval);
        }
        write_wide_tables(&layout, cfg, &done, &mut Artifacts::default())?;
        Ok(out)
    })())
}
