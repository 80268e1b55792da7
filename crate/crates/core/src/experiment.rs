//! End-to-end experiments: train the detector per seed, compute the
//! configured score components, fuse them, and evaluate per category.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::detector::{
    score_fnn, train, MlpArchitecture, MlpParams, TrainConfig, TrainOutcome, HIDDEN_LAYERS,
};
use crate::embedding::{read_embeddings, unit_vector, DatasetManifest, EmbeddingMatrix, PairedEmbeddingSet};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_by_category, seed_statistics, AuprMode, EvalReport};
use crate::prompts::WordPair;
use crate::rng::{self, Stream};
use crate::scoring::{
    fuse, score_prompt_guided, score_reference, ScoreKind, ScoreRecord, ScoreVector, Temperature,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Setup {
    /// Guides say "object"; no category information anywhere.
    ZeroShotUnknown,
    /// One guide pair per category, naming it.
    ZeroShotKnown,
    /// Adds reference similarity against `k` normals per category.
    FewShot(usize),
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setup::ZeroShotUnknown => f.write_str("zero-shot-unknown"),
            Setup::ZeroShotKnown => f.write_str("zero-shot-known"),
            Setup::FewShot(k) => write!(f, "few-shot-{k}"),
        }
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-");
        match norm.as_str() {
            "zero-shot-unknown" => Ok(Setup::ZeroShotUnknown),
            "zero-shot-known" => Ok(Setup::ZeroShotKnown),
            other => other
                .strip_prefix("few-shot-")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k >= 1)
                .map(Setup::FewShot)
                .ok_or_else(|| Error::Config(format!("unknown setup {s:?}"))),
        }
    }
}

impl TryFrom<String> for Setup {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Setup> for String {
    fn from(s: Setup) -> String {
        s.to_string()
    }
}

/// Which scores are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Components {
    pub prompt: bool,
    pub fnn: bool,
    pub reference: bool,
}

impl Components {
    pub const PROMPT_AND_FNN: Components = Components {
        prompt: true,
        fnn: true,
        reference: false,
    };

    pub fn all() -> Self {
        Components {
            prompt: true,
            fnn: true,
            reference: true,
        }
    }

    pub fn kinds(&self) -> Vec<ScoreKind> {
        let mut out = Vec::new();
        if self.prompt {
            out.push(ScoreKind::Prompt);
        }
        if self.fnn {
            out.push(ScoreKind::Fnn);
        }
        if self.reference {
            out.push(ScoreKind::Reference);
        }
        out
    }

    /// Method label in the style of comparison tables.
    pub fn method_label(&self) -> String {
        match (self.prompt, self.fnn || self.reference) {
            (true, false) => "CLIP".into(),
            (false, true) => "ours".into(),
            _ => "CLIP + ours".into(),
        }
    }
}

impl Default for Components {
    fn default() -> Self {
        Components::PROMPT_AND_FNN
    }
}

impl fmt::Display for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.kinds().into_iter().map(ScoreKind::as_str).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for Components {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut c = Components {
            prompt: false,
            fnn: false,
            reference: false,
        };
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.parse::<ScoreKind>().map_err(|e| Error::Config(e.to_string()))? {
                ScoreKind::Prompt => c.prompt = true,
                ScoreKind::Fnn => c.fnn = true,
                ScoreKind::Reference => c.reference = true,
                ScoreKind::Sum => return Err(Error::Config("'sum' is not a component".into())),
            }
        }
        if c.kinds().is_empty() {
            return Err(Error::Config("no score components selected".into()));
        }
        Ok(c)
    }
}

impl TryFrom<String> for Components {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Components> for String {
    fn from(c: Components) -> String {
        c.to_string()
    }
}

/// Input files. Training and guide paths may contain `{value}`, which a
/// sweep replaces with the swept value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPaths {
    pub manifest: PathBuf,
    pub images: PathBuf,
    pub refs: Option<PathBuf>,
    pub train_normals: PathBuf,
    pub train_anomalies: PathBuf,
    pub guide_normal: PathBuf,
    pub guide_anomaly: PathBuf,
}

impl ExperimentPaths {
    fn substitute(&self, value: &str) -> Self {
        let sub = |p: &PathBuf| PathBuf::from(p.to_string_lossy().replace("{value}", value));
        ExperimentPaths {
            manifest: self.manifest.clone(),
            images: self.images.clone(),
            refs: self.refs.clone(),
            train_normals: sub(&self.train_normals),
            train_anomalies: sub(&self.train_anomalies),
            guide_normal: sub(&self.guide_normal),
            guide_anomaly: sub(&self.guide_anomaly),
        }
    }

    fn has_placeholder(p: &Path) -> bool {
        p.to_string_lossy().contains("{value}")
    }

    /// Joins relative paths onto `root`.
    pub fn rooted(&self, root: &Path) -> Self {
        let j = |p: &PathBuf| if p.is_relative() && !p.as_os_str().is_empty() { root.join(p) } else { p.clone() };
        ExperimentPaths {
            manifest: j(&self.manifest),
            images: j(&self.images),
            refs: self.refs.as_ref().map(j),
            train_normals: j(&self.train_normals),
            train_anomalies: j(&self.train_anomalies),
            guide_normal: j(&self.guide_normal),
            guide_anomaly: j(&self.guide_anomaly),
        }
    }
}

/// Detector shape apart from the input width, which comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub hidden_dims: [usize; HIDDEN_LAYERS],
    pub dropout_rate: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let a = MlpArchitecture::new(1);
        DetectorConfig {
            hidden_dims: a.hidden_dims,
            dropout_rate: a.dropout_rate,
            bn_epsilon: a.bn_epsilon,
            bn_momentum: a.bn_momentum,
        }
    }
}

impl DetectorConfig {
    pub fn architecture(&self, input_dim: usize) -> MlpArchitecture {
        MlpArchitecture {
            input_dim,
            hidden_dims: self.hidden_dims,
            dropout_rate: self.dropout_rate,
            bn_epsilon: self.bn_epsilon,
            bn_momentum: self.bn_momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub setup: Setup,
    pub word_pair: WordPair,
    /// Training pairs to use: the first `n_pairs` rows of the training
    /// files. `None` uses every row.
    pub n_pairs: Option<usize>,
    pub seeds: Vec<u64>,
    pub components: Components,
    pub paths: ExperimentPaths,
    /// Recorded for provenance; crops are combined before embeddings
    /// reach this crate.
    pub multi_crop: bool,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub temperature: Temperature,
    pub aupr: AuprMode,
    /// Report label; derived from the components when absent.
    pub method: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            setup: Setup::ZeroShotUnknown,
            word_pair: WordPair::default(),
            n_pairs: None,
            seeds: (0..10).collect(),
            components: Components::default(),
            paths: ExperimentPaths::default(),
            multi_crop: true,
            detector: DetectorConfig::default(),
            train: TrainConfig::default(),
            temperature: Temperature::default(),
            aupr: AuprMode::Step,
            method: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.components.reference && !matches!(self.setup, Setup::FewShot(_)) {
            return Err(Error::Config("s_img requires a few-shot setup".into()));
        }
        if matches!(self.setup, Setup::FewShot(_)) && self.paths.refs.is_none() {
            return Err(Error::Config("few-shot setups need a reference embedding file".into()));
        }
        if self.n_pairs == Some(0) {
            return Err(Error::Config("n_pairs must be at least 1".into()));
        }
        if self.components.fnn {
            self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
            self.detector
                .architecture(1)
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn method_label(&self) -> String {
        self.method.clone().unwrap_or_else(|| self.components.method_label())
    }
}

/// Guide embeddings, one unit-norm pair per category (or one shared pair).
#[derive(Debug, Clone)]
enum Guides {
    Shared(Vec<f64>, Vec<f64>),
    PerCategory(BTreeMap<String, (Vec<f64>, Vec<f64>)>),
}

/// Everything read from disk for one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub manifest: DatasetManifest,
    pub images: EmbeddingMatrix,
    pub train_pairs: Option<PairedEmbeddingSet>,
    pub refs: Option<EmbeddingMatrix>,
    guides: Option<Guides>,
}

impl ExperimentData {
    /// Reads and cross-checks the files the configuration needs.
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        Self::load_with(cfg, cfg.components.fnn)
    }

    /// Like [`ExperimentData::load`], but reads the training pairs only
    /// when `training` is set (scoring with a saved detector needs none).
    pub fn load_with(cfg: &ExperimentConfig, training: bool) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.paths;
        let mut needed = vec![&p.manifest, &p.images];
        if training {
            needed.extend([&p.train_normals, &p.train_anomalies]);
        }
        if cfg.components.prompt {
            needed.extend([&p.guide_normal, &p.guide_anomaly]);
        }
        if cfg.components.reference {
            needed.extend(p.refs.as_ref());
        }
        let missing: Vec<PathBuf> = needed
            .into_iter()
            .filter(|f| !f.is_file())
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingInputs(missing));
        }

        let manifest = DatasetManifest::load(&p.manifest)?;
        let images = read_embeddings(&p.images)?;
        if images.count() != manifest.len() {
            return Err(Error::Data(format!(
                "{} image embeddings for {} manifest entries",
                images.count(),
                manifest.len()
            )));
        }
        let dim = images.dim();
        let check_dim = |what: &str, d: usize| {
            if d == dim {
                Ok(())
            } else {
                Err(Error::Data(format!("{what} embeddings have dim {d}, images have {dim}")))
            }
        };

        let train_pairs = if training {
            let pairs = PairedEmbeddingSet::load(&p.train_normals, &p.train_anomalies)?;
            check_dim("training", pairs.dim())?;
            Some(match cfg.n_pairs {
                Some(n) if n < pairs.len() => pairs.truncated(n)?,
                Some(n) if n > pairs.len() => {
                    return Err(Error::Data(format!(
                        "n_pairs is {n} but the training files hold {} pairs",
                        pairs.len()
                    )))
                }
                _ => pairs,
            })
        } else {
            None
        };

        let guides = if cfg.components.prompt {
            let gn = read_embeddings(&p.guide_normal)?;
            let ga = read_embeddings(&p.guide_anomaly)?;
            check_dim("guide", gn.dim())?;
            check_dim("guide", ga.dim())?;
            if gn.count() != ga.count() {
                return Err(Error::Data("guide files differ in row count".into()));
            }
            let unit = |m: &EmbeddingMatrix, i: usize| {
                unit_vector(m.row(i)).map_err(|_| Error::Data(format!("guide row {i} has zero norm")))
            };
            Some(match cfg.setup {
                Setup::ZeroShotKnown => {
                    let cats = manifest.categories();
                    if gn.count() != cats.len() {
                        return Err(Error::Data(format!(
                            "known-object guides need one row per category ({}), found {}",
                            cats.len(),
                            gn.count()
                        )));
                    }
                    let mut per = BTreeMap::new();
                    for (i, c) in cats.into_iter().enumerate() {
                        per.insert(c, (unit(&gn, i)?, unit(&ga, i)?));
                    }
                    Guides::PerCategory(per)
                }
                _ => {
                    if gn.count() != 1 {
                        return Err(Error::Data(format!(
                            "object-agnostic guides need exactly one row, found {}",
                            gn.count()
                        )));
                    }
                    Guides::Shared(unit(&gn, 0)?, unit(&ga, 0)?)
                }
            })
        } else {
            None
        };

        let refs = match (&p.refs, cfg.components.reference) {
            (Some(path), true) => {
                let r = read_embeddings(path)?;
                check_dim("reference", r.dim())?;
                if r.count() != manifest.ref_count() {
                    return Err(Error::Data(format!(
                        "{} reference embeddings for {} manifest references",
                        r.count(),
                        manifest.ref_count()
                    )));
                }
                Some(r)
            }
            _ => None,
        };

        Ok(ExperimentData {
            manifest,
            images,
            train_pairs,
            refs,
            guides,
        })
    }

    fn category_rows(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.manifest.entries().iter().enumerate() {
            out.entry(e.category.clone()).or_default().push(i);
        }
        out
    }
}

/// Scores and metrics of one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub components: Vec<ScoreVector>,
    pub fused: ScoreVector,
    pub report: EvalReport,
    /// Per-epoch training loss when the detector was trained.
    pub epoch_losses: Vec<f64>,
}

impl SeedRun {
    /// Every component plus the fused score, one record per sample.
    pub fn records(&self, manifest: &DatasetManifest) -> Vec<ScoreRecord> {
        score_records(manifest, &self.components, &self.fused)
    }
}

/// Score-CSV rows for each component, plus the fused score when there is
/// more than one component.
pub fn score_records(
    manifest: &DatasetManifest,
    components: &[ScoreVector],
    fused: &ScoreVector,
) -> Vec<ScoreRecord> {
    let mut all: Vec<&ScoreVector> = components.iter().collect();
    if components.len() > 1 {
        all.push(fused);
    }
    let mut out = Vec::new();
    for s in all {
        for (&id, &v) in s.sample_ids().iter().zip(s.values()) {
            let e = &manifest.entries()[id];
            out.push(ScoreRecord {
                sample_id: id,
                category: e.category.clone(),
                label: e.label,
                score_kind: s.kind(),
                value: v,
            });
        }
    }
    out
}

/// Scatters per-category score subsets back into manifest order.
fn scatter(n: usize, parts: Vec<(Vec<usize>, ScoreVector)>, kind: ScoreKind) -> Result<ScoreVector> {
    let mut values = vec![f64::NAN; n];
    for (rows, s) in parts {
        for (&r, &v) in rows.iter().zip(s.values()) {
            values[r] = v;
        }
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("some samples received no score".into()));
    }
    ScoreVector::new(kind, values)
}

/// Trains the detector of one seed on the loaded training pairs.
pub fn train_detector(cfg: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<TrainOutcome> {
    let pairs = data
        .train_pairs
        .as_ref()
        .ok_or_else(|| Error::State("training pairs were not loaded".into()))?;
    let arch = cfg.detector.architecture(pairs.dim());
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    train(pairs, &arch, &train_cfg)
}

/// Computes each selected component and their sum. `detector` must be
/// given when s_fnn is selected; `seed` picks the few-shot references.
pub fn score_components(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    seed: u64,
    detector: Option<&MlpParams>,
) -> Result<(Vec<ScoreVector>, ScoreVector)> {
    let n = data.images.count();
    let mut components = Vec::new();

    if cfg.components.prompt {
        let guides = data
            .guides
            .as_ref()
            .ok_or_else(|| Error::State("guides were not loaded".into()))?;
        let s = match guides {
            Guides::Shared(gn, ga) => score_prompt_guided(gn, ga, &data.images, cfg.temperature)?,
            Guides::PerCategory(per) => {
                let mut parts = Vec::new();
                for (cat, rows) in data.category_rows() {
                    let (gn, ga) = &per[&cat];
                    let subset = data.images.select(&rows)?;
                    parts.push((rows, score_prompt_guided(gn, ga, &subset, cfg.temperature)?));
                }
                scatter(n, parts, ScoreKind::Prompt)?
            }
        };
        components.push(s);
    }

    if cfg.components.fnn {
        let params =
            detector.ok_or_else(|| Error::Config("s_fnn needs a trained detector".into()))?;
        if params.arch.input_dim != data.images.dim() {
            return Err(Error::Data(format!(
                "detector expects dim {}, images have dim {}",
                params.arch.input_dim,
                data.images.dim()
            )));
        }
        components.push(score_fnn(params, &data.images, cfg.train.normalize_inputs)?);
    }

    if cfg.components.reference {
        let Setup::FewShot(k) = cfg.setup else {
            return Err(Error::Config("s_img requires a few-shot setup".into()));
        };
        let refs = data
            .refs
            .as_ref()
            .ok_or_else(|| Error::State("references were not loaded".into()))?;
        let ranges = data.manifest.ref_rows();
        let mut parts = Vec::new();
        for (cat, rows) in data.category_rows() {
            let chosen = sample_references(seed, &cat, ranges.get(cat.as_str()).cloned(), k)?;
            let subset = data.images.select(&rows)?;
            parts.push((rows, score_reference(&subset, &refs.select(&chosen)?)?));
        }
        components.push(scatter(n, parts, ScoreKind::Reference)?);
    }

    let fused = fuse(&components)?;
    Ok((components, fused))
}

/// Per-category metrics of one score vector against the manifest labels.
pub fn evaluate_scores(
    method: &str,
    manifest: &DatasetManifest,
    scores: &[f64],
    mode: AuprMode,
) -> Result<EvalReport> {
    let categories: Vec<String> = manifest.entries().iter().map(|e| e.category.clone()).collect();
    let per_category = evaluate_by_category(scores, &manifest.labels(), &categories, mode)?;
    EvalReport::single(method, &per_category)
}

/// Runs one seed: trains the detector if needed, computes each selected
/// component, fuses them, and evaluates per category.
pub fn run_seed(cfg: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<SeedRun> {
    let (detector, epoch_losses) = if cfg.components.fnn {
        let outcome = train_detector(cfg, data, seed)?;
        (Some(outcome.params), outcome.epoch_losses)
    } else {
        (None, Vec::new())
    };
    let (components, fused) = score_components(cfg, data, seed, detector.as_ref())?;
    let report = evaluate_scores(&cfg.method_label(), &data.manifest, fused.values(), cfg.aupr)?;
    Ok(SeedRun {
        seed,
        components,
        fused,
        report,
        epoch_losses,
    })
}

/// Draws `k` reference rows for one category: a seeded shuffle of the
/// category's references, truncated. Smaller `k` gives a prefix of larger
/// `k` for the same seed.
pub fn sample_references(
    seed: u64,
    category: &str,
    range: Option<std::ops::Range<usize>>,
    k: usize,
) -> Result<Vec<usize>> {
    let range = range.unwrap_or(0..0);
    if range.len() < k {
        return Err(Error::Config(format!(
            "category {category} has {} references, {k} needed",
            range.len()
        )));
    }
    let mut r = rng::stream(seed ^ rng::fnv1a64(category.as_bytes()), Stream::References);
    let mut rows: Vec<usize> = range.collect();
    rows.shuffle(&mut r);
    rows.truncate(k);
    Ok(rows)
}

/// All seeds of one configuration, with their aggregate.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub report: EvalReport,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let data = ExperimentData::load(cfg)?;
    run_loaded(cfg, &data)
}

pub fn run_loaded(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentResult> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, data, s))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let report = seed_statistics(&reports)?;
    Ok(ExperimentResult { runs, report })
}

/// Zero-shot evaluation (object unknown or known).
pub fn run_zero_shot(cfg: &ExperimentConfig) -> Result<EvalReport> {
    if matches!(cfg.setup, Setup::FewShot(_)) {
        return Err(Error::Config(format!("{} is not a zero-shot setup", cfg.setup)));
    }
    Ok(run_experiment(cfg)?.report)
}

/// Few-shot evaluation; the reference score joins the fusion.
pub fn run_few_shot(cfg: &ExperimentConfig) -> Result<EvalReport> {
    if !matches!(cfg.setup, Setup::FewShot(_)) {
        return Err(Error::Config(format!("{} is not a few-shot setup", cfg.setup)));
    }
    let cfg = ExperimentConfig {
        components: Components {
            reference: true,
            ..cfg.components
        },
        ..cfg.clone()
    };
    Ok(run_experiment(&cfg)?.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variable", content = "values")]
pub enum SweepSpec {
    NPairs(Vec<usize>),
    WordPair(Vec<WordPair>),
}

impl SweepSpec {
    pub fn variable(&self) -> &'static str {
        match self {
            SweepSpec::NPairs(_) => "n_pairs",
            SweepSpec::WordPair(_) => "word_pair",
        }
    }

    /// The 16-cell word-pair grid.
    pub fn word_pair_grid() -> Self {
        SweepSpec::WordPair(WordPair::grid())
    }
}

/// One report per swept value.
///
/// For `n_pairs`, paths without `{value}` are shared and truncated to the
/// first `n` pairs; with `{value}` each size reads its own files. Word-pair
/// sweeps need `{value}` in the guide paths (the pair's slug is
/// substituted), since each pair has its own guides.
pub fn run_sweep(cfg: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<(String, EvalReport)>> {
    let values: Vec<(String, ExperimentConfig)> = match spec {
        SweepSpec::NPairs(ns) => {
            if ns.is_empty() {
                return Err(Error::Config("sweep has no values".into()));
            }
            ns.iter()
                .map(|&n| {
                    let v = n.to_string();
                    let c = ExperimentConfig {
                        n_pairs: Some(n),
                        paths: cfg.paths.substitute(&v),
                        ..cfg.clone()
                    };
                    (v, c)
                })
                .collect()
        }
        SweepSpec::WordPair(ws) => {
            if ws.is_empty() {
                return Err(Error::Config("sweep has no values".into()));
            }
            if cfg.components.prompt
                && !(ExperimentPaths::has_placeholder(&cfg.paths.guide_normal)
                    && ExperimentPaths::has_placeholder(&cfg.paths.guide_anomaly))
            {
                return Err(Error::Config(
                    "word-pair sweeps need {value} in the guide paths".into(),
                ));
            }
            ws.iter()
                .map(|w| {
                    let c = ExperimentConfig {
                        word_pair: w.clone(),
                        paths: cfg.paths.substitute(&w.slug()),
                        ..cfg.clone()
                    };
                    (w.to_string(), c)
                })
                .collect()
        }
    };
    values
        .into_iter()
        .map(|(v, c)| Ok((v, run_experiment(&c)?.report)))
        .collect()
}

/// `variable,value,runs,auroc_mean,auroc_std,aupr_mean,aupr_std,f1_max_mean,f1_max_std`
pub fn write_sweep_csv(path: &Path, variable: &str, results: &[(String, EvalReport)]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        variable: &'a str,
        value: &'a str,
        runs: usize,
        auroc_mean: f64,
        auroc_std: f64,
        aupr_mean: f64,
        aupr_std: f64,
        f1_max_mean: f64,
        f1_max_std: f64,
    }
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for (value, r) in results {
        w.serialize(Row {
            variable,
            value,
            runs: r.runs,
            auroc_mean: r.mean.auroc.mean,
            auroc_std: r.mean.auroc.std,
            aupr_mean: r.mean.aupr.mean,
            aupr_std: r.mean.aupr.std,
            f1_max_mean: r.mean.f1_max.mean,
            f1_max_std: r.mean.f1_max.std,
        })
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
