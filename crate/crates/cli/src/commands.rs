use std::io::Write;
use std::path::{Path, PathBuf};

use randprompt_ad_core::experiment::{
    run_loaded, run_sweep, score_components, score_records, write_sweep_csv, DetectorConfig,
    ExperimentData,
};
use randprompt_ad_core::metrics::{comparison_table, evaluate_by_category};
use randprompt_ad_core::prompts::{guide_prompts, DEFAULT_ALPHABET};
use randprompt_ad_core::scoring::{read_score_csv, write_score_csv};
use randprompt_ad_core::synthetic::{write_fixture, FixturePaths, FixtureSpec, GaussianClusters};
use randprompt_ad_core::{
    generate_prompt_set, read_checkpoint, train, write_checkpoint, Checkpoint, DatasetManifest,
    Error, EvalReport, ExperimentConfig, PairedEmbeddingSet, PromptPair, PromptSet,
    RandomWordConfig, Result, ScoreKind, SweepSpec, Temperature, TrainConfig, WordPair,
};
use serde_json::json;

use crate::config::{self, CommaList};
use crate::{
    adapters, Cli, Command, DetectorArgs, EvalArgs, ExperimentArgs, GenPromptsArgs, InputArgs,
    MakeManifestArgs, ReportArgs, ScoreArgs, SweepArgs, SynthFixtureArgs, TrainArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config.as_deref().map(config::load).transpose()?;
    let cfg = cfg.as_ref();
    let ctx = Ctx {
        root: cli.data_root.clone(),
    };
    match cli.command {
        Command::GenPrompts(a) => gen_prompts(&ctx, config::merge(a, cfg, "gen-prompts")?),
        Command::Train(a) => train_cmd(&ctx, config::merge(a, cfg, "train")?),
        Command::Score(a) => score(&ctx, config::merge(a, cfg, "score")?),
        Command::Eval(a) => eval(&ctx, config::merge(a, cfg, "eval")?),
        Command::Sweep(a) => sweep(&ctx, config::merge(a, cfg, "sweep")?),
        Command::Report(a) => report(&ctx, config::merge(a, cfg, "report")?),
        Command::MakeManifest(a) => make_manifest(&ctx, config::merge(a, cfg, "make-manifest")?),
        Command::SynthFixture(a) => synth_fixture(&ctx, config::merge(a, cfg, "synth-fixture")?),
    }
}

struct Ctx {
    root: Option<PathBuf>,
}

impl Ctx {
    /// Input paths are taken relative to the data root when one is set.
    fn input(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(r) if p.is_relative() => r.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn gen_prompts(ctx: &Ctx, a: GenPromptsArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(0);
    let words = a.word_pair.unwrap_or_default();
    let set = if a.guides.unwrap_or(false) {
        let categories = match (&a.categories, &a.manifest) {
            (Some(c), _) => Some(c.0.clone()),
            (None, Some(m)) => Some(DatasetManifest::load(&ctx.input(m))?.categories()),
            (None, None) => None,
        };
        let pairs: Vec<PromptPair> = match categories {
            None => vec![guide_prompts(&words, None)],
            Some(cats) => cats
                .iter()
                .enumerate()
                .map(|(i, c)| PromptPair {
                    index: i,
                    ..guide_prompts(&words, Some(c))
                })
                .collect(),
        };
        PromptSet::from_pairs(seed, pairs)
    } else {
        let wc = RandomWordConfig::new(
            a.l_min.unwrap_or(5),
            a.l_max.unwrap_or(10),
            a.alphabet.as_deref().unwrap_or(DEFAULT_ALPHABET),
            seed,
        )?;
        generate_prompt_set(&wc, &words, a.n_pairs.unwrap_or(10_000))?
    };
    match a.out {
        Some(p) => set.write(&p)?,
        None => {
            let stdout = std::io::stdout();
            set.write_to(stdout.lock()).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })?;
        }
    }
    Ok(())
}

fn hidden_dims(l: &CommaList) -> Result<[usize; 3]> {
    let v: Vec<usize> = l.parse_each("hidden_dims")?;
    v.try_into()
        .map_err(|v: Vec<usize>| Error::Config(format!("expected 3 hidden widths, got {}", v.len())))
}

fn apply_detector(a: &DetectorArgs, det: &mut DetectorConfig, tc: &mut TrainConfig) -> Result<()> {
    if let Some(h) = &a.hidden_dims {
        det.hidden_dims = hidden_dims(h)?;
    }
    if let Some(d) = a.dropout {
        det.dropout_rate = d;
    }
    let set = |dst: &mut _, v: Option<_>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut tc.epochs, a.epochs);
    set(&mut tc.batch_size, a.batch_size);
    set(&mut tc.lr_decay_every, a.lr_decay_every);
    let setf = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    setf(&mut tc.lr, a.lr);
    setf(&mut tc.weight_decay, a.weight_decay);
    setf(&mut tc.lr_decay_factor, a.lr_decay_factor);
    if let Some(n) = a.normalize_inputs {
        tc.normalize_inputs = n;
    }
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let out = required(a.out.clone(), "out")?;
    let normals = ctx.input(&required(a.train_normals.clone(), "train-normals")?);
    let anomalies = ctx.input(&required(a.train_anomalies.clone(), "train-anomalies")?);
    let mut det = DetectorConfig::default();
    let mut tc = TrainConfig {
        seed: a.seed.unwrap_or(0),
        ..TrainConfig::default()
    };
    apply_detector(&a.detector, &mut det, &mut tc)?;
    tc.validate().map_err(|e| Error::Config(e.to_string()))?;
    let missing: Vec<PathBuf> = [&normals, &anomalies]
        .into_iter()
        .filter(|p| !p.is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let mut pairs = PairedEmbeddingSet::load(&normals, &anomalies)?;
    if let Some(n) = a.n_pairs {
        if n == 0 || n > pairs.len() {
            return Err(Error::Data(format!(
                "n_pairs {n} not in 1..={} available pairs",
                pairs.len()
            )));
        }
        pairs = pairs.truncated(n)?;
    }
    let arch = det.architecture(pairs.dim());
    arch.validate().map_err(|e| Error::Config(e.to_string()))?;
    let outcome = train(&pairs, &arch, &tc)?;
    for (i, l) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {} loss {l:.6}", i + 1);
    }
    write_checkpoint(
        &Checkpoint {
            params: outcome.params,
            train_config: tc,
        },
        &out,
    )?;
    println!("wrote {} ({} steps)", out.display(), outcome.steps);
    Ok(())
}

/// Fills the shared input flags into `cfg`.
fn apply_inputs(ctx: &Ctx, a: &InputArgs, cfg: &mut ExperimentConfig) -> Result<()> {
    let p = &mut cfg.paths;
    let opt = |v: &Option<PathBuf>| v.as_deref().map(|x| ctx.input(x)).unwrap_or_default();
    p.manifest = opt(&a.manifest);
    p.images = opt(&a.images);
    p.refs = a.refs.as_deref().map(|x| ctx.input(x));
    p.guide_normal = opt(&a.guide_normal);
    p.guide_anomaly = opt(&a.guide_anomaly);
    if let Some(s) = a.setup {
        cfg.setup = s;
    }
    if let Some(c) = a.components {
        cfg.components = c;
    }
    if let Some(t) = a.temperature {
        cfg.temperature = Temperature::new(t).map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn experiment_config(ctx: &Ctx, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    apply_inputs(ctx, &a.inputs, &mut cfg)?;
    let opt = |v: &Option<PathBuf>| v.as_deref().map(|x| ctx.input(x)).unwrap_or_default();
    cfg.paths.train_normals = opt(&a.train_normals);
    cfg.paths.train_anomalies = opt(&a.train_anomalies);
    cfg.n_pairs = a.n_pairs;
    if let Some(w) = &a.word_pair {
        cfg.word_pair = w.clone();
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = s.0.clone();
    }
    if let Some(m) = a.multi_crop {
        cfg.multi_crop = m;
    }
    if let Some(m) = a.aupr {
        cfg.aupr = m;
    }
    cfg.method = a.method.clone();
    apply_detector(&a.detector, &mut cfg.detector, &mut cfg.train)?;
    cfg.validate()?;
    Ok(cfg)
}

fn score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let out = required(a.out.clone(), "out")?;
    let mut cfg = ExperimentConfig::default();
    apply_inputs(ctx, &a.inputs, &mut cfg)?;
    let detector = if cfg.components.fnn {
        let path = ctx.input(&required(a.checkpoint.clone(), "checkpoint")?);
        if !path.is_file() {
            return Err(Error::MissingInputs(vec![path]));
        }
        let ckpt = read_checkpoint(&path)?;
        cfg.train = ckpt.train_config;
        Some(ckpt.params)
    } else {
        None
    };
    cfg.validate()?;
    let data = ExperimentData::load_with(&cfg, false)?;
    let (components, fused) = score_components(&cfg, &data, a.seed.unwrap_or(0), detector.as_ref())?;
    let records = score_records(&data.manifest, &components, &fused);
    write_score_csv(&out, &records)?;
    println!("wrote {} scores to {}", records.len(), out.display());
    Ok(())
}

fn eval_csv(a: &EvalArgs, path: &Path) -> Result<EvalReport> {
    let records = read_score_csv(path)?;
    let mut kinds: Vec<ScoreKind> = records.iter().map(|r| r.score_kind).collect();
    kinds.sort();
    kinds.dedup();
    let kind = match (a.kind, kinds.as_slice()) {
        (Some(k), _) => k,
        (None, [only]) => *only,
        (None, ks) if ks.contains(&ScoreKind::Sum) => ScoreKind::Sum,
        (None, _) => {
            return Err(Error::Config(format!(
                "{} holds several score kinds; pick one with --kind",
                path.display()
            )))
        }
    };
    let mut rows: Vec<_> = records.into_iter().filter(|r| r.score_kind == kind).collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no {kind} scores", path.display())));
    }
    rows.sort_by_key(|r| r.sample_id);
    if rows.windows(2).any(|w| w[0].sample_id == w[1].sample_id) {
        return Err(Error::Data(format!("{} repeats a sample id", path.display())));
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let cats: Vec<String> = rows.iter().map(|r| r.category.clone()).collect();
    let per = evaluate_by_category(&scores, &labels, &cats, a.experiment.aupr.unwrap_or_default())?;
    let method = a.experiment.method.clone().unwrap_or_else(|| kind.to_string());
    EvalReport::single(&method, &per)
}

/// `scores.csv` for a single seed, `scores.seed3.csv` when there are several.
fn seed_path(base: &Path, seed: u64, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    let ext = base.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    base.with_file_name(format!("{stem}.seed{seed}{ext}"))
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let report = match &a.scores {
        Some(p) => {
            let p = ctx.input(p);
            if !p.is_file() {
                return Err(Error::MissingInputs(vec![p]));
            }
            eval_csv(&a, &p)?
        }
        None => {
            let cfg = experiment_config(ctx, &a.experiment)?;
            let data = ExperimentData::load(&cfg)?;
            let result = run_loaded(&cfg, &data)?;
            for run in &result.runs {
                if !run.epoch_losses.is_empty() {
                    let losses: Vec<String> = run.epoch_losses.iter().map(|l| format!("{l:.6}")).collect();
                    println!("seed {} epoch losses {}", run.seed, losses.join(" "));
                }
                if let Some(base) = &a.scores_out {
                    let p = seed_path(base, run.seed, result.runs.len() > 1);
                    write_score_csv(&p, &run.records(&data.manifest))?;
                }
            }
            result.report
        }
    };
    let table = report.to_table();
    print!("{table}");
    if let Some(p) = &a.table_out {
        write_text(p, &table)?;
    }
    if let Some(p) = &a.out {
        report.save_json(p)?;
    }
    Ok(())
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let out = required(a.out.clone(), "out")?;
    let variable = required(a.variable.clone(), "variable")?.replace('-', "_");
    let values = required(a.values.clone(), "values")?;
    let spec = match variable.as_str() {
        "n_pairs" => SweepSpec::NPairs(values.parse_each("n_pairs")?),
        "word_pair" if values.0 == ["grid"] => SweepSpec::word_pair_grid(),
        "word_pair" => SweepSpec::WordPair(
            values
                .0
                .iter()
                .map(|v| v.parse::<WordPair>().map_err(|e| Error::Config(e.to_string())))
                .collect::<Result<_>>()?,
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown sweep variable {other:?}; use n_pairs or word_pair"
            )))
        }
    };
    let cfg = experiment_config(ctx, &a.experiment)?;
    let results = run_sweep(&cfg, &spec)?;
    for (v, r) in &results {
        println!(
            "{}={v}: AUROC {:.2} ± {:.2}",
            spec.variable(),
            100.0 * r.mean.auroc.mean,
            100.0 * r.mean.auroc.std
        );
    }
    write_sweep_csv(&out, spec.variable(), &results)
}

fn report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let paths = a.reports.clone().unwrap_or_default();
    if paths.is_empty() {
        return Err(Error::Config("--reports needs at least one report file".into()));
    }
    let mut missing = Vec::new();
    let mut reports = Vec::new();
    for p in &paths {
        let p = ctx.input(p);
        if p.is_file() {
            reports.push(EvalReport::load_json(&p)?);
        } else {
            missing.push(p);
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let mut text = comparison_table(&reports);
    if a.detail.unwrap_or(false) {
        for r in &reports {
            text.push('\n');
            text.push_str(&r.to_table());
        }
    }
    print!("{text}");
    if let Some(p) = &a.out {
        write_text(p, &text)?;
    }
    Ok(())
}

fn make_manifest(ctx: &Ctx, a: MakeManifestArgs) -> Result<()> {
    let out = required(a.out.clone(), "out")?;
    let root = match (&a.root, &ctx.root) {
        (Some(r), _) => ctx.input(r),
        (None, Some(r)) => r.clone(),
        (None, None) => return Err(Error::Config("--root is required".into())),
    };
    let refs = a.refs_per_category.unwrap_or(4);
    let cats = a.categories.as_ref().map(|c| c.0.clone());
    let m = adapters::scan(&root, cats.as_deref(), refs)?;
    m.save(&out)?;
    println!("wrote {} ({} images, {} categories)", out.display(), m.len(), m.categories().len());
    if refs > 0 {
        let refs_out = a.refs_out.clone().unwrap_or_else(|| {
            let stem = out.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
            out.with_file_name(format!("{stem}.refs.json"))
        });
        let rm = adapters::reference_manifest(&m)?;
        rm.save(&refs_out)?;
        println!("wrote {} ({} references)", refs_out.display(), rm.len());
    }
    Ok(())
}

fn synth_fixture(ctx: &Ctx, a: SynthFixtureArgs) -> Result<()> {
    let dir = required(a.out_dir.clone(), "out-dir")?;
    let dir = ctx.input(&dir);
    let d = FixtureSpec::default();
    let clusters = GaussianClusters::new(
        a.dim.unwrap_or(d.clusters.dim),
        a.margin.unwrap_or(d.clusters.margin),
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let spec = FixtureSpec {
        clusters,
        n_pairs: a.n_pairs.unwrap_or(d.n_pairs),
        categories: a.categories.clone().map(|c| c.0).unwrap_or(d.categories),
        per_class: a.per_class.unwrap_or(d.per_class),
        refs_per_category: a.refs_per_category.unwrap_or(d.refs_per_category),
        seed: a.seed.unwrap_or(d.seed),
    };
    write_fixture(&dir, &spec)?;
    // Absolute paths keep the config usable from any working directory.
    let dir = dir.canonicalize().map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let paths = FixturePaths::in_dir(&dir);
    let s = |p: &Path| p.to_string_lossy().to_string();
    let config = json!({
        "manifest": s(&paths.manifest),
        "images": s(&paths.images),
        "refs": s(&paths.refs),
        "train_normals": s(&paths.train_normals),
        "train_anomalies": s(&paths.train_anomalies),
        "guide_normal": s(&paths.guide_normal),
        "guide_anomaly": s(&paths.guide_anomaly),
    });
    let cfg_path = dir.join("experiment.json");
    let mut text = serde_json::to_string_pretty(&config).expect("json");
    text.push('\n');
    write_text(&cfg_path, &text)?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "wrote fixture to {} (config {})", dir.display(), cfg_path.display());
    Ok(())
}
