//! Image-level detection metrics: AUROC, average precision and F1-max,
//! plus mean/std aggregation across seeds.
//!
//! Anomalies are the positive class and a sample is predicted anomalous
//! when its score is at least the threshold. Tied scores form a single
//! threshold group everywhere; AUROC gives ties half credit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores with binary labels (1 = anomaly).
#[derive(Debug, Clone, Copy)]
pub struct LabeledScores<'a> {
    scores: &'a [f64],
    labels: &'a [u8],
    positives: usize,
}

impl<'a> LabeledScores<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [u8]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Argument(format!("label {l} is not 0 or 1")));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Metric("scores contain NaN".into()));
        }
        let positives = labels.iter().filter(|&&l| l == 1).count();
        Ok(LabeledScores {
            scores,
            labels,
            positives,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives
    }

    fn require_both_classes(&self, metric: &str) -> Result<()> {
        if self.positives == 0 || self.negatives() == 0 {
            return Err(Error::Metric(format!(
                "{metric} needs both classes, got {} positives and {} negatives",
                self.positives,
                self.negatives()
            )));
        }
        Ok(())
    }

    /// `(score, positives, negatives)` per distinct score, highest first.
    fn groups_descending(&self) -> Vec<(f64, usize, usize)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut groups: Vec<(f64, usize, usize)> = Vec::new();
        for i in idx {
            let s = self.scores[i];
            let pos = usize::from(self.labels[i] == 1);
            match groups.last_mut() {
                // -0.0 and 0.0 are one threshold.
                Some(g) if g.0 == s => {
                    g.1 += pos;
                    g.2 += 1 - pos;
                }
                _ => groups.push((s, pos, 1 - pos)),
            }
        }
        groups
    }
}

/// Area under the ROC curve, equal to the Mann–Whitney statistic.
pub fn auroc(d: &LabeledScores<'_>) -> Result<f64> {
    d.require_both_classes("AUROC")?;
    // Walking groups from the top: each positive beats every negative in
    // lower groups and ties with negatives in its own group.
    let mut negatives_below = d.negatives();
    let mut credit = 0.0;
    for (_, pos, neg) in d.groups_descending() {
        negatives_below -= neg;
        credit += pos as f64 * (negatives_below as f64 + 0.5 * neg as f64);
    }
    Ok(credit / (d.positives() as f64 * d.negatives() as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuprMode {
    /// Average precision: Σ ΔRecall × Precision over threshold groups.
    #[default]
    Step,
    /// Trapezoidal area under the (recall, precision) points, starting at
    /// (0, 1).
    Trapezoid,
}

impl std::str::FromStr for AuprMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(AuprMode::Step),
            "trapezoid" => Ok(AuprMode::Trapezoid),
            other => Err(Error::Argument(format!("unknown AUPR mode {other:?}"))),
        }
    }
}

pub fn aupr(d: &LabeledScores<'_>) -> Result<f64> {
    aupr_with(d, AuprMode::Step)
}

pub fn aupr_with(d: &LabeledScores<'_>, mode: AuprMode) -> Result<f64> {
    d.require_both_classes("AUPR")?;
    let p = d.positives() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_recall, mut prev_precision) = (0.0, 1.0);
    let mut area = 0.0;
    for (_, pos, neg) in d.groups_descending() {
        tp += pos;
        fp += neg;
        let recall = tp as f64 / p;
        let precision = tp as f64 / (tp + fp) as f64;
        area += match mode {
            AuprMode::Step => (recall - prev_recall) * precision,
            AuprMode::Trapezoid => (recall - prev_recall) * (precision + prev_precision) / 2.0,
        };
        prev_recall = recall;
        prev_precision = precision;
    }
    Ok(area)
}

/// Best F1 over thresholds at every distinct score plus `+∞`, with the
/// threshold reaching it (the highest one on ties).
pub fn f1_max(d: &LabeledScores<'_>) -> Result<(f64, f64)> {
    if d.positives() == 0 {
        return Err(Error::Metric("F1-max needs at least one positive".into()));
    }
    let p = d.positives();
    // Nothing predicted positive at +∞: F1 = 0.
    let mut best = (0.0, f64::INFINITY);
    let (mut tp, mut fp) = (0usize, 0usize);
    for (score, pos, neg) in d.groups_descending() {
        tp += pos;
        fp += neg;
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + (p - tp)) as f64;
        if f1 > best.0 {
            best = (f1, score);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auroc: f64,
    pub aupr: f64,
    pub f1_max: f64,
}

impl Metrics {
    pub fn compute(d: &LabeledScores<'_>, mode: AuprMode) -> Result<Self> {
        Ok(Metrics {
            auroc: auroc(d)?,
            aupr: aupr_with(d, mode)?,
            f1_max: f1_max(d)?.0,
        })
    }

    fn values(&self) -> [f64; 3] {
        [self.auroc, self.aupr, self.f1_max]
    }
}

/// Metrics of each category, evaluated independently.
pub fn evaluate_by_category(
    scores: &[f64],
    labels: &[u8],
    categories: &[String],
    mode: AuprMode,
) -> Result<BTreeMap<String, Metrics>> {
    if scores.len() != categories.len() || labels.len() != categories.len() {
        return Err(Error::Argument("scores, labels and categories differ in length".into()));
    }
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for ((s, l), c) in scores.iter().zip(labels).zip(categories) {
        let g = groups.entry(c.as_str()).or_default();
        g.0.push(*s);
        g.1.push(*l);
    }
    groups
        .into_iter()
        .map(|(c, (s, l))| {
            let d = LabeledScores::new(&s, &l)?;
            let m = Metrics::compute(&d, mode)
                .map_err(|e| Error::Metric(format!("category {c}: {e}")))?;
            Ok((c.to_string(), m))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and population standard deviation (two-pass).
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Stat {
            mean,
            std: var.sqrt(),
        }
    }

    fn exact(v: f64) -> Stat {
        Stat { mean: v, std: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub auroc: Stat,
    pub aupr: Stat,
    pub f1_max: Stat,
}

impl MetricStats {
    fn exact(m: &Metrics) -> Self {
        MetricStats {
            auroc: Stat::exact(m.auroc),
            aupr: Stat::exact(m.aupr),
            f1_max: Stat::exact(m.f1_max),
        }
    }

    fn means(&self) -> Metrics {
        Metrics {
            auroc: self.auroc.mean,
            aupr: self.aupr.mean,
            f1_max: self.f1_max.mean,
        }
    }

    fn across(runs: &[Metrics]) -> Self {
        let col = |f: fn(&Metrics) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
        MetricStats {
            auroc: col(|m| m.auroc),
            aupr: col(|m| m.aupr),
            f1_max: col(|m| m.f1_max),
        }
    }
}

/// Per-category and category-averaged metrics, as mean ± std over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub runs: usize,
    pub categories: BTreeMap<String, MetricStats>,
    /// Category average of each run, then mean ± std over runs.
    pub mean: MetricStats,
}

impl EvalReport {
    /// Report of one run (all deviations zero).
    pub fn single(method: &str, per_category: &BTreeMap<String, Metrics>) -> Result<Self> {
        if per_category.is_empty() {
            return Err(Error::Argument("no categories to report".into()));
        }
        for (c, m) in per_category {
            if m.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Metric(format!("category {c} has a metric outside [0, 1]")));
            }
        }
        let n = per_category.len() as f64;
        let avg = Metrics {
            auroc: per_category.values().map(|m| m.auroc).sum::<f64>() / n,
            aupr: per_category.values().map(|m| m.aupr).sum::<f64>() / n,
            f1_max: per_category.values().map(|m| m.f1_max).sum::<f64>() / n,
        };
        Ok(EvalReport {
            method: method.to_string(),
            runs: 1,
            categories: per_category
                .iter()
                .map(|(c, m)| (c.clone(), MetricStats::exact(m)))
                .collect(),
            mean: MetricStats::exact(&avg),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Plain-text table in percent: one row per category, then the mean.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, MetricStats)> =
            self.categories.iter().map(|(c, s)| (c.clone(), *s)).collect();
        rows.push(("mean".into(), self.mean));
        let width = rows.iter().map(|(c, _)| c.len()).max().unwrap_or(4).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{} (runs: {})", self.method, self.runs);
        let _ = writeln!(
            out,
            "{:<width$}  {:>11}  {:>11}  {:>11}",
            "category", "AUROC", "AUPR", "F1-max"
        );
        for (c, s) in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>11}  {:>11}  {:>11}",
                c,
                pct(s.auroc, self.runs),
                pct(s.aupr, self.runs),
                pct(s.f1_max, self.runs)
            );
        }
        out
    }
}

fn pct(s: Stat, runs: usize) -> String {
    if runs > 1 {
        format!("{:.1}±{:.1}", 100.0 * s.mean, 100.0 * s.std)
    } else {
        format!("{:.1}", 100.0 * s.mean)
    }
}

/// Summary rows in the layout of a method-comparison table: one line per
/// report with its category-averaged metrics.
pub fn comparison_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>11}  {:>11}  {:>11}", "method", "AUROC", "AUPR", "F1-max");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>11}  {:>11}  {:>11}",
            r.method,
            pct(r.mean.auroc, r.runs),
            pct(r.mean.aupr, r.runs),
            pct(r.mean.f1_max, r.runs)
        );
    }
    out
}

/// Combines per-seed reports: each category and the category average get
/// the mean and population standard deviation of the runs' means.
pub fn seed_statistics(runs: &[EvalReport]) -> Result<EvalReport> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Argument("no runs to aggregate".into()))?;
    for r in &runs[1..] {
        if !r.categories.keys().eq(first.categories.keys()) {
            return Err(Error::Argument(
                "runs cover different categories and cannot be aggregated".into(),
            ));
        }
    }
    let categories = first
        .categories
        .keys()
        .map(|c| {
            let per_run: Vec<Metrics> = runs.iter().map(|r| r.categories[c].means()).collect();
            (c.clone(), MetricStats::across(&per_run))
        })
        .collect();
    let mean_runs: Vec<Metrics> = runs.iter().map(|r| r.mean.means()).collect();
    Ok(EvalReport {
        method: first.method.clone(),
        runs: runs.len(),
        categories,
        mean: MetricStats::across(&mean_runs),
    })
}
