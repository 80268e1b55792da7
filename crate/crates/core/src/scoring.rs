//! Prompt-guided, reference and fused anomaly scores.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{row_norm, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Default softmax temperature for prompt-guided scores.
pub const DEFAULT_TEMPERATURE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoreKind {
    /// Two-way softmax against the guide text embeddings.
    #[serde(rename = "s_pr")]
    Prompt,
    /// Detector output.
    #[serde(rename = "s_fnn")]
    Fnn,
    /// Similarity to few-shot reference normals.
    #[serde(rename = "s_img")]
    Reference,
    #[serde(rename = "sum")]
    Sum,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Prompt => "s_pr",
            ScoreKind::Fnn => "s_fnn",
            ScoreKind::Reference => "s_img",
            ScoreKind::Sum => "sum",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s_pr" | "pr" => Ok(ScoreKind::Prompt),
            "s_fnn" | "fnn" => Ok(ScoreKind::Fnn),
            "s_img" | "img" => Ok(ScoreKind::Reference),
            "sum" => Ok(ScoreKind::Sum),
            other => Err(Error::Argument(format!("unknown score kind {other:?}"))),
        }
    }
}

/// Per-sample scores of one kind.
///
/// Single-component scores lie in `[0, 1]`; a sum of `k` components lies
/// in `[0, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    kind: ScoreKind,
    components: usize,
    values: Vec<f64>,
    sample_ids: Vec<usize>,
}

impl ScoreVector {
    /// Scores for samples `0..values.len()`.
    pub fn new(kind: ScoreKind, values: Vec<f64>) -> Result<Self> {
        let ids = (0..values.len()).collect();
        Self::with_ids(kind, values, ids)
    }

    pub fn with_ids(kind: ScoreKind, values: Vec<f64>, sample_ids: Vec<usize>) -> Result<Self> {
        if kind == ScoreKind::Sum {
            return Err(Error::Argument("sum scores are built with fuse".into()));
        }
        Self::build(kind, 1, values, sample_ids)
    }

    fn build(kind: ScoreKind, components: usize, values: Vec<f64>, sample_ids: Vec<usize>) -> Result<Self> {
        if values.len() != sample_ids.len() {
            return Err(Error::Argument(format!(
                "{} scores but {} sample ids",
                values.len(),
                sample_ids.len()
            )));
        }
        let upper = components as f64;
        if let Some(v) = values.iter().find(|v| !(0.0..=upper).contains(*v)) {
            return Err(Error::Data(format!("{kind} score {v} outside [0, {upper}]")));
        }
        Ok(ScoreVector {
            kind,
            components,
            values,
            sample_ids,
        })
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    /// Number of single-kind scores summed into this one.
    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The subset at the given positions.
    pub fn select(&self, positions: &[usize]) -> Self {
        ScoreVector {
            kind: self.kind,
            components: self.components,
            values: positions.iter().map(|&i| self.values[i]).collect(),
            sample_ids: positions.iter().map(|&i| self.sample_ids[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t.is_finite() {
            Ok(Temperature(t))
        } else {
            Err(Error::Argument(format!("temperature {t} must be positive")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature(DEFAULT_TEMPERATURE)
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;

    fn try_from(t: f64) -> Result<Self> {
        Temperature::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// Anomaly-class probability of a two-way softmax over cosine
/// similarities divided by `t`, with the larger logit subtracted first.
pub fn two_way_softmax(cos_normal: f64, cos_anomaly: f64, t: Temperature) -> f64 {
    let a = cos_anomaly / t.0;
    let n = cos_normal / t.0;
    let m = a.max(n);
    let ea = (a - m).exp();
    let en = (n - m).exp();
    ea / (ea + en)
}

fn check_unit(v: &[f64], what: &str) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-4 {
        return Err(Error::Argument(format!("{what} guide has norm {norm}, expected 1")));
    }
    Ok(())
}

/// Prompt-guided score of each image against unit-norm normal and
/// anomalous guide embeddings. Image rows are normalized here.
pub fn score_prompt_guided(
    normal_text: &[f64],
    anomaly_text: &[f64],
    images: &EmbeddingMatrix,
    t: Temperature,
) -> Result<ScoreVector> {
    if normal_text.len() != images.dim() || anomaly_text.len() != images.dim() {
        return Err(Error::Argument(format!(
            "guide dims {}/{} do not match image dim {}",
            normal_text.len(),
            anomaly_text.len(),
            images.dim()
        )));
    }
    check_unit(normal_text, "normal")?;
    check_unit(anomaly_text, "anomaly")?;
    let mut values = Vec::with_capacity(images.count());
    for (i, row) in images.rows().enumerate() {
        let norm = row_norm(row);
        if norm == 0.0 {
            return Err(Error::Data(format!("image row {i} has zero norm")));
        }
        let (mut dn, mut da) = (0.0, 0.0);
        for ((&x, &n), &a) in row.iter().zip(normal_text).zip(anomaly_text) {
            let x = f64::from(x);
            dn += x * n;
            da += x * a;
        }
        values.push(two_way_softmax(dn / norm, da / norm, t));
    }
    ScoreVector::new(ScoreKind::Prompt, values)
}

/// `(1 − max cosine to any reference) / 2`, clamped to `[0, 1]`.
pub fn score_reference(images: &EmbeddingMatrix, refs: &EmbeddingMatrix) -> Result<ScoreVector> {
    if refs.count() == 0 {
        return Err(Error::Argument("no reference embeddings".into()));
    }
    if refs.dim() != images.dim() {
        return Err(Error::Argument(format!(
            "reference dim {} does not match image dim {}",
            refs.dim(),
            images.dim()
        )));
    }
    let unit_refs: Vec<Vec<f64>> = refs
        .rows()
        .enumerate()
        .map(|(i, r)| {
            crate::embedding::unit_vector(r)
                .map_err(|_| Error::Data(format!("reference row {i} has zero norm")))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(images.count());
    for (i, row) in images.rows().enumerate() {
        let norm = row_norm(row);
        if norm == 0.0 {
            return Err(Error::Data(format!("image row {i} has zero norm")));
        }
        let best = unit_refs
            .iter()
            .map(|r| row.iter().zip(r).map(|(&x, &y)| f64::from(x) * y).sum::<f64>() / norm)
            .fold(f64::NEG_INFINITY, f64::max);
        values.push(((1.0 - best) / 2.0).clamp(0.0, 1.0));
    }
    ScoreVector::new(ScoreKind::Reference, values)
}

/// Elementwise sum of aligned score vectors.
pub fn fuse(scores: &[ScoreVector]) -> Result<ScoreVector> {
    fuse_weighted(scores, &vec![1.0; scores.len()])
}

/// Weighted elementwise sum. With all weights 1 this is [`fuse`]; a single
/// input is returned unchanged.
pub fn fuse_weighted(scores: &[ScoreVector], weights: &[f64]) -> Result<ScoreVector> {
    let first = scores
        .first()
        .ok_or_else(|| Error::Argument("nothing to fuse".into()))?;
    if weights.len() != scores.len() {
        return Err(Error::Argument(format!(
            "{} weights for {} score vectors",
            weights.len(),
            scores.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Argument("fusion weights must be non-negative".into()));
    }
    for s in &scores[1..] {
        if s.sample_ids != first.sample_ids {
            return Err(Error::Argument(format!(
                "{} and {} scores are not aligned on the same samples",
                first.kind, s.kind
            )));
        }
    }
    if scores.len() == 1 && weights[0] == 1.0 {
        return Ok(first.clone());
    }
    let mut values = vec![0.0; first.len()];
    for (s, &w) in scores.iter().zip(weights) {
        for (acc, v) in values.iter_mut().zip(&s.values) {
            *acc += w * v;
        }
    }
    let bound: f64 = scores.iter().zip(weights).map(|(s, w)| w * s.components as f64).sum();
    let components = bound.ceil().max(1.0) as usize;
    ScoreVector::build(ScoreKind::Sum, components, values, first.sample_ids.clone())
}

/// One line of a score CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: usize,
    pub category: String,
    pub label: u8,
    pub score_kind: ScoreKind,
    pub value: f64,
}

/// Writes `sample_id,category,label,score_kind,value` rows with a header.
pub fn write_score_csv(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_score_csv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: ScoreRecord = rec.map_err(|e| csv_error(path, e))?;
        if rec.label > 1 || !rec.value.is_finite() {
            return Err(Error::Data(format!(
                "{}: bad record for sample {}",
                path.display(),
                rec.sample_id
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingKind;

    fn images(rows: &[[f32; 2]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(EmbeddingKind::Image, 2, rows).unwrap()
    }

    #[test]
    fn equal_similarity_gives_one_half() {
        let n = [1.0, 0.0];
        let a = [0.0, 1.0];
        let s = score_prompt_guided(&n, &a, &images(&[[1.0, 1.0], [-3.0, -3.0]]), Temperature::default())
            .unwrap();
        assert_eq!(s.values(), &[0.5, 0.5]);
    }

    #[test]
    fn closed_form_gap() {
        // Image (1, 0); guides with cosines 0.49 and 0.5 to it.
        let cn: f64 = 0.49;
        let ca: f64 = 0.5;
        let n = [cn, (1.0 - cn * cn).sqrt()];
        let a = [ca, (1.0 - ca * ca).sqrt()];
        let s = score_prompt_guided(&n, &a, &images(&[[1.0, 0.0]]), Temperature::default()).unwrap();
        let e = std::f64::consts::E;
        assert!((s.values()[0] - e / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn no_overflow_at_extreme_similarity() {
        let tiny = Temperature::new(1e-4).unwrap();
        assert_eq!(two_way_softmax(-1.0, 1.0, tiny), 1.0);
        assert_eq!(two_way_softmax(1.0, -1.0, tiny), 0.0);
    }

    #[test]
    fn prompt_guided_errors() {
        let img = images(&[[1.0, 0.0]]);
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(matches!(
            score_prompt_guided(&[2.0, 0.0], &[0.0, 1.0], &img, Temperature::default()),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            score_prompt_guided(&[1.0, 0.0], &[0.0, 1.0], &images(&[[0.0, 0.0]]), Temperature::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn reference_score_cases() {
        let refs = images(&[[2.0, 0.0]]);
        let s = score_reference(&images(&[[1.0, 0.0], [0.0, 5.0], [-1.0, 0.0]]), &refs).unwrap();
        assert_eq!(s.values(), &[0.0, 0.5, 1.0]);
        assert!(matches!(
            score_reference(&images(&[[1.0, 0.0]]), &EmbeddingMatrix::empty(EmbeddingKind::Image, 2).unwrap()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn fuse_singleton_and_sum() {
        let a = ScoreVector::new(ScoreKind::Prompt, vec![0.1, 0.5, 0.9]).unwrap();
        let b = ScoreVector::new(ScoreKind::Fnn, vec![0.2, 0.25, 1.0]).unwrap();
        assert_eq!(fuse(std::slice::from_ref(&a)).unwrap(), a);
        let s = fuse(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.kind(), ScoreKind::Sum);
        assert_eq!(s.components(), 2);
        for i in 0..3 {
            assert_eq!(s.values()[i], a.values()[i] + b.values()[i]);
        }
    }

    #[test]
    fn fuse_rejects_misaligned_ids() {
        let a = ScoreVector::new(ScoreKind::Prompt, vec![0.1, 0.5]).unwrap();
        let b = ScoreVector::with_ids(ScoreKind::Fnn, vec![0.2, 0.3], vec![1, 0]).unwrap();
        assert!(matches!(fuse(&[a, b]), Err(Error::Argument(_))));
    }

    #[test]
    fn score_range_enforced() {
        assert!(ScoreVector::new(ScoreKind::Fnn, vec![1.5]).is_err());
        assert!(ScoreVector::new(ScoreKind::Sum, vec![0.5]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("rpad-scores-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("scores.csv");
        let recs = vec![
            ScoreRecord {
                sample_id: 0,
                category: "bottle".into(),
                label: 1,
                score_kind: ScoreKind::Sum,
                value: 1.25,
            },
            ScoreRecord {
                sample_id: 1,
                category: "cable".into(),
                label: 0,
                score_kind: ScoreKind::Prompt,
                value: 0.125,
            },
        ];
        write_score_csv(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_id,category,label,score_kind,value\n0,bottle,1,sum,1.25\n"));
        assert_eq!(read_score_csv(&path).unwrap(), recs);
        std::fs::remove_dir_all(dir).ok();
    }
}
