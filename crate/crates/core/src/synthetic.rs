//! Synthetic stand-ins for encoder outputs: two Gaussian clusters
//! ("normal" and "anomalous") used for tests, benchmarks and the bundled
//! fixture, so the whole pipeline runs without an encoder.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{
    write_embeddings, DatasetManifest, EmbeddingKind, EmbeddingMatrix, ManifestEntry,
    PairedEmbeddingSet,
};
use crate::error::{Error, Result};
use crate::rng;

/// Isotropic clusters with means `c ∓ (margin/2)·σ·e₁`, where the shared
/// center `c = offset·σ·e₀` keeps rows away from the origin. Both means have
/// equal norm, so their directions separate the clusters as well as the
/// means do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClusters {
    pub dim: usize,
    /// Distance between the two means, in units of `sigma`.
    pub margin: f64,
    pub sigma: f64,
    /// Norm of the shared center, in units of `sigma`.
    pub offset: f64,
}

impl GaussianClusters {
    pub fn new(dim: usize, margin: f64) -> Result<Self> {
        let c = GaussianClusters {
            dim,
            margin,
            sigma: 1.0,
            offset: 10.0,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Argument("synthetic clusters need dim >= 2".into()));
        }
        if !(self.sigma > 0.0 && self.margin >= 0.0 && self.offset >= 0.0) {
            return Err(Error::Argument("bad synthetic cluster parameters".into()));
        }
        Ok(())
    }

    /// `(normal mean, anomalous mean)`.
    pub fn means(&self) -> (Vec<f64>, Vec<f64>) {
        let mut n = vec![0.0; self.dim];
        n[0] = self.offset * self.sigma;
        let mut a = n.clone();
        n[1] = -0.5 * self.margin * self.sigma;
        a[1] = 0.5 * self.margin * self.sigma;
        (n, a)
    }

    pub fn sample<R: Rng + ?Sized>(&self, anomalous: bool, rng: &mut R) -> Vec<f32> {
        let (n, a) = self.means();
        let mean = if anomalous { a } else { n };
        mean.iter()
            .map(|m| (m + self.sigma * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect()
    }

    /// `n_pairs` rows per class, drawn from `seed`.
    pub fn paired_text(&self, n_pairs: usize, seed: u64) -> Result<PairedEmbeddingSet> {
        let mut r = rng::seeded(seed);
        let mut normals = Vec::with_capacity(n_pairs * self.dim);
        let mut anomalies = Vec::with_capacity(n_pairs * self.dim);
        for _ in 0..n_pairs {
            normals.extend(self.sample(false, &mut r));
            anomalies.extend(self.sample(true, &mut r));
        }
        PairedEmbeddingSet::new(
            EmbeddingMatrix::new(EmbeddingKind::Text, self.dim, normals)?,
            EmbeddingMatrix::new(EmbeddingKind::Text, self.dim, anomalies)?,
        )
    }

    /// Image rows with labels; `labels[i] = 1` for anomalous rows.
    pub fn labeled_images(&self, labels: &[u8], seed: u64) -> Result<EmbeddingMatrix> {
        let mut r = rng::seeded(seed);
        let mut data = Vec::with_capacity(labels.len() * self.dim);
        for &l in labels {
            data.extend(self.sample(l == 1, &mut r));
        }
        EmbeddingMatrix::new(EmbeddingKind::Image, self.dim, data)
    }

    /// The cluster means as single-row text embeddings, usable as guides.
    pub fn guides(&self) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
        let (n, a) = self.means();
        let f = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
        Ok((
            EmbeddingMatrix::new(EmbeddingKind::Text, self.dim, f(n))?,
            EmbeddingMatrix::new(EmbeddingKind::Text, self.dim, f(a))?,
        ))
    }
}

/// Shape of the on-disk fixture written by [`write_fixture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub clusters: GaussianClusters,
    pub n_pairs: usize,
    pub categories: Vec<String>,
    /// Test images per category and class.
    pub per_class: usize,
    /// Reference normals per category.
    pub refs_per_category: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            clusters: GaussianClusters::new(64, 4.0).unwrap(),
            n_pairs: 2_000,
            categories: vec!["bolt".into(), "gear".into(), "plate".into()],
            per_class: 100,
            refs_per_category: 4,
            seed: 0,
        }
    }
}

/// Files of a written fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePaths {
    pub manifest: PathBuf,
    pub images: PathBuf,
    pub refs: PathBuf,
    pub train_normals: PathBuf,
    pub train_anomalies: PathBuf,
    pub guide_normal: PathBuf,
    pub guide_anomaly: PathBuf,
}

impl FixturePaths {
    pub fn in_dir(dir: &Path) -> Self {
        FixturePaths {
            manifest: dir.join("manifest.json"),
            images: dir.join("images.emb"),
            refs: dir.join("refs.emb"),
            train_normals: dir.join("train_normals.emb"),
            train_anomalies: dir.join("train_anomalies.emb"),
            guide_normal: dir.join("guide_normal.emb"),
            guide_anomaly: dir.join("guide_anomaly.emb"),
        }
    }
}

/// Writes training pairs, guides, labeled test images with a manifest, and
/// few-shot references into `dir`.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<FixturePaths> {
    spec.clusters.validate()?;
    if spec.categories.is_empty() || spec.per_class == 0 {
        return Err(Error::Argument("fixture needs categories and images".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = FixturePaths::in_dir(dir);
    let seeds = |k: u64| spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);

    let pairs = spec.clusters.paired_text(spec.n_pairs, seeds(1))?;
    write_embeddings(pairs.normals(), &paths.train_normals)?;
    write_embeddings(pairs.anomalies(), &paths.train_anomalies)?;
    let (gn, ga) = spec.clusters.guides()?;
    write_embeddings(&gn, &paths.guide_normal)?;
    write_embeddings(&ga, &paths.guide_anomaly)?;

    let mut entries = Vec::new();
    let mut refs = std::collections::BTreeMap::new();
    for cat in &spec.categories {
        for i in 0..2 * spec.per_class {
            let label = u8::from(i % 2 == 1);
            let kind = if label == 1 { "defect" } else { "good" };
            entries.push(ManifestEntry {
                path: format!("{cat}/test/{kind}/{:03}.png", i / 2),
                label,
                category: cat.clone(),
            });
        }
        refs.insert(
            cat.clone(),
            (0..spec.refs_per_category)
                .map(|i| format!("{cat}/train/good/{i:03}.png"))
                .collect(),
        );
    }
    let manifest = DatasetManifest::new(entries, refs)?;
    let labels = manifest.labels();
    write_embeddings(&spec.clusters.labeled_images(&labels, seeds(2))?, &paths.images)?;
    let ref_labels = vec![0u8; manifest.ref_count()];
    write_embeddings(&spec.clusters.labeled_images(&ref_labels, seeds(3))?, &paths.refs)?;
    manifest.save(&paths.manifest)?;
    Ok(paths)
}
