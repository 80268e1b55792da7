//! Anomaly detection from randomly generated text prompts.
//!
//! Pairs of normal/anomalous prompts, embedded by a vision-language text
//! encoder elsewhere, train a small MLP detector. Image embeddings are then
//! scored by the detector, by prompt-guided similarity, and (few-shot) by
//! similarity to reference normals; the scores are summed and evaluated.

pub mod detector;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod prompts;
pub mod rng;
pub mod scoring;
pub mod synthetic;

pub use detector::{
    read_checkpoint, score_fnn, train, write_checkpoint, Checkpoint, MlpArchitecture, MlpParams,
    TrainConfig, TrainOutcome,
};
pub use embedding::{
    l2_normalize, read_embeddings, write_embeddings, DatasetManifest, EmbeddingKind,
    EmbeddingMatrix, ManifestEntry, PairedEmbeddingSet,
};
pub use error::{Error, ErrorClass, Result};
pub use experiment::{
    run_experiment, run_few_shot, run_sweep, run_zero_shot, Components, ExperimentConfig,
    ExperimentPaths, Setup, SweepSpec,
};
pub use metrics::{aupr, auroc, f1_max, AuprMode, EvalReport, LabeledScores, Metrics};
pub use prompts::{generate_prompt_set, PromptPair, PromptSet, RandomWordConfig, WordPair};
pub use scoring::{fuse, score_prompt_guided, score_reference, ScoreKind, ScoreVector, Temperature};
