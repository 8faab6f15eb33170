//! parse → resolve → trees → anchor → chronology → fit, driven by one
//! configuration.

use std::fs;
use std::path::{Path, PathBuf};

use chronos_core::chronology::{build_qp, estimate_chronology, sample_lifespans, ChronologyEnsemble, ChronologyParams};
use chronos_core::corpus::{parse_corpus, serialize_corpus, Corpus};
use chronos_core::genealogy::{assign_generations, build_initial_trees, reference_tree, select_anchor_document, unify_trees};
use chronos_core::growth::{compare_models, FitReport};
use chronos_core::identity::{resolve_identities, IdentityConfig, PersonRegistry};
use chronos_core::synth::{evaluate_recovery, generate_society, GroundTruth, RecoveryMetrics, SynthConfig};
use log::info;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, config_hash, sha256_hex, ArtifactError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Also fit documents not connected to the anchor.
    pub include_unanchored: bool,
    /// Histogram bin width; Freedman–Diaconis when absent.
    pub bin_width: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { include_unanchored: false, bin_width: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Corpus file. Exactly one of `corpus` and `synth` is set.
    pub corpus: Option<PathBuf>,
    /// Generate a synthetic society instead of reading a corpus.
    pub synth: Option<SynthConfig>,
    /// Where artifacts go. Not part of the config hash.
    pub out_dir: PathBuf,
    pub contractor_lines: u32,
    /// `error`, `warn`, `info`, `debug` or `trace`. Not part of the hash.
    pub log_level: String,
    pub identity: IdentityConfig,
    /// An empty `anchor_doc` selects the anchor automatically.
    pub chronology: ChronologyParams,
    pub fit: FitOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            synth: None,
            out_dir: PathBuf::from("out"),
            contractor_lines: 10,
            log_level: "info".into(),
            identity: IdentityConfig::default(),
            chronology: ChronologyParams::default(),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// Usage or configuration problem; exit code 2.
    #[error("{0}")]
    Config(String),
    /// A stage failed; exit code 1.
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 1,
        }
    }

    fn stage(stage: &'static str, e: impl ToString) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }
}

impl From<ArtifactError> for PipelineError {
    fn from(e: ArtifactError) -> Self {
        PipelineError::stage("write", e)
    }
}

impl PipelineConfig {
    /// Reads a TOML file. Relative paths in it are taken from the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(c) = &cfg.corpus {
            if c.is_relative() {
                cfg.corpus = Some(base.join(c));
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        match (&self.corpus, &self.synth) {
            (Some(_), Some(_)) => return Err(PipelineError::Config("set either corpus or synth, not both".into())),
            (None, None) => return Err(PipelineError::Config("no corpus given (set corpus or synth)".into())),
            (Some(c), None) if !c.is_file() => {
                return Err(PipelineError::Config(format!("corpus not found: {}", c.display())))
            }
            (None, Some(s)) => s.validate().map_err(|e| PipelineError::Config(e.to_string()))?,
            _ => {}
        }
        self.chronology.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.identity.r2_threshold == 0 {
            return Err(PipelineError::Config("r2_threshold must be positive".into()));
        }
        if let Some(w) = self.fit.bin_width {
            if !(w > 0.0) {
                return Err(PipelineError::Config("bin_width must be positive".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the configuration with the output location and log level
    /// blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.log_level = String::new();
        config_hash(&c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonNote {
    pub epsilon: f64,
    pub deviation: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub config: PipelineConfig,
    pub corpus_sha256: String,
    pub anchor_doc: String,
    pub anchor_year: f64,
    pub reference_tree: usize,
    pub persons: usize,
    pub documents: usize,
    pub parent_links: usize,
    pub attestation_pairs: usize,
    pub variables: usize,
    pub constraints: usize,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub objective: Vec<f64>,
    pub lifespan_objective: Vec<f64>,
    pub max_residual: f64,
    pub failures: Vec<(usize, String)>,
    pub anchored_documents: usize,
    pub fitted_documents: usize,
    pub regularization: EpsilonNote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub column: String,
    pub anchored_only: bool,
    #[serde(flatten)]
    pub report: FitReport,
}

/// Everything a pipeline run produced, in memory.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub config_hash: String,
    pub corpus: Corpus,
    pub registry: PersonRegistry,
    pub anchor_doc: String,
    pub ensemble: ChronologyEnsemble,
    pub fit: FitReport,
    pub truth: Option<GroundTruth>,
    pub recovery: Option<RecoveryMetrics>,
    pub meta: Meta,
}

/// Artifact file names, in the order they are written.
pub const ARTIFACTS: [&str; 7] =
    ["registry.json", "trees.csv", "persons.csv", "documents.csv", "fit.json", "hist.csv", "meta.json"];

/// Fit samples: ensemble-mean publication years, anchored documents only
/// unless `include_unanchored`.
pub fn fit_samples(ens: &ChronologyEnsemble, include_unanchored: bool) -> Vec<f64> {
    let first = &ens.timelines[0];
    (0..first.documents.len())
        .filter(|&k| include_unanchored || first.document_anchored[k])
        .map(|k| ens.publication[k].mean)
        .collect()
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| PipelineError::stage("write", format!("{}: {e}", out.display())))?;

    let (corpus, truth) = match (&cfg.corpus, &cfg.synth) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| PipelineError::stage("parse", format!("{}: {e}", path.display())))?;
            (parse_corpus(&text, cfg.contractor_lines).map_err(|e| PipelineError::stage("parse", e))?, None)
        }
        (None, Some(s)) => {
            let (c, t) = generate_society(s).map_err(|e| PipelineError::stage("synth", e))?;
            fs::write(out.join("corpus.jsonl"), serialize_corpus(&c))
                .map_err(|e| PipelineError::stage("write", e))?;
            artifacts::write_json(&out.join("truth.json"), &hash, &t)?;
            (c, Some(t))
        }
        (None, None) => unreachable!("validated"),
    };
    let corpus_sha256 = sha256_hex(serialize_corpus(&corpus).as_bytes());
    info!("parse: {} entries, {} documents", corpus.entries.len(), corpus.documents.len());

    let registry = resolve_identities(&corpus, &cfg.identity);
    info!("resolve: {} persons, {} merges", registry.len(), registry.merges.len());
    artifacts::write_json(&out.join("registry.json"), &hash, &registry)?;

    let trees = unify_trees(build_initial_trees(&registry), &registry);
    let reference = reference_tree(&trees).ok_or_else(|| PipelineError::stage("trees", "corpus has no persons"))?;
    info!("trees: {} trees, reference {} with {} generations", trees.len(), reference.id, reference.depth);
    artifacts::write_trees(&out.join("trees.csv"), &hash, &trees, Some(reference.id))?;
    let generations = assign_generations(&registry, &trees, reference);

    let mut params = cfg.chronology.clone();
    if params.anchor_doc.is_empty() {
        params.anchor_doc =
            select_anchor_document(&corpus, &registry, reference).map_err(|e| PipelineError::stage("anchor", e))?;
    } else if !corpus.documents.contains(&params.anchor_doc) {
        return Err(PipelineError::stage("anchor", format!("unknown anchor document {}", params.anchor_doc)));
    }
    info!("anchor: {} at {}", params.anchor_doc, params.anchor_year);

    let shape = build_qp(&registry, &corpus, &sample_lifespans(registry.len(), params.lifespan_interval, params.seed), &params)
        .map_err(|e| PipelineError::stage("chronology", e))?;
    let ensemble = estimate_chronology(&registry, &corpus, &params).map_err(|e| PipelineError::stage("chronology", e))?;
    let max_residual = ensemble.timelines.iter().map(|t| t.residuals.max()).fold(0.0, f64::max);
    info!("chronology: {} runs, max residual {max_residual:e}, {} failures", ensemble.timelines.len(), ensemble.failures.len());
    artifacts::write_persons(&out.join("persons.csv"), &hash, &registry, &ensemble, Some(&generations))?;
    artifacts::write_documents(&out.join("documents.csv"), &hash, &ensemble)?;

    let samples = fit_samples(&ensemble, cfg.fit.include_unanchored);
    let fit = compare_models(&samples, cfg.fit.bin_width).map_err(|e| PipelineError::stage("fit", e))?;
    info!(
        "fit: mu {:.3} beta {:.3}, delta loglik {:.3} over {} documents",
        fit.logistic.mu, fit.logistic.beta, fit.delta_loglik, fit.n
    );
    let fit_artifact = FitArtifact { column: "P".into(), anchored_only: !cfg.fit.include_unanchored, report: fit.clone() };
    artifacts::write_json(&out.join("fit.json"), &hash, &fit_artifact)?;
    artifacts::write_histogram(&out.join("hist.csv"), &hash, &fit.histogram)?;

    let recovery = match &truth {
        Some(t) => {
            let m = evaluate_recovery(&ensemble, &registry, t, &params.anchor_doc, Some(&fit.logistic))
                .map_err(|e| PipelineError::stage("evaluate", e))?;
            artifacts::write_json(&out.join("recovery.json"), &hash, &m)?;
            Some(m)
        }
        None => None,
    };

    let first = &ensemble.timelines[0];
    let meta = Meta {
        version: env!("CARGO_PKG_VERSION").into(),
        config: PipelineConfig { chronology: params.clone(), out_dir: PathBuf::new(), ..cfg.clone() },
        corpus_sha256,
        anchor_doc: params.anchor_doc.clone(),
        anchor_year: params.anchor_year,
        reference_tree: reference.id,
        persons: registry.len(),
        documents: corpus.documents.len(),
        parent_links: registry.persons.iter().map(|p| p.parents().count()).sum(),
        attestation_pairs: registry.persons.iter().map(|p| p.documents.len()).sum(),
        variables: shape.qp.n(),
        constraints: shape.qp.m(),
        runs: params.runs,
        seeds: (0..params.runs as u64).map(|r| params.seed.wrapping_add(r)).collect(),
        objective: ensemble.timelines.iter().map(|t| t.objective).collect(),
        lifespan_objective: ensemble.timelines.iter().map(|t| t.lifespan_objective).collect(),
        max_residual,
        failures: ensemble.failures.clone(),
        anchored_documents: first.document_anchored.iter().filter(|&&a| a).count(),
        fitted_documents: samples.len(),
        regularization: EpsilonNote {
            epsilon: params.epsilon,
            deviation: true,
            note: "objective adds epsilon-weighted pulls of publication years and life midpoints toward the anchor year to make the optimum unique".into(),
        },
    };
    artifacts::write_json(&out.join("meta.json"), &hash, &meta)?;

    Ok(PipelineOutput {
        config_hash: hash,
        corpus,
        registry,
        anchor_doc: params.anchor_doc,
        ensemble,
        fit,
        truth,
        recovery,
        meta,
    })
}
