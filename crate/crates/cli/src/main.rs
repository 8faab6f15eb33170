use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chronos_cli::artifacts::{self, config_hash, sha256_hex};
use chronos_cli::pipeline::{run_pipeline, FitArtifact, PipelineConfig, PipelineError};
use chronos_core::chronology::{estimate_chronology, ChronologyParams};
use chronos_core::corpus::{attestation_pairs, parse_corpus, serialize_corpus, Corpus};
use chronos_core::genealogy::{
    assign_generations, build_initial_trees, extended_members, reference_tree, select_anchor_document, tree_stats,
    unify_trees,
};
use chronos_core::growth::compare_models;
use chronos_core::identity::{resolve_identities, IdentityConfig, PersonRegistry};
use chronos_core::synth::{generate_society, SynthConfig};
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "chronos", version, about = "Reconstruct document and life years from a name-index corpus")]
struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a corpus and print its size.
    Parse {
        file: PathBuf,
        #[arg(long, default_value_t = 10)]
        contractor_lines: u32,
        /// Write the canonical form of the corpus here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge same-named records into persons.
    Resolve {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        r2_threshold: usize,
        #[arg(long, default_value_t = 10)]
        contractor_lines: u32,
    },
    /// Build and unify family trees.
    Trees {
        registry: PathBuf,
        /// Histogram of (generations, individuals).
        #[arg(long)]
        stats: Option<PathBuf>,
        /// One row per tree.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the anchor document of a family.
    Anchor {
        corpus: PathBuf,
        registry: PathBuf,
        /// Tree id; the reference tree when absent.
        #[arg(long)]
        family: Option<usize>,
        #[arg(long, default_value_t = 10)]
        contractor_lines: u32,
    },
    /// Estimate years by repeated constrained least squares.
    Chronology {
        corpus: PathBuf,
        registry: PathBuf,
        #[arg(long, default_value_t = 15.0)]
        gf: f64,
        #[arg(long, default_value_t = 20.0)]
        gm: f64,
        #[arg(long, default_value_t = 10.0)]
        gp: f64,
        #[arg(long, default_value = "20,60", value_parser = parse_interval)]
        interval: (f64, f64),
        /// Selected automatically when absent.
        #[arg(long)]
        anchor_doc: Option<String>,
        #[arg(long, default_value_t = 100.0)]
        anchor_year: f64,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        contractor_lines: u32,
    },
    /// Fit logistic and normal laws to a column of documents.csv.
    Fit {
        documents: PathBuf,
        #[arg(long, default_value = "P")]
        col: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        hist: Option<PathBuf>,
        #[arg(long)]
        include_unanchored: bool,
        #[arg(long)]
        bin_width: Option<f64>,
    },
    /// Generate a synthetic society.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run every stage and write all artifacts.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "synth")]
        corpus: Option<PathBuf>,
        /// `default` or a TOML file with synthetic society settings.
        #[arg(long)]
        synth: Option<String>,
        /// Seed for the restarts and the synthetic society.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        anchor_doc: Option<String>,
        #[arg(long)]
        include_unanchored: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    Ok((lo, hi))
}

fn config_err(e: impl ToString) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn stage_err(stage: &'static str) -> impl Fn(&dyn ToString) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

fn load_corpus(path: &Path, contractor_lines: u32) -> Result<Corpus, PipelineError> {
    if !path.is_file() {
        return Err(config_err(format!("corpus not found: {}", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| stage_err("parse")(&e))?;
    parse_corpus(&text, contractor_lines).map_err(|e| stage_err("parse")(&e))
}

fn load_registry(path: &Path) -> Result<PersonRegistry, PipelineError> {
    if !path.is_file() {
        return Err(config_err(format!("registry not found: {}", path.display())));
    }
    Ok(artifacts::read_json::<PersonRegistry>(path).map_err(|e| stage_err("resolve")(&e))?.body)
}

fn load_synth(path: &Path) -> Result<SynthConfig, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Parse { file, contractor_lines, out } => {
            let c = load_corpus(&file, contractor_lines)?;
            println!("entries {}", c.entries.len());
            println!("records {}", c.record_count());
            println!("documents {}", c.documents.len());
            println!("attestation_pairs {}", attestation_pairs(&c).len());
            if let Some(out) = out {
                fs::write(&out, serialize_corpus(&c)).map_err(|e| stage_err("write")(&e))?;
            }
        }
        Command::Resolve { corpus, out, r2_threshold, contractor_lines } => {
            if r2_threshold == 0 {
                return Err(config_err("r2 threshold must be positive"));
            }
            let c = load_corpus(&corpus, contractor_lines)?;
            let cfg = IdentityConfig { r2_threshold };
            let r = resolve_identities(&c, &cfg);
            let hash = config_hash(&json!({
                "command": "resolve",
                "corpus_sha256": sha256_hex(serialize_corpus(&c).as_bytes()),
                "identity": cfg,
            }));
            artifacts::write_json(&out, &hash, &r)?;
            println!("persons {}", r.len());
            println!("merges {}", r.merges.len());
            println!("unbound_links {}", r.unbound.len());
            println!("order_sensitive_pairs {}", r.order_sensitive.len());
        }
        Command::Trees { registry, stats, out } => {
            let r = load_registry(&registry)?;
            let trees = unify_trees(build_initial_trees(&r), &r);
            let reference = reference_tree(&trees).map(|t| t.id);
            let s = tree_stats(&trees);
            let hash = config_hash(&json!({"command": "trees", "registry": r}));
            if let Some(path) = stats {
                artifacts::write_tree_stats(&path, &hash, &s)?;
            }
            if let Some(path) = out {
                artifacts::write_trees(&path, &hash, &trees, reference)?;
            }
            println!("trees {}", s.total);
            println!("singletons {}", s.singletons);
            println!("two_person {}", s.two_person);
            if let Some(t) = reference.map(|id| &trees[id]) {
                println!("reference {} generations {} individuals {}", t.id, t.depth, t.node_count());
            }
        }
        Command::Anchor { corpus, registry, family, contractor_lines } => {
            let c = load_corpus(&corpus, contractor_lines)?;
            let r = load_registry(&registry)?;
            let trees = unify_trees(build_initial_trees(&r), &r);
            let tree = match family {
                Some(id) => trees.iter().find(|t| t.id == id).ok_or_else(|| config_err(format!("no tree {id}")))?,
                None => reference_tree(&trees).ok_or_else(|| stage_err("trees")(&"registry has no persons"))?,
            };
            let doc = select_anchor_document(&c, &r, tree).map_err(|e| stage_err("anchor")(&e))?;
            let reach = extended_members(&c, &r, &doc).map_err(|e| stage_err("anchor")(&e))?;
            println!("{doc}");
            println!("extended_members {}", reach.len());
        }
        Command::Chronology {
            corpus,
            registry,
            gf,
            gm,
            gp,
            interval,
            anchor_doc,
            anchor_year,
            runs,
            seed,
            eps,
            out_dir,
            contractor_lines,
        } => {
            let c = load_corpus(&corpus, contractor_lines)?;
            let r = load_registry(&registry)?;
            let trees = unify_trees(build_initial_trees(&r), &r);
            let reference = reference_tree(&trees).ok_or_else(|| stage_err("trees")(&"registry has no persons"))?;
            let anchor_doc = match anchor_doc {
                Some(d) => d,
                None => select_anchor_document(&c, &r, reference).map_err(|e| stage_err("anchor")(&e))?,
            };
            let params = ChronologyParams {
                g_f: gf,
                g_m: gm,
                g_p: gp,
                lifespan_interval: interval,
                anchor_doc,
                anchor_year,
                epsilon: eps,
                runs,
                seed,
            };
            params.validate().map_err(config_err)?;
            let ens = estimate_chronology(&r, &c, &params).map_err(|e| stage_err("chronology")(&e))?;
            let generations = assign_generations(&r, &trees, reference);
            let hash = config_hash(&json!({
                "command": "chronology",
                "corpus_sha256": sha256_hex(serialize_corpus(&c).as_bytes()),
                "registry": r,
                "params": params,
            }));
            fs::create_dir_all(&out_dir).map_err(|e| stage_err("write")(&e))?;
            artifacts::write_persons(&out_dir.join("persons.csv"), &hash, &r, &ens, Some(&generations))?;
            artifacts::write_documents(&out_dir.join("documents.csv"), &hash, &ens)?;
            let meta = json!({
                "params": params,
                "objective": ens.timelines.iter().map(|t| t.objective).collect::<Vec<_>>(),
                "lifespan_objective": ens.timelines.iter().map(|t| t.lifespan_objective).collect::<Vec<_>>(),
                "residuals": ens.timelines.iter().map(|t| t.residuals).collect::<Vec<_>>(),
                "failures": ens.failures,
                "regularization": {"epsilon": params.epsilon, "deviation": true},
            });
            artifacts::write_json(&out_dir.join("meta.json"), &hash, &meta)?;
            println!("anchor {}", params.anchor_doc);
            println!("runs {}", ens.timelines.len());
            println!("failures {}", ens.failures.len());
        }
        Command::Fit { documents, col, out, hist, include_unanchored, bin_width } => {
            if !documents.is_file() {
                return Err(config_err(format!("documents table not found: {}", documents.display())));
            }
            if bin_width.is_some_and(|w| !(w > 0.0)) {
                return Err(config_err("bin width must be positive"));
            }
            let table = artifacts::read_csv(&documents).map_err(|e| stage_err("fit")(&e))?;
            let samples = artifacts::numeric_column(&table, &documents, &col, !include_unanchored)
                .map_err(|e| stage_err("fit")(&e))?;
            let report = compare_models(&samples, bin_width).map_err(|e| stage_err("fit")(&e))?;
            let hash = config_hash(&json!({
                "command": "fit",
                "samples": samples,
                "column": col,
                "include_unanchored": include_unanchored,
                "bin_width": bin_width,
            }));
            if let Some(path) = hist {
                artifacts::write_histogram(&path, &hash, &report.histogram)?;
            }
            println!("n {}", report.n);
            println!("logistic mu {} beta {} loglik {}", report.logistic.mu, report.logistic.beta, report.logistic.loglik);
            println!("normal mu {} sigma {} loglik {}", report.normal.mu, report.normal.sigma, report.normal.loglik);
            println!("delta_loglik {}", report.delta_loglik);
            let artifact = FitArtifact { column: col, anchored_only: !include_unanchored, report };
            artifacts::write_json(&out, &hash, &artifact)?;
        }
        Command::Synth { config, seed, out, truth } => {
            let mut cfg = match config {
                Some(p) => load_synth(&p)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate().map_err(config_err)?;
            let (c, t) = generate_society(&cfg).map_err(|e| stage_err("synth")(&e))?;
            fs::write(&out, serialize_corpus(&c)).map_err(|e| stage_err("write")(&e))?;
            if let Some(path) = truth {
                artifacts::write_json(&path, &config_hash(&cfg), &t)?;
            }
            println!("persons {}", t.persons.len());
            println!("records {}", c.record_count());
            println!("documents {}", c.documents.len());
        }
        Command::Pipeline { config, corpus, synth, seed, runs, anchor_doc, include_unanchored, out_dir } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            if let Some(c) = corpus {
                cfg.corpus = Some(c);
                cfg.synth = None;
            }
            match synth.as_deref() {
                Some("default") => {
                    cfg.synth = Some(SynthConfig::default());
                    cfg.corpus = None;
                }
                Some(path) => {
                    cfg.synth = Some(load_synth(Path::new(path))?);
                    cfg.corpus = None;
                }
                None => {}
            }
            if let Some(s) = seed {
                cfg.chronology.seed = s;
                if let Some(sc) = cfg.synth.as_mut() {
                    sc.seed = s;
                }
            }
            if let Some(n) = runs {
                cfg.chronology.runs = n;
            }
            if let Some(d) = anchor_doc {
                cfg.chronology.anchor_doc = d;
            }
            cfg.fit.include_unanchored |= include_unanchored;
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            if let Some(level) = &cli.log_level {
                cfg.log_level = level.clone();
            }
            init_logging(&cfg.log_level);
            let out = run_pipeline(&cfg)?;
            println!("config_hash {}", out.config_hash);
            println!("anchor {}", out.anchor_doc);
            println!("mu {} beta {}", out.fit.logistic.mu, out.fit.logistic.beta);
            println!("delta_loglik {}", out.fit.delta_loglik);
            if let Some(m) = &out.recovery {
                println!("mae_publication {}", m.mae_publication);
            }
            println!("out_dir {}", cfg.out_dir.display());
        }
    }
    Ok(())
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new().parse_filters(level).format_timestamp(None).try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !matches!(cli.command, Command::Pipeline { .. }) {
        init_logging(cli.log_level.as_deref().unwrap_or("warn"));
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chronos: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
