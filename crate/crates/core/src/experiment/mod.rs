//! The embedding × strategy matrix and the best-count tables.

mod config;
mod tables;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codeast::{extract_path_contexts, AttentionParams, CodeVectorizer, EncodedContext};
use crate::dataset::{
    build_instances, load_manifest, AstMethodEmbedder, DatasetManifest, MethodEmbedder, PrecomputedReports,
    ReportEmbedder, VectorTable, WordVecReports,
};
use crate::evalkit::{chronological_split, rank_instances, MetricsReport, DEFAULT_KS};
use crate::imbalance::{class_weights_auto, resample, Instance, ResampleStrategy};
use crate::neural::joint::{JointModel, JointSample};
use crate::neural::{train, EpochRecord, LossSpec, Network, TowerConfig, TrainConfig};
use crate::wordvec::load_embeddings;
use crate::{Error, Result};

pub use config::{
    DatasetSpec, EmbeddingSource, EmbeddingSpec, ExperimentConfig, LossDefaults, MethodEncoder, Strategy,
};
pub use tables::{best_count_tables, BestCountTables, CountTable, Role, TableMetric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub embedding: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Every configured combination for one dataset, in config order
/// (embeddings outer, strategies inner).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub dataset: String,
    pub entries: Vec<MatrixEntry>,
}

impl MatrixResult {
    pub fn get(&self, embedding: &str, strategy: Strategy) -> Option<&MatrixEntry> {
        self.entries
            .iter()
            .find(|e| e.embedding == embedding && e.strategy == strategy)
    }

    pub fn embeddings(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.embedding.as_str()) {
                out.push(&e.embedding);
            }
        }
        out
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        let mut out = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.strategy) {
                out.push(e.strategy);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Path-context encodings for training the attention encoder jointly.
pub struct JointContext {
    pub encoder: AttentionParams,
    /// Keyed by `(bug_id, method_id)`.
    pub contexts: HashMap<(String, String), Arc<Vec<EncodedContext>>>,
}

impl JointContext {
    fn sample(&self, inst: &Instance) -> Result<JointSample> {
        let contexts = self
            .contexts
            .get(&(inst.bug_id.clone(), inst.method_id.clone()))
            .cloned()
            .ok_or_else(|| Error::DanglingReference(format!("no contexts for {}/{}", inst.bug_id, inst.method_id)))?;
        Ok(JointSample {
            report_vec: inst.report_vec.clone(),
            contexts,
            label: inst.label,
        })
    }
}

/// The loss a strategy trains with; `train` is the unresampled training
/// split, from which balanced weights are taken.
pub fn strategy_loss(strategy: Strategy, train: &[Instance], defaults: &LossDefaults) -> Result<LossSpec> {
    Ok(match strategy {
        Strategy::Wbe => {
            let (w_neg, w_pos) = class_weights_auto(train)?;
            LossSpec::wbce(w_neg, w_pos)
        }
        Strategy::Focal => defaults.focal(),
        Strategy::Original | Strategy::Ros | Strategy::Rus => LossSpec::bce(),
    })
}

/// A trained combination and the test split it should be scored on. In
/// joint mode the test method vectors come from the trained encoder.
#[derive(Debug, Clone)]
pub struct TrainedCombination {
    pub network: Network,
    pub loss: LossSpec,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub test: Vec<Instance>,
}

/// Split, rebalance and train one combination. Every random choice
/// derives from `cfg.rng_seed`.
pub fn train_combination(
    instances: &[Instance],
    strategy: Strategy,
    cfg: &ExperimentConfig,
    joint: Option<&JointContext>,
) -> Result<TrainedCombination> {
    let first = instances
        .first()
        .ok_or_else(|| Error::Config("dataset produced no instances".into()))?;
    let split = chronological_split(instances, cfg.split_mode)?;
    let train_set = resample(
        &split.train,
        &ResampleStrategy {
            kind: strategy.resample_kind(),
            rng_seed: cfg.rng_seed,
        },
    )?;
    let loss = strategy_loss(strategy, &split.train, &cfg.loss_defaults)?;
    let tower = |dim| TowerConfig {
        activation: cfg.tower_activation,
        ..TowerConfig::halving(dim)
    };
    let net = Network::new(
        &tower(first.report_vec.len()),
        &tower(first.method_vec.len()),
        cfg.rng_seed,
    )?;
    let train_cfg = TrainConfig {
        rng_seed: cfg.rng_seed,
        ..cfg.train_config.clone()
    };
    log::info!(
        "{strategy}: {} training instances ({} positive), loss {:?}",
        train_set.len(),
        train_set.iter().filter(|i| i.label).count(),
        loss.kind
    );

    match joint {
        None => {
            let out = train(net, &train_set, &split.valid, &loss, &train_cfg)?;
            Ok(TrainedCombination {
                network: out.model,
                loss,
                history: out.history,
                best_epoch: out.best_epoch,
                test: split.test,
            })
        }
        Some(ctx) => {
            let to_samples = |set: &[Instance]| set.iter().map(|i| ctx.sample(i)).collect::<Result<Vec<_>>>();
            let model = JointModel::new(net, ctx.encoder.clone())?;
            let out = train(
                model,
                &to_samples(&train_set)?,
                &to_samples(&split.valid)?,
                &loss,
                &train_cfg,
            )?;
            let trained = out.model;
            let test = split
                .test
                .iter()
                .map(|inst| {
                    let s = ctx.sample(inst)?;
                    let method_vec: Arc<[f64]> = if s.contexts.is_empty() {
                        Arc::from(vec![0.0; crate::codeast::CODE_DIM])
                    } else {
                        Arc::from(trained.encoder.forward(&s.contexts).output.to_vec())
                    };
                    Ok(Instance {
                        method_vec,
                        ..inst.clone()
                    })
                })
                .collect::<Result<_>>()?;
            Ok(TrainedCombination {
                network: trained.net,
                loss,
                history: out.history,
                best_epoch: out.best_epoch,
                test,
            })
        }
    }
}

/// [`train_combination`], then rank the test bugs and score them.
pub fn run_combination(
    instances: &[Instance],
    strategy: Strategy,
    cfg: &ExperimentConfig,
    joint: Option<&JointContext>,
) -> Result<MetricsReport> {
    let trained = train_combination(instances, strategy, cfg, joint)?;
    let results = rank_instances(&trained.network, &trained.test)?;
    Ok(MetricsReport::compute(&results, cfg.map_variant, &DEFAULT_KS))
}

pub fn report_embedder(spec: &EmbeddingSpec, cfg: &ExperimentConfig) -> Result<Box<dyn ReportEmbedder>> {
    let embedder: Box<dyn ReportEmbedder> = match &spec.source {
        config::EmbeddingSource::VectorFile { path, format } => {
            let mut store = load_embeddings(path, *format)?;
            store.set_name(spec.name.clone());
            Box::new(WordVecReports {
                store,
                config: cfg.preprocess_config()?,
            })
        }
        config::EmbeddingSource::Precomputed { dir } => Box::new(PrecomputedReports {
            dir: dir.clone(),
            dim: spec.dim,
        }),
        config::EmbeddingSource::Table { path } => Box::new(VectorTable::load(path)?),
    };
    if embedder.dim() != spec.dim {
        return Err(Error::dim(
            spec.dim,
            embedder.dim(),
            format!("embedding `{}`", spec.name),
        ));
    }
    Ok(embedder)
}

/// Method embedder for a dataset, plus the joint-training context when the
/// attention encoder is trained with the classifier.
pub fn method_embedder(
    manifest: &DatasetManifest,
    cfg: &ExperimentConfig,
) -> Result<(Box<dyn MethodEmbedder>, Option<JointContext>)> {
    match &cfg.method_encoder {
        MethodEncoder::Table { path } => Ok((Box::new(VectorTable::load(path)?), None)),
        MethodEncoder::Hashed { seed } => {
            let asts = manifest.load_asts()?;
            Ok((
                Box::new(AstMethodEmbedder {
                    asts,
                    vectorizer: CodeVectorizer::Hashed { seed: *seed },
                    limits: cfg.extraction,
                }),
                None,
            ))
        }
        MethodEncoder::Attention {
            token_dim,
            path_dim,
            seed,
            joint,
        } => {
            let asts = manifest.load_asts()?;
            let contexts: HashMap<&str, Vec<_>> = asts
                .par_iter()
                .map(|(id, ast)| (id.as_str(), extract_path_contexts(ast, &cfg.extraction)))
                .collect();
            let mut ids: Vec<&&str> = contexts.keys().collect();
            ids.sort();
            let params = AttentionParams::from_contexts(
                ids.iter().map(|id| contexts[**id].as_slice()),
                *token_dim,
                *path_dim,
                *seed,
            );
            let joint_ctx = joint.then(|| {
                let mut encoded: HashMap<&str, Arc<Vec<EncodedContext>>> = HashMap::new();
                let mut map = HashMap::new();
                for (bug, methods) in &manifest.methods_per_bug {
                    for m in methods {
                        let enc = encoded
                            .entry(m.ast_ref.as_str())
                            .or_insert_with(|| Arc::new(params.encode(&contexts[m.ast_ref.as_str()])))
                            .clone();
                        map.insert((bug.clone(), m.method_id.clone()), enc);
                    }
                }
                JointContext {
                    encoder: params.clone(),
                    contexts: map,
                }
            });
            drop(contexts);
            Ok((
                Box::new(AstMethodEmbedder {
                    asts,
                    vectorizer: CodeVectorizer::Attention(params),
                    limits: cfg.extraction,
                }),
                joint_ctx,
            ))
        }
    }
}

/// Instances of one dataset under one configured embedding, together with
/// the joint-training context when the config asks for one.
pub fn dataset_instances(
    cfg: &ExperimentConfig,
    dataset: &str,
    embedding: &str,
) -> Result<(Vec<Instance>, Option<JointContext>)> {
    let spec = cfg
        .datasets
        .iter()
        .find(|d| d.name == dataset)
        .ok_or_else(|| Error::Config(format!("no dataset named `{dataset}`")))?;
    let emb = cfg
        .embedding_specs
        .iter()
        .find(|e| e.name == embedding)
        .ok_or_else(|| Error::Config(format!("no embedding named `{embedding}`")))?;
    let manifest = load_manifest(&spec.manifest)?;
    let (methods, joint) = method_embedder(&manifest, cfg)?;
    let reports = report_embedder(emb, cfg)?;
    let (instances, _) = build_instances(&manifest, reports.as_ref(), methods.as_ref(), cfg.strict_dataset)?;
    Ok((instances, joint))
}

fn combination_path(out_dir: &Path, dataset: &str, embedding: &str, strategy: Strategy) -> PathBuf {
    out_dir.join(dataset).join(embedding).join(format!("{strategy}.json"))
}

/// Runs every (embedding, strategy) combination on one dataset. Each
/// combination's metrics are written as soon as it finishes; the whole
/// matrix goes to `<out>/<dataset>/matrix.json` at the end. Failing
/// combinations are recorded and skipped.
pub fn run_dataset(cfg: &ExperimentConfig, dataset: &DatasetSpec) -> Result<MatrixResult> {
    let manifest = load_manifest(&dataset.manifest).map_err(|e| e.context(format!("dataset {}", dataset.name)))?;
    let (methods, joint) =
        method_embedder(&manifest, cfg).map_err(|e| e.context(format!("dataset {}", dataset.name)))?;

    let mut prepared: Vec<std::result::Result<Vec<Instance>, String>> = Vec::new();
    for spec in &cfg.embedding_specs {
        let built = report_embedder(spec, cfg).and_then(|reports| {
            build_instances(&manifest, reports.as_ref(), methods.as_ref(), cfg.strict_dataset).map(|(i, _)| i)
        });
        prepared.push(built.map_err(|e| {
            log::error!("{}/{}: {e}", dataset.name, spec.name);
            e.to_string()
        }));
    }

    let combos: Vec<(usize, Strategy)> = (0..cfg.embedding_specs.len())
        .flat_map(|e| cfg.strategies.iter().map(move |&s| (e, s)))
        .collect();
    let write_lock = Mutex::new(());
    let run = |&(e, strategy): &(usize, Strategy)| -> Result<MatrixEntry> {
        let name = &cfg.embedding_specs[e].name;
        let outcome = match &prepared[e] {
            Err(msg) => Err(msg.clone()),
            Ok(instances) => run_combination(instances, strategy, cfg, joint.as_ref()).map_err(|err| err.to_string()),
        };
        let entry = match outcome {
            Ok(report) => {
                let _guard = write_lock.lock().unwrap();
                let path = combination_path(&cfg.output_dir, &dataset.name, name, strategy);
                write_file(&path, &report.to_json())?;
                write_file(&path.with_extension("csv"), &report.to_csv())?;
                log::info!(
                    "{}/{name}/{strategy}: MAP {:.4} MRR {:.4}",
                    dataset.name,
                    report.map_value,
                    report.mrr_value
                );
                MatrixEntry {
                    embedding: name.clone(),
                    strategy,
                    report: Some(report),
                    error: None,
                }
            }
            Err(msg) => {
                log::error!("{}/{name}/{strategy} failed: {msg}", dataset.name);
                MatrixEntry {
                    embedding: name.clone(),
                    strategy,
                    report: None,
                    error: Some(msg),
                }
            }
        };
        Ok(entry)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let entries = pool.install(|| combos.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    let matrix = MatrixResult {
        dataset: dataset.name.clone(),
        entries,
    };
    matrix.save(&cfg.output_dir.join(&dataset.name).join("matrix.json"))?;
    Ok(matrix)
}

/// [`run_dataset`] over every configured dataset.
pub fn run_experiment_matrix(cfg: &ExperimentConfig) -> Result<Vec<MatrixResult>> {
    cfg.validate()?;
    cfg.datasets.iter().map(|d| run_dataset(cfg, d)).collect()
}
