use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::{label_manifest, BugRecord, DatasetManifest, LabelReport, MethodRecord};
use crate::codeast::{extract_path_contexts, AstNode, CodeVectorizer, ExtractionLimits};
use crate::imbalance::Instance;
use crate::textprep::PreprocessConfig;
use crate::wordvec::{embed_report, max_pool, EmbeddingStore, PrecomputedMatrix};
use crate::{Error, Result};

pub trait ReportEmbedder: Sync {
    fn dim(&self) -> usize;
    fn embed_report(&self, bug: &BugRecord) -> Result<Vec<f64>>;
}

pub trait MethodEmbedder: Sync {
    fn dim(&self) -> usize;
    fn embed_method(&self, method: &MethodRecord) -> Result<Vec<f64>>;
}

/// Static word vectors, max-pooled over the preprocessed report text.
pub struct WordVecReports {
    pub store: EmbeddingStore,
    pub config: PreprocessConfig,
}

impl ReportEmbedder for WordVecReports {
    fn dim(&self) -> usize {
        self.store.dim()
    }

    fn embed_report(&self, bug: &BugRecord) -> Result<Vec<f64>> {
        let pooled = embed_report(&self.store, &bug.report_text(), &self.config);
        if pooled.degenerate {
            log::warn!(
                "{}: report of {} has no in-vocabulary tokens",
                self.store.name(),
                bug.bug_id
            );
        }
        Ok(pooled.values)
    }
}

/// Per-report token matrices produced by an external contextual model,
/// stored as `<dir>/<bug_id>.json` and max-pooled on load.
pub struct PrecomputedReports {
    pub dir: PathBuf,
    pub dim: usize,
}

impl ReportEmbedder for PrecomputedReports {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_report(&self, bug: &BugRecord) -> Result<Vec<f64>> {
        let matrix = PrecomputedMatrix::load(&self.dir.join(format!("{}.json", bug.bug_id)))?;
        if matrix.dim != self.dim {
            return Err(Error::dim(
                self.dim,
                matrix.dim,
                format!("precomputed matrix of {}", bug.bug_id),
            ));
        }
        Ok(max_pool(&matrix.to_matrix()).values)
    }
}

/// Method vectors from the AST document's path-contexts.
pub struct AstMethodEmbedder {
    pub asts: BTreeMap<String, AstNode>,
    pub vectorizer: CodeVectorizer,
    pub limits: ExtractionLimits,
}

impl MethodEmbedder for AstMethodEmbedder {
    fn dim(&self) -> usize {
        crate::codeast::CODE_DIM
    }

    fn embed_method(&self, method: &MethodRecord) -> Result<Vec<f64>> {
        let ast = self
            .asts
            .get(&method.ast_ref)
            .ok_or_else(|| Error::DanglingReference(format!("AST `{}`", method.ast_ref)))?;
        let contexts = extract_path_contexts(ast, &self.limits);
        Ok(self.vectorizer.embed_method(&contexts).values)
    }
}

/// Vectors looked up by id: bug id for reports, `ast_ref` for methods.
/// Loadable from a JSON object `{id: [v1, ..]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl VectorTable {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        for (id, v) in &vectors {
            if v.len() != dim {
                return Err(Error::dim(dim, v.len(), format!("vector `{id}`")));
            }
        }
        Ok(Self { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vectors: HashMap<String, Vec<f64>> =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        let dim = vectors
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyFile(path.to_path_buf()))?;
        Self::new(dim, vectors)
    }

    fn lookup(&self, id: &str) -> Result<Vec<f64>> {
        self.vectors
            .get(id)
            .cloned()
            .ok_or_else(|| Error::DanglingReference(format!("no vector for `{id}`")))
    }
}

impl ReportEmbedder for VectorTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_report(&self, bug: &BugRecord) -> Result<Vec<f64>> {
        self.lookup(&bug.bug_id)
    }
}

impl MethodEmbedder for VectorTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_method(&self, method: &MethodRecord) -> Result<Vec<f64>> {
        self.lookup(&method.ast_ref)
    }
}

fn checked(v: Vec<f64>, dim: usize, what: impl FnOnce() -> String) -> Result<Arc<[f64]>> {
    if v.len() != dim {
        return Err(Error::dim(dim, v.len(), what()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{}: non-finite embedding", what())));
    }
    Ok(Arc::from(v))
}

/// One instance per (bug, roster method), labeled from the fix hunks.
///
/// Each report and each distinct `ast_ref` is embedded once, in parallel;
/// instances sharing a method share its vector. Output order is manifest
/// bug order, then roster order.
pub fn build_instances<R, M>(
    manifest: &DatasetManifest,
    reports: &R,
    methods: &M,
    strict: bool,
) -> Result<(Vec<Instance>, LabelReport)>
where
    R: ReportEmbedder + ?Sized,
    M: MethodEmbedder + ?Sized,
{
    let labels = label_manifest(manifest, strict);
    let bugs: Vec<&BugRecord> = manifest
        .bugs
        .iter()
        .filter(|b| labels.labels(&b.bug_id).is_some())
        .collect();

    let report_vecs: Vec<Arc<[f64]>> = bugs
        .par_iter()
        .map(|bug| {
            let v = reports
                .embed_report(bug)
                .map_err(|e| e.context(format!("report of {}", bug.bug_id)))?;
            checked(v, reports.dim(), || format!("report vector of {}", bug.bug_id))
        })
        .collect::<Result<_>>()?;

    // first (bug, method) naming each ast_ref, for error context
    let mut unique: Vec<(&str, &MethodRecord)> = Vec::new();
    let mut seen = HashMap::new();
    for bug in &bugs {
        for m in manifest.methods(&bug.bug_id) {
            seen.entry(m.ast_ref.as_str()).or_insert_with(|| {
                unique.push((bug.bug_id.as_str(), m));
            });
        }
    }
    let method_vecs: HashMap<&str, Arc<[f64]>> = unique
        .par_iter()
        .map(|&(bug_id, m)| {
            let v = methods
                .embed_method(m)
                .map_err(|e| e.context(format!("({bug_id}, {})", m.method_id)))?;
            let v = checked(v, methods.dim(), || {
                format!("method vector of ({bug_id}, {})", m.method_id)
            })?;
            Ok((m.ast_ref.as_str(), v))
        })
        .collect::<Result<_>>()?;

    let mut instances = Vec::new();
    for (bug, report_vec) in bugs.iter().zip(report_vecs) {
        let labeling = labels.labels(&bug.bug_id).expect("kept bugs are labeled");
        for m in manifest.methods(&bug.bug_id) {
            instances.push(Instance {
                report_vec: report_vec.clone(),
                method_vec: method_vecs[m.ast_ref.as_str()].clone(),
                label: labeling.buggy.contains(&m.method_id),
                bug_id: bug.bug_id.clone(),
                method_id: m.method_id.clone(),
                report_time: bug.report_time,
            });
        }
    }
    Ok((instances, labels))
}
