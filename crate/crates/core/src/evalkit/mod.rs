//! Ranking candidate methods per bug report and scoring the rankings.

mod split;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imbalance::Instance;
use crate::neural::{sigmoid, Network};
use crate::{Error, Result};

pub use split::{chronological_split, Chronological, Split, SplitMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMethod {
    pub method_id: String,
    pub score: f64,
    pub relevant: bool,
}

/// One bug report's ranked candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub bug_id: String,
    pub ranking: Vec<RankedMethod>,
    /// Ground-truth methods present among the candidates.
    pub num_relevant: usize,
}

impl QueryResult {
    /// Sorts `(method_id, score)` pairs by descending score, ties by
    /// ascending method id.
    pub fn from_scores(bug_id: impl Into<String>, scored: Vec<(String, f64)>, truth: &BTreeSet<String>) -> Self {
        let keyed = scored.into_iter().map(|(id, s)| (id, s, s)).collect();
        Self::from_keyed(bug_id.into(), keyed, truth)
    }

    /// `(method_id, sort_key, score)`; the key must order like the score.
    fn from_keyed(bug_id: String, mut keyed: Vec<(String, f64, f64)>, truth: &BTreeSet<String>) -> Self {
        keyed.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        let ranking: Vec<RankedMethod> = keyed
            .into_iter()
            .map(|(method_id, _, score)| RankedMethod {
                relevant: truth.contains(&method_id),
                method_id,
                score,
            })
            .collect();
        let num_relevant = ranking.iter().filter(|r| r.relevant).count();
        Self {
            bug_id,
            ranking,
            num_relevant,
        }
    }

    /// 1-based rank of the first relevant entry.
    pub fn first_relevant_rank(&self) -> Option<usize> {
        self.ranking.iter().position(|r| r.relevant).map(|i| i + 1)
    }
}

/// Scores every candidate against one report and ranks them.
///
/// Sorting uses the head's logit, which orders exactly like the probability
/// but keeps distinct values where the sigmoid saturates.
pub fn rank_methods<M: AsRef<[f64]>>(
    net: &Network,
    bug_id: &str,
    report_vec: &[f64],
    candidates: &[(String, M)],
    truth: &BTreeSet<String>,
) -> Result<QueryResult> {
    if candidates.is_empty() {
        return Err(Error::Config(format!("bug {bug_id} has no candidate methods")));
    }
    net.check_dims(report_vec.len(), candidates[0].1.as_ref().len())?;
    let n = candidates.len();
    let mut reports = Array2::zeros((n, report_vec.len()));
    let mut methods = Array2::zeros((n, net.method_dim()));
    for (i, (id, vec)) in candidates.iter().enumerate() {
        let vec = vec.as_ref();
        if vec.len() != net.method_dim() {
            return Err(Error::dim(
                net.method_dim(),
                vec.len(),
                format!("method vector of {bug_id}/{id}"),
            ));
        }
        reports.row_mut(i).assign(&ndarray::aview1(report_vec));
        methods.row_mut(i).assign(&ndarray::aview1(vec));
    }
    let logits = net.forward_batch(reports, methods)?.logits;
    let keyed = candidates
        .iter()
        .zip(&logits)
        .map(|((id, _), &z)| (id.clone(), z, sigmoid(z)))
        .collect();
    Ok(QueryResult::from_keyed(bug_id.to_owned(), keyed, truth))
}

/// Groups instances by bug (first-appearance order) and ranks each bug's
/// candidates in parallel; labels supply the ground truth.
pub fn rank_instances(net: &Network, instances: &[Instance]) -> Result<Vec<QueryResult>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&Instance>> = HashMap::new();
    for inst in instances {
        groups
            .entry(&inst.bug_id)
            .or_insert_with(|| {
                order.push(&inst.bug_id);
                Vec::new()
            })
            .push(inst);
    }
    order
        .par_iter()
        .map(|bug| {
            let group = &groups[bug];
            let truth = group.iter().filter(|i| i.label).map(|i| i.method_id.clone()).collect();
            let candidates: Vec<(String, &[f64])> =
                group.iter().map(|i| (i.method_id.clone(), &i.method_vec[..])).collect();
            rank_methods(net, bug, &group[0].report_vec, &candidates, &truth)
        })
        .collect()
}

/// Fraction of queries with a relevant entry in the top `k`.
pub fn accuracy_at_k(results: &[QueryResult], k: usize) -> f64 {
    mean(results, |q| match q.first_relevant_rank() {
        Some(r) if r <= k => 1.0,
        _ => 0.0,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapVariant {
    /// Mean precision at the ranks of relevant entries.
    #[default]
    Standard,
    /// `(1/K)·Σ_{k=1..K} Precision@k` with `K` the ranking length.
    PaperLiteral,
}

impl std::str::FromStr for MapVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "paper-literal" | "paper_literal" => Ok(Self::PaperLiteral),
            other => Err(Error::Config(format!("unknown MAP variant `{other}`"))),
        }
    }
}

pub fn average_precision(result: &QueryResult, variant: MapVariant) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, r) in result.ranking.iter().enumerate() {
        if r.relevant {
            hits += 1;
        }
        let precision = hits as f64 / (i + 1) as f64;
        match variant {
            MapVariant::Standard if r.relevant => sum += precision,
            MapVariant::Standard => {}
            MapVariant::PaperLiteral => sum += precision,
        }
    }
    match variant {
        MapVariant::Standard if result.num_relevant == 0 => 0.0,
        MapVariant::Standard => sum / result.num_relevant as f64,
        MapVariant::PaperLiteral if result.ranking.is_empty() => 0.0,
        MapVariant::PaperLiteral => sum / result.ranking.len() as f64,
    }
}

pub fn map_metric(results: &[QueryResult], variant: MapVariant) -> f64 {
    mean(results, |q| average_precision(q, variant))
}

pub fn reciprocal_rank(result: &QueryResult) -> f64 {
    result.first_relevant_rank().map_or(0.0, |r| 1.0 / r as f64)
}

/// Queries without a relevant entry count as 0.
pub fn mrr(results: &[QueryResult]) -> f64 {
    mean(results, reciprocal_rank)
}

/// 0 for an empty result set.
fn mean(results: &[QueryResult], f: impl Fn(&QueryResult) -> f64) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().map(f).sum::<f64>() / results.len() as f64
}

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub bug_id: String,
    pub ap: f64,
    pub rr: f64,
    pub first_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map_value: f64,
    pub mrr_value: f64,
    pub accuracy_at: BTreeMap<usize, f64>,
    pub map_variant: MapVariant,
    pub per_query: Vec<QueryMetrics>,
}

impl MetricsReport {
    pub fn compute(results: &[QueryResult], variant: MapVariant, ks: &[usize]) -> Self {
        Self {
            map_value: map_metric(results, variant),
            mrr_value: mrr(results),
            accuracy_at: ks.iter().map(|&k| (k, accuracy_at_k(results, k))).collect(),
            map_variant: variant,
            per_query: results
                .iter()
                .map(|q| QueryMetrics {
                    bug_id: q.bug_id.clone(),
                    ap: average_precision(q, variant),
                    rr: reciprocal_rank(q),
                    first_rank: q.first_relevant_rank(),
                })
                .collect(),
        }
    }

    pub fn accuracy(&self, k: usize) -> Option<f64> {
        self.accuracy_at.get(&k).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(source, e))
    }

    /// `bug_id,ap,rr,first_rank`; the rank is empty when nothing relevant
    /// was ranked.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bug_id,ap,rr,first_rank\n");
        for q in &self.per_query {
            let rank = q.first_rank.map(|r| r.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", csv_field(&q.bug_id), q.ap, q.rr, rank).unwrap();
        }
        out
    }

    pub fn save(&self, json_path: &Path, csv_path: Option<&Path>) -> Result<()> {
        fs::write(json_path, self.to_json()).map_err(|e| Error::io(json_path, e))?;
        if let Some(p) = csv_path {
            fs::write(p, self.to_csv()).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
