use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{MatrixResult, Strategy};
use crate::evalkit::{csv_field, MetricsReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMetric {
    Map,
    Mrr,
    AccuracyAt(usize),
}

impl TableMetric {
    pub const ALL: [TableMetric; 5] = [
        Self::Map,
        Self::Mrr,
        Self::AccuracyAt(1),
        Self::AccuracyAt(5),
        Self::AccuracyAt(10),
    ];

    pub fn value(self, report: &MetricsReport) -> Option<f64> {
        match self {
            Self::Map => Some(report.map_value),
            Self::Mrr => Some(report.mrr_value),
            Self::AccuracyAt(k) => report.accuracy(k),
        }
    }
}

impl fmt::Display for TableMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Map => f.write_str("MAP"),
            Self::Mrr => f.write_str("MRR"),
            Self::AccuracyAt(k) => write!(f, "Accuracy@{k}"),
        }
    }
}

/// Which axis is being counted: the other axis is held fixed per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Embedding,
    Strategy,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Embedding => "Embedding",
            Role::Strategy => "Strategy",
        })
    }
}

/// `counts[row][dataset]`: how often the row's model attained the best value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub role: Role,
    pub metric: TableMetric,
    pub rows: Vec<String>,
    pub datasets: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl CountTable {
    pub fn total(&self, row: usize) -> usize {
        self.counts[row].iter().sum()
    }

    pub fn get(&self, row: &str, dataset: &str) -> Option<usize> {
        let r = self.rows.iter().position(|x| x == row)?;
        let d = self.datasets.iter().position(|x| x == dataset)?;
        Some(self.counts[r][d])
    }

    pub fn title(&self) -> String {
        match self.role {
            Role::Embedding => format!("Count of best {} per embedding", self.metric),
            Role::Strategy => format!("Count of best {} per strategy", self.metric),
        }
    }

    pub fn to_text(&self) -> String {
        let mut header = vec![self.role.to_string()];
        header.extend(self.datasets.iter().cloned());
        header.push("Total".into());
        let mut lines = vec![header];
        for (r, name) in self.rows.iter().enumerate() {
            let mut line = vec![name.clone()];
            line.extend(self.counts[r].iter().map(usize::to_string));
            line.push(self.total(r).to_string());
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{}\n", self.title());
        for line in &lines {
            let mut cells = Vec::with_capacity(line.len());
            for (c, cell) in line.iter().enumerate() {
                if c == 0 {
                    cells.push(format!("{cell:<w$}", w = widths[c]));
                } else {
                    cells.push(format!("{cell:>w$}", w = widths[c]));
                }
            }
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCountTables {
    pub tables: Vec<CountTable>,
}

impl BestCountTables {
    pub fn find(&self, role: Role, metric: TableMetric) -> Option<&CountTable> {
        self.tables.iter().find(|t| t.role == role && t.metric == metric)
    }

    pub fn to_text(&self) -> String {
        self.tables
            .iter()
            .map(CountTable::to_text)
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// One long-format CSV: `role,metric,model,<datasets...>,total`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("role,metric,model");
        if let Some(first) = self.tables.first() {
            for d in &first.datasets {
                out.push(',');
                out.push_str(&csv_field(d));
            }
        }
        out.push_str(",total\n");
        for t in &self.tables {
            let role = match t.role {
                Role::Embedding => "embedding",
                Role::Strategy => "strategy",
            };
            for (r, name) in t.rows.iter().enumerate() {
                let _ = write!(out, "{role},{},{}", t.metric, csv_field(name));
                for c in &t.counts[r] {
                    let _ = write!(out, ",{c}");
                }
                let _ = writeln!(out, ",{}", t.total(r));
            }
        }
        out
    }
}

/// Best-count tables over several datasets' matrices. For every metric,
/// dataset and strategy, each embedding reaching the maximum scores one
/// point (all tied embeddings score); the strategy tables swap the roles.
/// Combinations that failed are left out of the comparison.
pub fn best_count_tables(matrices: &[MatrixResult]) -> Result<BestCountTables> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::GridMismatch("no matrices given".into()))?;
    let embeddings: Vec<String> = first.embeddings().into_iter().map(String::from).collect();
    let strategies: Vec<Strategy> = first.strategies();
    let mut datasets: Vec<String> = Vec::new();
    for m in matrices {
        if datasets.contains(&m.dataset) {
            return Err(Error::GridMismatch(format!("dataset `{}` appears twice", m.dataset)));
        }
        datasets.push(m.dataset.clone());
        if m.entries.len() != embeddings.len() * strategies.len() {
            return Err(Error::GridMismatch(format!(
                "`{}` has {} entries, expected {}",
                m.dataset,
                m.entries.len(),
                embeddings.len() * strategies.len()
            )));
        }
        for e in &embeddings {
            for &s in &strategies {
                if m.get(e, s).is_none() {
                    return Err(Error::GridMismatch(format!("`{}` lacks ({e}, {s})", m.dataset)));
                }
            }
        }
    }

    let mut tables = Vec::new();
    for role in [Role::Embedding, Role::Strategy] {
        for metric in TableMetric::ALL {
            let (rows, fixed): (Vec<String>, usize) = match role {
                Role::Embedding => (embeddings.clone(), strategies.len()),
                Role::Strategy => (
                    strategies.iter().map(|s| s.display_name().to_string()).collect(),
                    embeddings.len(),
                ),
            };
            let mut counts = vec![vec![0; matrices.len()]; rows.len()];
            for (d, m) in matrices.iter().enumerate() {
                for f in 0..fixed {
                    let values: Vec<Option<f64>> = (0..rows.len())
                        .map(|r| {
                            let (e, s) = match role {
                                Role::Embedding => (r, f),
                                Role::Strategy => (f, r),
                            };
                            m.get(&embeddings[e], strategies[s])
                                .and_then(|entry| entry.report.as_ref())
                                .and_then(|rep| metric.value(rep))
                                .filter(|v| !v.is_nan())
                        })
                        .collect();
                    let Some(best) = values.iter().flatten().copied().reduce(f64::max) else {
                        continue;
                    };
                    for (r, v) in values.iter().enumerate() {
                        if *v == Some(best) {
                            counts[r][d] += 1;
                        }
                    }
                }
            }
            tables.push(CountTable {
                role,
                metric,
                rows,
                datasets: datasets.clone(),
                counts,
            });
        }
    }
    Ok(BestCountTables { tables })
}
