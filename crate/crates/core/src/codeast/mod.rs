//! Method ASTs, leaf-to-leaf path-contexts and 384-d method vectors.

mod attention;
pub mod fixture;
mod hashed;
mod paths;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use attention::{AttentionCache, AttentionGrads, AttentionParams, EncodedContext};
pub use hashed::embed_hashed;
pub use paths::{extract_path_contexts, ExtractionLimits, PathContext, DOWN, UP};

/// Width of every method vector.
pub const CODE_DIM: usize = 384;

/// Syntax tree node. Leaves carry the token text in `value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn leaf(kind: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            value: Some(value.into()),
            children: Vec::new(),
        }
    }

    pub fn interior(kind: impl Into<String>, children: Vec<AstNode>) -> Self {
        Self {
            kind: kind.into(),
            value: None,
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(AstNode::leaf_count).sum()
        }
    }

    /// Checks that kinds are nonempty and that exactly the leaves carry values.
    /// `at` names the root in error messages.
    pub fn validate(&self, at: &str) -> Result<()> {
        if self.kind.is_empty() {
            return Err(Error::InvariantViolation {
                path: at.to_owned(),
                message: "empty node kind".into(),
            });
        }
        match (self.is_leaf(), self.value.is_some()) {
            (true, false) => {
                return Err(Error::InvariantViolation {
                    path: at.to_owned(),
                    message: format!("leaf `{}` has no value", self.kind),
                })
            }
            (false, true) => {
                return Err(Error::InvariantViolation {
                    path: at.to_owned(),
                    message: format!("node `{}` has both children and a value", self.kind),
                })
            }
            _ => {}
        }
        for (i, child) in self.children.iter().enumerate() {
            child.validate(&format!("{at}/{i}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodAst {
    pub method_id: String,
    pub root: AstNode,
}

/// Parses an AST document (`[{"method_id", "root"}, ..]`) from JSON text.
pub fn parse_ast_json(text: &str, source: &str) -> Result<BTreeMap<String, AstNode>> {
    let entries: Vec<MethodAst> = serde_json::from_str(text).map_err(|e| Error::parse(source, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        entry.root.validate(&format!("{}:root", entry.method_id))?;
        if out.contains_key(&entry.method_id) {
            return Err(Error::DuplicateId {
                kind: "method",
                id: entry.method_id,
            });
        }
        out.insert(entry.method_id, entry.root);
    }
    Ok(out)
}

pub fn parse_ast_document(path: &Path) -> Result<BTreeMap<String, AstNode>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ast_json(&text, &path.display().to_string())
}

/// Method-vector output; `degenerate` marks an empty context set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodVector {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// How path-contexts become a method vector.
#[derive(Debug, Clone)]
pub enum CodeVectorizer {
    /// Soft attention over learned context embeddings.
    Attention(AttentionParams),
    /// Signed feature hashing of context strings, L2-normalized.
    Hashed { seed: u64 },
}

impl CodeVectorizer {
    pub fn embed_method(&self, contexts: &[PathContext]) -> MethodVector {
        match self {
            CodeVectorizer::Attention(params) => params.embed(contexts),
            CodeVectorizer::Hashed { seed } => embed_hashed(*seed, contexts),
        }
    }
}
