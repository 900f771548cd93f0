use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AstNode;

pub const UP: char = '↑';
pub const DOWN: char = '↓';

/// `(start token, syntactic path, end token)` for one pair of leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathContext {
    pub start_token: String,
    /// Interior node kinds from the start leaf's parent up to the lowest
    /// common ancestor (joined by `↑`) and down to the end leaf's parent
    /// (joined by `↓`).
    pub path: String,
    pub end_token: String,
}

impl fmt::Display for PathContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.start_token, self.path, self.end_token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionLimits {
    /// Maximum interior nodes on a path, the common ancestor included.
    pub max_path_length: usize,
    /// Maximum distance between the two leaves' positions in leaf order.
    pub max_path_width: usize,
    /// Contexts kept per method; larger sets are sampled down.
    pub max_contexts: usize,
    pub sample_seed: u64,
}

impl Default for ExtractionLimits {
    fn default() -> Self {
        Self {
            max_path_length: 8,
            max_path_width: 2,
            max_contexts: 200,
            sample_seed: 0,
        }
    }
}

impl ExtractionLimits {
    /// Keeps every leaf pair.
    pub fn unbounded() -> Self {
        Self {
            max_path_length: usize::MAX,
            max_path_width: usize::MAX,
            max_contexts: usize::MAX,
            sample_seed: 0,
        }
    }
}

struct Leaf<'a> {
    token: &'a str,
    /// Preorder ids of interior ancestors, root first.
    ancestors: Vec<usize>,
}

struct Walk<'a> {
    kinds: Vec<&'a str>,
    leaves: Vec<Leaf<'a>>,
}

impl<'a> Walk<'a> {
    fn visit(&mut self, node: &'a AstNode, stack: &mut Vec<usize>) {
        if node.is_leaf() {
            self.leaves.push(Leaf {
                token: node.value.as_deref().unwrap_or(""),
                ancestors: stack.clone(),
            });
            return;
        }
        let id = self.kinds.len();
        self.kinds.push(&node.kind);
        stack.push(id);
        for child in &node.children {
            self.visit(child, stack);
        }
        stack.pop();
    }
}

/// Every leaf pair `(i, j)`, `i < j` in leaf order, whose path satisfies the
/// limits, yields one context. Output follows pair order; when more than
/// `max_contexts` qualify, a seeded uniform sample is kept in that order.
pub fn extract_path_contexts(ast: &AstNode, limits: &ExtractionLimits) -> Vec<PathContext> {
    let mut walk = Walk {
        kinds: Vec::new(),
        leaves: Vec::new(),
    };
    walk.visit(ast, &mut Vec::new());

    let n = walk.leaves.len();
    let mut out = Vec::new();
    for i in 0..n {
        let last = i.saturating_add(limits.max_path_width).min(n - 1);
        for j in i + 1..=last {
            let a = &walk.leaves[i].ancestors;
            let b = &walk.leaves[j].ancestors;
            let common = a.iter().zip(b).take_while(|(x, y)| x == y).count();
            // `common` ≥ 1: every pair of leaves shares at least the root.
            let length = (a.len() - common) + 1 + (b.len() - common);
            if length > limits.max_path_length {
                continue;
            }
            let mut path = String::new();
            for &id in a[common - 1..].iter().rev() {
                if !path.is_empty() {
                    path.push(UP);
                }
                path.push_str(walk.kinds[id]);
            }
            for &id in &b[common..] {
                path.push(DOWN);
                path.push_str(walk.kinds[id]);
            }
            out.push(PathContext {
                start_token: walk.leaves[i].token.to_owned(),
                path,
                end_token: walk.leaves[j].token.to_owned(),
            });
        }
    }

    if out.len() > limits.max_contexts {
        let mut rng = ChaCha8Rng::seed_from_u64(limits.sample_seed);
        let mut keep = index::sample(&mut rng, out.len(), limits.max_contexts).into_vec();
        keep.sort_unstable();
        let mut all: Vec<Option<PathContext>> = out.into_iter().map(Some).collect();
        out = keep.into_iter().map(|k| all[k].take().unwrap()).collect();
    }
    out
}
