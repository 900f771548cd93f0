use std::collections::{BTreeSet, HashMap};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{MethodVector, PathContext, CODE_DIM};

/// Context as vocabulary rows: `[start token, path, end token]`.
pub type EncodedContext = [usize; 3];

/// Learned context embeddings plus the combine/attention weights.
///
/// Each context embeds as `e = tanh([tok(start); path; tok(end)] · W)`; the
/// method vector is the softmax(`⟨a, e⟩`)-weighted sum of the `e`s. Unknown
/// tokens and paths share a final UNK row in their tables.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    token_index: HashMap<String, usize>,
    path_index: HashMap<String, usize>,
    /// `(tokens + 1) × token_dim`, last row UNK.
    pub token_emb: Array2<f64>,
    /// `(paths + 1) × path_dim`, last row UNK.
    pub path_emb: Array2<f64>,
    /// `(2·token_dim + path_dim) × CODE_DIM`.
    pub combine: Array2<f64>,
    pub attention: Array1<f64>,
}

/// Intermediate values of one forward pass, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub inputs: Array2<f64>,
    pub embedded: Array2<f64>,
    pub weights: Array1<f64>,
    pub output: Array1<f64>,
}

/// Gradients shaped like [`AttentionParams`]' tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub token_emb: Array2<f64>,
    pub path_emb: Array2<f64>,
    pub combine: Array2<f64>,
    pub attention: Array1<f64>,
}

impl AttentionGrads {
    pub fn scale(&mut self, factor: f64) {
        self.token_emb *= factor;
        self.path_emb *= factor;
        self.combine *= factor;
        self.attention *= factor;
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.token_emb.as_slice().unwrap(),
            self.path_emb.as_slice().unwrap(),
            self.combine.as_slice().unwrap(),
            self.attention.as_slice().unwrap(),
        ]
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, limit: f64) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-limit, limit);
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl AttentionParams {
    /// Random initialization over the given vocabularies. Vocabulary rows are
    /// assigned in sorted order so the result depends only on the sets.
    pub fn init<T, P>(tokens: T, paths: P, token_dim: usize, path_dim: usize, seed: u64) -> Self
    where
        T: IntoIterator,
        T::Item: Into<String>,
        P: IntoIterator,
        P::Item: Into<String>,
    {
        let tokens: BTreeSet<String> = tokens.into_iter().map(Into::into).collect();
        let paths: BTreeSet<String> = paths.into_iter().map(Into::into).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = 2 * token_dim + path_dim;
        let token_emb = uniform(&mut rng, tokens.len() + 1, token_dim, 1.0);
        let path_emb = uniform(&mut rng, paths.len() + 1, path_dim, 1.0);
        let combine = uniform(&mut rng, in_dim, CODE_DIM, (6.0 / (in_dim + CODE_DIM) as f64).sqrt());
        let attention = uniform(&mut rng, 1, CODE_DIM, (1.0 / CODE_DIM as f64).sqrt()).index_axis_move(Axis(0), 0);
        Self {
            token_index: tokens.into_iter().enumerate().map(|(i, t)| (t, i)).collect(),
            path_index: paths.into_iter().enumerate().map(|(i, p)| (p, i)).collect(),
            token_emb,
            path_emb,
            combine,
            attention,
        }
    }

    /// Vocabularies are collected from the given context sets.
    pub fn from_contexts<'a, I>(contexts: I, token_dim: usize, path_dim: usize, seed: u64) -> Self
    where
        I: IntoIterator<Item = &'a [PathContext]>,
    {
        let mut tokens = BTreeSet::new();
        let mut paths = BTreeSet::new();
        for set in contexts {
            for c in set {
                tokens.insert(c.start_token.clone());
                tokens.insert(c.end_token.clone());
                paths.insert(c.path.clone());
            }
        }
        Self::init(tokens, paths, token_dim, path_dim, seed)
    }

    pub fn token_dim(&self) -> usize {
        self.token_emb.ncols()
    }

    pub fn path_dim(&self) -> usize {
        self.path_emb.ncols()
    }

    fn token_row(&self, token: &str) -> usize {
        self.token_index
            .get(token)
            .copied()
            .unwrap_or(self.token_emb.nrows() - 1)
    }

    fn path_row(&self, path: &str) -> usize {
        self.path_index.get(path).copied().unwrap_or(self.path_emb.nrows() - 1)
    }

    pub fn encode(&self, contexts: &[PathContext]) -> Vec<EncodedContext> {
        contexts
            .iter()
            .map(|c| {
                [
                    self.token_row(&c.start_token),
                    self.path_row(&c.path),
                    self.token_row(&c.end_token),
                ]
            })
            .collect()
    }

    /// Forward pass over a nonempty encoded context set.
    pub fn forward(&self, contexts: &[EncodedContext]) -> AttentionCache {
        assert!(!contexts.is_empty(), "attention over an empty context set");
        let dt = self.token_dim();
        let dp = self.path_dim();
        let mut inputs = Array2::zeros((contexts.len(), 2 * dt + dp));
        for (mut row, &[s, p, e]) in inputs.rows_mut().into_iter().zip(contexts) {
            row.slice_mut(ndarray::s![..dt]).assign(&self.token_emb.row(s));
            row.slice_mut(ndarray::s![dt..dt + dp]).assign(&self.path_emb.row(p));
            row.slice_mut(ndarray::s![dt + dp..]).assign(&self.token_emb.row(e));
        }
        let embedded = inputs.dot(&self.combine).mapv(f64::tanh);
        let scores = embedded.dot(&self.attention);
        let max = scores.fold(f64::NEG_INFINITY, |m, &s| m.max(s));
        let exp = scores.mapv(|s| (s - max).exp());
        let weights = &exp / exp.sum();
        let output = weights.dot(&embedded);
        AttentionCache {
            inputs,
            embedded,
            weights,
            output,
        }
    }

    pub fn embed(&self, contexts: &[PathContext]) -> MethodVector {
        if contexts.is_empty() {
            return MethodVector {
                values: vec![0.0; CODE_DIM],
                degenerate: true,
            };
        }
        MethodVector {
            values: self.forward(&self.encode(contexts)).output.to_vec(),
            degenerate: false,
        }
    }

    pub fn zero_grads(&self) -> AttentionGrads {
        AttentionGrads {
            token_emb: Array2::zeros(self.token_emb.raw_dim()),
            path_emb: Array2::zeros(self.path_emb.raw_dim()),
            combine: Array2::zeros(self.combine.raw_dim()),
            attention: Array1::zeros(self.attention.raw_dim()),
        }
    }

    /// Adds the gradient of a loss with respect to every parameter, given
    /// `grad_output` = dL/d(method vector) for the pass recorded in `cache`.
    pub fn backward(
        &self,
        contexts: &[EncodedContext],
        cache: &AttentionCache,
        grad_output: ArrayView1<f64>,
        grads: &mut AttentionGrads,
    ) {
        let dt = self.token_dim();
        let dp = self.path_dim();
        // dL/dweight_c = <g, e_c>; softmax Jacobian gives dL/dscore_c.
        let d_weights = cache.embedded.dot(&grad_output);
        let mean = cache.weights.dot(&d_weights);
        let d_scores = &cache.weights * &(d_weights - mean);

        grads.attention += &cache.embedded.t().dot(&d_scores);

        let mut d_embedded = Array2::zeros(cache.embedded.raw_dim());
        for (c, mut row) in d_embedded.rows_mut().into_iter().enumerate() {
            row.scaled_add(cache.weights[c], &grad_output);
            row.scaled_add(d_scores[c], &self.attention);
        }
        let d_pre = d_embedded * cache.embedded.mapv(|e| 1.0 - e * e);
        grads.combine += &cache.inputs.t().dot(&d_pre);
        let d_inputs = d_pre.dot(&self.combine.t());
        for (row, &[s, p, e]) in d_inputs.rows().into_iter().zip(contexts) {
            let mut t = grads.token_emb.row_mut(s);
            t += &row.slice(ndarray::s![..dt]);
            let mut t = grads.path_emb.row_mut(p);
            t += &row.slice(ndarray::s![dt..dt + dp]);
            let mut t = grads.token_emb.row_mut(e);
            t += &row.slice(ndarray::s![dt + dp..]);
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.token_emb.as_slice_mut().unwrap(),
            self.path_emb.as_slice_mut().unwrap(),
            self.combine.as_slice_mut().unwrap(),
            self.attention.as_slice_mut().unwrap(),
        ]
    }
}
