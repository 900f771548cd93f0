//! Training the attention code encoder together with the classifier.
//!
//! Method vectors are recomputed from their path-contexts on every forward
//! pass, and the method tower's input gradient flows back into the encoder.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use super::train::{Model, OptimizerState};
use super::{LossSpec, Network, NetworkGrads};
use crate::codeast::{AttentionCache, AttentionGrads, AttentionParams, EncodedContext, CODE_DIM};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct JointSample {
    pub report_vec: Arc<[f64]>,
    /// Empty for methods without contexts; their vector is all zeros.
    pub contexts: Arc<Vec<EncodedContext>>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub net: Network,
    pub encoder: AttentionParams,
}

impl JointModel {
    pub fn new(net: Network, encoder: AttentionParams) -> Result<Self> {
        if net.method_dim() != CODE_DIM {
            return Err(Error::dim(CODE_DIM, net.method_dim(), "method tower input"));
        }
        Ok(Self { net, encoder })
    }

    fn encode_batch(&self, batch: &[&JointSample]) -> Result<(Array2<f64>, Array2<f64>, Vec<Option<AttentionCache>>)> {
        let rdim = self.net.report_dim();
        let mut reports = Array2::zeros((batch.len(), rdim));
        let mut methods = Array2::zeros((batch.len(), CODE_DIM));
        let mut caches = Vec::with_capacity(batch.len());
        for (i, s) in batch.iter().enumerate() {
            if s.report_vec.len() != rdim {
                return Err(Error::dim(rdim, s.report_vec.len(), "report vector"));
            }
            reports.row_mut(i).assign(&ndarray::aview1(&s.report_vec));
            if s.contexts.is_empty() {
                caches.push(None);
            } else {
                let cache = self.encoder.forward(&s.contexts);
                methods.row_mut(i).assign(&cache.output);
                caches.push(Some(cache));
            }
        }
        Ok((reports, methods, caches))
    }

    /// Probabilities for a batch.
    pub fn predict(&self, batch: &[&JointSample]) -> Result<Array1<f64>> {
        let (reports, methods, _) = self.encode_batch(batch)?;
        Ok(self.net.forward_batch(reports, methods)?.probs)
    }

    /// Mean batch loss with gradients for both the network and the encoder.
    pub fn gradient(&self, batch: &[&JointSample], spec: &LossSpec) -> Result<(f64, NetworkGrads, AttentionGrads)> {
        if batch.is_empty() {
            return Err(Error::Config("gradient of an empty batch".into()));
        }
        let (reports, methods, caches) = self.encode_batch(batch)?;
        let fwd = self.net.forward_batch(reports, methods)?;
        let n = batch.len() as f64;
        let mut total = 0.0;
        let d_logits = Array1::from_iter(batch.iter().zip(&fwd.probs).map(|(s, &p)| {
            total += spec.loss(p, s.label);
            spec.dloss_dlogit(p, s.label) / n
        }));
        let (net_grads, d_methods) = self.net.backward(&fwd, &d_logits);
        let mut enc_grads = self.encoder.zero_grads();
        for ((s, cache), d) in batch.iter().zip(&caches).zip(d_methods.rows()) {
            if let Some(cache) = cache {
                self.encoder.backward(&s.contexts, cache, d, &mut enc_grads);
            }
        }
        Ok((total / n, net_grads, enc_grads))
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.net.slices_mut();
        out.extend(self.encoder.slices_mut());
        out
    }
}

impl Model for JointModel {
    type Sample = JointSample;

    fn label(sample: &JointSample) -> bool {
        sample.label
    }

    fn step(&mut self, batch: &[&JointSample], loss: &LossSpec, opt: &mut OptimizerState) -> Result<f64> {
        let (value, net_grads, enc_grads) = self.gradient(batch, loss)?;
        if value.is_finite() {
            let mut grads = net_grads.slices();
            grads.extend(enc_grads.slices());
            opt.step(self.slices_mut(), grads);
        }
        Ok(value)
    }

    fn mean_loss(&self, samples: &[JointSample], loss: &LossSpec) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for chunk in samples.chunks(256) {
            let refs: Vec<&JointSample> = chunk.iter().collect();
            let probs = self.predict(&refs)?;
            total += chunk
                .iter()
                .zip(&probs)
                .map(|(s, &p)| loss.loss(p, s.label))
                .sum::<f64>();
        }
        Ok(total / samples.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codeast::fixture::parse_method;
    use crate::codeast::{extract_path_contexts, ExtractionLimits};
    use crate::neural::{Activation, TowerConfig};

    fn setup() -> (JointModel, Vec<JointSample>) {
        let sources = ["a = b * c; return a", "x = y + 1", "return f(p, q)"];
        let ctx: Vec<_> = sources
            .iter()
            .map(|s| extract_path_contexts(&parse_method(s).unwrap(), &ExtractionLimits::unbounded()))
            .collect();
        let encoder = AttentionParams::from_contexts(ctx.iter().map(Vec::as_slice), 2, 2, 4);
        let net = Network::new(
            &TowerConfig::new(vec![2, 2], Activation::Tanh).unwrap(),
            &TowerConfig::new(vec![CODE_DIM, 2], Activation::Tanh).unwrap(),
            8,
        )
        .unwrap();
        let model = JointModel::new(net, encoder).unwrap();
        let samples = ctx
            .iter()
            .enumerate()
            .map(|(i, c)| JointSample {
                report_vec: Arc::from(vec![0.3 * i as f64 - 0.2, 0.5]),
                contexts: Arc::new(model.encoder.encode(c)),
                label: i == 1,
            })
            .chain(std::iter::once(JointSample {
                report_vec: Arc::from(vec![0.1, 0.1]),
                contexts: Arc::new(Vec::new()),
                label: false,
            }))
            .collect();
        (model, samples)
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let (mut model, samples) = setup();
        let refs: Vec<&JointSample> = samples.iter().collect();
        let spec = LossSpec::focal(0.25, 2.0);
        let (_, ng, eg) = model.gradient(&refs, &spec).unwrap();
        let mut analytic: Vec<Vec<f64>> = ng.slices().iter().map(|s| s.to_vec()).collect();
        analytic.extend(eg.slices().iter().map(|s| s.to_vec()));

        let loss_at = |m: &JointModel| m.gradient(&refs, &spec).unwrap().0;
        let h = 1e-5;
        let n_slices = analytic.len();
        for s in 0..n_slices {
            let len = analytic[s].len();
            // every parameter of small tensors, a stride through the big ones
            let stride = if len > 200 { 13 } else { 1 };
            for i in (0..len).step_by(stride) {
                let orig = model.slices_mut()[s][i];
                model.slices_mut()[s][i] = orig + h;
                let up = loss_at(&model);
                model.slices_mut()[s][i] = orig - h;
                let down = loss_at(&model);
                model.slices_mut()[s][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[s][i];
                let err = (a - numeric).abs();
                assert!(
                    err / a.abs().max(numeric.abs()).max(1e-7) < 1e-4 || err < 1e-10,
                    "slice {s} index {i}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn training_reduces_loss() {
        let (model, samples) = setup();
        let spec = LossSpec::bce();
        let before = model.mean_loss(&samples, &spec).unwrap();
        let cfg = crate::neural::TrainConfig {
            epochs: 30,
            batch_size: 2,
            learning_rate: 0.01,
            early_stop_patience: 0,
            ..Default::default()
        };
        let out = crate::neural::train(model, &samples, &samples, &spec, &cfg).unwrap();
        let after = out.model.mean_loss(&samples, &spec).unwrap();
        assert!(after < before, "{before} -> {after}");
    }

    #[test]
    fn rejects_wrong_method_width() {
        let (model, _) = setup();
        let net = Network::new(
            &TowerConfig::new(vec![2, 2], Activation::Tanh).unwrap(),
            &TowerConfig::new(vec![10, 2], Activation::Tanh).unwrap(),
            0,
        )
        .unwrap();
        assert!(JointModel::new(net, model.encoder).is_err());
    }
}
