use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before any logarithm.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Wbce,
    Focal,
}

/// Loss family and its parameters. `alpha`/`gamma` apply to focal loss,
/// `class_weights` (`w_neg`, `w_pos`) to weighted BCE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub alpha: f64,
    pub gamma: f64,
    pub class_weights: (f64, f64),
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::bce()
    }
}

impl LossSpec {
    pub fn bce() -> Self {
        Self {
            kind: LossKind::Bce,
            alpha: 0.25,
            gamma: 2.0,
            class_weights: (1.0, 1.0),
        }
    }

    pub fn wbce(w_neg: f64, w_pos: f64) -> Self {
        Self {
            kind: LossKind::Wbce,
            class_weights: (w_neg, w_pos),
            ..Self::bce()
        }
    }

    pub fn focal(alpha: f64, gamma: f64) -> Self {
        Self {
            kind: LossKind::Focal,
            alpha,
            gamma,
            ..Self::bce()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        let (w_neg, w_pos) = self.class_weights;
        if !(w_neg > 0.0 && w_pos > 0.0) || !w_neg.is_finite() || !w_pos.is_finite() {
            return Err(Error::Config("class weights must be positive".into()));
        }
        Ok(())
    }

    /// Per-example loss for predicted probability `p` and label `y`.
    pub fn loss(&self, p: f64, y: bool) -> f64 {
        let p = p.clamp(EPS, 1.0 - EPS);
        match (self.kind, y) {
            (LossKind::Bce, true) => -p.ln(),
            (LossKind::Bce, false) => -(1.0 - p).ln(),
            (LossKind::Wbce, true) => self.class_weights.1 * -p.ln(),
            (LossKind::Wbce, false) => self.class_weights.0 * -(1.0 - p).ln(),
            (LossKind::Focal, true) => -self.alpha * (1.0 - p).powf(self.gamma) * p.ln(),
            (LossKind::Focal, false) => -(1.0 - self.alpha) * p.powf(self.gamma) * (1.0 - p).ln(),
        }
    }

    /// dloss/dp of the clamped loss; zero where the clamp is active.
    pub fn dloss_dp(&self, p: f64, y: bool) -> f64 {
        if !(EPS..=1.0 - EPS).contains(&p) {
            return 0.0;
        }
        let g = self.gamma;
        match (self.kind, y) {
            (LossKind::Bce, true) => -1.0 / p,
            (LossKind::Bce, false) => 1.0 / (1.0 - p),
            (LossKind::Wbce, true) => -self.class_weights.1 / p,
            (LossKind::Wbce, false) => self.class_weights.0 / (1.0 - p),
            (LossKind::Focal, true) => {
                let q = 1.0 - p;
                let dpow = if g == 0.0 { 0.0 } else { g * q.powf(g - 1.0) };
                self.alpha * (dpow * p.ln() - q.powf(g) / p)
            }
            (LossKind::Focal, false) => {
                let q = 1.0 - p;
                let dpow = if g == 0.0 { 0.0 } else { g * p.powf(g - 1.0) };
                (1.0 - self.alpha) * (p.powf(g) / q - dpow * q.ln())
            }
        }
    }

    /// dloss/dlogit where `p = sigmoid(logit)`.
    pub fn dloss_dlogit(&self, p: f64, y: bool) -> f64 {
        self.dloss_dp(p, y) * p * (1.0 - p)
    }
}
