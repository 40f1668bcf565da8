use serde::{Deserialize, Serialize};

/// First- and second-order loss derivatives at one instance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradientPair {
    pub g: f64,
    pub h: f64,
}

impl GradientPair {
    pub const ZERO: GradientPair = GradientPair { g: 0.0, h: 0.0 };

    pub fn new(g: f64, h: f64) -> Self {
        Self { g, h }
    }
}

impl std::ops::AddAssign for GradientPair {
    fn add_assign(&mut self, rhs: Self) {
        self.g += rhs.g;
        self.h += rhs.h;
    }
}

/// Twice-differentiable training loss on raw (margin) scores.
pub trait Loss: Send + Sync {
    fn gradient(&self, raw_score: f64, label: u8) -> GradientPair;
}

/// Binary cross-entropy on the sigmoid of the raw score.
#[derive(Clone, Copy, Debug, Default)]
pub struct LogisticLoss;

impl Loss for LogisticLoss {
    fn gradient(&self, raw_score: f64, label: u8) -> GradientPair {
        logistic_gradients(raw_score, label)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `g = sigma(raw) - y`, `h = sigma(raw) (1 - sigma(raw))`.
pub fn logistic_gradients(raw_score: f64, label: u8) -> GradientPair {
    let p = sigmoid(raw_score);
    GradientPair::new(p - f64::from(label), p * (1.0 - p))
}
