use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{PairFeatures, N_FEATURES};
use super::DedupError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Duplicate,
    Distinct,
}

impl Label {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "duplicate" | "dup" | "1" | "true" | "yes" => Some(Label::Duplicate),
            "distinct" | "0" | "false" | "no" => Some(Label::Distinct),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Duplicate => "duplicate",
            Label::Distinct => "distinct",
        }
    }

    fn sign(self) -> f64 {
        match self {
            Label::Duplicate => 1.0,
            Label::Distinct => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lambda: 1e-4, epochs: 200, seed: 0 }
    }
}

/// Linear max-margin pair classifier: duplicate iff `w·x + b > 0`. The
/// untrained default rejects every pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub weights: [f64; N_FEATURES],
    pub bias: f64,
    pub trained: bool,
}

impl PairClassifier {
    pub fn decision(&self, f: &PairFeatures) -> f64 {
        let x = f.as_array();
        self.weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn is_duplicate(&self, f: &PairFeatures) -> bool {
        self.decision(f) > 0.0
    }
}

/// Trains by stochastic subgradient descent on the regularised hinge loss
/// (Pegasos step `1/(λt)`, projection onto the `1/√λ` ball). The bias is an
/// extra weight on a constant feature. Sample order is shuffled per epoch
/// from `cfg.seed`, so training is deterministic.
pub fn train_classifier(samples: &[(PairFeatures, Label)], cfg: &TrainConfig) -> Result<PairClassifier, DedupError> {
    let has = |l: Label| samples.iter().any(|(_, s)| *s == l);
    if samples.is_empty() {
        return Err(DedupError::EmptyTraining);
    }
    if !has(Label::Duplicate) || !has(Label::Distinct) {
        return Err(DedupError::SingleClass);
    }
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 {
        return Err(DedupError::BadTrainConfig(format!("lambda {} epochs {}", cfg.lambda, cfg.epochs)));
    }

    let data: Vec<([f64; N_FEATURES + 1], f64)> = samples
        .iter()
        .map(|(f, l)| {
            let x = f.as_array();
            let mut aug = [1.0; N_FEATURES + 1];
            aug[..N_FEATURES].copy_from_slice(&x);
            (aug, l.sign())
        })
        .collect();

    let radius = 1.0 / cfg.lambda.sqrt();
    let mut w = [0.0f64; N_FEATURES + 1];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let (x, y) = &data[i];
            let margin = y * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let shrink = 1.0 - eta * cfg.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                w.iter_mut().zip(x).for_each(|(v, xi)| *v += eta * y * xi);
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }
    }
    let mut weights = [0.0; N_FEATURES];
    weights.copy_from_slice(&w[..N_FEATURES]);
    Ok(PairClassifier { weights, bias: w[N_FEATURES], trained: true })
}
