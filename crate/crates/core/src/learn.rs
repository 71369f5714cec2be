//! Maximum-likelihood fitting of the priority weights from expert choices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expert::{sigmoid, Dataset};
use crate::semantics::{PriorityModel, TrainingMetadata};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Rationality assumed by the learner.
    pub beta: f64,
    /// Residual error assumed by the learner.
    pub rho: f64,
    pub seeds: Vec<u64>,
    /// Project weights onto their domain after every step.
    pub clamp: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 0.01,
            beta: 10.0,
            rho: 0.1,
            seeds: (0..10).collect(),
            clamp: true,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error("dataset has no record with two or more candidates")]
    DegenerateDataset,
    #[error("invalid training config: {0}")]
    Config(String),
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(TrainError::Config("learning rate must be non-negative".into()));
        }
        if !(0.0..0.5).contains(&self.rho) {
            return Err(TrainError::Config("rho must lie in [0, 0.5)".into()));
        }
        if !(self.beta > 0.0) {
            return Err(TrainError::Config("beta must be positive".into()));
        }
        Ok(())
    }
}

/// Pairwise differences `phi(chosen) - phi(other)`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    dim: usize,
    diffs: Vec<f64>,
}

impl PairSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, diffs: Vec::new() }
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut set = Self::new(ds.header.class_names.len() + 2);
        for r in &ds.records {
            for (e, f) in r.pairs() {
                set.push(e, f);
            }
        }
        set
    }

    pub fn push(&mut self, chosen: &[f64], other: &[f64]) {
        assert_eq!(chosen.len(), self.dim);
        assert_eq!(other.len(), self.dim);
        self.diffs.extend(chosen.iter().zip(other).map(|(a, b)| a - b));
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.diffs.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.diffs.chunks_exact(self.dim.max(1))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-log sigma_rho(x)`, accurate for large `|x|` when `rho == 0`.
fn neg_log_sigma_rho(x: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        // -log sigmoid(x) = softplus(-x)
        if x > 0.0 {
            (-x).exp().ln_1p()
        } else {
            -x + x.exp().ln_1p()
        }
    } else {
        -((1.0 - 2.0 * rho) * sigmoid(x) + rho).ln()
    }
}

/// Derivative of `-log sigma_rho(x)` with respect to `x`.
fn d_neg_log_sigma_rho(x: f64, rho: f64) -> f64 {
    let s = sigmoid(x);
    if rho == 0.0 {
        -(1.0 - s)
    } else {
        let sr = (1.0 - 2.0 * rho) * s + rho;
        -(1.0 - 2.0 * rho) * s * (1.0 - s) / sr
    }
}

/// Negative log-likelihood of all pairs under augmented weights `w_aug`.
pub fn nll(pairs: &PairSet, w_aug: &[f64], beta: f64, rho: f64) -> f64 {
    pairs.iter().map(|d| neg_log_sigma_rho(beta * dot(w_aug, d), rho)).sum()
}

/// Analytic gradient of [`nll`] with respect to `w_aug`.
pub fn grad_nll(pairs: &PairSet, w_aug: &[f64], beta: f64, rho: f64) -> Vec<f64> {
    let mut g = vec![0.0; w_aug.len()];
    for d in pairs.iter() {
        let k = beta * d_neg_log_sigma_rho(beta * dot(w_aug, d), rho);
        for (gi, di) in g.iter_mut().zip(d) {
            *gi += k * di;
        }
    }
    g
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            x[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub seed: u64,
    pub model: PriorityModel,
    /// NLL before each epoch, then after the last one.
    pub loss_curve: Vec<f64>,
    pub initial_nll: f64,
    pub final_nll: f64,
}

/// Uniform `[0, 1]` starting weights for a seed.
pub fn initial_weights(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

/// Full-batch Adam from a seeded uniform start. Returns the iterate with the
/// lowest NLL seen, so the result never scores worse than the start.
pub fn train_pairs(pairs: &PairSet, config: &TrainConfig, seed: u64) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::DegenerateDataset);
    }
    let mut w = initial_weights(pairs.dim(), seed);
    let project = |w: &mut Vec<f64>| {
        if config.clamp {
            let mut m = PriorityModel::from_augmented(w);
            m.clamp();
            *w = m.augmented();
        }
    };
    project(&mut w);
    let mut adam = Adam::new(w.len(), config.learning_rate);
    let mut curve = Vec::with_capacity(config.epochs + 1);
    let mut best = (nll(pairs, &w, config.beta, config.rho), w.clone());
    for _ in 0..config.epochs {
        let loss = nll(pairs, &w, config.beta, config.rho);
        curve.push(loss);
        if loss < best.0 {
            best = (loss, w.clone());
        }
        let g = grad_nll(pairs, &w, config.beta, config.rho);
        adam.step(&mut w, &g);
        project(&mut w);
    }
    let last = nll(pairs, &w, config.beta, config.rho);
    curve.push(last);
    if last < best.0 {
        best = (last, w);
    }
    Ok(TrainOutcome {
        seed,
        model: PriorityModel::from_augmented(&best.1),
        initial_nll: curve[0],
        final_nll: best.0,
        loss_curve: curve,
    })
}

pub fn train(dataset: &Dataset, config: &TrainConfig, seed: u64) -> Result<TrainOutcome, TrainError> {
    train_pairs(&PairSet::from_dataset(dataset), config, seed)
}

/// Trains one model per configured seed; seeds run in parallel and results
/// come back in seed order.
pub fn train_all(dataset: &Dataset, config: &TrainConfig) -> Result<Vec<TrainOutcome>, TrainError> {
    let pairs = PairSet::from_dataset(dataset);
    config
        .seeds
        .par_iter()
        .map(|&s| train_pairs(&pairs, config, s))
        .collect()
}

pub fn metadata(dataset: &Dataset, config: &TrainConfig, outcome: &TrainOutcome) -> TrainingMetadata {
    TrainingMetadata {
        dataset_hash: dataset.content_hash(),
        seed: outcome.seed,
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        beta: config.beta,
        rho: config.rho,
        lambda: dataset.header.lambda,
        records: dataset.records.len(),
        pairs: dataset.pair_count(),
        initial_nll: outcome.initial_nll,
        final_nll: outcome.final_nll,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_pairs(seed: u64, n: usize, dim: usize) -> PairSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PairSet::new(dim);
        for _ in 0..n {
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.2)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.2)).collect();
            p.push(&a, &b);
        }
        p
    }

    #[test]
    fn empty_and_identical() {
        let p = PairSet::new(3);
        assert_eq!(nll(&p, &[0.2, 0.3, 0.4], 10.0, 0.1), 0.0);
        assert_eq!(grad_nll(&p, &[0.2, 0.3, 0.4], 10.0, 0.1), vec![0.0; 3]);
        let mut q = PairSet::new(2);
        q.push(&[0.5, 0.5], &[0.5, 0.5]);
        assert!((nll(&q, &[0.9, 0.1], 10.0, 0.1) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_matches_per_pair_closed_form() {
        let p = random_pairs(3, 20, 4);
        let w = [0.3, 0.8, 0.1, 0.5];
        let (beta, rho) = (10.0, 0.1);
        let mut expect = 0.0;
        for d in p.iter() {
            let x = beta * (w[0] * d[0] + w[1] * d[1] + w[2] * d[2] + w[3] * d[3]);
            let s = 1.0 / (1.0 + (-x).exp());
            expect -= ((1.0 - 2.0 * rho) * s + rho).ln();
        }
        assert!((nll(&p, &w, beta, rho) - expect).abs() < 1e-9);
    }

    #[test]
    fn symmetric_dataset_has_zero_gradient_at_origin() {
        let mut p = PairSet::new(3);
        p.push(&[1.0, 0.2, 0.0], &[0.0, 0.5, 1.0]);
        p.push(&[0.0, 0.5, 1.0], &[1.0, 0.2, 0.0]);
        let g = grad_nll(&p, &[0.0; 3], 10.0, 0.1);
        assert!(g.iter().all(|x| x.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in 0..10 {
            let p = random_pairs(100 + k, 15, 5);
            let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..1.0)).collect();
            for rho in [0.0, 0.1] {
                let g = grad_nll(&p, &w, 10.0, rho);
                for i in 0..5 {
                    let h = 1e-6;
                    let mut a = w.clone();
                    let mut b = w.clone();
                    a[i] += h;
                    b[i] -= h;
                    let fd = (nll(&p, &a, 10.0, rho) - nll(&p, &b, 10.0, rho)) / (2.0 * h);
                    let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8);
                    assert!(rel < 1e-5, "{i}: {} vs {fd}", g[i]);
                }
            }
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let mut p = PairSet::new(1);
        p.push(&[100.0], &[0.0]);
        assert!(nll(&p, &[-10.0], 25.0, 0.0).is_finite());
        assert!(grad_nll(&p, &[-10.0], 25.0, 0.0)[0].is_finite());
        assert!(nll(&p, &[10.0], 25.0, 0.0) >= 0.0);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let p = random_pairs(4, 10, 3);
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 0.0,
            ..Default::default()
        };
        let out = train_pairs(&p, &cfg, 7).unwrap();
        assert_eq!(out.model.augmented(), initial_weights(3, 7));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let p = random_pairs(5, 40, 4);
        let cfg = TrainConfig {
            epochs: 300,
            ..Default::default()
        };
        let a = train_pairs(&p, &cfg, 1).unwrap();
        let b = train_pairs(&p, &cfg, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.final_nll <= a.initial_nll);
        assert!(a.model.w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(a.model.w_coverage >= 0.0);
    }

    #[test]
    fn empty_pairs_are_degenerate() {
        assert_eq!(
            train_pairs(&PairSet::new(3), &TrainConfig::default(), 0),
            Err(TrainError::DegenerateDataset)
        );
    }
}
