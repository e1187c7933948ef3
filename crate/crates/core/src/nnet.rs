//! One-hidden-layer rectifier regressor.
//!
//! The network maps an input vector to a single scalar. Training minimises
//! mean squared error with mini-batch gradient descent, scores a held-out
//! validation fold with the coefficient of determination after every epoch
//! and stops once that score reaches the configured accuracy threshold. When
//! the score stalls, the learning rate is divided by a constant factor.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header tag of the parameter dump format.
const DUMP_MAGIC: &str = "socialabm-nnet v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub learning_rate_init: f64,
    /// Multiplier applied to the learning rate when validation stalls.
    pub lr_decay_factor: f64,
    /// Epochs without validation improvement before the rate is decayed.
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    /// Validation R² at which training halts.
    pub accuracy_threshold: f64,
    pub rng_seed: u64,
    /// Classical momentum coefficient; 0 is plain SGD.
    pub momentum: f64,
    /// Training gives up once the decayed rate falls below this.
    pub min_learning_rate: f64,
    /// Minimum score gain that counts as an improvement.
    pub improvement_tol: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 2,
            hidden_units: 100,
            learning_rate_init: 0.01,
            lr_decay_factor: 0.2,
            patience_epochs: 2,
            max_epochs: 500,
            batch_size: 32,
            validation_fraction: 0.2,
            accuracy_threshold: 0.99,
            rng_seed: 0,
            momentum: 0.9,
            min_learning_rate: 1e-6,
            improvement_tol: 1e-4,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("network.input_dim", "must be at least 1"));
        }
        if self.hidden_units == 0 {
            return Err(Error::config("network.hidden_units", "must be at least 1"));
        }
        if !(self.learning_rate_init.is_finite() && self.learning_rate_init > 0.0) {
            return Err(Error::config(
                "network.learning_rate_init",
                "must be a positive finite number",
            ));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::config(
                "network.lr_decay_factor",
                "must lie in (0, 1)",
            ));
        }
        if self.patience_epochs == 0 {
            return Err(Error::config(
                "network.patience_epochs",
                "must be at least 1",
            ));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("network.max_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("network.batch_size", "must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config(
                "network.validation_fraction",
                "must lie in (0, 1)",
            ));
        }
        // Thresholds above 1 are accepted so callers can force exhaustion.
        if !(self.accuracy_threshold > 0.0 && self.accuracy_threshold.is_finite()) {
            return Err(Error::config(
                "network.accuracy_threshold",
                "must be positive (at most 1 to be reachable)",
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("network.momentum", "must lie in [0, 1)"));
        }
        if !(self.min_learning_rate >= 0.0 && self.min_learning_rate.is_finite()) {
            return Err(Error::config(
                "network.min_learning_rate",
                "must be a non-negative finite number",
            ));
        }
        if !(self.improvement_tol >= 0.0 && self.improvement_tol.is_finite()) {
            return Err(Error::config(
                "network.improvement_tol",
                "must be a non-negative finite number",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ThresholdReached,
    MaxEpochs,
    LrFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub final_validation_score: f64,
    pub stopped_by: StopReason,
    /// Learning rate in effect during each epoch.
    pub learning_rates: Vec<f64>,
    /// Validation R² after each epoch.
    pub validation_scores: Vec<f64>,
}

/// One regression example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: f64,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: f64) -> Self {
        Sample { input, target }
    }
}

/// Parameter-shaped container, used both for gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Row-major `input_dim × hidden_units`.
    pub weights_hidden: Vec<f64>,
    pub bias_hidden: Vec<f64>,
    pub weights_out: Vec<f64>,
    pub bias_out: f64,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights_hidden: vec![0.0; net.weights_hidden.len()],
            bias_hidden: vec![0.0; net.bias_hidden.len()],
            weights_out: vec![0.0; net.weights_out.len()],
            bias_out: 0.0,
        }
    }

    fn clear(&mut self) {
        self.weights_hidden.fill(0.0);
        self.bias_hidden.fill(0.0);
        self.weights_out.fill(0.0);
        self.bias_out = 0.0;
    }

    /// All components in a fixed order matching [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(
            self.weights_hidden.len() + self.bias_hidden.len() + self.weights_out.len() + 1,
        );
        out.extend_from_slice(&self.weights_hidden);
        out.extend_from_slice(&self.bias_hidden);
        out.extend_from_slice(&self.weights_out);
        out.push(self.bias_out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    hidden_units: usize,
    /// Row-major `input_dim × hidden_units`: entry `(i, j)` at `i * hidden_units + j`.
    pub weights_hidden: Vec<f64>,
    pub bias_hidden: Vec<f64>,
    pub weights_out: Vec<f64>,
    pub bias_out: f64,
}

impl Network {
    /// All parameters zero; predicts 0 everywhere.
    pub fn zeros(input_dim: usize, hidden_units: usize) -> Self {
        Network {
            input_dim,
            hidden_units,
            weights_hidden: vec![0.0; input_dim * hidden_units],
            bias_hidden: vec![0.0; hidden_units],
            weights_out: vec![0.0; hidden_units],
            bias_out: 0.0,
        }
    }

    /// Glorot-uniform initialisation of weights and biases, seeded.
    pub fn new(input_dim: usize, hidden_units: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_units == 0 {
            return Err(Error::input("network dimensions must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::zeros(input_dim, hidden_units);
        let bound_hidden = (6.0 / (input_dim + hidden_units) as f64).sqrt();
        let bound_out = (6.0 / (hidden_units + 1) as f64).sqrt();
        for w in net.weights_hidden.iter_mut() {
            *w = rng.random_range(-bound_hidden..bound_hidden);
        }
        for b in net.bias_hidden.iter_mut() {
            *b = rng.random_range(-bound_hidden..bound_hidden);
        }
        for w in net.weights_out.iter_mut() {
            *w = rng.random_range(-bound_out..bound_out);
        }
        net.bias_out = rng.random_range(-bound_out..bound_out);
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_units
    }

    pub fn parameter_count(&self) -> usize {
        self.weights_hidden.len() + self.bias_hidden.len() + self.weights_out.len() + 1
    }

    /// All parameters in the order used by [`Gradients::flatten`].
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        out.extend_from_slice(&self.weights_hidden);
        out.extend_from_slice(&self.bias_hidden);
        out.extend_from_slice(&self.weights_out);
        out.push(self.bias_out);
        out
    }

    /// Inverse of [`Network::parameters`].
    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::input(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let (wh, rest) = params.split_at(self.weights_hidden.len());
        let (bh, rest) = rest.split_at(self.bias_hidden.len());
        let (wo, rest) = rest.split_at(self.weights_out.len());
        self.weights_hidden.copy_from_slice(wh);
        self.bias_hidden.copy_from_slice(bh);
        self.weights_out.copy_from_slice(wo);
        self.bias_out = rest[0];
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights_hidden.iter().all(|v| v.is_finite())
            && self.bias_hidden.iter().all(|v| v.is_finite())
            && self.weights_out.iter().all(|v| v.is_finite())
            && self.bias_out.is_finite()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(Error::input(format!(
                "network expects {} inputs, got {}",
                self.input_dim,
                input.len()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("network input contains a non-finite value"));
        }
        Ok(())
    }

    /// Fills `hidden` with pre-activations and returns the output.
    fn forward_into(&self, input: &[f64], hidden: &mut [f64]) -> f64 {
        hidden.copy_from_slice(&self.bias_hidden);
        for (i, &x) in input.iter().enumerate() {
            let row = &self.weights_hidden[i * self.hidden_units..(i + 1) * self.hidden_units];
            for (h, &w) in hidden.iter_mut().zip(row) {
                *h += x * w;
            }
        }
        hidden
            .iter()
            .zip(&self.weights_out)
            .fold(self.bias_out, |acc, (&z, &w)| acc + z.max(0.0) * w)
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.check_input(input)?;
        let mut hidden = vec![0.0; self.hidden_units];
        Ok(self.forward_into(input, &mut hidden))
    }

    /// Adds `scale · ∂(y − target)²/∂θ` into `grads`; returns the residual.
    fn accumulate_gradient(
        &self,
        input: &[f64],
        target: f64,
        scale: f64,
        hidden: &mut [f64],
        grads: &mut Gradients,
    ) -> f64 {
        let residual = self.forward_into(input, hidden) - target;
        let d_out = 2.0 * residual * scale;
        grads.bias_out += d_out;
        for (j, &z) in hidden.iter().enumerate().take(self.hidden_units) {
            if z > 0.0 {
                grads.weights_out[j] += d_out * z;
                let d_hidden = d_out * self.weights_out[j];
                grads.bias_hidden[j] += d_hidden;
                for (i, &x) in input.iter().enumerate() {
                    grads.weights_hidden[i * self.hidden_units + j] += d_hidden * x;
                }
            }
        }
        residual
    }

    /// Gradient of the squared error `(forward(input) − target)²` with
    /// respect to every parameter.
    pub fn gradient(&self, input: &[f64], target: f64) -> Result<Gradients> {
        self.check_input(input)?;
        if !target.is_finite() {
            return Err(Error::input("target is not finite"));
        }
        let mut hidden = vec![0.0; self.hidden_units];
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradient(input, target, 1.0, &mut hidden, &mut grads);
        Ok(grads)
    }

    /// Coefficient of determination of the network on `samples`.
    pub fn r2_score(&self, samples: &[Sample]) -> Result<f64> {
        for s in samples {
            self.check_input(&s.input)?;
        }
        let refs: Vec<&Sample> = samples.iter().collect();
        Ok(self.r2_of(&refs))
    }

    fn r2_of(&self, samples: &[&Sample]) -> f64 {
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.target).sum::<f64>() / n;
        let mut hidden = vec![0.0; self.hidden_units];
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for s in samples {
            let r = self.forward_into(&s.input, &mut hidden) - s.target;
            ss_res += r * r;
            ss_tot += (s.target - mean).powi(2);
        }
        r2_from_sums(ss_res, ss_tot, n)
    }

    /// Trains in place. Deterministic in `(self, samples, cfg)`.
    pub fn train(&mut self, samples: &[Sample], cfg: &NetworkConfig) -> Result<TrainReport> {
        cfg.validate()?;
        if cfg.input_dim != self.input_dim {
            return Err(Error::config(
                "network.input_dim",
                format!(
                    "configured {} but network has {}",
                    cfg.input_dim, self.input_dim
                ),
            ));
        }
        for s in samples {
            self.check_input(&s.input)?;
            if !s.target.is_finite() {
                return Err(Error::input("training target is not finite"));
            }
        }
        let n_val = (samples.len() as f64 * cfg.validation_fraction).floor() as usize;
        if samples.len() < 10 || n_val == 0 || n_val >= samples.len() {
            return Err(Error::config(
                "network.validation_fraction",
                format!(
                    "{} samples cannot be split into non-empty training and validation folds",
                    samples.len()
                ),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let (val_idx, train_idx) = order.split_at(n_val);
        let validation: Vec<&Sample> = val_idx.iter().map(|&i| &samples[i]).collect();
        let mut train_idx = train_idx.to_vec();

        let mut hidden = vec![0.0; self.hidden_units];
        let mut grads = Gradients::zeros_like(self);
        let mut velocity = Gradients::zeros_like(self);

        let mut lr = cfg.learning_rate_init;
        let mut best = f64::NEG_INFINITY;
        let mut stale = 0usize;
        let mut learning_rates = Vec::new();
        let mut validation_scores = Vec::new();

        for epoch in 1..=cfg.max_epochs {
            train_idx.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in train_idx.chunks(cfg.batch_size) {
                grads.clear();
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let s = &samples[i];
                    let r = self.accumulate_gradient(
                        &s.input,
                        s.target,
                        scale,
                        &mut hidden,
                        &mut grads,
                    );
                    epoch_loss += r * r;
                }
                self.step(&grads, &mut velocity, lr, cfg.momentum);
            }
            if !epoch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: "training loss is not finite".into(),
                });
            }
            if !self.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: "parameters became non-finite".into(),
                });
            }

            let score = self.r2_of(&validation);
            learning_rates.push(lr);
            validation_scores.push(score);
            let report = |stopped_by| TrainReport {
                epochs_run: epoch,
                final_validation_score: score,
                stopped_by,
                learning_rates: learning_rates.clone(),
                validation_scores: validation_scores.clone(),
            };

            if score >= cfg.accuracy_threshold {
                return Ok(report(StopReason::ThresholdReached));
            }
            if score > best + cfg.improvement_tol {
                best = score;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience_epochs {
                    lr *= cfg.lr_decay_factor;
                    stale = 0;
                    if lr < cfg.min_learning_rate {
                        return Ok(report(StopReason::LrFloor));
                    }
                }
            }
            if epoch == cfg.max_epochs {
                return Ok(report(StopReason::MaxEpochs));
            }
        }
        unreachable!("max_epochs >= 1 is validated")
    }

    fn step(&mut self, grads: &Gradients, velocity: &mut Gradients, lr: f64, momentum: f64) {
        fn update(params: &mut [f64], grads: &[f64], vel: &mut [f64], lr: f64, momentum: f64) {
            for ((p, &g), v) in params.iter_mut().zip(grads).zip(vel.iter_mut()) {
                *v = momentum * *v - lr * g;
                *p += *v;
            }
        }
        update(
            &mut self.weights_hidden,
            &grads.weights_hidden,
            &mut velocity.weights_hidden,
            lr,
            momentum,
        );
        update(
            &mut self.bias_hidden,
            &grads.bias_hidden,
            &mut velocity.bias_hidden,
            lr,
            momentum,
        );
        update(
            &mut self.weights_out,
            &grads.weights_out,
            &mut velocity.weights_out,
            lr,
            momentum,
        );
        velocity.bias_out = momentum * velocity.bias_out - lr * grads.bias_out;
        self.bias_out += velocity.bias_out;
    }

    /// Text dump: one header line with dimensions, then the hidden weight
    /// matrix row by row, the hidden biases, the output weights and the
    /// output bias. Values use Rust's shortest round-trip float formatting.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{DUMP_MAGIC} input_dim={} hidden_units={}",
            self.input_dim, self.hidden_units
        );
        let line = |vals: &[f64]| {
            vals.iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for row in self.weights_hidden.chunks(self.hidden_units) {
            let _ = writeln!(out, "{}", line(row));
        }
        let _ = writeln!(out, "{}", line(&self.bias_hidden));
        let _ = writeln!(out, "{}", line(&self.weights_out));
        let _ = writeln!(out, "{:?}", self.bias_out);
        out
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty network dump".into()))?;
        let rest = header
            .strip_prefix(DUMP_MAGIC)
            .ok_or_else(|| Error::Parse(format!("unrecognised dump header `{header}`")))?;
        let mut input_dim = None;
        let mut hidden_units = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("input_dim", v)) => input_dim = v.parse::<usize>().ok(),
                Some(("hidden_units", v)) => hidden_units = v.parse::<usize>().ok(),
                _ => return Err(Error::Parse(format!("unknown header field `{field}`"))),
            }
        }
        let (Some(input_dim), Some(hidden_units)) = (input_dim, hidden_units) else {
            return Err(Error::Parse("dump header lacks dimensions".into()));
        };
        if input_dim == 0 || hidden_units == 0 {
            return Err(Error::Parse("dump dimensions must be at least 1".into()));
        }
        let mut row = |expected: usize| -> Result<Vec<f64>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated network dump".into()))?;
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad number `{t}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != expected {
                return Err(Error::Parse(format!(
                    "expected {expected} values per row, found {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };
        let mut net = Network::zeros(input_dim, hidden_units);
        for i in 0..input_dim {
            let r = row(hidden_units)?;
            net.weights_hidden[i * hidden_units..(i + 1) * hidden_units].copy_from_slice(&r);
        }
        net.bias_hidden = row(hidden_units)?;
        net.weights_out = row(hidden_units)?;
        net.bias_out = row(1)?[0];
        Ok(net)
    }
}

/// R² with the zero-variance convention: a constant target scores 1 when
/// the fit is essentially exact and 0 otherwise.
pub fn r2_from_sums(ss_res: f64, ss_tot: f64, n: f64) -> f64 {
    if ss_tot / n < 1e-12 {
        if ss_res / n < 1e-8 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}
