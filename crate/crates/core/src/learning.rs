//! Gradient-flow learning of a shared control field.
//!
//! Both the two-system discrimination problem and ensemble classification
//! run the same loop: one forward pass per member fills its propagator
//! cache, the class-weighted gradient is reduced in a fixed order, and the
//! control takes a fixed-size step `u ← u + η ∇J`. Discrimination is the
//! special case of one member per class.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlStrategy, HamiltonianModel, QuantumState};
use crate::ensemble::{ClassLabel, MemberParams, TrainingSet};
use crate::error::{QecError, Result};
use crate::gradient::{validate_ensemble, EnsembleWorkspace};
use crate::TimeGrid;

/// Stop once `|J(u^{k+1}) - J(u^k)| < epsilon` for `patience` consecutive
/// steps, or after `max_iters` updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub epsilon: f64,
    pub patience: usize,
    pub max_iters: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            patience: 100,
            max_iters: 50_000,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(QecError::invalid("stopping epsilon must be positive"));
        }
        if self.patience == 0 || self.max_iters == 0 {
            return Err(QecError::invalid("patience and max_iters must be at least 1"));
        }
        Ok(())
    }

    /// True when the last `patience` deltas are all below `epsilon`.
    pub fn plateaued(&self, history: &[f64]) -> bool {
        if history.len() <= self.patience {
            return false;
        }
        history[history.len() - self.patience - 1..]
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() < self.epsilon)
    }
}

/// Whether learning should stop after recording `history` (one entry per
/// evaluated control, starting with the initial one).
pub fn stopping_check(history: &[f64], rule: &StoppingRule) -> bool {
    rule.plateaued(history) || history.len() > rule.max_iters
}

/// Step size as a function of the iteration index.
#[derive(Clone)]
pub enum RateSchedule {
    Constant(f64),
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl RateSchedule {
    pub fn rate(&self, k: usize) -> f64 {
        match self {
            RateSchedule::Constant(eta) => *eta,
            RateSchedule::Custom(f) => f(k),
        }
    }
}

impl fmt::Debug for RateSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateSchedule::Constant(eta) => write!(f, "Constant({eta})"),
            RateSchedule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnConfig {
    pub schedule: RateSchedule,
    /// One weight per class, nonnegative, summing to 1.
    pub weights: Vec<f64>,
    pub stopping: StoppingRule,
    pub initial_control: ControlStrategy,
}

impl LearnConfig {
    /// Constant step `eta`, equal class weights, default stopping rule and
    /// `sin t` initial control on every channel.
    pub fn new(eta: f64, classes: usize, channels: usize, grid: &TimeGrid) -> Self {
        Self {
            schedule: RateSchedule::Constant(eta),
            weights: vec![1.0 / classes as f64; classes],
            stopping: StoppingRule::default(),
            initial_control: ControlStrategy::sine(channels, grid),
        }
    }

    pub fn with_stopping(mut self, stopping: StoppingRule) -> Self {
        self.stopping = stopping;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.stopping.validate()?;
        if let RateSchedule::Constant(eta) = self.schedule {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(QecError::invalid(format!(
                    "learning rate must be positive, got {eta}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnResult {
    #[serde(skip)]
    pub optimal_control: Option<ControlStrategy>,
    /// `J(u^k)` for `k = 0..=iterations_used`.
    pub objective_history: Vec<f64>,
    /// Per-class mean transfer probability, indexed `[class][k]`.
    pub per_class_history: Vec<Vec<f64>>,
    pub classes: Vec<ClassLabel>,
    pub iterations_used: usize,
    /// True when the plateau criterion fired (not merely `max_iters`).
    pub converged: bool,
}

impl LearnResult {
    pub fn control(&self) -> &ControlStrategy {
        self.optimal_control
            .as_ref()
            .expect("learning always sets the optimal control")
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().expect("history is never empty")
    }

    pub fn final_per_class(&self) -> Vec<f64> {
        self.per_class_history
            .iter()
            .map(|h| *h.last().expect("history is never empty"))
            .collect()
    }
}

fn warn_if_not_orthogonal(targets: &[QuantumState]) {
    for (i, a) in targets.iter().enumerate() {
        for b in &targets[i + 1..] {
            if let Ok(ov) = a.inner(b) {
                if ov.norm() > 1e-9 {
                    eprintln!(
                        "warning: class targets are not orthogonal (|overlap| = {:.3e})",
                        ov.norm()
                    );
                    return;
                }
            }
        }
    }
}

/// Learns one control steering every class of `training` to its target.
///
/// `models` holds one model shared by all classes or one per class.
pub fn train_classifier(
    models: &[HamiltonianModel],
    training: &TrainingSet,
    grid: &TimeGrid,
    initial: &QuantumState,
    targets: &[QuantumState],
    config: &LearnConfig,
) -> Result<LearnResult> {
    config.validate()?;
    let mut u = config.initial_control.clone();
    validate_ensemble(models, training, &u, grid, initial, targets, &config.weights)?;
    warn_if_not_orthogonal(targets);

    let classes = training.num_classes();
    let mut ws = EnsembleWorkspace::default();
    let mut history = Vec::new();
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); classes];
    let mut converged = false;

    let mut k = 0;
    loop {
        let eval = ws.evaluate(models, training, &u, grid, initial, targets, &config.weights);
        if !eval.objective.is_finite() {
            return Err(QecError::Divergence { iteration: k });
        }
        history.push(eval.objective);
        for (h, j) in per_class.iter_mut().zip(&eval.per_class) {
            h.push(*j);
        }
        if config.stopping.plateaued(&history) {
            converged = true;
            break;
        }
        if k >= config.stopping.max_iters {
            break;
        }
        let eta = config.schedule.rate(k);
        u = eval.gradient.ascend(&u, eta)?;
        k += 1;
    }

    Ok(LearnResult {
        optimal_control: Some(u),
        objective_history: history,
        per_class_history: per_class,
        classes: training.classes().to_vec(),
        iterations_used: k,
        converged,
    })
}

/// Learns a control that sends member `a` to `target_a` and member `b` to
/// `target_b` simultaneously.
pub fn discriminate(
    model: &HamiltonianModel,
    member_a: &MemberParams,
    member_b: &MemberParams,
    grid: &TimeGrid,
    initial: &QuantumState,
    target_a: &QuantumState,
    target_b: &QuantumState,
    config: &LearnConfig,
) -> Result<LearnResult> {
    let a = ClassLabel::new("a");
    let b = ClassLabel::new("b");
    let training = TrainingSet::from_members(
        vec![a.clone(), b.clone()],
        vec![
            MemberParams::new(member_a.eps0, member_a.epsu, a),
            MemberParams::new(member_b.eps0, member_b.epsu, b),
        ],
    )?;
    train_classifier(
        std::slice::from_ref(model),
        &training,
        grid,
        initial,
        &[target_a.clone(), target_b.clone()],
        config,
    )
}
