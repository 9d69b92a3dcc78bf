//! Scoring learned controls: fidelities, Monte Carlo classification
//! accuracy, Bloch trajectories and accuracy surfaces over class
//! dispersion and separation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64 as C64;

use crate::dynamics::{
    bloch_vector, propagate, validate_problem, ControlStrategy, HamiltonianModel, PropagatorCache,
    QuantumState, TimeGrid,
};
use crate::ensemble::{
    build_training_set, draw_with_stream, ClassLabel, DistributionSpec, MemberParams, SampleGridSpec,
};
use crate::error::{QecError, Result};
use crate::gradient::model_for;
use crate::learning::{train_classifier, LearnConfig};
use crate::linalg;

/// `|⟨state|target⟩|`.
pub fn fidelity(state: &QuantumState, target: &QuantumState) -> Result<f64> {
    Ok(state.inner(target)?.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classes: Vec<ClassLabel>,
    /// Mean of `F` per class.
    pub per_class_mean_fidelity: Vec<f64>,
    /// Mean of `F²` per class.
    pub per_class_mean_squared_fidelity: Vec<f64>,
    pub weights: Vec<f64>,
    /// `ζ = Σ_c w_c · mean(F²)`.
    pub accuracy: f64,
    /// Test members drawn per class.
    pub sample_count: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_samples: Option<Vec<Vec<f64>>>,
}

/// Knobs for [`classification_accuracy_with`].
#[derive(Debug, Clone, Default)]
pub struct EvaluationOptions {
    /// Class weights; equal weights when `None`.
    pub weights: Option<Vec<f64>>,
    /// Keep every sampled fidelity in the report.
    pub keep_samples: bool,
    pub labels: Option<Vec<ClassLabel>>,
}

fn final_state_into(
    cache: &mut PropagatorCache,
    model: &HamiltonianModel,
    member: &MemberParams,
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
) -> Vec<C64> {
    cache.fill(model, member, u, grid);
    let d = model.dim();
    let mut out = vec![C64::new(0.0, 0.0); d];
    linalg::matvec(
        cache.cumulative_raw(grid.slices()),
        initial.amplitudes(),
        d,
        &mut out,
    );
    out
}

/// Monte Carlo accuracy with `n_test` draws per class and equal weights.
#[allow(clippy::too_many_arguments)]
pub fn classification_accuracy(
    models: &[HamiltonianModel],
    class_dists: &[DistributionSpec],
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
    targets: &[QuantumState],
    n_test: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    classification_accuracy_with(
        models,
        class_dists,
        u,
        grid,
        initial,
        targets,
        n_test,
        seed,
        &EvaluationOptions::default(),
    )
}

/// As [`classification_accuracy`], with explicit weights and sample
/// retention. Class `c` draws from stream `c` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn classification_accuracy_with(
    models: &[HamiltonianModel],
    class_dists: &[DistributionSpec],
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
    targets: &[QuantumState],
    n_test: usize,
    seed: u64,
    options: &EvaluationOptions,
) -> Result<EvaluationReport> {
    let k = class_dists.len();
    if k == 0 {
        return Err(QecError::invalid("no classes to evaluate"));
    }
    if n_test == 0 {
        return Err(QecError::invalid("n_test must be at least 1"));
    }
    if models.is_empty() || (models.len() != 1 && models.len() != k) {
        return Err(QecError::Shape {
            what: "model count (1 or one per class)",
            expected: k,
            found: models.len(),
        });
    }
    if targets.len() != k {
        return Err(QecError::Shape {
            what: "target count",
            expected: k,
            found: targets.len(),
        });
    }
    let weights = options.weights.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]);
    if weights.len() != k {
        return Err(QecError::Shape {
            what: "weight count",
            expected: k,
            found: weights.len(),
        });
    }
    let labels = options.labels.clone().unwrap_or_else(|| {
        (0..k)
            .map(|c| ClassLabel::new(format!("class{}", c + 1)))
            .collect()
    });

    let mut mean_f = Vec::with_capacity(k);
    let mut mean_f2 = Vec::with_capacity(k);
    let mut kept = Vec::new();
    for c in 0..k {
        let model = model_for(models, c);
        validate_problem(model, u, grid, initial)?;
        if targets[c].dim() != model.dim() {
            return Err(QecError::Shape {
                what: "target dimension",
                expected: model.dim(),
                found: targets[c].dim(),
            });
        }
        let members = draw_with_stream(&class_dists[c], n_test, seed, c as u64, &labels[c])?;
        let target = targets[c].amplitudes();
        let fids: Vec<f64> = members
            .par_iter()
            .map_init(PropagatorCache::default, |cache, m| {
                let psi = final_state_into(cache, model, m, u, grid, initial);
                linalg::inner(&psi, target).norm()
            })
            .collect();
        let n = fids.len() as f64;
        mean_f.push(fids.iter().sum::<f64>() / n);
        mean_f2.push(fids.iter().map(|f| f * f).sum::<f64>() / n);
        if options.keep_samples {
            kept.push(fids);
        }
    }
    let accuracy = weights.iter().zip(&mean_f2).map(|(w, j)| w * j).sum();

    Ok(EvaluationReport {
        classes: labels,
        per_class_mean_fidelity: mean_f,
        per_class_mean_squared_fidelity: mean_f2,
        weights,
        accuracy,
        sample_count: n_test,
        seed,
        fidelity_samples: options.keep_samples.then_some(kept),
    })
}

/// One point of the accuracy surface over dispersion and class separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    /// Shared `3σ` of every parameter law.
    pub disp: f64,
    /// Mean separation, averaged over the two axes.
    pub diff: f64,
    /// `None` when training failed at this point.
    pub accuracy: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a binary sweep point shares.
#[derive(Debug, Clone)]
pub struct ParetoBase {
    pub model: HamiltonianModel,
    pub grid: TimeGrid,
    pub samples: SampleGridSpec,
    /// Means are placed at `center ∓ diff/2` on both axes.
    pub center: f64,
    pub initial: QuantumState,
    pub targets: [QuantumState; 2],
    pub learn: LearnConfig,
}

impl ParetoBase {
    /// Class laws for one `(disp, diff)` point.
    pub fn class_laws(&self, disp: f64, diff: f64) -> Result<[DistributionSpec; 2]> {
        Ok([
            DistributionSpec::symmetric(self.center - diff / 2.0, disp)?,
            DistributionSpec::symmetric(self.center + diff / 2.0, disp)?,
        ])
    }
}

/// Trains and evaluates a fresh classifier at every `(disp, diff)` pair,
/// in row-major order over `disp_values × diff_values`.
pub fn pareto_sweep(
    base: &ParetoBase,
    disp_values: &[f64],
    diff_values: &[f64],
    n_test: usize,
    seed: u64,
) -> Result<Vec<ParetoPoint>> {
    if disp_values.is_empty() || diff_values.is_empty() {
        return Err(QecError::invalid("pareto sweep needs nonempty grids"));
    }
    let pairs: Vec<(f64, f64)> = disp_values
        .iter()
        .flat_map(|&a| diff_values.iter().map(move |&b| (a, b)))
        .collect();
    Ok(pairs
        .par_iter()
        .map(
            |&(disp, diff)| match pareto_point(base, disp, diff, n_test, seed) {
                Ok(p) => p,
                Err(e) => ParetoPoint {
                    disp,
                    diff,
                    accuracy: None,
                    iterations: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect())
}

fn pareto_point(base: &ParetoBase, disp: f64, diff: f64, n_test: usize, seed: u64) -> Result<ParetoPoint> {
    if !(disp > 0.0) || !(diff >= 0.0) {
        return Err(QecError::invalid(format!(
            "need disp > 0 and diff ≥ 0, got ({disp}, {diff})"
        )));
    }
    let laws = base.class_laws(disp, diff)?;
    let labels = [ClassLabel::new("A"), ClassLabel::new("B")];
    let training = build_training_set(&[
        (laws[0], base.samples, labels[0].clone()),
        (laws[1], base.samples, labels[1].clone()),
    ])?;
    let models = std::slice::from_ref(&base.model);
    let result = train_classifier(
        models,
        &training,
        &base.grid,
        &base.initial,
        &base.targets,
        &base.learn,
    )?;
    let report = classification_accuracy(
        models,
        &laws,
        result.control(),
        &base.grid,
        &base.initial,
        &base.targets,
        n_test,
        seed,
    )?;
    Ok(ParetoPoint {
        disp,
        diff,
        accuracy: Some(report.accuracy),
        iterations: Some(result.iterations_used),
        converged: result.converged,
        error: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochTrajectory {
    pub member: MemberParams,
    /// Slice boundaries `t_0..=t_Q`.
    pub times: Vec<f64>,
    pub points: Vec<[f64; 3]>,
}

/// Bloch vectors of each member's state at every slice boundary.
pub fn bloch_trajectories(
    model: &HamiltonianModel,
    members: &[MemberParams],
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
) -> Result<Vec<BlochTrajectory>> {
    if model.dim() != 2 {
        return Err(QecError::UnsupportedDimension {
            expected: 2,
            found: model.dim(),
        });
    }
    let times = grid.boundaries();
    members
        .iter()
        .map(|m| {
            let prop = propagate(model, m, u, grid, initial, true)?;
            let points = prop
                .trajectory
                .expect("trajectory requested")
                .iter()
                .map(bloch_vector)
                .collect::<Result<Vec<_>>>()?;
            Ok(BlochTrajectory {
                member: m.clone(),
                times: times.clone(),
                points,
            })
        })
        .collect()
}
