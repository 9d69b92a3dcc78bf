//! Analytic control gradients of transfer-probability objectives.
//!
//! For one member the objective is `J = |⟨target|U(T)|ψ_0⟩|²`. Its
//! functional derivative with respect to channel `m` at time `t` is
//!
//! ```text
//! 2 Im( ⟨ψ(T)|target⟩ ⟨target| U(T) U†(t) g_u H_m U(t) |ψ_0⟩ )
//! ```
//!
//! On a piecewise-constant grid we report, for each slice, the average of
//! that density over the slice. This equals the exact partial derivative
//! `∂J/∂u_{m,q}` divided by `dt`; it is computed from the slice
//! eigendecomposition via the divided-difference form of the derivative of
//! the matrix exponential, so it agrees with finite differences to rounding
//! rather than to `O(dt)`.
//!
//! Because the field is a density, the learning update `u ← u + η ∇J`
//! carries no `dt` factor, and a central difference of `J` on slice `q`
//! must be compared against `dt · ∇J[m, q]`.

use rayon::prelude::*;

use num_complex::Complex64 as C64;

use crate::dynamics::{
    propagate, validate_problem, ControlStrategy, HamiltonianModel, PropagatorCache, QuantumState, TimeGrid,
};
use crate::ensemble::{MemberParams, TrainingSet};
use crate::error::{QecError, Result};
use crate::linalg::{self, idx};

/// `∂J/∂u_m` per slice, laid out like [`ControlStrategy`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    channels: usize,
    slices: usize,
    values: Vec<f64>,
}

impl GradientField {
    pub fn zeros(channels: usize, slices: usize) -> Self {
        Self {
            channels,
            slices,
            values: vec![0.0; channels * slices],
        }
    }

    pub(crate) fn from_values(channels: usize, slices: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), channels * slices);
        Self {
            channels,
            slices,
            values,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn get(&self, m: usize, q: usize) -> f64 {
        self.values[m * self.slices + q]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            channels: self.channels,
            slices: self.slices,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// `u + step · self`.
    pub fn ascend(&self, u: &ControlStrategy, step: f64) -> Result<ControlStrategy> {
        if u.channels() != self.channels || u.slices() != self.slices {
            return Err(QecError::Shape {
                what: "gradient/control size",
                expected: self.values.len(),
                found: u.values().len(),
            });
        }
        let mut next = u.clone();
        for (x, g) in next.values_mut().iter_mut().zip(&self.values) {
            *x += step * g;
        }
        Ok(next)
    }
}

/// Writes the slice-averaged gradient of `|⟨target|ψ(T)⟩|²` into `out`
/// (channel-major, `M·Q` entries) and returns the objective value.
pub(crate) fn gradient_from_cache(
    cache: &PropagatorCache,
    model: &HamiltonianModel,
    initial: &[C64],
    target: &[C64],
    out: &mut [f64],
) -> f64 {
    let d = cache.dim();
    let slices = cache.slices();
    let dt = cache.dt();
    let gain = cache.control_gain();
    let zero = C64::new(0.0, 0.0);

    let mut psi_t = vec![zero; d];
    linalg::matvec(cache.cumulative_raw(slices), initial, d, &mut psi_t);
    let overlap = linalg::inner(target, &psi_t);
    let objective = overlap.norm_sqr();

    // λ = U(T)† |target⟩, so ⟨target|U(T)U†(t_q) = (U(t_q) λ)†.
    let mut lambda = vec![zero; d];
    linalg::adjoint_matvec(cache.cumulative_raw(slices), target, d, &mut lambda);

    let mut psi = vec![zero; d];
    let mut chi = vec![zero; d];
    let mut a = vec![zero; d];
    let mut b = vec![zero; d];
    let mut hv = vec![zero; d * d];

    for q in 0..slices {
        linalg::matvec(cache.cumulative_raw(q), initial, d, &mut psi);
        linalg::matvec(cache.cumulative_raw(q + 1), &lambda, d, &mut chi);
        let (vals, vecs) = cache.eigen_raw(q);
        linalg::adjoint_matvec(vecs, &chi, d, &mut a);
        linalg::adjoint_matvec(vecs, &psi, d, &mut b);

        for (m, op) in model.controls().iter().enumerate() {
            // hv = H_m V
            linalg::matmul(op.matrix().as_slice(), vecs, d, &mut hv);
            let mut d_overlap = zero;
            for k in 0..d {
                for j in 0..d {
                    // (V† H_m V)[j, k]
                    let mut elem = zero;
                    for i in 0..d {
                        elem += vecs[idx(i, j, d)].conj() * hv[idx(i, k, d)];
                    }
                    let dd = linalg::exp_divided_difference(vals[j], vals[k], dt);
                    d_overlap += a[j].conj() * elem * dd * b[k];
                }
            }
            out[m * slices + q] = 2.0 * (overlap.conj() * d_overlap * gain).re / dt;
        }
    }
    objective
}

fn check_target(target: &QuantumState, dim: usize) -> Result<()> {
    if target.dim() != dim {
        return Err(QecError::Shape {
            what: "target dimension",
            expected: dim,
            found: target.dim(),
        });
    }
    let norm = target.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(QecError::NotNormalized { norm });
    }
    Ok(())
}

/// Gradient of one member's transfer probability `|⟨target|ψ(T)⟩|²`.
pub fn fidelity_gradient(
    model: &HamiltonianModel,
    member: &MemberParams,
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
    target: &QuantumState,
) -> Result<GradientField> {
    check_target(target, model.dim())?;
    let prop = propagate(model, member, u, grid, initial, false)?;
    let mut values = vec![0.0; u.channels() * u.slices()];
    gradient_from_cache(
        &prop.cache,
        model,
        initial.amplitudes(),
        target.amplitudes(),
        &mut values,
    );
    Ok(GradientField::from_values(u.channels(), u.slices(), values))
}

/// One member's transfer probability `|⟨target|ψ(T)⟩|²`.
pub fn member_objective(
    model: &HamiltonianModel,
    member: &MemberParams,
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
    target: &QuantumState,
) -> Result<f64> {
    check_target(target, model.dim())?;
    let prop = propagate(model, member, u, grid, initial, false)?;
    Ok(prop.final_state.inner(target)?.norm_sqr())
}

/// The model of class `k`: either one shared model or one per class.
pub(crate) fn model_for(models: &[HamiltonianModel], k: usize) -> &HamiltonianModel {
    if models.len() == 1 {
        &models[0]
    } else {
        &models[k]
    }
}

pub(crate) fn validate_ensemble(
    models: &[HamiltonianModel],
    training: &TrainingSet,
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
    targets: &[QuantumState],
    weights: &[f64],
) -> Result<()> {
    let k = training.num_classes();
    if models.is_empty() || (models.len() != 1 && models.len() != k) {
        return Err(QecError::Shape {
            what: "model count (1 or one per class)",
            expected: k,
            found: models.len(),
        });
    }
    for (what, n) in [("target count", targets.len()), ("weight count", weights.len())] {
        if n != k {
            return Err(QecError::Shape {
                what,
                expected: k,
                found: n,
            });
        }
    }
    if let Some(empty) = training.first_empty_class() {
        return Err(QecError::EmptyClass(training.classes()[empty].0.clone()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(QecError::invalid("class weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(QecError::invalid(format!("class weights sum to {total}, not 1")));
    }
    for c in 0..k {
        let model = model_for(models, c);
        validate_problem(model, u, grid, initial)?;
        check_target(&targets[c], model.dim())?;
    }
    Ok(())
}

/// Reusable per-member buffers for repeated ensemble evaluations.
#[derive(Debug, Default)]
pub(crate) struct EnsembleWorkspace {
    caches: Vec<PropagatorCache>,
    grads: Vec<Vec<f64>>,
    objectives: Vec<f64>,
}

/// Result of one ensemble forward/backward pass.
#[derive(Debug, Clone)]
pub(crate) struct EnsembleEvaluation {
    pub objective: f64,
    pub per_class: Vec<f64>,
    pub gradient: GradientField,
}

impl EnsembleWorkspace {
    /// Evaluates `J_N` and its gradient. Members run in parallel; the
    /// reduction always proceeds in class order, then member order.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn evaluate(
        &mut self,
        models: &[HamiltonianModel],
        training: &TrainingSet,
        u: &ControlStrategy,
        grid: &TimeGrid,
        initial: &QuantumState,
        targets: &[QuantumState],
        weights: &[f64],
    ) -> EnsembleEvaluation {
        let n = training.len();
        let size = u.channels() * u.slices();
        self.caches.resize_with(n, PropagatorCache::default);
        self.grads.resize_with(n, Vec::new);
        self.objectives.resize(n, 0.0);

        let jobs: Vec<(usize, usize)> = (0..training.num_classes())
            .flat_map(|c| training.class_range(c).map(move |i| (c, i)))
            .collect();

        self.caches
            .par_iter_mut()
            .zip(self.grads.par_iter_mut())
            .zip(self.objectives.par_iter_mut())
            .zip(jobs.par_iter())
            .for_each(|(((cache, grad), objective), &(class, i))| {
                let model = model_for(models, class);
                cache.fill(model, &training.members()[i], u, grid);
                grad.resize(size, 0.0);
                *objective = gradient_from_cache(
                    cache,
                    model,
                    initial.amplitudes(),
                    targets[class].amplitudes(),
                    grad,
                );
            });

        let mut total = vec![0.0; size];
        let mut class_sum = vec![0.0; size];
        let mut per_class = Vec::with_capacity(training.num_classes());
        let mut objective = 0.0;
        for (c, &w) in weights.iter().enumerate() {
            let range = training.class_range(c);
            let count = range.len() as f64;
            class_sum.iter_mut().for_each(|x| *x = 0.0);
            let mut j_sum = 0.0;
            for i in range {
                j_sum += self.objectives[i];
                for (s, g) in class_sum.iter_mut().zip(&self.grads[i]) {
                    *s += g;
                }
            }
            let scale = w / count;
            for (t, s) in total.iter_mut().zip(&class_sum) {
                *t += scale * s;
            }
            let j_class = j_sum / count;
            per_class.push(j_class);
            objective += w * j_class;
        }

        EnsembleEvaluation {
            objective,
            per_class,
            gradient: GradientField::from_values(u.channels(), u.slices(), total),
        }
    }
}

/// Gradient of `J_N = Σ_c w_c · mean_{members of c} |⟨target_c|ψ(T)⟩|²`.
///
/// `models` holds either one model shared by all classes or one per class.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_gradient(
    models: &[HamiltonianModel],
    training: &TrainingSet,
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
    targets: &[QuantumState],
    weights: &[f64],
) -> Result<GradientField> {
    validate_ensemble(models, training, u, grid, initial, targets, weights)?;
    let mut ws = EnsembleWorkspace::default();
    Ok(ws
        .evaluate(models, training, u, grid, initial, targets, weights)
        .gradient)
}

/// `J_N` and its per-class means, by plain propagation.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_objective(
    models: &[HamiltonianModel],
    training: &TrainingSet,
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
    targets: &[QuantumState],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    validate_ensemble(models, training, u, grid, initial, targets, weights)?;
    let mut per_class = Vec::with_capacity(training.num_classes());
    let mut total = 0.0;
    for (c, &w) in weights.iter().enumerate() {
        let model = model_for(models, c);
        let members = training.class_members(c);
        let mut sum = 0.0;
        for m in members {
            sum += member_objective(model, m, u, grid, initial, &targets[c])?;
        }
        let mean = sum / members.len() as f64;
        per_class.push(mean);
        total += w * mean;
    }
    Ok((total, per_class))
}

/// Central differences `(J(u + δ e_mq) - J(u - δ e_mq)) / 2δ` for every
/// entry. The result is a plain partial derivative (no `1/dt` scaling).
pub fn finite_difference_gradient<F>(objective: F, u: &ControlStrategy, delta: f64) -> Result<GradientField>
where
    F: Fn(&ControlStrategy) -> f64,
{
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(QecError::invalid(format!(
            "finite-difference step must be positive, got {delta}"
        )));
    }
    let mut work = u.clone();
    let mut values = Vec::with_capacity(u.values().len());
    for m in 0..u.channels() {
        for q in 0..u.slices() {
            let base = u.get(m, q);
            work.set(m, q, base + delta);
            let plus = objective(&work);
            work.set(m, q, base - delta);
            let minus = objective(&work);
            work.set(m, q, base);
            values.push((plus - minus) / (2.0 * delta));
        }
    }
    Ok(GradientField::from_values(u.channels(), u.slices(), values))
}
