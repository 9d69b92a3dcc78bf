//! Mode runners. Everything is computed in memory first; files are written
//! only after the whole run succeeded.

use std::path::{Path, PathBuf};

use qec_core::ensemble::draw_with_stream;
use qec_core::evaluation::{classification_accuracy_with, EvaluationOptions};
use qec_core::{
    bloch_trajectories, bloch_vector, build_training_set, discriminate, fidelity, pareto_sweep, propagate,
    ControlStrategy, DistributionSpec, EvaluationReport, LearnResult, MemberParams, ParetoBase, ParetoPoint,
    RateSchedule, TrainingSet,
};
use serde::Serialize;

use crate::config::{Experiment, Mode, SystemKind};
use crate::error::CliError;
use crate::output::{export_bloch, export_controls, export_history, export_sweep, write_artifacts, Artifact};

pub const CONTROL_CSV: &str = "control.csv";
pub const HISTORY_CSV: &str = "history.csv";
pub const REPORT_JSON: &str = "report.json";
pub const BLOCH_CSV: &str = "bloch.csv";
pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningSummary {
    pub eta: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub max_iters: usize,
    pub iterations_used: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub final_per_class: Vec<f64>,
    pub max_control_amplitude: f64,
}

/// Final state of one named member under the run's control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberOutcome {
    pub label: String,
    pub eps0: f64,
    pub epsu: f64,
    /// `|⟨target|ψ(T)⟩|²` for the member's class target.
    pub transfer: f64,
    /// `|c_k(T)|²` for every level.
    pub populations: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bloch_final: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub system: SystemKind,
    pub dimension: usize,
    pub horizon: f64,
    pub slices: usize,
    pub classes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning: Option<LearningSummary>,
    /// Discrimination members, or each class's mean member.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<MemberOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<ParetoPoint>>,
}

/// Results of one run, before or after writing.
#[derive(Debug, Clone)]
pub struct OutputBundle {
    pub dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub report: RunReport,
    pub learn: Option<LearnResult>,
    pub control: Option<ControlStrategy>,
}

impl OutputBundle {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    /// Writes all artifacts and the manifest into `dir`.
    pub fn write(&self) -> Result<Vec<PathBuf>, CliError> {
        write_artifacts(&self.dir, &self.artifacts)
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        write_artifacts(dir, &self.artifacts)
    }
}

/// Runs a validated experiment on the current rayon pool.
pub fn execute(exp: &Experiment) -> Result<OutputBundle, CliError> {
    let mut report = RunReport {
        mode: exp.mode,
        system: exp.system,
        dimension: exp.model.dim(),
        horizon: exp.grid.horizon(),
        slices: exp.grid.slices(),
        classes: exp.classes.iter().map(|c| c.label.as_str().to_string()).collect(),
        learning: None,
        members: Vec::new(),
        evaluation: None,
        truncated: None,
        sweep: None,
    };
    let mut artifacts = Vec::new();
    let mut learn = None;

    let control = match exp.mode {
        Mode::Pareto => {
            let sweep = run_pareto(exp)?;
            artifacts.push(Artifact {
                name: SWEEP_CSV.into(),
                bytes: export_sweep(&sweep),
            });
            report.sweep = Some(sweep);
            None
        }
        Mode::Discriminate | Mode::TrainBinary | Mode::TrainMulticlass => {
            let result = if exp.mode == Mode::Discriminate {
                run_discrimination(exp)?
            } else {
                run_training(exp)?
            };
            artifacts.push(Artifact {
                name: CONTROL_CSV.into(),
                bytes: export_controls(result.control(), &exp.grid),
            });
            artifacts.push(Artifact {
                name: HISTORY_CSV.into(),
                bytes: export_history(&result),
            });
            report.learning = Some(summarize(exp, &result));
            let u = result.control().clone();
            learn = Some(result);
            Some(u)
        }
        Mode::Evaluate | Mode::BlochExport => exp.control.clone(),
    };

    if let Some(u) = &control {
        let named = named_members(exp);
        report.members = outcomes(exp, &named, u)?;
        if matches!(
            exp.mode,
            Mode::TrainBinary | Mode::TrainMulticlass | Mode::Evaluate
        ) {
            report.evaluation = Some(evaluate(exp, u)?);
            report.truncated = Some(exp.eval.truncate_overlap);
        }
        if exp.bloch {
            let mut members = named;
            members.extend(bloch_samples(exp)?);
            let traj = bloch_trajectories(&exp.model, &members, u, &exp.grid, &exp.initial)?;
            artifacts.push(Artifact {
                name: BLOCH_CSV.into(),
                bytes: export_bloch(&traj),
            });
        }
    }

    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    artifacts.push(Artifact {
        name: REPORT_JSON.into(),
        bytes: json,
    });

    Ok(OutputBundle {
        dir: exp.out_dir.clone(),
        artifacts,
        report,
        learn,
        control,
    })
}

fn summarize(exp: &Experiment, r: &LearnResult) -> LearningSummary {
    let eta = match exp.learn.schedule {
        RateSchedule::Constant(eta) => eta,
        RateSchedule::Custom(_) => f64::NAN,
    };
    LearningSummary {
        eta,
        epsilon: exp.learn.stopping.epsilon,
        patience: exp.learn.stopping.patience,
        max_iters: exp.learn.stopping.max_iters,
        iterations_used: r.iterations_used,
        converged: r.converged,
        final_objective: r.final_objective(),
        final_per_class: r.final_per_class(),
        max_control_amplitude: r.control().max_abs(),
    }
}

fn run_discrimination(exp: &Experiment) -> Result<LearnResult, CliError> {
    let [a, b] = [&exp.classes[0], &exp.classes[1]];
    let ma = a.member.as_ref().expect("validated");
    let mb = b.member.as_ref().expect("validated");
    Ok(discriminate(
        &exp.model,
        ma,
        mb,
        &exp.grid,
        &exp.initial,
        &a.target,
        &b.target,
        &exp.learn,
    )?)
}

fn training_set(exp: &Experiment) -> Result<TrainingSet, CliError> {
    let specs: Vec<_> = exp
        .classes
        .iter()
        .map(|c| (c.law.expect("validated"), c.grid, c.label.clone()))
        .collect();
    Ok(build_training_set(&specs)?)
}

fn run_training(exp: &Experiment) -> Result<LearnResult, CliError> {
    let set = training_set(exp)?;
    let targets: Vec<_> = exp.classes.iter().map(|c| c.target.clone()).collect();
    Ok(qec_core::train_classifier(
        std::slice::from_ref(&exp.model),
        &set,
        &exp.grid,
        &exp.initial,
        &targets,
        &exp.learn,
    )?)
}

/// Laws used for testing, split at the mean midpoints when requested.
fn test_laws(exp: &Experiment) -> Result<Vec<DistributionSpec>, CliError> {
    let laws: Vec<DistributionSpec> = exp.classes.iter().map(|c| c.law.expect("validated")).collect();
    if exp.eval.truncate_overlap {
        let (a, b) = DistributionSpec::split_overlap(&laws[0], &laws[1])?;
        Ok(vec![a, b])
    } else {
        Ok(laws)
    }
}

fn evaluate(exp: &Experiment, u: &ControlStrategy) -> Result<EvaluationReport, CliError> {
    let laws = test_laws(exp)?;
    let targets: Vec<_> = exp.classes.iter().map(|c| c.target.clone()).collect();
    let options = EvaluationOptions {
        weights: Some(exp.weights.clone()),
        keep_samples: exp.eval.keep_samples,
        labels: Some(exp.classes.iter().map(|c| c.label.clone()).collect()),
    };
    Ok(classification_accuracy_with(
        std::slice::from_ref(&exp.model),
        &laws,
        u,
        &exp.grid,
        &exp.initial,
        &targets,
        exp.eval.n_test,
        exp.eval.seed,
        &options,
    )?)
}

/// Explicit members where given, otherwise each class's mean member.
fn named_members(exp: &Experiment) -> Vec<MemberParams> {
    exp.classes
        .iter()
        .filter_map(|c| {
            c.member.clone().or_else(|| {
                c.law
                    .map(|l| MemberParams::new(l.mean0, l.meanu, c.label.clone()))
            })
        })
        .collect()
}

fn outcomes(
    exp: &Experiment,
    members: &[MemberParams],
    u: &ControlStrategy,
) -> Result<Vec<MemberOutcome>, CliError> {
    members
        .iter()
        .map(|m| {
            let class = exp
                .classes
                .iter()
                .find(|c| c.label == m.label)
                .expect("members carry class labels");
            let state = propagate(&exp.model, m, u, &exp.grid, &exp.initial, false)?.final_state;
            let f = fidelity(&state, &class.target)?;
            Ok(MemberOutcome {
                label: m.label.as_str().to_string(),
                eps0: m.eps0,
                epsu: m.epsu,
                transfer: f * f,
                populations: (0..state.dim()).map(|k| state.population(k)).collect(),
                bloch_final: if state.dim() == 2 {
                    Some(bloch_vector(&state)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

/// The first `bloch_samples` test draws of each class.
fn bloch_samples(exp: &Experiment) -> Result<Vec<MemberParams>, CliError> {
    if exp.eval.bloch_samples == 0 {
        return Ok(Vec::new());
    }
    let laws = test_laws(exp)?;
    let mut out = Vec::new();
    for (c, (class, law)) in exp.classes.iter().zip(&laws).enumerate() {
        out.extend(draw_with_stream(
            law,
            exp.eval.bloch_samples,
            exp.eval.seed,
            c as u64,
            &class.label,
        )?);
    }
    Ok(out)
}

fn run_pareto(exp: &Experiment) -> Result<Vec<ParetoPoint>, CliError> {
    let p = exp.pareto.as_ref().expect("validated");
    let base = ParetoBase {
        model: exp.model.clone(),
        grid: exp.grid,
        samples: p.grid,
        center: p.center,
        initial: exp.initial.clone(),
        targets: p.targets.clone(),
        learn: exp.learn.clone(),
    };
    Ok(pareto_sweep(
        &base,
        &p.disp,
        &p.diff,
        exp.eval.n_test,
        exp.eval.seed,
    )?)
}
