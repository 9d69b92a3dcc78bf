//! Experiment description files.
//!
//! A `.cfg` file is TOML. Parsing rejects unknown keys; [`ExperimentConfig::resolve`]
//! then checks every value and builds the library objects, so a run never
//! starts (and never touches the output directory) with a bad config.

use std::path::{Path, PathBuf};

use qec_core::{
    ClassLabel, Complex64, ControlStrategy, DistributionSpec, HamiltonianModel, HermitianOperator,
    LearnConfig, MemberParams, QuantumState, SampleGridSpec, StoppingRule, TimeGrid, Truncation,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::read_control_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Discriminate,
    TrainBinary,
    TrainMulticlass,
    Evaluate,
    Pareto,
    BlochExport,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub system: SystemBlock,
    pub time: TimeBlock,
    /// Defaults to the first basis state.
    pub initial: Option<StateSpec>,
    #[serde(default)]
    pub classes: Vec<ClassBlock>,
    #[serde(default)]
    pub learn: LearnBlock,
    #[serde(default)]
    pub eval: EvalBlock,
    #[serde(default)]
    pub output: OutputBlock,
    pub pareto: Option<ParetoBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    SpinHalf,
    Lambda3,
    Explicit,
}

/// A complex matrix as rows of `[re, im]` pairs.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub kind: SystemKind,
    /// Optional consistency check against the operators.
    pub dimension: Option<usize>,
    pub free: Option<MatrixRows>,
    pub controls: Option<Vec<MatrixRows>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub horizon: f64,
    pub slices: usize,
}

/// Exactly one of the fields must be set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub basis: Option<usize>,
    pub uniform: Option<bool>,
    pub amplitudes: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassBlock {
    pub label: String,
    pub target: StateSpec,
    pub weight: Option<f64>,
    /// `[ε0, εu]` means.
    pub mean: Option<[f64; 2]>,
    /// `[3σ0, 3σu]`.
    pub three_sigma: Option<[f64; 2]>,
    /// Training grid points per axis `[N0, Nu]`.
    pub grid: Option<[usize; 2]>,
    pub truncate: Option<TruncateBlock>,
    /// A single member `[ε0, εu]`, used by discrimination.
    pub member: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncateBlock {
    pub lower: Option<[f64; 2]>,
    pub upper: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialControl {
    #[default]
    Sine,
    Zeros,
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnBlock {
    pub eta: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub max_iters: usize,
    pub initial_control: InitialControl,
    pub initial_control_file: Option<PathBuf>,
}

impl Default for LearnBlock {
    fn default() -> Self {
        let rule = StoppingRule::default();
        Self {
            eta: 0.2,
            epsilon: rule.epsilon,
            patience: rule.patience,
            max_iters: rule.max_iters,
            initial_control: InitialControl::Sine,
            initial_control_file: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    pub n_test: usize,
    pub seed: u64,
    pub keep_samples: bool,
    /// Truncate the two class laws at the midpoints of their means.
    pub truncate_overlap: bool,
    /// Control CSV for `evaluate` and `bloch-export`.
    pub control: Option<PathBuf>,
    /// Random test members per class added to the Bloch export.
    pub bloch_samples: usize,
}

impl Default for EvalBlock {
    fn default() -> Self {
        Self {
            n_test: 10_000,
            seed: 1,
            keep_samples: false,
            truncate_overlap: false,
            control: None,
            bloch_samples: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub bloch: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            bloch: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoBlock {
    pub disp: Vec<f64>,
    pub diff: Vec<f64>,
    #[serde(default = "default_center")]
    pub center: f64,
    #[serde(default = "default_pareto_grid")]
    pub grid: [usize; 2],
    pub targets: Option<[StateSpec; 2]>,
}

fn default_center() -> f64 {
    1.0
}

fn default_pareto_grid() -> [usize; 2] {
    [5, 5]
}

/// One class after validation.
#[derive(Debug, Clone)]
pub struct ResolvedClass {
    pub label: ClassLabel,
    pub target: QuantumState,
    pub law: Option<DistributionSpec>,
    pub grid: SampleGridSpec,
    pub member: Option<MemberParams>,
}

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub mode: Mode,
    pub system: SystemKind,
    pub model: HamiltonianModel,
    pub grid: TimeGrid,
    pub initial: QuantumState,
    pub classes: Vec<ResolvedClass>,
    pub weights: Vec<f64>,
    pub learn: LearnConfig,
    pub eval: EvalBlock,
    /// Control loaded for `evaluate` and `bloch-export`.
    pub control: Option<ControlStrategy>,
    pub out_dir: PathBuf,
    pub bloch: bool,
    pub pareto: Option<ResolvedPareto>,
}

#[derive(Debug, Clone)]
pub struct ResolvedPareto {
    pub disp: Vec<f64>,
    pub diff: Vec<f64>,
    pub center: f64,
    pub grid: SampleGridSpec,
    pub targets: [QuantumState; 2],
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn bad(key: impl Into<String>, msg: impl std::fmt::Display) -> CliError {
    CliError::Config {
        key: key.into(),
        message: msg.to_string(),
    }
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("must be a positive finite number, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            // Unknown and missing keys are named in the message itself.
            let location = match e.span() {
                Some(span) => format!("line {}", text[..span.start].matches('\n').count() + 1),
                None => "<document>".to_string(),
            };
            bad(location, e.message().trim())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Validates every value and builds the library objects.
    pub fn resolve(&self, overrides: &Overrides) -> Result<Experiment, CliError> {
        let model = self.build_model()?;
        let d = model.dim();
        let grid = TimeGrid::new(self.time.horizon, self.time.slices).map_err(|e| bad("time", e))?;
        let initial = match &self.initial {
            Some(spec) => resolve_state("initial", spec, d)?,
            None => basis("initial", d, 0)?,
        };

        let needs_classes = self.mode != Mode::Pareto;
        if needs_classes && self.classes.is_empty() {
            return Err(bad("classes", "at least one class is required"));
        }
        let classes = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| self.resolve_class(i, c, d))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].iter().any(|o| o.label == c.label) {
                return Err(bad(
                    format!("classes[{i}].label"),
                    format!("duplicate label `{}`", c.label),
                ));
            }
        }
        self.check_class_count(classes.len())?;
        let weights = self.resolve_weights()?;

        let learn = self.resolve_learn(&model, &grid, classes.len().max(2), &weights)?;

        let mut eval = self.eval.clone();
        if let Some(seed) = overrides.seed {
            eval.seed = seed;
        }
        if matches!(
            self.mode,
            Mode::TrainBinary | Mode::TrainMulticlass | Mode::Evaluate | Mode::Pareto
        ) && eval.n_test == 0
        {
            return Err(bad("eval.n_test", "must be at least 1"));
        }
        if eval.truncate_overlap && (classes.len() != 2 || classes.iter().any(|c| c.law.is_none())) {
            return Err(bad(
                "eval.truncate_overlap",
                "needs exactly two classes with distributions",
            ));
        }
        if eval.bloch_samples > 0 && classes.iter().any(|c| c.law.is_none()) {
            return Err(bad(
                "eval.bloch_samples",
                "every class needs mean and three_sigma to draw samples",
            ));
        }

        let control = match self.mode {
            Mode::Evaluate | Mode::BlochExport => {
                let path = eval
                    .control
                    .as_ref()
                    .ok_or_else(|| bad("eval.control", "required in this mode"))?;
                Some(load_control("eval.control", path, &model, &grid)?)
            }
            _ => None,
        };

        let bloch = self.output.bloch || self.mode == Mode::BlochExport;
        if bloch && d != 2 {
            return Err(bad(
                "output.bloch",
                format!("Bloch export needs a two-level system, got dimension {d}"),
            ));
        }

        let pareto = if self.mode == Mode::Pareto {
            Some(self.resolve_pareto(d)?)
        } else {
            None
        };

        Ok(Experiment {
            mode: self.mode,
            system: self.system.kind,
            model,
            grid,
            initial,
            classes,
            weights,
            learn,
            eval,
            control,
            out_dir: overrides.out.clone().unwrap_or_else(|| self.output.dir.clone()),
            bloch,
            pareto,
        })
    }

    fn build_model(&self) -> Result<HamiltonianModel, CliError> {
        let s = &self.system;
        let model = match s.kind {
            SystemKind::SpinHalf | SystemKind::Lambda3 => {
                if s.free.is_some() || s.controls.is_some() {
                    return Err(bad(
                        "system.free",
                        "operators are only accepted with kind = \"explicit\"",
                    ));
                }
                if s.kind == SystemKind::SpinHalf {
                    HamiltonianModel::spin_half()
                } else {
                    HamiltonianModel::lambda_three_level()
                }
            }
            SystemKind::Explicit => {
                let free = s
                    .free
                    .as_ref()
                    .ok_or_else(|| bad("system.free", "required with kind = \"explicit\""))?;
                let controls = s
                    .controls
                    .as_ref()
                    .ok_or_else(|| bad("system.controls", "required with kind = \"explicit\""))?;
                let free = operator("system.free", free)?;
                let controls = controls
                    .iter()
                    .enumerate()
                    .map(|(i, c)| operator(&format!("system.controls[{i}]"), c))
                    .collect::<Result<Vec<_>, _>>()?;
                HamiltonianModel::new(free, controls).map_err(|e| bad("system.controls", e))?
            }
        };
        if let Some(dim) = s.dimension {
            if dim != model.dim() {
                return Err(bad(
                    "system.dimension",
                    format!("operators have dimension {}, not {dim}", model.dim()),
                ));
            }
        }
        Ok(model)
    }

    fn check_class_count(&self, k: usize) -> Result<(), CliError> {
        let ok = match self.mode {
            Mode::Discriminate | Mode::TrainBinary => k == 2,
            Mode::TrainMulticlass | Mode::Evaluate => k >= 2,
            Mode::BlochExport => k >= 1,
            Mode::Pareto => k == 0,
        };
        if ok {
            return Ok(());
        }
        let want = match self.mode {
            Mode::Discriminate | Mode::TrainBinary => "exactly two classes",
            Mode::Pareto => "no classes (the sweep builds its own)",
            Mode::BlochExport => "at least one class",
            _ => "at least two classes",
        };
        Err(bad("classes", format!("mode needs {want}, found {k}")))
    }

    fn resolve_class(&self, i: usize, c: &ClassBlock, d: usize) -> Result<ResolvedClass, CliError> {
        let key = |k: &str| format!("classes[{i}].{k}");
        if c.label.trim().is_empty() {
            return Err(bad(key("label"), "must not be empty"));
        }
        let target = resolve_state(&key("target"), &c.target, d)?;

        let uses_member =
            matches!(self.mode, Mode::Discriminate) || (self.mode == Mode::BlochExport && c.member.is_some());
        let member = match (uses_member, c.member) {
            (true, Some([e0, eu])) => {
                positive(&key("member"), e0)?;
                positive(&key("member"), eu)?;
                Some(MemberParams::new(e0, eu, c.label.as_str()))
            }
            (true, None) => return Err(bad(key("member"), "required in discriminate mode")),
            (false, Some(_)) => {
                return Err(bad(
                    key("member"),
                    "only used by discriminate and bloch-export modes",
                ))
            }
            (false, None) => None,
        };

        let law = match (c.mean, c.three_sigma) {
            (Some(m), Some(s)) => {
                let law =
                    DistributionSpec::new(m[0], s[0], m[1], s[1]).map_err(|e| bad(key("three_sigma"), e))?;
                let law = match &c.truncate {
                    Some(t) => {
                        let lo = t.lower.unwrap_or([f64::NEG_INFINITY; 2]);
                        let hi = t.upper.unwrap_or([f64::INFINITY; 2]);
                        law.with_truncation(Truncation {
                            lower0: lo[0],
                            upper0: hi[0],
                            loweru: lo[1],
                            upperu: hi[1],
                        })
                        .map_err(|e| bad(key("truncate"), e))?
                    }
                    None => law,
                };
                Some(law)
            }
            (None, None) => {
                if c.truncate.is_some() {
                    return Err(bad(key("truncate"), "needs mean and three_sigma"));
                }
                None
            }
            (Some(_), None) => return Err(bad(key("three_sigma"), "required together with mean")),
            (None, Some(_)) => return Err(bad(key("mean"), "required together with three_sigma")),
        };
        let needs_law = match self.mode {
            Mode::TrainBinary | Mode::TrainMulticlass | Mode::Evaluate => true,
            Mode::BlochExport => member.is_none(),
            _ => false,
        };
        if needs_law && law.is_none() {
            return Err(bad(key("mean"), "mean and three_sigma are required in this mode"));
        }

        let default_n = if self.mode == Mode::TrainMulticlass { 3 } else { 5 };
        let [n0, nu] = c.grid.unwrap_or([default_n, default_n]);
        let grid = SampleGridSpec::new(n0, nu).map_err(|e| bad(key("grid"), e))?;

        Ok(ResolvedClass {
            label: ClassLabel::new(c.label.clone()),
            target,
            law,
            grid,
            member,
        })
    }

    fn resolve_weights(&self) -> Result<Vec<f64>, CliError> {
        let k = self.classes.len();
        if k == 0 {
            return Ok(vec![0.5, 0.5]);
        }
        let given: Vec<Option<f64>> = self.classes.iter().map(|c| c.weight).collect();
        if given.iter().all(Option::is_none) {
            return Ok(vec![1.0 / k as f64; k]);
        }
        let mut weights = Vec::with_capacity(k);
        for (i, w) in given.iter().enumerate() {
            let key = format!("classes[{i}].weight");
            let w = w.ok_or_else(|| bad(&key, "set on some classes but not this one"))?;
            weights.push(positive(&key, w)?);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(bad(
                "classes.weight",
                format!("weights must sum to 1, got {total}"),
            ));
        }
        Ok(weights)
    }

    fn resolve_learn(
        &self,
        model: &HamiltonianModel,
        grid: &TimeGrid,
        classes: usize,
        weights: &[f64],
    ) -> Result<LearnConfig, CliError> {
        let l = &self.learn;
        positive("learn.eta", l.eta)?;
        positive("learn.epsilon", l.epsilon)?;
        if l.patience == 0 {
            return Err(bad("learn.patience", "must be at least 1"));
        }
        if l.max_iters == 0 {
            return Err(bad("learn.max_iters", "must be at least 1"));
        }
        let initial = match (l.initial_control, &l.initial_control_file) {
            (InitialControl::Sine, None) => ControlStrategy::sine(model.channels(), grid),
            (InitialControl::Zeros, None) => ControlStrategy::zeros(model.channels(), grid.slices()),
            (InitialControl::File, Some(path)) => {
                load_control("learn.initial_control_file", path, model, grid)?
            }
            (InitialControl::File, None) => {
                return Err(bad(
                    "learn.initial_control_file",
                    "required with initial_control = \"file\"",
                ))
            }
            (_, Some(_)) => {
                return Err(bad(
                    "learn.initial_control_file",
                    "only used with initial_control = \"file\"",
                ))
            }
        };
        let mut config = LearnConfig::new(l.eta, classes, model.channels(), grid)
            .with_stopping(StoppingRule {
                epsilon: l.epsilon,
                patience: l.patience,
                max_iters: l.max_iters,
            })
            .with_weights(weights.to_vec());
        config.initial_control = initial;
        Ok(config)
    }

    fn resolve_pareto(&self, d: usize) -> Result<ResolvedPareto, CliError> {
        let p = self
            .pareto
            .as_ref()
            .ok_or_else(|| bad("pareto", "required in pareto mode"))?;
        if p.disp.is_empty() {
            return Err(bad("pareto.disp", "must not be empty"));
        }
        if p.diff.is_empty() {
            return Err(bad("pareto.diff", "must not be empty"));
        }
        for &v in &p.disp {
            positive("pareto.disp", v)?;
        }
        for &v in &p.diff {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad("pareto.diff", format!("must be nonnegative, got {v}")));
            }
        }
        positive("pareto.center", p.center)?;
        let grid = SampleGridSpec::new(p.grid[0], p.grid[1]).map_err(|e| bad("pareto.grid", e))?;
        let targets = match &p.targets {
            Some([a, b]) => [
                resolve_state("pareto.targets[0]", a, d)?,
                resolve_state("pareto.targets[1]", b, d)?,
            ],
            None => [basis("pareto.targets", d, 0)?, basis("pareto.targets", d, 1)?],
        };
        Ok(ResolvedPareto {
            disp: p.disp.clone(),
            diff: p.diff.clone(),
            center: p.center,
            grid,
            targets,
        })
    }
}

fn operator(key: &str, rows: &MatrixRows) -> Result<HermitianOperator, CliError> {
    let rows: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|r| r.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
        .collect();
    HermitianOperator::from_rows(&rows).map_err(|e| bad(key, e))
}

fn basis(key: &str, d: usize, k: usize) -> Result<QuantumState, CliError> {
    QuantumState::basis(d, k).map_err(|e| bad(key, e))
}

fn resolve_state(key: &str, spec: &StateSpec, d: usize) -> Result<QuantumState, CliError> {
    let set = [
        spec.basis.is_some(),
        spec.uniform.is_some(),
        spec.amplitudes.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if set != 1 {
        return Err(bad(key, "set exactly one of basis, uniform, amplitudes"));
    }
    if let Some(k) = spec.basis {
        return basis(key, d, k);
    }
    if let Some(u) = spec.uniform {
        if !u {
            return Err(bad(format!("{key}.uniform"), "only `true` is meaningful"));
        }
        return QuantumState::uniform(d).map_err(|e| bad(key, e));
    }
    let amps: Vec<Complex64> = spec
        .amplitudes
        .as_ref()
        .expect("counted above")
        .iter()
        .map(|&[re, im]| Complex64::new(re, im))
        .collect();
    if amps.len() != d {
        return Err(bad(
            format!("{key}.amplitudes"),
            format!("expected {d} amplitudes, found {}", amps.len()),
        ));
    }
    QuantumState::normalized(amps).map_err(|e| bad(format!("{key}.amplitudes"), e))
}

fn load_control(
    key: &str,
    path: &Path,
    model: &HamiltonianModel,
    grid: &TimeGrid,
) -> Result<ControlStrategy, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(key, format!("cannot read {}: {e}", path.display())))?;
    let (times, u) = read_control_csv(&text).map_err(|e| bad(key, format!("{}: {e}", path.display())))?;
    if u.channels() != model.channels() {
        return Err(bad(
            key,
            format!(
                "file has {} channels, the system has {}",
                u.channels(),
                model.channels()
            ),
        ));
    }
    if u.slices() != grid.slices() {
        return Err(bad(
            key,
            format!(
                "file has {} rows, the time grid has {} slices",
                u.slices(),
                grid.slices()
            ),
        ));
    }
    let tol = 1e-9 * grid.horizon().max(1.0);
    if let Some(q) = (0..grid.slices()).find(|&q| (times[q] - grid.start(q)).abs() > tol) {
        return Err(bad(
            key,
            format!("row {} has t = {}, expected {}", q + 1, times[q], grid.start(q)),
        ));
    }
    Ok(u)
}
