//! Pure states, Hamiltonians and time-sliced unitary propagation.
//!
//! Controls are piecewise constant on a uniform grid, so each slice
//! propagator is the exact exponential `exp(-i H_q dt)`, obtained from a
//! Hermitian eigendecomposition of the slice Hamiltonian. The
//! eigendecomposition is kept in the [`PropagatorCache`] because the
//! gradient module differentiates through it.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ensemble::MemberParams;
use crate::error::{QecError, Result};
use crate::linalg;

const NORM_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;

/// A normalized pure state in a `d`-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<C64>,
}

impl QuantumState {
    /// Wraps `amplitudes`, rejecting vectors whose norm is not 1 within 1e-10.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(QecError::invalid("state must have at least one amplitude"));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(QecError::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(QecError::NotNormalized { norm });
        }
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        })
    }

    /// Computational basis vector `|k⟩` (zero-based).
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(QecError::Shape {
                what: "basis index",
                expected: dim,
                found: k,
            });
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[k] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    /// Equal superposition `(|0⟩ + |1⟩ + ...)/√d`.
    pub fn uniform(dim: usize) -> Result<Self> {
        Self::normalized(vec![C64::new(1.0, 0.0); dim])
    }

    /// `(|0⟩ + |1⟩)/√2`.
    pub fn plus() -> Self {
        Self {
            amplitudes: vec![C64::new(FRAC_1_SQRT_2, 0.0); 2],
        }
    }

    pub(crate) fn from_raw(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &QuantumState) -> Result<C64> {
        check_dim("state dimension", self.dim(), other.dim())?;
        Ok(linalg::inner(&self.amplitudes, &other.amplitudes))
    }

    /// Population `|c_k|²` of basis state `k`.
    pub fn population(&self, k: usize) -> f64 {
        self.amplitudes.get(k).map_or(0.0, |a| a.norm_sqr())
    }

    /// The same state multiplied by the global phase `e^{iθ}`.
    pub fn with_phase(&self, theta: f64) -> Self {
        let ph = C64::from_polar(1.0, theta);
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * ph).collect(),
        }
    }
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(QecError::Shape {
            what,
            expected,
            found,
        })
    }
}

/// A Hermitian matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(DMatrix<C64>);

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(QecError::Shape {
                what: "operator columns",
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let d = matrix.nrows();
        let deviation = linalg::hermitian_deviation(matrix.as_slice(), d);
        if !(deviation <= HERMITIAN_TOL) {
            return Err(QecError::NotHermitian { deviation });
        }
        Ok(Self(matrix))
    }

    /// Builds from row-major real and imaginary parts.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            check_dim("operator row length", d, r.len())?;
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let d = entries.len();
        Self(DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(entries[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn pauli_x() -> Self {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        Self(DMatrix::from_row_slice(2, 2, &[z, o, o, z]))
    }

    pub fn pauli_y() -> Self {
        let z = C64::new(0.0, 0.0);
        let i = C64::new(0.0, 1.0);
        Self(DMatrix::from_row_slice(2, 2, &[z, -i, i, z]))
    }

    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub(crate) fn as_slice(&self) -> &[C64] {
        self.0.as_slice()
    }
}

/// A unitary matrix. Instances produced by this crate come from exact
/// exponentials and products thereof; [`UnitaryOperator::new`] validates
/// externally supplied matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator(DMatrix<C64>);

impl UnitaryOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(QecError::Shape {
                what: "operator columns",
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let op = Self(matrix);
        let err = op.unitarity_error();
        if !(err <= UNITARY_TOL) {
            return Err(QecError::invalid(format!(
                "matrix is not unitary (max |U†U - I| = {err:e})"
            )));
        }
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    fn from_slice(d: usize, data: &[C64]) -> Self {
        Self(DMatrix::from_column_slice(d, d, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    /// `max |U†U - I|` over entries.
    pub fn unitarity_error(&self) -> f64 {
        linalg::unitarity_deviation(self.0.as_slice(), self.dim())
    }

    pub fn apply(&self, state: &QuantumState) -> Result<QuantumState> {
        check_dim("state dimension", self.dim(), state.dim())?;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        linalg::matvec(self.0.as_slice(), state.amplitudes(), self.dim(), &mut out);
        Ok(QuantumState::from_raw(out))
    }

    /// `self * rhs`.
    pub fn compose(&self, rhs: &UnitaryOperator) -> Result<UnitaryOperator> {
        check_dim("operator dimension", self.dim(), rhs.dim())?;
        Ok(Self(&self.0 * &rhs.0))
    }

    pub fn adjoint(&self) -> UnitaryOperator {
        Self(self.0.adjoint())
    }
}

/// Scalar map applied to an inhomogeneity parameter before it multiplies
/// the free or control Hamiltonian.
#[derive(Clone, Default)]
pub enum Scaling {
    /// `g(ε) = ε`.
    #[default]
    Identity,
    /// `g(ε) = scale·ε + offset`.
    Affine {
        scale: f64,
        offset: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Scaling {
    pub fn apply(&self, eps: f64) -> f64 {
        match self {
            Scaling::Identity => eps,
            Scaling::Affine { scale, offset } => scale * eps + offset,
            Scaling::Custom(f) => f(eps),
        }
    }
}

impl fmt::Debug for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scaling::Identity => f.write_str("Identity"),
            Scaling::Affine { scale, offset } => f
                .debug_struct("Affine")
                .field("scale", scale)
                .field("offset", offset)
                .finish(),
            Scaling::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Member Hamiltonian family `g_0(ε_0)·H_0 + g_u(ε_u)·Σ_m u_m H_m`.
#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    free: HermitianOperator,
    controls: Vec<HermitianOperator>,
    free_scaling: Scaling,
    control_scaling: Scaling,
}

impl HamiltonianModel {
    pub fn new(free: HermitianOperator, controls: Vec<HermitianOperator>) -> Result<Self> {
        if controls.is_empty() {
            return Err(QecError::invalid("model needs at least one control operator"));
        }
        for c in &controls {
            check_dim("control operator dimension", free.dim(), c.dim())?;
        }
        Ok(Self {
            free,
            controls,
            free_scaling: Scaling::Identity,
            control_scaling: Scaling::Identity,
        })
    }

    pub fn with_scalings(mut self, free_scaling: Scaling, control_scaling: Scaling) -> Self {
        self.free_scaling = free_scaling;
        self.control_scaling = control_scaling;
        self
    }

    /// Spin-1/2: `H_0 = σ_z/2`, controls `σ_x/2` and `σ_y/2`.
    pub fn spin_half() -> Self {
        Self::new(
            HermitianOperator::pauli_z().scaled(0.5),
            vec![
                HermitianOperator::pauli_x().scaled(0.5),
                HermitianOperator::pauli_y().scaled(0.5),
            ],
        )
        .expect("spin-1/2 operators are consistent")
    }

    /// Three-level Λ system: `H_0 = diag(1.5, 1, 0)`, controls coupling
    /// levels (2,3) and (1,3).
    pub fn lambda_three_level() -> Self {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let h1 = DMatrix::from_row_slice(3, 3, &[z, z, z, z, z, o, z, o, z]);
        let h2 = DMatrix::from_row_slice(3, 3, &[z, z, o, z, z, z, o, z, z]);
        Self::new(
            HermitianOperator::diagonal(&[1.5, 1.0, 0.0]),
            vec![
                HermitianOperator::new(h1).expect("symmetric"),
                HermitianOperator::new(h2).expect("symmetric"),
            ],
        )
        .expect("Λ-system operators are consistent")
    }

    pub fn dim(&self) -> usize {
        self.free.dim()
    }

    /// Number of control channels `M`.
    pub fn channels(&self) -> usize {
        self.controls.len()
    }

    pub fn free(&self) -> &HermitianOperator {
        &self.free
    }

    pub fn controls(&self) -> &[HermitianOperator] {
        &self.controls
    }

    pub fn free_gain(&self, member: &MemberParams) -> f64 {
        self.free_scaling.apply(member.eps0)
    }

    pub fn control_gain(&self, member: &MemberParams) -> f64 {
        self.control_scaling.apply(member.epsu)
    }

    /// Writes the slice Hamiltonian into `out` (column-major `d×d`).
    pub(crate) fn write_hamiltonian(&self, g0: f64, gu: f64, column: &[f64], out: &mut [C64]) {
        for (o, h) in out.iter_mut().zip(self.free.as_slice()) {
            *o = h * g0;
        }
        for (op, &u) in self.controls.iter().zip(column) {
            let coeff = gu * u;
            if coeff != 0.0 {
                for (o, h) in out.iter_mut().zip(op.as_slice()) {
                    *o += h * coeff;
                }
            }
        }
    }
}

/// Uniform partition of `[0, T]` into `Q` slices of width `T/Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    slices: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, slices: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(QecError::invalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if slices == 0 {
            return Err(QecError::invalid("time grid needs at least one slice"));
        }
        Ok(Self { horizon, slices })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.slices as f64
    }

    /// Left endpoint of slice `q` (zero-based), i.e. `q·T/Q`.
    pub fn start(&self, q: usize) -> f64 {
        self.horizon * q as f64 / self.slices as f64
    }

    /// All slice boundaries `t_0 = 0, ..., t_Q = T`.
    pub fn boundaries(&self) -> Vec<f64> {
        (0..=self.slices).map(|q| self.start(q)).collect()
    }
}

/// Piecewise-constant control amplitudes, `M` channels by `Q` slices.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlStrategy {
    channels: usize,
    slices: usize,
    // channel-major: value (m, q) at m*slices + q
    values: Vec<f64>,
}

impl ControlStrategy {
    pub fn new(channels: usize, slices: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || slices == 0 {
            return Err(QecError::invalid("control strategy needs M ≥ 1 and Q ≥ 1"));
        }
        check_dim("control value count", channels * slices, values.len())?;
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(QecError::invalid(format!(
                "control entry ({}, {}) is not finite",
                bad / slices,
                bad % slices
            )));
        }
        Ok(Self {
            channels,
            slices,
            values,
        })
    }

    pub fn from_channels(channels: &[Vec<f64>]) -> Result<Self> {
        let slices = channels.first().map_or(0, Vec::len);
        for c in channels {
            check_dim("channel length", slices, c.len())?;
        }
        Self::new(channels.len(), slices, channels.concat())
    }

    pub fn zeros(channels: usize, slices: usize) -> Self {
        Self {
            channels,
            slices,
            values: vec![0.0; channels * slices],
        }
    }

    /// Every channel set to `sin(t_q)` at the slice left endpoints.
    pub fn sine(channels: usize, grid: &TimeGrid) -> Self {
        let row: Vec<f64> = (0..grid.slices()).map(|q| grid.start(q).sin()).collect();
        Self {
            channels,
            slices: grid.slices(),
            values: row.repeat(channels),
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

    pub fn set(&mut self, m: usize, q: usize, value: f64) {
        self.values[m * self.slices + q] = value;
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.values[m * self.slices..(m + 1) * self.slices]
    }

    /// The `M` amplitudes active on slice `q`.
    pub fn column(&self, q: usize) -> Vec<f64> {
        (0..self.channels).map(|m| self.get(m, q)).collect()
    }

    pub(crate) fn write_column(&self, q: usize, out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = self.values[m * self.slices + q];
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Each slice repeated `factor` times, for propagation on a grid
    /// `factor` times finer.
    pub fn refined(&self, factor: usize) -> Self {
        let mut values = Vec::with_capacity(self.values.len() * factor);
        for m in 0..self.channels {
            for &v in self.channel(m) {
                values.extend(std::iter::repeat_n(v, factor));
            }
        }
        Self {
            channels: self.channels,
            slices: self.slices * factor,
            values,
        }
    }

    /// Slices `range` of every channel.
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.slices || range.is_empty() {
            return Err(QecError::invalid("control window out of range"));
        }
        let mut values = Vec::with_capacity(self.channels * range.len());
        for m in 0..self.channels {
            values.extend_from_slice(&self.channel(m)[range.clone()]);
        }
        Ok(Self {
            channels: self.channels,
            slices: range.len(),
            values,
        })
    }
}

/// Slice and cumulative propagators from one forward pass.
///
/// Slice `q` (zero-based) covers `[t_q, t_{q+1}]`. `cumulative(0)` is the
/// identity and `cumulative(q+1) = slice(q) · cumulative(q)`.
#[derive(Debug, Clone, Default)]
pub struct PropagatorCache {
    dim: usize,
    slices: usize,
    dt: f64,
    control_gain: f64,
    per_slice: Vec<C64>,
    cumulative: Vec<C64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<C64>,
}

impl PropagatorCache {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn slice(&self, q: usize) -> UnitaryOperator {
        UnitaryOperator::from_slice(self.dim, self.slice_raw(q))
    }

    pub fn cumulative(&self, q: usize) -> UnitaryOperator {
        UnitaryOperator::from_slice(self.dim, self.cumulative_raw(q))
    }

    /// `U(T)`.
    pub fn total(&self) -> UnitaryOperator {
        self.cumulative(self.slices)
    }

    pub(crate) fn dt(&self) -> f64 {
        self.dt
    }

    pub(crate) fn control_gain(&self) -> f64 {
        self.control_gain
    }

    pub(crate) fn slice_raw(&self, q: usize) -> &[C64] {
        let n = self.dim * self.dim;
        &self.per_slice[q * n..(q + 1) * n]
    }

    pub(crate) fn cumulative_raw(&self, q: usize) -> &[C64] {
        let n = self.dim * self.dim;
        &self.cumulative[q * n..(q + 1) * n]
    }

    pub(crate) fn eigen_raw(&self, q: usize) -> (&[f64], &[C64]) {
        let d = self.dim;
        (
            &self.eigenvalues[q * d..(q + 1) * d],
            &self.eigenvectors[q * d * d..(q + 1) * d * d],
        )
    }

    fn resize(&mut self, dim: usize, slices: usize) {
        let n = dim * dim;
        let zero = C64::new(0.0, 0.0);
        self.dim = dim;
        self.slices = slices;
        self.per_slice.resize(slices * n, zero);
        self.cumulative.resize((slices + 1) * n, zero);
        self.eigenvalues.resize(slices * dim, 0.0);
        self.eigenvectors.resize(slices * n, zero);
    }

    /// Refills the cache for a new control, reusing its buffers.
    pub(crate) fn fill(
        &mut self,
        model: &HamiltonianModel,
        member: &MemberParams,
        u: &ControlStrategy,
        grid: &TimeGrid,
    ) {
        let d = model.dim();
        let n = d * d;
        let dt = grid.dt();
        let g0 = model.free_gain(member);
        let gu = model.control_gain(member);
        self.resize(d, grid.slices());
        self.dt = dt;
        self.control_gain = gu;

        let mut h = vec![C64::new(0.0, 0.0); n];
        let mut column = vec![0.0; u.channels()];

        let id = &mut self.cumulative[..n];
        id.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for k in 0..d {
            id[k + k * d] = C64::new(1.0, 0.0);
        }

        for q in 0..grid.slices() {
            u.write_column(q, &mut column);
            model.write_hamiltonian(g0, gu, &column, &mut h);
            let vals = &mut self.eigenvalues[q * d..(q + 1) * d];
            let vecs = &mut self.eigenvectors[q * n..(q + 1) * n];
            linalg::hermitian_eigen(&mut h, d, vals, vecs);
            let slice = &mut self.per_slice[q * n..(q + 1) * n];
            linalg::exp_from_eigen(vals, vecs, dt, d, slice);
            let (done, rest) = self.cumulative.split_at_mut((q + 1) * n);
            linalg::matmul(slice, &done[q * n..], d, &mut rest[..n]);
        }
    }
}

/// Output of [`propagate`].
#[derive(Debug, Clone)]
pub struct Propagation {
    pub final_state: QuantumState,
    pub cache: PropagatorCache,
    /// `trajectory[q] = U(t_q)|ψ_0⟩` for `q = 0..=Q`, when requested.
    pub trajectory: Option<Vec<QuantumState>>,
}

/// `g_0(ε_0)·H_0 + g_u(ε_u)·Σ_m u_m H_m` for one slice.
pub fn build_hamiltonian(
    model: &HamiltonianModel,
    member: &MemberParams,
    control_column: &[f64],
) -> Result<HermitianOperator> {
    check_dim("control column length", model.channels(), control_column.len())?;
    check_member(member)?;
    let d = model.dim();
    let mut h = vec![C64::new(0.0, 0.0); d * d];
    model.write_hamiltonian(
        model.free_gain(member),
        model.control_gain(member),
        control_column,
        &mut h,
    );
    Ok(HermitianOperator(DMatrix::from_vec(d, d, h)))
}

fn check_member(member: &MemberParams) -> Result<()> {
    if member.eps0.is_finite() && member.epsu.is_finite() {
        Ok(())
    } else {
        Err(QecError::invalid(format!(
            "member parameters must be finite, got ({}, {})",
            member.eps0, member.epsu
        )))
    }
}

/// `exp(-i H dt)` by Hermitian eigendecomposition.
pub fn slice_propagator(h: &HermitianOperator, dt: f64) -> Result<UnitaryOperator> {
    let d = h.dim();
    let deviation = linalg::hermitian_deviation(h.as_slice(), d);
    if !(deviation <= HERMITIAN_TOL) {
        return Err(QecError::NotHermitian { deviation });
    }
    if !dt.is_finite() {
        return Err(QecError::invalid("slice duration must be finite"));
    }
    let mut work = h.as_slice().to_vec();
    let mut vals = vec![0.0; d];
    let mut vecs = vec![C64::new(0.0, 0.0); d * d];
    linalg::hermitian_eigen(&mut work, d, &mut vals, &mut vecs);
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    linalg::exp_from_eigen(&vals, &vecs, dt, d, &mut out);
    Ok(UnitaryOperator::from_slice(d, &out))
}

pub(crate) fn validate_problem(
    model: &HamiltonianModel,
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
) -> Result<()> {
    check_dim("control channels", model.channels(), u.channels())?;
    check_dim("control slices", grid.slices(), u.slices())?;
    check_dim("initial state dimension", model.dim(), initial.dim())?;
    let norm = initial.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(QecError::NotNormalized { norm });
    }
    Ok(())
}

/// Propagates `initial` through every slice of `grid` under control `u`.
pub fn propagate(
    model: &HamiltonianModel,
    member: &MemberParams,
    u: &ControlStrategy,
    grid: &TimeGrid,
    initial: &QuantumState,
    record_trajectory: bool,
) -> Result<Propagation> {
    validate_problem(model, u, grid, initial)?;
    check_member(member)?;
    let mut cache = PropagatorCache::default();
    cache.fill(model, member, u, grid);
    let d = model.dim();

    let mut out = vec![C64::new(0.0, 0.0); d];
    linalg::matvec(
        cache.cumulative_raw(grid.slices()),
        initial.amplitudes(),
        d,
        &mut out,
    );
    let final_state = QuantumState::from_raw(out);

    let trajectory = record_trajectory.then(|| {
        (0..=grid.slices())
            .map(|q| {
                let mut psi = vec![C64::new(0.0, 0.0); d];
                linalg::matvec(cache.cumulative_raw(q), initial.amplitudes(), d, &mut psi);
                QuantumState::from_raw(psi)
            })
            .collect()
    });

    Ok(Propagation {
        final_state,
        cache,
        trajectory,
    })
}

/// Bloch vector `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)` of a two-level state.
pub fn bloch_vector(state: &QuantumState) -> Result<[f64; 3]> {
    if state.dim() != 2 {
        return Err(QecError::UnsupportedDimension {
            expected: 2,
            found: state.dim(),
        });
    }
    let a = state.amplitudes()[0];
    let b = state.amplitudes()[1];
    let coherence = a.conj() * b;
    Ok([
        2.0 * coherence.re,
        2.0 * coherence.im,
        a.norm_sqr() - b.norm_sqr(),
    ])
}
