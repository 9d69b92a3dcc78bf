//! Ensemble inhomogeneity: per-class parameter laws, deterministic training
//! grids and seeded test draws.
//!
//! Each class draws `(ε_0, ε_u)` from independent normal laws, optionally
//! truncated to an interval. Spreads are given as `3σ`, the convention used
//! by the experiment tables.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;

use libm::erfc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QecError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ClassLabel(pub String);

impl ClassLabel {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassLabel {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Inhomogeneity parameters of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberParams {
    /// Multiplier source for the free Hamiltonian.
    pub eps0: f64,
    /// Multiplier source for the control Hamiltonian.
    pub epsu: f64,
    pub label: ClassLabel,
}

impl MemberParams {
    pub fn new(eps0: f64, epsu: f64, label: impl Into<ClassLabel>) -> Self {
        Self {
            eps0,
            epsu,
            label: label.into(),
        }
    }

    pub fn unlabeled(eps0: f64, epsu: f64) -> Self {
        Self {
            eps0,
            epsu,
            label: ClassLabel::default(),
        }
    }
}

/// Support bounds for a truncated law; `±∞` leaves a side open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub lower0: f64,
    pub upper0: f64,
    pub loweru: f64,
    pub upperu: f64,
}

/// Independent normal laws for `ε_0` and `ε_u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub mean0: f64,
    pub three_sigma0: f64,
    pub meanu: f64,
    pub three_sigmau: f64,
    pub truncation: Option<Truncation>,
}

impl DistributionSpec {
    pub fn new(mean0: f64, three_sigma0: f64, meanu: f64, three_sigmau: f64) -> Result<Self> {
        let spec = Self {
            mean0,
            three_sigma0,
            meanu,
            three_sigmau,
            truncation: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same mean and spread on both axes.
    pub fn symmetric(mean: f64, three_sigma: f64) -> Result<Self> {
        Self::new(mean, three_sigma, mean, three_sigma)
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Result<Self> {
        self.truncation = Some(truncation);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mean0", self.mean0), ("meanu", self.meanu)] {
            if !v.is_finite() {
                return Err(QecError::invalid(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("three_sigma0", self.three_sigma0),
            ("three_sigmau", self.three_sigmau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QecError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(t) = self.truncation {
            if !(t.lower0 < t.upper0) || !(t.loweru < t.upperu) {
                return Err(QecError::invalid(
                    "truncation bounds need lower < upper on each axis",
                ));
            }
        }
        Ok(())
    }

    pub fn sigma0(&self) -> f64 {
        self.three_sigma0 / 3.0
    }

    pub fn sigmau(&self) -> f64 {
        self.three_sigmau / 3.0
    }

    /// Truncates two overlapping class laws at the midpoints of their means
    /// so that their supports no longer intersect. The class with the lower
    /// mean on an axis keeps `(-∞, midpoint]`, the other `[midpoint, ∞)`.
    pub fn split_overlap(a: &Self, b: &Self) -> Result<(Self, Self)> {
        let mid0 = 0.5 * (a.mean0 + b.mean0);
        let midu = 0.5 * (a.meanu + b.meanu);
        let (a0, b0) = split_axis(a.mean0, b.mean0, mid0)?;
        let (au, bu) = split_axis(a.meanu, b.meanu, midu)?;
        let ta = Truncation {
            lower0: a0.0,
            upper0: a0.1,
            loweru: au.0,
            upperu: au.1,
        };
        let tb = Truncation {
            lower0: b0.0,
            upper0: b0.1,
            loweru: bu.0,
            upperu: bu.1,
        };
        Ok((a.with_truncation(ta)?, b.with_truncation(tb)?))
    }
}

type Bounds = (f64, f64);

fn split_axis(ma: f64, mb: f64, mid: f64) -> Result<(Bounds, Bounds)> {
    if ma < mb {
        Ok(((f64::NEG_INFINITY, mid), (mid, f64::INFINITY)))
    } else if ma > mb {
        Ok(((mid, f64::INFINITY), (f64::NEG_INFINITY, mid)))
    } else {
        Err(QecError::invalid("cannot split classes with equal means"))
    }
}

/// Number of grid points per axis for a deterministic training grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleGridSpec {
    pub n0: usize,
    pub nu: usize,
}

impl SampleGridSpec {
    pub fn new(n0: usize, nu: usize) -> Result<Self> {
        if n0 == 0 || nu == 0 {
            return Err(QecError::invalid("sample grid counts must be positive"));
        }
        Ok(Self { n0, nu })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn len(&self) -> usize {
        self.n0 * self.nu
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Midpoints of `n` equal cells partitioning `[μ - 3σ, μ + 3σ]`.
pub fn axis_grid(mean: f64, three_sigma: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| mean - three_sigma + (2 * k - 1) as f64 * three_sigma / n as f64)
        .collect()
}

/// Cartesian grid of `n0 × nu` members, `ε_0` varying slowest.
pub fn grid_samples(
    dist: &DistributionSpec,
    grid: &SampleGridSpec,
    label: &ClassLabel,
) -> Result<Vec<MemberParams>> {
    dist.validate()?;
    if grid.n0 == 0 || grid.nu == 0 {
        return Err(QecError::invalid("sample grid counts must be positive"));
    }
    let e0 = axis_grid(dist.mean0, dist.three_sigma0, grid.n0);
    let eu = axis_grid(dist.meanu, dist.three_sigmau, grid.nu);
    Ok(e0
        .iter()
        .flat_map(|&a| {
            eu.iter().map(move |&b| MemberParams {
                eps0: a,
                epsu: b,
                label: label.clone(),
            })
        })
        .collect())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile (Wichura's AS 241, relative accuracy ~1e-16).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(QecError::Domain(format!("probability {p} not in (0, 1)")));
    }
    Ok(ppnd16(p))
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn ppnd16(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Inverse CDF of a normal law with mean `mu` and deviation `sigma`
/// restricted to `[lower, upper]` (either bound may be infinite).
pub fn truncated_normal_quantile(p: f64, mu: f64, sigma: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(QecError::Domain(format!("probability {p} not in (0, 1)")));
    }
    if !(sigma > 0.0) || !(lower < upper) || !mu.is_finite() {
        return Err(QecError::Domain(format!(
            "need sigma > 0 and lower < upper (sigma={sigma}, lower={lower}, upper={upper})"
        )));
    }
    let a = (lower - mu) / sigma;
    let b = (upper - mu) / sigma;
    // Work in whichever tail keeps the CDF values away from 1.
    let z = if a > 0.0 {
        let (fa, fb) = (normal_cdf(-b), normal_cdf(-a));
        -ppnd16_clamped(fb - p * (fb - fa))
    } else {
        let (fa, fb) = (normal_cdf(a), normal_cdf(b));
        ppnd16_clamped(fa + p * (fb - fa))
    };
    Ok((mu + sigma * z).clamp(lower, upper))
}

fn ppnd16_clamped(p: f64) -> f64 {
    ppnd16(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}

fn sample_axis(p: f64, mean: f64, sigma: f64, bounds: Option<Bounds>) -> f64 {
    match bounds {
        Some((lo, hi)) => truncated_normal_quantile(p, mean, sigma, lo, hi)
            .expect("validated distribution and open-interval probability"),
        None => mean + sigma * ppnd16(p),
    }
}

/// `count` independent members drawn by inverse-transform sampling from a
/// ChaCha8 stream seeded with `seed`.
pub fn draw_test_samples(dist: &DistributionSpec, count: usize, seed: u64) -> Result<Vec<MemberParams>> {
    draw_with_stream(dist, count, seed, 0, &ClassLabel::default())
}

/// As [`draw_test_samples`] on an independent stream of the same seed, so
/// that several classes can share one user-facing seed.
pub fn draw_with_stream(
    dist: &DistributionSpec,
    count: usize,
    seed: u64,
    stream: u64,
    label: &ClassLabel,
) -> Result<Vec<MemberParams>> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let b0 = dist.truncation.map(|t| (t.lower0, t.upper0));
    let bu = dist.truncation.map(|t| (t.loweru, t.upperu));
    Ok((0..count)
        .map(|_| {
            let p0 = open_unit(&mut rng);
            let pu = open_unit(&mut rng);
            MemberParams {
                eps0: sample_axis(p0, dist.mean0, dist.sigma0(), b0),
                epsu: sample_axis(pu, dist.meanu, dist.sigmau(), bu),
                label: label.clone(),
            }
        })
        .collect())
}

/// Labeled training members, stored contiguously per class in class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    classes: Vec<ClassLabel>,
    members: Vec<MemberParams>,
    ranges: Vec<Range<usize>>,
}

impl TrainingSet {
    /// Groups `members` by `classes`, keeping their relative order.
    pub fn from_members(classes: Vec<ClassLabel>, members: Vec<MemberParams>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &classes {
            if !seen.insert(c) {
                return Err(QecError::DuplicateClass(c.0.clone()));
            }
        }
        if let Some(stray) = members.iter().find(|m| !seen.contains(&m.label)) {
            return Err(QecError::invalid(format!(
                "member label `{}` is not a declared class",
                stray.label
            )));
        }
        let mut grouped = Vec::with_capacity(members.len());
        let mut ranges = Vec::with_capacity(classes.len());
        for c in &classes {
            let start = grouped.len();
            grouped.extend(members.iter().filter(|m| &m.label == c).cloned());
            ranges.push(start..grouped.len());
        }
        Ok(Self {
            classes,
            members: grouped,
            ranges,
        })
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn members(&self) -> &[MemberParams] {
        &self.members
    }

    pub fn class_members(&self, class: usize) -> &[MemberParams] {
        &self.members[self.ranges[class].clone()]
    }

    pub fn class_range(&self, class: usize) -> Range<usize> {
        self.ranges[class].clone()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Index of the first class without members.
    pub(crate) fn first_empty_class(&self) -> Option<usize> {
        self.ranges.iter().position(|r| r.is_empty())
    }
}

/// Concatenates the grids of every class.
pub fn build_training_set(
    class_specs: &[(DistributionSpec, SampleGridSpec, ClassLabel)],
) -> Result<TrainingSet> {
    if class_specs.len() < 2 {
        return Err(QecError::invalid("a training set needs at least two classes"));
    }
    let mut members = Vec::new();
    for (dist, grid, label) in class_specs {
        members.extend(grid_samples(dist, grid, label)?);
    }
    let classes = class_specs.iter().map(|(_, _, l)| l.clone()).collect();
    TrainingSet::from_members(classes, members)
}
