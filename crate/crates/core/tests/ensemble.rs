use proptest::prelude::*;
use qec_core::ensemble::{axis_grid, normal_cdf};
use qec_core::{
    draw_test_samples, grid_samples, truncated_normal_quantile, ClassLabel, DistributionSpec, SampleGridSpec,
    Truncation,
};

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
fn ks_critical(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

#[test]
fn normal_draws_pass_ks() {
    let dist = DistributionSpec::new(0.85, 0.15, 1.15, 0.05).unwrap();
    let draws = draw_test_samples(&dist, 10_000, 2024).unwrap();
    let s0 = dist.sigma0();
    let su = dist.sigmau();
    let d0 = ks_statistic(draws.iter().map(|m| m.eps0).collect(), |x| {
        normal_cdf((x - 0.85) / s0)
    });
    let du = ks_statistic(draws.iter().map(|m| m.epsu).collect(), |x| {
        normal_cdf((x - 1.15) / su)
    });
    assert!(d0 < ks_critical(10_000), "eps0 KS {d0}");
    assert!(du < ks_critical(10_000), "epsu KS {du}");
}

#[test]
fn truncated_draws_pass_ks_and_respect_bounds() {
    let base = DistributionSpec::symmetric(0.85, 0.15).unwrap();
    let dist = base
        .with_truncation(Truncation {
            lower0: f64::NEG_INFINITY,
            upper0: 1.0,
            loweru: f64::NEG_INFINITY,
            upperu: 1.0,
        })
        .unwrap();
    let draws = draw_test_samples(&dist, 10_000, 7).unwrap();
    assert!(draws.iter().all(|m| m.eps0 <= 1.0 && m.epsu <= 1.0));
    let sigma = dist.sigma0();
    let mass = normal_cdf((1.0 - 0.85) / sigma);
    let cdf = |x: f64| (normal_cdf((x - 0.85) / sigma) / mass).min(1.0);
    let d = ks_statistic(draws.iter().map(|m| m.eps0).collect(), cdf);
    assert!(d < ks_critical(10_000), "KS {d}");
}

#[test]
fn sample_mean_obeys_law_of_large_numbers() {
    // Five standard errors: a false alarm has probability below 1e-6.
    let dist = DistributionSpec::symmetric(1.2, 0.05).unwrap();
    let n = 10_000;
    let draws = draw_test_samples(&dist, n, 99).unwrap();
    let mean = draws.iter().map(|m| m.eps0).sum::<f64>() / n as f64;
    let bound = 5.0 * dist.sigma0() / (n as f64).sqrt();
    assert!((mean - 1.2).abs() < bound, "{mean}");
}

#[test]
fn seeded_draws_are_reproducible() {
    let dist = DistributionSpec::symmetric(0.85, 0.05).unwrap();
    let a = draw_test_samples(&dist, 500, 11).unwrap();
    let b = draw_test_samples(&dist, 500, 11).unwrap();
    let c = draw_test_samples(&dist, 500, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn overlap_split_uses_midpoints() {
    let a = DistributionSpec::new(0.85, 0.15, 0.8, 0.05).unwrap();
    let b = DistributionSpec::new(1.15, 0.15, 1.2, 0.05).unwrap();
    let (ta, tb) = DistributionSpec::split_overlap(&a, &b).unwrap();
    let t = ta.truncation.unwrap();
    assert_eq!((t.upper0, t.upperu), (1.0, 1.0));
    assert!(t.lower0.is_infinite() && t.loweru.is_infinite());
    let t = tb.truncation.unwrap();
    assert_eq!((t.lower0, t.loweru), (1.0, 1.0));
}

proptest! {
    #[test]
    fn grids_are_symmetric_and_contained(
        mean in 0.5f64..1.5,
        three_sigma in 0.01f64..0.3,
        n in 1usize..12,
    ) {
        let pts = axis_grid(mean, three_sigma, n);
        prop_assert_eq!(pts.len(), n);
        let avg = pts.iter().sum::<f64>() / n as f64;
        prop_assert!((avg - mean).abs() < 1e-12);
        for (x, y) in pts.iter().zip(pts.iter().rev()) {
            prop_assert!((x - mean + (y - mean)).abs() < 1e-12);
        }
        for x in &pts {
            prop_assert!(*x > mean - three_sigma && *x < mean + three_sigma);
        }
    }

    #[test]
    fn truncated_quantiles_stay_in_bounds(
        p in 1e-12f64..(1.0 - 1e-12),
        mu in -2.0f64..2.0,
        sigma in 0.01f64..2.0,
        lo in -3.0f64..3.0,
        width in 0.001f64..4.0,
    ) {
        let x = truncated_normal_quantile(p, mu, sigma, lo, lo + width).unwrap();
        prop_assert!(x >= lo && x <= lo + width, "{x} not in [{lo}, {}]", lo + width);
    }

    #[test]
    fn grid_members_cover_the_product(n0 in 1usize..6, nu in 1usize..6) {
        let dist = DistributionSpec::symmetric(1.0, 0.1).unwrap();
        let members = grid_samples(&dist, &SampleGridSpec::new(n0, nu).unwrap(), &ClassLabel::new("x")).unwrap();
        prop_assert_eq!(members.len(), n0 * nu);
    }
}
