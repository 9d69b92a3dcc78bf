//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero when a criterion fails that is not listed in
//! `KNOWN_RED`.
//!
//! Experiments run from the bundled presets; the property checks draw their
//! random instances from a fixed seed.

use std::path::Path;
use std::time::Instant;

use qec_cli::{execute_with_threads, prepare, Cli, Mode, OutputBundle};
use qec_core::gradient::member_objective;
use qec_core::{
    bloch_vector, discriminate, fidelity_gradient, finite_difference_gradient, propagate, Complex64,
    ControlStrategy, HamiltonianModel, LearnConfig, MemberParams, QuantumState, StoppingRule, TimeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that are expected to fail, with the measured reason.
const KNOWN_RED: &[(u8, &str)] = &[(
    2,
    "with the half-strength control coupling, J reaches 0.99 at iteration 40 417",
)];

struct Line {
    id: u8,
    pass: bool,
    detail: String,
}

fn preset_cli(name: &str) -> Cli {
    Cli {
        config: Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("presets")
            .join(format!("{name}.cfg")),
        threads: None,
        seed: None,
        out: None,
    }
}

fn run_preset(name: &str) -> (OutputBundle, f64) {
    let exp = prepare(&preset_cli(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let start = Instant::now();
    let bundle = execute_with_threads(&exp, None).unwrap_or_else(|e| panic!("{name}: {e}"));
    (bundle, start.elapsed().as_secs_f64())
}

fn first_at_least(history: &[f64], level: f64) -> Option<usize> {
    history.iter().position(|&j| j >= level)
}

fn iteration(k: Option<usize>) -> String {
    k.map_or_else(|| "never".to_string(), |k| k.to_string())
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

struct Case {
    accuracy: f64,
    mean_fidelity: Vec<f64>,
    iterations: usize,
}

fn summarize(b: &OutputBundle) -> Case {
    let e = b.report.evaluation.as_ref().expect("training runs evaluate");
    Case {
        accuracy: e.accuracy,
        mean_fidelity: e.per_class_mean_fidelity.clone(),
        iterations: b
            .report
            .learning
            .as_ref()
            .expect("training runs learn")
            .iterations_used,
    }
}

fn case(name: &str) -> Case {
    summarize(&run_preset(name).0)
}

/// Runs a truncated preset's evaluation on the control already learned by
/// its untruncated twin. The two presets share every training setting, so
/// retraining would reproduce the same control bit for bit.
fn truncated_twin(name: &str, trained: &OutputBundle) -> f64 {
    let mut exp = prepare(&preset_cli(name)).unwrap();
    assert!(exp.eval.truncate_overlap);
    let t = trained.report.learning.as_ref().unwrap();
    assert_eq!(exp.learn.stopping.max_iters, t.max_iters);
    assert_eq!(exp.learn.stopping.epsilon, t.epsilon);
    exp.mode = Mode::Evaluate;
    exp.bloch = false;
    exp.control = trained.control.clone();
    let b = execute_with_threads(&exp, None).unwrap();
    b.report.evaluation.unwrap().accuracy
}

fn discrimination() -> Vec<Line> {
    let (d1, secs) = run_preset("discrim1");
    let h1 = &d1.learn.as_ref().unwrap().objective_history;
    let reach = first_at_least(h1, 0.995);
    let pa = d1.report.members[0].populations[0];
    let pb = d1.report.members[1].populations[0];
    let amp1 = d1.report.learning.as_ref().unwrap().max_control_amplitude;
    let c1 = Line {
        id: 1,
        pass: reach.is_some_and(|k| k <= 10_000) && pa >= 0.999 && pb <= 0.001 && secs < 120.0,
        detail: format!(
            "J >= 0.995 at iteration {} (<= 10000); |c0^a|^2 = {pa:.6} (>= 0.999), |c0^b|^2 = {pb:.2e} (<= 0.001); {secs:.1} s",
            iteration(reach)
        ),
    };

    let (d2, _) = run_preset("discrim2");
    let h2 = &d2.learn.as_ref().unwrap().objective_history;
    let reach = first_at_least(h2, 0.99);
    let amp2 = d2.report.learning.as_ref().unwrap().max_control_amplitude;
    let at_budget = h2[h2.len().min(40_001) - 1];
    let c2 = Line {
        id: 2,
        pass: reach.is_some_and(|k| k <= 40_000) && amp2 > amp1,
        detail: format!(
            "J >= 0.99 at iteration {} (<= 40000; J = {at_budget:.5} at the budget); max|u| {amp2:.3} vs {amp1:.3} for example 1",
            iteration(reach)
        ),
    };
    vec![c1, c2]
}

fn binary_cases() -> Vec<Line> {
    let runs: Vec<OutputBundle> = ["case1", "case2", "case3"]
        .iter()
        .map(|n| run_preset(n).0)
        .collect();
    let [c1, c2, c3] = [0, 1, 2].map(|i| summarize(&runs[i]));
    bloch_check(&runs[0]);
    let mut out = vec![
        Line {
            id: 3,
            pass: (0.99..=1.0).contains(&c1.accuracy) && c1.mean_fidelity.iter().all(|&f| f >= 0.995),
            detail: format!(
                "zeta = {} (in [99.0%, 100%]); mean F = {:.4} / {:.4} (>= 0.995)",
                pct(c1.accuracy),
                c1.mean_fidelity[0],
                c1.mean_fidelity[1]
            ),
        },
        Line {
            id: 4,
            pass: (0.96..=0.985).contains(&c2.accuracy) && c2.iterations > c1.iterations,
            detail: format!(
                "zeta = {} (in [96.0%, 98.5%]); {} iterations vs {} for case 1",
                pct(c2.accuracy),
                c2.iterations,
                c1.iterations
            ),
        },
        Line {
            id: 5,
            pass: c3.accuracy >= 0.995 && c3.iterations < c1.iterations,
            detail: format!(
                "zeta = {} (>= 99.5%); {} iterations vs {} for case 1",
                pct(c3.accuracy),
                c3.iterations,
                c1.iterations
            ),
        },
        Line {
            id: 6,
            pass: c3.accuracy > c1.accuracy && c1.accuracy > c2.accuracy,
            detail: format!(
                "zeta3 {} > zeta1 {} > zeta2 {}",
                pct(c3.accuracy),
                pct(c1.accuracy),
                pct(c2.accuracy)
            ),
        },
    ];

    let reference = [0.9966, 0.9770, 0.9992];
    let mut pass = true;
    let mut parts = Vec::new();
    for (((name, run), base), want) in ["case1-truncated", "case2-truncated", "case3-truncated"]
        .iter()
        .zip(&runs)
        .zip([&c1, &c2, &c3])
        .zip(reference)
    {
        let t = truncated_twin(name, run);
        let ok = (t - want).abs() <= 0.005 && t >= base.accuracy - 0.003;
        pass &= ok;
        parts.push(format!(
            "{name}: {} (target {} +- 0.5, untruncated {})",
            pct(t),
            pct(want),
            pct(base.accuracy)
        ));
    }
    out.push(Line {
        id: 7,
        pass,
        detail: parts.join("; "),
    });
    out
}

/// The class-B mean member under the case-1 control ends near the south pole.
fn bloch_check(case1: &OutputBundle) {
    let b = &case1.report.members[1];
    let [x, y, z] = b.bloch_final.expect("two-level run");
    let dist = (x * x + y * y + (z + 1.0) * (z + 1.0)).sqrt();
    let status = if dist < 0.1 { "PASS" } else { "FAIL" };
    println!("check case1-bloch {status}  class-B mean member ends {dist:.4} from (0,0,-1) (< 0.1)");
    assert!(dist < 0.1);
}

fn multiclass() -> Line {
    let m = case("multiclass3");
    Line {
        id: 8,
        pass: m.accuracy >= 0.98 && m.mean_fidelity.iter().all(|&f| f >= 0.985),
        detail: format!(
            "zeta = {} (>= 98.0%); mean F = {} (each >= 0.985); {} iterations",
            pct(m.accuracy),
            m.mean_fidelity
                .iter()
                .map(|f| format!("{f:.4}"))
                .collect::<Vec<_>>()
                .join(" / "),
            m.iterations
        ),
    }
}

fn model_for(dim: usize) -> HamiltonianModel {
    if dim == 2 {
        HamiltonianModel::spin_half()
    } else {
        HamiltonianModel::lambda_three_level()
    }
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> QuantumState {
    let amps = (0..dim)
        .map(|_| Complex64::new(rng.random_range(0.1..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    QuantumState::normalized(amps).unwrap()
}

fn random_control(rng: &mut ChaCha8Rng, slices: usize, scale: f64) -> ControlStrategy {
    let values = (0..2 * slices).map(|_| rng.random_range(-scale..scale)).collect();
    ControlStrategy::new(2, slices, values).unwrap()
}

fn gradient_check() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = TimeGrid::new(2.4, 12).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let dim = 2 + i % 2;
        let model = model_for(dim);
        let u = random_control(&mut rng, 12, 2.0);
        let m = MemberParams::unlabeled(rng.random_range(0.7..1.3), rng.random_range(0.7..1.3));
        let psi0 = random_state(&mut rng, dim);
        let target = random_state(&mut rng, dim);
        let analytic = fidelity_gradient(&model, &m, &u, &grid, &psi0, &target).unwrap();
        let fd = finite_difference_gradient(
            |v| member_objective(&model, &m, v, &grid, &psi0, &target).unwrap(),
            &u,
            1e-5,
        )
        .unwrap();
        for (a, f) in analytic.values().iter().zip(fd.values()) {
            let err = (a * grid.dt() - f).abs();
            worst = worst.max(if f.abs() < 1e-10 { err } else { err / f.abs() });
        }
    }
    Line {
        id: 9,
        pass: worst < 1e-5,
        detail: format!("worst relative error {worst:.2e} over 20 instances (< 1e-5)"),
    }
}

fn dynamics_check() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut unitarity, mut norm, mut compose, mut bloch) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let grid = TimeGrid::new(6.0, 30).unwrap();
    let half = TimeGrid::new(3.0, 15).unwrap();
    for i in 0..48 {
        let dim = 2 + i % 2;
        let model = model_for(dim);
        let u = random_control(&mut rng, 30, 4.0);
        let m = MemberParams::unlabeled(rng.random_range(0.5..1.5), rng.random_range(0.5..1.5));
        let psi0 = random_state(&mut rng, dim);
        let whole = propagate(&model, &m, &u, &grid, &psi0, true).unwrap();
        for q in 0..grid.slices() {
            unitarity = unitarity
                .max(whole.cache.slice(q).unitarity_error())
                .max(whole.cache.cumulative(q + 1).unitarity_error());
        }
        for s in whole.trajectory.as_ref().unwrap() {
            norm = norm.max((s.norm() - 1.0).abs());
            if dim == 2 {
                let [x, y, z] = bloch_vector(s).unwrap();
                bloch = bloch.max(((x * x + y * y + z * z).sqrt() - 1.0).abs());
            }
        }
        let first = propagate(&model, &m, &u.window(0..15).unwrap(), &half, &psi0, false).unwrap();
        let second = propagate(
            &model,
            &m,
            &u.window(15..30).unwrap(),
            &half,
            &first.final_state,
            false,
        )
        .unwrap();
        for (a, b) in whole
            .final_state
            .amplitudes()
            .iter()
            .zip(second.final_state.amplitudes())
        {
            compose = compose.max((a - b).norm());
        }
    }
    Line {
        id: 10,
        pass: unitarity < 1e-10 && norm < 1e-9 && compose < 1e-9 && bloch < 1e-9,
        detail: format!(
            "unitarity {unitarity:.1e} (< 1e-10), norm {norm:.1e} (< 1e-9), composition {compose:.1e} (< 1e-9), Bloch norm {bloch:.1e} (< 1e-9)"
        ),
    }
}

fn monotone_check() -> Line {
    let model = HamiltonianModel::spin_half();
    let grid = TimeGrid::new(5.0, 500).unwrap();
    let zero = QuantumState::basis(2, 0).unwrap();
    let one = QuantumState::basis(2, 1).unwrap();
    let config = LearnConfig::new(0.01, 2, 2, &grid).with_stopping(StoppingRule {
        epsilon: 1e-12,
        patience: 1000,
        max_iters: 100,
    });
    let res = discriminate(
        &model,
        &MemberParams::unlabeled(0.9, 0.9),
        &MemberParams::unlabeled(1.1, 1.1),
        &grid,
        &zero,
        &zero,
        &one,
        &config,
    )
    .unwrap();
    let h = &res.objective_history;
    let worst_drop = h
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    Line {
        id: 11,
        pass: h.len() == 101 && worst_drop <= 1e-8,
        detail: format!(
            "{} steps, largest decrease {worst_drop:.2e} (<= 1e-8); J {:.4} -> {:.4}",
            h.len() - 1,
            h[0],
            h[h.len() - 1]
        ),
    }
}

fn pareto_check() -> Line {
    let (b, _) = run_preset("pareto-demo");
    let points = b.report.sweep.expect("sweep runs report points");
    let disp = [0.05, 0.10, 0.15];
    let diff = [0.3, 0.4, 0.5];
    let at = |i: usize, j: usize| {
        let p = &points[i * diff.len() + j];
        assert!((p.disp - disp[i]).abs() < 1e-12 && (p.diff - diff[j]).abs() < 1e-12);
        p.accuracy
    };
    let mut pass = points.len() == 9 && points.iter().all(|p| p.accuracy.is_some());
    let acc = |i, j| at(i, j).unwrap_or(f64::NAN);
    let z1 = acc(0, 0);
    let z3 = acc(0, 1);
    pass &= (0.99..=1.0).contains(&z1) && z3 >= 0.995;
    let mut violations = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            if i + 1 < 3 && acc(i + 1, j) > acc(i, j) + 0.005 {
                violations.push(format!("disp {}->{} at diff {}", disp[i], disp[i + 1], diff[j]));
            }
            if j + 1 < 3 && acc(i, j + 1) < acc(i, j) - 0.005 {
                violations.push(format!("diff {}->{} at disp {}", diff[j], diff[j + 1], disp[i]));
            }
        }
    }
    pass &= violations.is_empty();
    let grid: Vec<String> = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| format!("{:.2}", 100.0 * acc(i, j)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Line {
        id: 12,
        pass,
        detail: format!(
            "(0.05, 0.3) {} (in [99.0%, 100%]); (0.05, 0.4) {} (>= 99.5%); trend violations {}; rows by disp: [{}]",
            pct(z1),
            pct(z3),
            violations.len(),
            grid.join(" | ")
        ),
    }
}

fn main() {
    // Cargo passes harness flags such as `--list`; there is a single check.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let started = Instant::now();
    let mut lines = Vec::new();
    lines.extend(discrimination());
    lines.extend(binary_cases());
    lines.push(multiclass());
    lines.push(gradient_check());
    lines.push(dynamics_check());
    lines.push(monotone_check());
    lines.push(pareto_check());
    lines.sort_by_key(|l| l.id);

    let mut unexpected = Vec::new();
    for l in &lines {
        let known = KNOWN_RED.iter().find(|(id, _)| *id == l.id);
        let status = if l.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status}  {}", l.id, l.detail);
        match (l.pass, known) {
            (false, Some((_, why))) => println!("             known red: {why}"),
            (false, None) => unexpected.push(l.id),
            (true, Some(_)) => println!("             listed as known red but passed"),
            (true, None) => {}
        }
    }
    println!("acceptance finished in {:.0} s", started.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
