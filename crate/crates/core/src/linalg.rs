//! Allocation-free kernels on small dense complex matrices.
//!
//! All buffers are column-major `d×d` slices (entry `(i, j)` at `i + j*d`),
//! the same layout nalgebra uses, so `DMatrix::as_slice` can be passed in
//! directly.

use num_complex::Complex64 as C64;

const MAX_SWEEPS: usize = 64;

#[inline]
pub(crate) fn idx(i: usize, j: usize, d: usize) -> usize {
    i + j * d
}

/// Cyclic complex Jacobi eigensolver for Hermitian matrices.
///
/// `a` is overwritten. On return `values[k]` and column `k` of `vectors`
/// form an eigenpair, with `vectors` unitary.
pub(crate) fn hermitian_eigen(a: &mut [C64], d: usize, values: &mut [f64], vectors: &mut [C64]) {
    debug_assert_eq!(a.len(), d * d);
    vectors.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    for k in 0..d {
        vectors[idx(k, k, d)] = C64::new(1.0, 0.0);
    }

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        let mut total = 0.0;
        for j in 0..d {
            for i in 0..d {
                let n = a[idx(i, j, d)].norm_sqr();
                total += n;
                if i != j {
                    off += n;
                }
            }
        }
        if off <= 1e-34 * total || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                rotate(a, vectors, d, p, q);
            }
        }
    }

    for k in 0..d {
        values[k] = a[idx(k, k, d)].re;
    }
}

fn rotate(a: &mut [C64], v: &mut [C64], d: usize, p: usize, q: usize) {
    let apq = a[idx(p, q, d)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let phase = apq / mag;
    let app = a[idx(p, p, d)].re;
    let aqq = a[idx(q, q, d)].re;
    let tau = (aqq - app) / (2.0 * mag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // J = diag(1, conj(phase)) * [[c, s], [-s, c]] restricted to (p, q).
    let jpp = C64::new(c, 0.0);
    let jpq = C64::new(s, 0.0);
    let jqp = phase.conj() * (-s);
    let jqq = phase.conj() * c;

    for k in 0..d {
        let akp = a[idx(k, p, d)];
        let akq = a[idx(k, q, d)];
        a[idx(k, p, d)] = akp * jpp + akq * jqp;
        a[idx(k, q, d)] = akp * jpq + akq * jqq;
    }
    for k in 0..d {
        let apk = a[idx(p, k, d)];
        let aqk = a[idx(q, k, d)];
        a[idx(p, k, d)] = jpp.conj() * apk + jqp.conj() * aqk;
        a[idx(q, k, d)] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a[idx(p, q, d)] = C64::new(0.0, 0.0);
    a[idx(q, p, d)] = C64::new(0.0, 0.0);
    a[idx(p, p, d)] = C64::new(a[idx(p, p, d)].re, 0.0);
    a[idx(q, q, d)] = C64::new(a[idx(q, q, d)].re, 0.0);

    for k in 0..d {
        let vkp = v[idx(k, p, d)];
        let vkq = v[idx(k, q, d)];
        v[idx(k, p, d)] = vkp * jpp + vkq * jqp;
        v[idx(k, q, d)] = vkp * jpq + vkq * jqq;
    }
}

/// `out = V diag(exp(-i λ dt)) V†`.
pub(crate) fn exp_from_eigen(values: &[f64], vectors: &[C64], dt: f64, d: usize, out: &mut [C64]) {
    let mut phases = [C64::new(0.0, 0.0); 8];
    let mut heap;
    let phases: &mut [C64] = if d <= phases.len() {
        &mut phases[..d]
    } else {
        heap = vec![C64::new(0.0, 0.0); d];
        &mut heap[..]
    };
    for (ph, &lam) in phases.iter_mut().zip(values) {
        *ph = C64::from_polar(1.0, -lam * dt);
    }
    for j in 0..d {
        for i in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                acc += vectors[idx(i, k, d)] * phases[k] * vectors[idx(j, k, d)].conj();
            }
            out[idx(i, j, d)] = acc;
        }
    }
}

/// First divided difference of `λ ↦ exp(-i λ dt)` at `(a, b)`, stable as
/// `a → b` where it tends to the derivative `-i dt exp(-i a dt)`.
#[inline]
pub(crate) fn exp_divided_difference(a: f64, b: f64, dt: f64) -> C64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (a - b) * dt;
    let sinc = if half.abs() < 1e-4 {
        let h2 = half * half;
        1.0 - h2 / 6.0 + h2 * h2 / 120.0
    } else {
        half.sin() / half
    };
    C64::new(0.0, -dt) * C64::from_polar(1.0, -mid * dt) * sinc
}

/// `out = a * b`.
pub(crate) fn matmul(a: &[C64], b: &[C64], d: usize, out: &mut [C64]) {
    for j in 0..d {
        for i in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                acc += a[idx(i, k, d)] * b[idx(k, j, d)];
            }
            out[idx(i, j, d)] = acc;
        }
    }
}

/// `out = a x`.
pub(crate) fn matvec(a: &[C64], x: &[C64], d: usize, out: &mut [C64]) {
    for i in 0..d {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..d {
            acc += a[idx(i, k, d)] * x[k];
        }
        out[i] = acc;
    }
}

/// `out = a† x`.
pub(crate) fn adjoint_matvec(a: &[C64], x: &[C64], d: usize, out: &mut [C64]) {
    for i in 0..d {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..d {
            acc += a[idx(k, i, d)].conj() * x[k];
        }
        out[i] = acc;
    }
}

/// `⟨x|y⟩`, conjugate-linear in the first argument.
#[inline]
pub(crate) fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Largest entry of `|a - a†|`.
pub(crate) fn hermitian_deviation(a: &[C64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..=j {
            let dev = (a[idx(i, j, d)] - a[idx(j, i, d)].conj()).norm();
            worst = worst.max(dev);
        }
    }
    worst
}

/// Largest entry of `|a† a - I|`.
pub(crate) fn unitarity_deviation(a: &[C64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                acc += a[idx(k, i, d)].conj() * a[idx(k, j, d)];
            }
            if i == j {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_hermitian(d: usize, seed: u64) -> Vec<C64> {
        // Small LCG keeps this test free of RNG plumbing.
        let mut state = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut a = vec![C64::new(0.0, 0.0); d * d];
        for j in 0..d {
            for i in 0..=j {
                let z = if i == j {
                    C64::new(next(), 0.0)
                } else {
                    C64::new(next(), next())
                };
                a[idx(i, j, d)] = z;
                a[idx(j, i, d)] = z.conj();
            }
        }
        a
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        for d in 1..=6 {
            for seed in 0..10 {
                let a = random_hermitian(d, seed * 31 + d as u64);
                let mut work = a.clone();
                let mut vals = vec![0.0; d];
                let mut vecs = vec![C64::new(0.0, 0.0); d * d];
                hermitian_eigen(&mut work, d, &mut vals, &mut vecs);
                assert!(unitarity_deviation(&vecs, d) < 1e-13);
                let v = DMatrix::from_column_slice(d, d, &vecs);
                let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    d,
                    vals.iter().map(|&x| C64::new(x, 0.0)),
                ));
                let rebuilt = &v * lam * v.adjoint();
                let orig = DMatrix::from_column_slice(d, d, &a);
                assert!((rebuilt - orig).camax() < 1e-13, "d={d} seed={seed}");
            }
        }
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        for d in 2..=4 {
            let a = random_hermitian(d, 99 + d as u64);
            let mut work = a.clone();
            let mut vals = vec![0.0; d];
            let mut vecs = vec![C64::new(0.0, 0.0); d * d];
            hermitian_eigen(&mut work, d, &mut vals, &mut vecs);
            vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let reference = DMatrix::from_column_slice(d, d, &a).symmetric_eigenvalues();
            let mut reference: Vec<f64> = reference.iter().copied().collect();
            reference.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (x, y) in vals.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divided_difference_limits() {
        let dt = 0.01;
        let a = 1.3;
        let exact = C64::new(0.0, -dt) * C64::from_polar(1.0, -a * dt);
        assert!((exp_divided_difference(a, a, dt) - exact).norm() < 1e-16);
        let b = 0.2;
        let direct = (C64::from_polar(1.0, -a * dt) - C64::from_polar(1.0, -b * dt)) / (a - b);
        assert!((exp_divided_difference(a, b, dt) - direct).norm() < 1e-14);
    }
}
