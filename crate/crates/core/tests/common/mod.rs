//! Test-only oracles that never touch the closed-form solvers: first-order
//! methods on the explicit objectives, naive loops for the metrics, and
//! random instance builders.

#![allow(dead_code)]

use cdl_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    // Box-Muller keeps this independent of rand_distr.
    Matrix::from_fn(rows, cols, |_, _| {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

pub fn frob2(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn top_eigenvalue(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w) / v.dot(&v);
        v = w / norm;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // small safety margin for the step size
    lambda * 1.0001
}

/// Accelerated projected gradient with function-value restart.
pub fn apg(
    start: Matrix,
    lipschitz: f64,
    iters: usize,
    objective: impl Fn(&Matrix) -> f64,
    gradient: impl Fn(&Matrix) -> Matrix,
    project: impl Fn(&mut Matrix),
) -> Matrix {
    let step = 1.0 / lipschitz;
    let mut x = start.clone();
    project(&mut x);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut fx = objective(&x);
    for it in 0..iters {
        if it % 100 == 99 {
            let mut probe = &x - gradient(&x) * step;
            project(&mut probe);
            if (&probe - &x).norm() <= 1e-14 * (1.0 + x.norm()) {
                break;
            }
        }
        let mut next = &y - gradient(&y) * step;
        project(&mut next);
        let fnext = objective(&next);
        if fnext > fx {
            // restart momentum from the current iterate
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        fx = fnext;
        t = t_next;
    }
    x
}

pub fn no_projection(_: &mut Matrix) {}

pub fn unit_ball_columns(d: &mut Matrix) {
    for mut c in d.column_iter_mut() {
        let n = c.norm();
        if n > 1.0 {
            c /= n;
        }
    }
}

pub fn joint_code_objective(d1: &Matrix, d2: &Matrix, p: &Matrix, c: &Matrix, lambda: f64, z: &Matrix) -> f64 {
    frob2(&(p - d1 * z)) + lambda * frob2(&(c - d2 * z))
}

pub fn joint_code_oracle(d1: &Matrix, d2: &Matrix, p: &Matrix, c: &Matrix, lambda: f64) -> Matrix {
    let hess = d1.transpose() * d1 + d2.transpose() * d2 * lambda;
    let l = 2.0 * top_eigenvalue(&hess);
    apg(
        Matrix::zeros(d1.ncols(), p.ncols()),
        l,
        200_000,
        |z| joint_code_objective(d1, d2, p, c, lambda, z),
        |z| (d1.transpose() * (d1 * z - p) + d2.transpose() * (d2 * z - c) * lambda) * 2.0,
        no_projection,
    )
}

pub fn prototype_objective(target: &Matrix, x: &Matrix, h: &Matrix, beta: f64, p: &Matrix) -> f64 {
    frob2(&(p - target)) + beta * frob2(&(x - p * h))
}

pub fn prototype_oracle(target: &Matrix, x: &Matrix, h: &Matrix, beta: f64) -> Matrix {
    let hht = h * h.transpose();
    let l = 2.0 * (1.0 + beta * top_eigenvalue(&hht));
    apg(
        Matrix::zeros(target.nrows(), target.ncols()),
        l,
        200_000,
        |p| prototype_objective(target, x, h, beta, p),
        |p| ((p - target) + (p * h - x) * h.transpose() * beta) * 2.0,
        no_projection,
    )
}

pub fn ridge_objective(d: &Matrix, x: &Matrix, gamma: f64, z: &Matrix) -> f64 {
    frob2(&(x - d * z)) + gamma * frob2(z)
}

pub fn ridge_oracle(d: &Matrix, x: &Matrix, gamma: f64) -> Matrix {
    let hess = d.transpose() * d;
    let l = 2.0 * (top_eigenvalue(&hess) + gamma);
    apg(
        Matrix::zeros(d.ncols(), x.ncols()),
        l,
        200_000,
        |z| ridge_objective(d, x, gamma, z),
        |z| (d.transpose() * (d * z - x) + z * gamma) * 2.0,
        no_projection,
    )
}

pub fn dictionary_objective(targets: &[(&Matrix, &Matrix, f64)], d: &Matrix) -> f64 {
    targets
        .iter()
        .map(|(p, z, w)| w * frob2(&(*p - d * *z)))
        .sum()
}

pub fn dictionary_oracle(targets: &[(&Matrix, &Matrix, f64)], rows: usize, n_b: usize) -> Matrix {
    let mut g = Matrix::zeros(n_b, n_b);
    for (_, z, w) in targets {
        g += *z * z.transpose() * *w;
    }
    let l = 2.0 * top_eigenvalue(&g);
    apg(
        Matrix::zeros(rows, n_b),
        l,
        200_000,
        |d| dictionary_objective(targets, d),
        |d| {
            let mut grad = Matrix::zeros(rows, n_b);
            for (p, z, w) in targets {
                grad += (d * *z - *p) * z.transpose() * (2.0 * w);
            }
            grad
        },
        unit_ball_columns,
    )
}

/// Per-class accuracy by explicit loops over classes and samples.
pub fn naive_per_class(pred: &[usize], truth: &[usize], classes: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut present = 0;
    for &c in classes {
        let mut n = 0;
        let mut hit = 0;
        for i in 0..truth.len() {
            if truth[i] == c {
                n += 1;
                if pred[i] == c {
                    hit += 1;
                }
            }
        }
        if n > 0 {
            total += hit as f64 / n as f64;
            present += 1;
        }
    }
    total / present as f64
}

/// Random labels covering every class at least once.
pub fn covering_labels(classes: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    for (c, l) in labels.iter_mut().take(classes).enumerate() {
        *l = c;
    }
    labels
}

/// Gaussian features and semantics with every seen class populated.
pub fn random_dataset(seed: u64, d: usize, m: usize, k: usize, l: usize, per_class: usize) -> cdl_core::data::Dataset {
    let mut r = rng(seed);
    let n = per_class * k;
    let features = gaussian(d, n, &mut r);
    let labels = covering_labels(k, n, &mut r);
    cdl_core::data::Dataset {
        features,
        labels,
        semantics_seen: gaussian(m, k, &mut r),
        semantics_unseen: gaussian(m, l, &mut r),
        seen_classes: (0..k).map(|i| format!("s{i}")).collect(),
        unseen_classes: (0..l).map(|i| format!("u{i}")).collect(),
        test_unseen: None,
        test_seen: None,
        validation_classes: Vec::new(),
    }
}
