#![allow(dead_code)]

use adfsdca::data::synthetic;
use adfsdca::sampler::{rng_from_seed, SolverRng};
use adfsdca::{Dataset, LossKind, Scaling};
use rand::Rng;

pub fn rng(seed: u64) -> SolverRng {
    rng_from_seed(seed)
}

/// The 500×50 instance used by the empirical tests.
pub fn bench_dataset() -> Dataset {
    synthetic(500, 50, 0.2, 7).unwrap().scale(Scaling::UnitNorm)
}

pub fn small_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    synthetic(n, d, 0.5, seed).unwrap()
}

pub fn dense(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.rows()
        .map(|r| {
            let mut x = vec![0.0; ds.d()];
            for (&j, &v) in r.indices.iter().zip(r.values) {
                x[j] = v;
            }
            x
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn loss_value(kind: LossKind, a: f64, y: f64) -> f64 {
    match kind {
        LossKind::Quadratic => 0.5 * (a - y) * (a - y),
        LossKind::Logistic => {
            let z = -y * a;
            if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            }
        }
    }
}

pub fn loss_derivative(kind: LossKind, a: f64, y: f64) -> f64 {
    match kind {
        LossKind::Quadratic => a - y,
        LossKind::Logistic => -y / (1.0 + (y * a).exp()),
    }
}

pub fn smoothness(kind: LossKind) -> f64 {
    match kind {
        LossKind::Quadratic => 1.0,
        LossKind::Logistic => 0.25,
    }
}

/// `κ_i = α_i + ℓ'(x_i·w)` from the dense matrix.
pub fn dense_residues(x: &[Vec<f64>], y: &[f64], alpha: &[f64], w: &[f64], kind: LossKind) -> Vec<f64> {
    x.iter()
        .zip(y)
        .zip(alpha)
        .map(|((xi, &yi), &a)| a + loss_derivative(kind, dot(xi, w), yi))
        .collect()
}

pub fn dense_primal(x: &[Vec<f64>], y: &[f64], lambda: f64, w: &[f64], kind: LossKind) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x.iter().zip(y).map(|(xi, &yi)| loss_value(kind, dot(xi, w), yi)).sum();
    data / n + 0.5 * lambda * dot(w, w)
}

/// `(1/λn) Σ α_i x_i` from the dense matrix.
pub fn dense_link(x: &[Vec<f64>], lambda: f64, alpha: &[f64]) -> Vec<f64> {
    let d = x[0].len();
    let s = 1.0 / (lambda * x.len() as f64);
    let mut w = vec![0.0; d];
    for (xi, &a) in x.iter().zip(alpha) {
        for j in 0..d {
            w[j] += s * a * xi[j];
        }
    }
    w
}

/// Uniform point on the probability simplex.
pub fn simplex(rng: &mut SolverRng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Random feasible marginals: `n` entries in `(0, 1)` summing to `b`,
/// obtained by shifting random logits until the sum matches.
pub fn random_marginals(rng: &mut SolverRng, n: usize, b: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let at = |t: f64| -> Vec<f64> { logits.iter().map(|z| 1.0 / (1.0 + (-(z + t)).exp())).collect() };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).iter().sum::<f64>() < b as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = at(0.5 * (lo + hi));
    let s: f64 = q.iter().sum();
    q.iter().map(|x| x * b as f64 / s).collect()
}

/// Euclidean projection onto `{p : Σp = 1, p ≥ floor}`.
pub fn project_simplex(v: &[f64], floor: f64) -> Vec<f64> {
    let n = v.len();
    let mass = 1.0 - floor * n as f64;
    let shifted: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut u = shifted.clone();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (k, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - mass) / (k + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    shifted.iter().map(|x| (x - tau).max(0.0) + floor).collect()
}

/// `Θ(p) = n²λ²Σβκ² / Σ(n²λ²β + vγ)κ²/p`, computed directly.
pub fn theta_direct(kappa: &[f64], p: &[f64], beta: &[f64], v: &[f64], gamma: f64, lambda: f64) -> f64 {
    let n = kappa.len() as f64;
    let r = n * n * lambda * lambda;
    let num: f64 = kappa.iter().zip(beta).map(|(k, b)| b * k * k).sum();
    let den: f64 = (0..kappa.len())
        .map(|i| (r * beta[i] + v[i] * gamma) * kappa[i] * kappa[i] / p[i])
        .sum();
    r * num / den
}

/// Maximizes `Θ(κ, p)` over the simplex by projected gradient descent on
/// `Σ c_i/p_i` with backtracking.
pub fn theta_maximizer(kappa: &[f64], beta: &[f64], v: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, f64) {
    let n = kappa.len();
    let r = (n as f64 * lambda).powi(2);
    let c: Vec<f64> = (0..n)
        .map(|i| (r * beta[i] + v[i] * gamma) * kappa[i] * kappa[i])
        .collect();
    let f = |p: &[f64]| -> f64 { c.iter().zip(p).map(|(ci, pi)| ci / pi).sum() };
    let floor = 1e-12;
    let mut p = vec![1.0 / n as f64; n];
    let mut fp = f(&p);
    let mut step = 1.0 / c.iter().fold(0.0f64, |m, &x| m.max(x)).max(1e-300);
    for _ in 0..100_000 {
        let g: Vec<f64> = c.iter().zip(&p).map(|(ci, pi)| -ci / (pi * pi)).collect();
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi - step * gi).collect();
            let q = project_simplex(&trial, floor);
            let fq = f(&q);
            let decrease: f64 = g.iter().zip(q.iter().zip(&p)).map(|(gi, (qi, pi))| gi * (qi - pi)).sum();
            let dist: f64 = q.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
            if fq <= fp + decrease + dist / (2.0 * step) {
                let done = (fp - fq).abs() <= 1e-15 * fp;
                p = q;
                fp = fq;
                accepted = true;
                step *= 1.5;
                if done {
                    return (p.clone(), theta_direct(kappa, &p, beta, v, gamma, lambda));
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let t = theta_direct(kappa, &p, beta, v, gamma, lambda);
    (p, t)
}

/// Slope and R² of a least-squares line through `(x, y)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
