use crate::data::Dataset;
use crate::error::{Error, Result};

/// Pseudo-dual vector `α` and primal iterate `w = (1/λn) Σ α_i x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub alpha: Vec<f64>,
    pub w: Vec<f64>,
    /// Sampling steps taken so far.
    pub iteration: usize,
    /// Coordinate updates so far (`b` per mini-batch step).
    pub updates: usize,
    /// Step parameter used by the most recent step.
    pub theta: f64,
    pub seed: u64,
}

impl SolverState {
    /// State for `α⁰` (zero when `None`), with `w` derived from it.
    pub fn new(ds: &Dataset, lambda: f64, alpha0: Option<&[f64]>, seed: u64) -> Result<Self> {
        let alpha = match alpha0 {
            Some(a) if a.len() != ds.n() => {
                return Err(Error::DimensionMismatch(format!(
                    "α⁰ has length {} but the dataset has {} examples",
                    a.len(),
                    ds.n()
                )))
            }
            Some(a) => a.to_vec(),
            None => vec![0.0; ds.n()],
        };
        let w = primal_from_dual(ds, lambda, &alpha);
        Ok(SolverState {
            alpha,
            w,
            iteration: 0,
            updates: 0,
            theta: 0.0,
            seed,
        })
    }

    /// Passes over the data, counted in coordinate updates.
    pub fn epoch(&self, n: usize) -> f64 {
        self.updates as f64 / n as f64
    }

    /// `‖w − (1/λn)Σα_i x_i‖`.
    pub fn link_residual(&self, ds: &Dataset, lambda: f64) -> f64 {
        let w_ref = primal_from_dual(ds, lambda, &self.alpha);
        self.w
            .iter()
            .zip(&w_ref)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Recomputes `w` from `α`.
    pub fn resync(&mut self, ds: &Dataset, lambda: f64) {
        self.w = primal_from_dual(ds, lambda, &self.alpha);
    }
}

/// `(1/λn) Σ α_i x_i`
pub fn primal_from_dual(ds: &Dataset, lambda: f64, alpha: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (lambda * ds.n() as f64);
    let coef: Vec<f64> = alpha.iter().map(|a| a * scale).collect();
    ds.combine(&coef)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Single-coordinate update
/// `α_i −= θκ_i/p_i`, `w −= θκ_i/(nλp_i) x_i`.
pub fn step_serial(state: &mut SolverState, ds: &Dataset, i: usize, p_i: f64, kappa_i: f64, theta: f64, lambda: f64) -> Result<()> {
    apply_batch(state, ds, lambda, theta, 1, &[i], |_| p_i, |_| kappa_i)
}

/// Mini-batch update over the ascending coordinate list `picks`:
/// `α_i −= θκ_i/(b p_i)` and one accumulated primal step
/// `w −= Σ θκ_i/(nλ b p_i) x_i`. With one pick this is exactly the serial step.
pub(crate) fn apply_batch(
    state: &mut SolverState,
    ds: &Dataset,
    lambda: f64,
    theta: f64,
    batch: usize,
    picks: &[usize],
    prob: impl Fn(usize) -> f64,
    kappa: impl Fn(usize) -> f64,
) -> Result<()> {
    let b = batch as f64;
    let nl = ds.n() as f64 * lambda;
    let mut scales = Vec::with_capacity(picks.len());
    for &i in picks {
        let p = prob(i);
        if !(p > 0.0) {
            return Err(Error::InvalidInput(format!("sampling probability {p} at coordinate {i}")));
        }
        scales.push(theta * kappa(i) / (b * p));
    }
    if let [i] = *picks {
        let s = scales[0];
        state.alpha[i] -= s;
        ds.row(i).axpy(-(s / nl), &mut state.w);
    } else {
        let mut delta = vec![0.0; ds.d()];
        for (&i, &s) in picks.iter().zip(&scales) {
            state.alpha[i] -= s;
            ds.row(i).axpy(s / nl, &mut delta);
        }
        for (wj, dj) in state.w.iter_mut().zip(&delta) {
            *wj -= dj;
        }
    }
    state.theta = theta;
    state.iteration += 1;
    state.updates += picks.len();
    Ok(())
}
