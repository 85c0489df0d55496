//! Scalar loss families with derivatives and smoothness constants.

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `½(a − y)²`
    Quadratic,
    /// `log(1 + exp(−y·a))`
    Logistic,
}

impl LossKind {
    pub fn value(self, a: f64, y: f64) -> f64 {
        match self {
            LossKind::Quadratic => 0.5 * (a - y) * (a - y),
            LossKind::Logistic => softplus(-y * a),
        }
    }

    pub fn derivative(self, a: f64, y: f64) -> f64 {
        match self {
            LossKind::Quadratic => a - y,
            // −y / (1 + exp(y·a)) = −y·σ(−y·a)
            LossKind::Logistic => -y * sigmoid(-y * a),
        }
    }

    /// Lipschitz constant `L̃` of the scalar derivative.
    pub fn smoothness(self) -> f64 {
        match self {
            LossKind::Quadratic => 1.0,
            LossKind::Logistic => 0.25,
        }
    }

    /// Whether the loss admits arbitrary real targets.
    pub fn accepts_regression_targets(self) -> bool {
        matches!(self, LossKind::Quadratic)
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" | "square" => Ok(LossKind::Quadratic),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::Config(format!("unknown loss '{other}'"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Quadratic => "quadratic",
            LossKind::Logistic => "logistic",
        })
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A loss family bound to a dataset: per-example constants `L_i = v_i·L̃`,
/// their mean `L̄` and maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    kind: LossKind,
    smoothness: f64,
    lipschitz: Vec<f64>,
    mean_lipschitz: f64,
    max_lipschitz: f64,
}

impl LossModel {
    /// Binds `kind` to `ds`. Logistic loss requires labels in {-1, +1}.
    pub fn new(kind: LossKind, ds: &Dataset) -> Result<Self> {
        if !kind.accepts_regression_targets() && !ds.is_binary() {
            return Err(Error::InvalidInput(format!(
                "{kind} loss requires labels in {{-1, +1}}"
            )));
        }
        Ok(Self::with_smoothness(kind, kind.smoothness(), ds))
    }

    /// Uses a caller-supplied `L̃`, e.g. 2 for the unhalved square loss.
    pub fn with_smoothness(kind: LossKind, smoothness: f64, ds: &Dataset) -> Self {
        let lipschitz: Vec<f64> = ds.sq_norms().iter().map(|v| v * smoothness).collect();
        let mean_lipschitz = lipschitz.iter().sum::<f64>() / lipschitz.len() as f64;
        let max_lipschitz = lipschitz.iter().copied().fold(0.0, f64::max);
        LossModel {
            kind,
            smoothness,
            lipschitz,
            mean_lipschitz,
            max_lipschitz,
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Per-example `L̃_i` (constant within a family).
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn mean_lipschitz(&self) -> f64 {
        self.mean_lipschitz
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.max_lipschitz
    }

    pub fn value(&self, a: f64, y: f64) -> f64 {
        self.kind.value(a, y)
    }

    pub fn derivative(&self, a: f64, y: f64) -> f64 {
        self.kind.derivative(a, y)
    }
}

/// `P(w) = (1/n)Σ ℓ_i(x_i^T w) + (λ/2)‖w‖²`
pub fn primal_objective(ds: &Dataset, loss: LossKind, lambda: f64, w: &[f64]) -> f64 {
    let margins = ds.margins(w);
    primal_from_margins(ds, loss, lambda, w, &margins)
}

pub fn primal_from_margins(ds: &Dataset, loss: LossKind, lambda: f64, w: &[f64], margins: &[f64]) -> f64 {
    let data: f64 = margins
        .iter()
        .zip(ds.labels())
        .map(|(&a, &y)| loss.value(a, y))
        .sum::<f64>()
        / ds.n() as f64;
    data + 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>()
}

/// `∇P(w) = (1/n)Σ ℓ'_i(x_i^T w) x_i + λw`
pub fn primal_gradient(ds: &Dataset, loss: LossKind, lambda: f64, w: &[f64]) -> Vec<f64> {
    let n = ds.n() as f64;
    let coef: Vec<f64> = ds
        .margins(w)
        .iter()
        .zip(ds.labels())
        .map(|(&a, &y)| loss.derivative(a, y) / n)
        .collect();
    let mut g = ds.combine(&coef);
    for (g, &x) in g.iter_mut().zip(w) {
        *g += lambda * x;
    }
    g
}
