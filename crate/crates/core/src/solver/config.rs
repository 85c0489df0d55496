use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::probability::{ConvexityCase, EsoMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Uniform sampling with a fixed step.
    Dfsdca,
    /// Optimal probabilities recomputed every iteration.
    Adfsdca,
    /// Probabilities recomputed once per epoch and shrunk after each draw.
    AdfsdcaPlus,
    /// Adaptive probabilities with `b` coordinates per step.
    Minibatch,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dfsdca, Variant::Adfsdca, Variant::AdfsdcaPlus, Variant::Minibatch];
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dfsdca" => Ok(Variant::Dfsdca),
            "adfsdca" => Ok(Variant::Adfsdca),
            "adfsdca_plus" | "adfsdca+" | "adfsdca-plus" => Ok(Variant::AdfsdcaPlus),
            "minibatch" | "mini-batch" => Ok(Variant::Minibatch),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Dfsdca => "dfsdca",
            Variant::Adfsdca => "adfsdca",
            Variant::AdfsdcaPlus => "adfsdca_plus",
            Variant::Minibatch => "minibatch",
        })
    }
}

/// How `θ` is chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaPolicy {
    /// The instance-wide lower bound `θ̲`.
    Fixed,
    /// `Θ(κ, p)` at the current residues.
    #[default]
    Adaptive,
}

impl FromStr for ThetaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(ThetaPolicy::Fixed),
            "adaptive" => Ok(ThetaPolicy::Adaptive),
            other => Err(Error::Config(format!("unknown theta policy '{other}'"))),
        }
    }
}

impl fmt::Display for ThetaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaPolicy::Fixed => "fixed",
            ThetaPolicy::Adaptive => "adaptive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub lambda: f64,
    pub case: ConvexityCase,
    pub theta: ThetaPolicy,
    /// Probability shrink factor `s ≥ 1` (adfSDCA+).
    pub shrink: f64,
    /// Batch size `b` (mini-batch).
    pub batch: usize,
    pub eso_mode: EsoMode,
    pub epochs: usize,
    pub seed: u64,
    pub alpha0: Option<Vec<f64>>,
    /// Fixed step for uniform dfSDCA; defaults to `λ/(λn + max_i v_iL̃)`.
    pub theta_override: Option<f64>,
    /// Coordinate updates between trace rows; defaults to `n`.
    pub trace_every: Option<usize>,
    /// Stop at the first trace row whose suboptimality is at most this.
    pub target: Option<f64>,
    /// Stop once `‖κ‖∞` falls below this (adaptive variants only).
    pub residue_tol: Option<f64>,
    /// Record wall-clock seconds in the trace (zero otherwise).
    pub timing: bool,
}

impl SolverConfig {
    pub fn new(variant: Variant, lambda: f64) -> Self {
        SolverConfig {
            variant,
            lambda,
            case: ConvexityCase::AllConvex,
            theta: ThetaPolicy::Adaptive,
            shrink: 10.0,
            batch: 1,
            eso_mode: EsoMode::ExampleNnz,
            epochs: 20,
            seed: 0,
            alpha0: None,
            theta_override: None,
            trace_every: None,
            target: None,
            residue_tol: None,
            timing: true,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.shrink >= 1.0) {
            return Err(Error::Config(format!("shrink must be at least 1, got {}", self.shrink)));
        }
        if self.variant == Variant::Minibatch && (self.batch < 1 || self.batch >= n.max(2)) {
            return Err(Error::Config(format!("batch size {} must lie in [1, {n})", self.batch)));
        }
        if let Some(a) = &self.alpha0 {
            if a.len() != n {
                return Err(Error::Config(format!("alpha0 has length {}, expected {n}", a.len())));
            }
        }
        if let Some(t) = self.theta_override {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("theta override {t} outside (0, 1]")));
            }
        }
        if self.trace_every == Some(0) {
            return Err(Error::Config("trace interval must be positive".into()));
        }
        Ok(())
    }
}
