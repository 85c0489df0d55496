//! Training loops for the dual-free SDCA family.
//!
//! All variants share the same state and update rule; they differ in how
//! coordinates are sampled and how `θ` is chosen:
//!
//! | variant       | sampling                                   | `θ`                      |
//! |---------------|--------------------------------------------|--------------------------|
//! | `dfsdca`      | uniform                                    | `λ/(λn + max_i L_i)`     |
//! | `adfsdca`     | optimal `p*(κ)`, alias table per iteration | `Θ(κ, p*)` or `θ̲`        |
//! | `adfsdca_plus`| `p*` once per epoch, shrunk by `s` on draw | `Θ` at the epoch start   |
//! | `minibatch`   | `b`-subsets with marginals `b·p*`          | `b·Θ` with ESO constants |
//!
//! adfSDCA+ steps with the draw-time probability, floored so that
//! `θ/p_i ≤ 2/(1 + L_i/(λn))`.

mod config;
mod reference;
mod state;
mod trace;

pub use config::{SolverConfig, ThetaPolicy, Variant};
pub use reference::{
    compute_gap, expected_update, residue_gradient, run_reference, run_reference_with, variance_check, GapReport,
    Reference, ReferenceOptions, VarianceReport,
};
pub use state::{norm, primal_from_dual, step_serial, SolverState};
pub use trace::{epochs_to_target, iterations_to_target, write_trace, Histogram, TraceRecord, TRACE_HEADER};

use std::time::Instant;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{primal_from_margins, LossModel};
use crate::probability::{
    eso_v, optimal_probabilities, theta_lower_bound, theta_of, theta_of_batch, CaseParams, ResidueVector, RESIDUE_EPS,
};
use crate::sampler::{rng_from_seed, AliasTable, SamplingPlan, SolverRng, TreeSampler};
use state::apply_batch;

/// Marginals are capped here when `b·p*_i` would reach one.
pub const MARGINAL_CAP: f64 = 1.0 - 1e-6;

/// Relative drift of the primal-dual link that triggers a resync.
pub const LINK_TOL: f64 = 1e-8;

/// What an observer sees just before a step is applied.
#[derive(Debug)]
pub struct IterationView<'a> {
    pub state: &'a SolverState,
    /// Full residue vector, when the variant computes one this step.
    pub residues: Option<&'a ResidueVector>,
    /// Per-coordinate probabilities `p` (marginals divided by `b` for
    /// mini-batches), when the variant holds a full vector.
    pub probabilities: Option<&'a [f64]>,
    /// Curvature constants `v` used in the step-size formulas.
    pub curvature: &'a [f64],
    pub params: &'a CaseParams,
    pub theta: f64,
    pub batch: usize,
    pub picks: &'a [usize],
    /// `p_i` used in the step for each pick.
    pub pick_probabilities: &'a [f64],
    /// Probability with which each pick was drawn; differs from
    /// `pick_probabilities` only where adfSDCA+ floors the step.
    pub draw_probabilities: &'a [f64],
}

/// Hooks into a running solver. Both methods default to no-ops.
pub trait Observer {
    fn iteration(&mut self, _view: &IterationView<'_>) {}

    /// Called at every trace row with the residues of the current state.
    fn checkpoint(&mut self, _state: &SolverState, _residues: &ResidueVector) {}
}

impl Observer for () {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// The epoch budget was used up.
    Completed,
    /// Every residue vanished.
    Converged,
    /// The trace reached the configured suboptimality.
    TargetReached,
    /// `‖κ‖∞` dropped below the configured tolerance.
    ResidueTolerance,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<TraceRecord>,
    pub state: SolverState,
    pub status: RunStatus,
    /// Largest relative link drift seen at a checkpoint.
    pub max_link_drift: f64,
    pub resyncs: usize,
    /// `θ̲` for the curvature constants in use.
    pub theta_lower: f64,
}

enum Outcome {
    Stepped,
    Converged,
    ResidueTolerance,
}

enum Engine {
    Uniform {
        theta: f64,
        uniform: Vec<f64>,
    },
    Adaptive {
        v: Vec<f64>,
        batch: usize,
        theta_lower: f64,
    },
    Plus {
        v: Vec<f64>,
        theta_lower: f64,
        tree: Option<TreeSampler>,
        theta: f64,
        left: usize,
    },
}

pub struct Solver<'a> {
    ds: &'a Dataset,
    loss: &'a LossModel,
    cfg: SolverConfig,
    cp: CaseParams,
    reference: Option<&'a Reference>,
}

impl<'a> Solver<'a> {
    pub fn new(ds: &'a Dataset, loss: &'a LossModel, cfg: SolverConfig) -> Result<Self> {
        cfg.validate(ds.n())?;
        if loss.lipschitz().len() != ds.n() {
            return Err(Error::DimensionMismatch("loss model was built for another dataset".into()));
        }
        let cp = CaseParams::new(cfg.case, loss, cfg.lambda)?;
        Ok(Solver {
            ds,
            loss,
            cfg,
            cp,
            reference: None,
        })
    }

    pub fn with_reference(mut self, reference: &'a Reference) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn params(&self) -> &CaseParams {
        &self.cp
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn run(&self) -> Result<RunResult> {
        self.run_observed(&mut ())
    }

    pub fn run_observed(&self, obs: &mut dyn Observer) -> Result<RunResult> {
        let ds = self.ds;
        let n = ds.n();
        let cfg = &self.cfg;
        let mut state = SolverState::new(ds, cfg.lambda, cfg.alpha0.as_deref(), cfg.seed)?;
        let mut rng = rng_from_seed(cfg.seed);
        let mut engine = self.engine()?;
        let theta_lower = match &engine {
            Engine::Uniform { theta, .. } => *theta,
            Engine::Adaptive { theta_lower, .. } | Engine::Plus { theta_lower, .. } => *theta_lower,
        };
        state.theta = theta_lower;

        let mut rec = Recorder {
            solver: self,
            every: cfg.trace_every.unwrap_or(n),
            next_at: 0,
            start: Instant::now(),
            trace: Vec::new(),
            max_link_drift: 0.0,
            resyncs: 0,
        };
        let budget = cfg.epochs.saturating_mul(n);
        let mut status = RunStatus::Completed;
        let mut check = rec.record(&mut state, obs)?;
        loop {
            if let Some(s) = check.take() {
                status = s;
                break;
            }
            if state.updates >= budget {
                break;
            }
            let outcome = self.step(&mut engine, &mut state, &mut rng, obs)?;
            match outcome {
                Outcome::Stepped => {
                    if state.updates >= rec.next_at {
                        check = rec.record(&mut state, obs)?;
                    }
                }
                Outcome::Converged => {
                    status = RunStatus::Converged;
                    break;
                }
                Outcome::ResidueTolerance => {
                    status = RunStatus::ResidueTolerance;
                    break;
                }
            }
        }
        if rec.trace.last().map(|r| r.iter) != Some(state.iteration) {
            rec.record(&mut state, obs)?;
        }
        Ok(RunResult {
            trace: rec.trace,
            state,
            status,
            max_link_drift: rec.max_link_drift,
            resyncs: rec.resyncs,
            theta_lower,
        })
    }

    fn engine(&self) -> Result<Engine> {
        let ds = self.ds;
        Ok(match self.cfg.variant {
            Variant::Dfsdca => {
                let n = ds.n() as f64;
                let lambda = self.cfg.lambda;
                let theta = self
                    .cfg
                    .theta_override
                    .unwrap_or(lambda / (lambda * n + self.loss.max_lipschitz()));
                Engine::Uniform {
                    theta,
                    uniform: vec![1.0 / n; ds.n()],
                }
            }
            Variant::Adfsdca => {
                let v = ds.sq_norms().to_vec();
                let theta_lower = theta_lower_bound(&self.cp, &v, 1);
                Engine::Adaptive {
                    v,
                    batch: 1,
                    theta_lower,
                }
            }
            Variant::Minibatch => {
                let b = self.cfg.batch;
                let v = eso_v(ds, b, self.cfg.eso_mode)?.v;
                let theta_lower = theta_lower_bound(&self.cp, &v, b);
                Engine::Adaptive { v, batch: b, theta_lower }
            }
            Variant::AdfsdcaPlus => {
                let v = ds.sq_norms().to_vec();
                let theta_lower = theta_lower_bound(&self.cp, &v, 1);
                Engine::Plus {
                    v,
                    theta_lower,
                    tree: None,
                    theta: theta_lower,
                    left: 0,
                }
            }
        })
    }

    fn residues(&self, state: &SolverState, margins: &mut Vec<f64>) -> ResidueVector {
        margins.resize(self.ds.n(), 0.0);
        self.ds.margins_into(&state.w, margins);
        ResidueVector::from_margins(&state.alpha, margins, self.ds.labels(), self.loss.kind())
    }

    /// `κ_i` at the current state, zeroed under the residue threshold.
    fn residue_at(&self, state: &SolverState, i: usize) -> f64 {
        let a = state.alpha[i];
        let g = self.loss.derivative(self.ds.row(i).dot(&state.w), self.ds.labels()[i]);
        let k = a + g;
        if k.abs() > RESIDUE_EPS * (1.0 + a.abs() + g.abs()) {
            k
        } else {
            0.0
        }
    }

    fn below_tolerance(&self, kappa: &ResidueVector) -> bool {
        self.cfg.residue_tol.is_some_and(|tol| kappa.max_abs() < tol)
    }

    fn step(&self, engine: &mut Engine, state: &mut SolverState, rng: &mut SolverRng, obs: &mut dyn Observer) -> Result<Outcome> {
        let ds = self.ds;
        let lambda = self.cfg.lambda;
        match engine {
            Engine::Uniform { theta, uniform } => {
                let i = rng.random_range(0..ds.n());
                let k = self.residue_at(state, i);
                let p = uniform[i];
                obs.iteration(&IterationView {
                    state,
                    residues: None,
                    probabilities: Some(uniform),
                    curvature: ds.sq_norms(),
                    params: &self.cp,
                    theta: *theta,
                    batch: 1,
                    picks: &[i],
                    pick_probabilities: &[p],
                    draw_probabilities: &[p],
                });
                apply_batch(state, ds, lambda, *theta, 1, &[i], |_| p, |_| k)?;
                Ok(Outcome::Stepped)
            }
            Engine::Adaptive { v, batch, theta_lower } => {
                let mut margins = Vec::new();
                let kappa = self.residues(state, &mut margins);
                if kappa.is_zero() {
                    return Ok(Outcome::Converged);
                }
                if self.below_tolerance(&kappa) {
                    return Ok(Outcome::ResidueTolerance);
                }
                let pstar = optimal_probabilities(&kappa, &self.cp, v)?;
                let b = *batch;
                let (picks, p_eff, capped) = if b == 1 {
                    let table = AliasTable::new(&pstar)?;
                    (vec![table.draw(rng)], pstar, false)
                } else {
                    draw_batch(&kappa, &pstar, b, rng)?
                };
                let theta_max = theta_of_batch(&kappa, &p_eff, &self.cp, v, b)?;
                debug_assert!(
                    capped || theta_max >= *theta_lower * (1.0 - 1e-9),
                    "step bound {theta_max} below the lower bound {theta_lower}"
                );
                let theta = match self.cfg.theta {
                    ThetaPolicy::Adaptive => theta_max.min(1.0),
                    ThetaPolicy::Fixed if capped => theta_lower.min(theta_max),
                    ThetaPolicy::Fixed => *theta_lower,
                };
                let pick_p: Vec<f64> = picks.iter().map(|&i| p_eff[i]).collect();
                obs.iteration(&IterationView {
                    state,
                    residues: Some(&kappa),
                    probabilities: Some(&p_eff),
                    curvature: v,
                    params: &self.cp,
                    theta,
                    batch: b,
                    picks: &picks,
                    pick_probabilities: &pick_p,
                    draw_probabilities: &pick_p,
                });
                let kv = kappa.values();
                apply_batch(state, ds, lambda, theta, b, &picks, |i| p_eff[i], |i| kv[i])?;
                Ok(Outcome::Stepped)
            }
            Engine::Plus {
                v,
                theta_lower,
                tree,
                theta,
                left,
            } => {
                let exhausted = tree.as_ref().is_none_or(|t| !(t.total() > 0.0));
                if *left == 0 || exhausted {
                    let mut margins = Vec::new();
                    let kappa = self.residues(state, &mut margins);
                    if kappa.is_zero() {
                        return Ok(Outcome::Converged);
                    }
                    if self.below_tolerance(&kappa) {
                        return Ok(Outcome::ResidueTolerance);
                    }
                    let pstar = optimal_probabilities(&kappa, &self.cp, v)?;
                    *theta = match self.cfg.theta {
                        ThetaPolicy::Adaptive => theta_of(&kappa, &pstar, &self.cp, v)?.min(1.0),
                        ThetaPolicy::Fixed => *theta_lower,
                    };
                    *tree = Some(TreeSampler::new(&pstar)?);
                    *left = ds.n();
                }
                let t = tree.as_mut().expect("tree built above");
                let (i, drawn) = t.draw(rng)?;
                let k = self.residue_at(state, i);
                // θ/p_i ≤ 2/(1 + L_i/(λn))
                let nl = lambda * ds.n() as f64;
                let p = drawn.max(*theta * (1.0 + self.loss.lipschitz()[i] / nl) / 2.0);
                obs.iteration(&IterationView {
                    state,
                    residues: None,
                    probabilities: None,
                    curvature: v,
                    params: &self.cp,
                    theta: *theta,
                    batch: 1,
                    picks: &[i],
                    pick_probabilities: &[p],
                    draw_probabilities: &[drawn],
                });
                apply_batch(state, ds, lambda, *theta, 1, &[i], |_| p, |_| k)?;
                let shrunk = t.weight(i) / self.cfg.shrink;
                t.update(i, shrunk)?;
                *left -= 1;
                Ok(Outcome::Stepped)
            }
        }
    }
}

/// Samples a mini-batch with marginals `b·p*` (capped below one) over the
/// residue support. Returns the picks, the per-coordinate `p = q/b`, and
/// whether the marginals had to be altered.
fn draw_batch(kappa: &ResidueVector, pstar: &[f64], b: usize, rng: &mut SolverRng) -> Result<(Vec<usize>, Vec<f64>, bool)> {
    let support = kappa.support();
    let bf = b as f64;
    let mut p_eff = vec![0.0; pstar.len()];
    if support.len() <= b {
        for &i in support {
            p_eff[i] = 1.0 / bf;
        }
        return Ok((support.to_vec(), p_eff, true));
    }
    let mut q: Vec<f64> = support.iter().map(|&i| bf * pstar[i]).collect();
    let capped = cap_marginals(&mut q, b);
    let plan = SamplingPlan::build(&q, b)?;
    for (k, &i) in support.iter().enumerate() {
        p_eff[i] = q[k] / bf;
    }
    let picks = plan.draw(rng).into_iter().map(|k| support[k]).collect();
    Ok((picks, p_eff, capped))
}

/// Caps marginals at [`MARGINAL_CAP`] and rescales the rest so the total
/// stays `b`. Requires more than `b` entries summing to `b`.
pub fn cap_marginals(q: &mut [f64], b: usize) -> bool {
    let mut fixed = vec![false; q.len()];
    let mut changed = false;
    loop {
        let mut hit = false;
        for (x, f) in q.iter_mut().zip(fixed.iter_mut()) {
            if !*f && *x > MARGINAL_CAP {
                *x = MARGINAL_CAP;
                *f = true;
                hit = true;
            }
        }
        if !hit {
            return changed;
        }
        changed = true;
        let n_fixed = fixed.iter().filter(|&&f| f).count();
        let free: f64 = q.iter().zip(&fixed).filter(|(_, &f)| !f).map(|(x, _)| x).sum();
        let scale = (b as f64 - n_fixed as f64 * MARGINAL_CAP) / free;
        for (x, &f) in q.iter_mut().zip(&fixed) {
            if !f {
                *x *= scale;
            }
        }
    }
}

struct Recorder<'s, 'a> {
    solver: &'s Solver<'a>,
    every: usize,
    next_at: usize,
    start: Instant,
    trace: Vec<TraceRecord>,
    max_link_drift: f64,
    resyncs: usize,
}

impl Recorder<'_, '_> {
    /// Appends a trace row; returns a stop status when one applies.
    fn record(&mut self, state: &mut SolverState, obs: &mut dyn Observer) -> Result<Option<RunStatus>> {
        let s = self.solver;
        let (ds, lambda) = (s.ds, s.cfg.lambda);
        let seconds = if s.cfg.timing { self.start.elapsed().as_secs_f64() } else { 0.0 };

        let drift = state.link_residual(ds, lambda) / (1.0 + norm(&state.w));
        self.max_link_drift = self.max_link_drift.max(drift);
        if drift > LINK_TOL {
            log::warn!("primal-dual link drifted by {drift:e}; resynchronizing");
            state.resync(ds, lambda);
            self.resyncs += 1;
        }

        let mut margins = Vec::new();
        let kappa = s.residues(state, &mut margins);
        let primal = primal_from_margins(ds, s.loss.kind(), lambda, &state.w, &margins);
        if !primal.is_finite() || !state.alpha.iter().all(|a| a.is_finite()) {
            return Err(Error::Diverged(state.iteration));
        }
        let (subopt, gap) = match s.reference {
            Some(r) => {
                let g = compute_gap(&state.alpha, &state.w, r, &s.cp, ds, s.loss);
                (Some(primal - r.primal), Some(g.g))
            }
            None => (None, None),
        };
        self.trace.push(TraceRecord {
            epoch: state.epoch(ds.n()),
            iter: state.iteration,
            seconds,
            primal,
            subopt,
            gap,
            residue_norm: kappa.sq_norm().sqrt(),
            residue_p90: kappa.abs_quantile(0.9),
            theta: state.theta,
        });
        obs.checkpoint(state, &kappa);
        self.next_at = (state.updates / self.every + 1).saturating_mul(self.every);

        if let (Some(t), Some(so)) = (s.cfg.target, subopt) {
            if so <= t {
                return Ok(Some(RunStatus::TargetReached));
            }
        }
        if kappa.is_zero() {
            return Ok(Some(RunStatus::Converged));
        }
        Ok(None)
    }
}

/// Runs the variant named in `cfg`.
pub fn run(cfg: &SolverConfig, ds: &Dataset, loss: &LossModel, reference: Option<&Reference>) -> Result<RunResult> {
    let solver = Solver::new(ds, loss, cfg.clone())?;
    match reference {
        Some(r) => solver.with_reference(r).run(),
        None => solver.run(),
    }
}

fn run_as(variant: Variant, cfg: &SolverConfig, ds: &Dataset, loss: &LossModel, reference: Option<&Reference>) -> Result<RunResult> {
    let mut cfg = cfg.clone();
    cfg.variant = variant;
    run(&cfg, ds, loss, reference)
}

pub fn run_dfsdca_uniform(cfg: &SolverConfig, ds: &Dataset, loss: &LossModel, reference: Option<&Reference>) -> Result<RunResult> {
    run_as(Variant::Dfsdca, cfg, ds, loss, reference)
}

pub fn run_adfsdca(cfg: &SolverConfig, ds: &Dataset, loss: &LossModel, reference: Option<&Reference>) -> Result<RunResult> {
    run_as(Variant::Adfsdca, cfg, ds, loss, reference)
}

pub fn run_adfsdca_plus(cfg: &SolverConfig, ds: &Dataset, loss: &LossModel, reference: Option<&Reference>) -> Result<RunResult> {
    run_as(Variant::AdfsdcaPlus, cfg, ds, loss, reference)
}

pub fn run_minibatch(cfg: &SolverConfig, ds: &Dataset, loss: &LossModel, reference: Option<&Reference>) -> Result<RunResult> {
    run_as(Variant::Minibatch, cfg, ds, loss, reference)
}
