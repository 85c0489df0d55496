//! Dual residues, adaptive sampling probabilities and step-size bounds.
//!
//! Everything here is a pure function of the residue vector `κ`, the
//! per-coordinate curvature constants `v` and the convexity-case parameters
//! `(β, γ)`. The serial and mini-batch solvers share these formulas; the
//! mini-batch variants substitute ESO constants for `v` and scale the step
//! bound by the batch size.

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossModel};

/// Relative threshold under which a residue counts as exactly zero.
pub const RESIDUE_EPS: f64 = 1e-14;

/// Which convexity assumption the step-size theory is instantiated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvexityCase {
    /// Every loss is convex: `β_i = 1/L̃_i`, `γ = nλ`.
    #[default]
    AllConvex,
    /// Only the average loss is convex: `β_i = L̄/L_i`, `γ = nL̄²`.
    AverageConvex,
}

impl FromStr for ConvexityCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_convex" | "all-convex" => Ok(ConvexityCase::AllConvex),
            "average_convex" | "average-convex" => Ok(ConvexityCase::AverageConvex),
            other => Err(Error::Config(format!("unknown convexity case '{other}'"))),
        }
    }
}

impl fmt::Display for ConvexityCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvexityCase::AllConvex => "all_convex",
            ConvexityCase::AverageConvex => "average_convex",
        })
    }
}

/// Dual residue `κ_i = α_i + ℓ'_i(x_i^T w)` with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueVector {
    values: Vec<f64>,
    support: Vec<usize>,
    sq_norm: f64,
}

impl ResidueVector {
    /// Builds `κ = α + ℓ'` and zeroes entries below the relative threshold
    /// `RESIDUE_EPS·(1 + |α_i| + |ℓ'_i|)`.
    pub fn from_parts(alpha: &[f64], derivatives: &[f64]) -> Self {
        let mut values = Vec::with_capacity(alpha.len());
        let mut support = Vec::new();
        let mut sq_norm = 0.0;
        for (i, (&a, &g)) in alpha.iter().zip(derivatives).enumerate() {
            let k = a + g;
            if k.abs() > RESIDUE_EPS * (1.0 + a.abs() + g.abs()) {
                values.push(k);
                support.push(i);
                sq_norm += k * k;
            } else {
                values.push(0.0);
            }
        }
        ResidueVector {
            values,
            support,
            sq_norm,
        }
    }

    /// Residues from margins `x_i^T w` already computed by the caller.
    pub fn from_margins(alpha: &[f64], margins: &[f64], labels: &[f64], loss: LossKind) -> Self {
        let derivs: Vec<f64> = margins
            .iter()
            .zip(labels)
            .map(|(&a, &y)| loss.derivative(a, y))
            .collect();
        Self::from_parts(alpha, &derivs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices with nonzero residue, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    pub fn sq_norm(&self) -> f64 {
        self.sq_norm
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, k| m.max(k.abs()))
    }

    /// Linearly interpolated quantile of `|κ|` over all coordinates.
    pub fn abs_quantile(&self, q: f64) -> f64 {
        let mut abs: Vec<f64> = self.values.iter().map(|k| k.abs()).collect();
        abs.sort_by(f64::total_cmp);
        quantile_sorted(&abs, q)
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Residues for the state `(α, w)`.
pub fn compute_residues(alpha: &[f64], w: &[f64], ds: &Dataset, loss: &LossModel) -> Result<ResidueVector> {
    if alpha.len() != ds.n() || w.len() != ds.d() {
        return Err(Error::DimensionMismatch(format!(
            "state has |α|={}, |w|={} but dataset is {}x{}",
            alpha.len(),
            w.len(),
            ds.n(),
            ds.d()
        )));
    }
    let margins = ds.margins(w);
    Ok(ResidueVector::from_margins(alpha, &margins, ds.labels(), loss.kind()))
}

/// Convexity-case constants `(β, γ)` together with `λ` and `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseParams {
    case: ConvexityCase,
    beta: Vec<f64>,
    gamma: f64,
    lambda: f64,
    n: usize,
}

impl CaseParams {
    pub fn new(case: ConvexityCase, loss: &LossModel, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("λ must be positive, got {lambda}")));
        }
        let n = loss.lipschitz().len();
        let (beta, gamma) = match case {
            ConvexityCase::AllConvex => (vec![1.0 / loss.smoothness(); n], n as f64 * lambda),
            ConvexityCase::AverageConvex => {
                let mean = loss.mean_lipschitz();
                if loss.lipschitz().iter().any(|&l| l <= 0.0) {
                    return Err(Error::InvalidInput(
                        "average-convex constants need every example to be nonzero".into(),
                    ));
                }
                let beta = loss.lipschitz().iter().map(|&l| mean / l).collect();
                (beta, n as f64 * mean * mean)
            }
        };
        Ok(CaseParams {
            case,
            beta,
            gamma,
            lambda,
            n,
        })
    }

    /// Direct construction, mostly for tests and bindings.
    pub fn from_raw(case: ConvexityCase, beta: Vec<f64>, gamma: f64, lambda: f64) -> Result<Self> {
        if beta.iter().any(|&b| !(b > 0.0)) || !(gamma > 0.0) || !(lambda > 0.0) {
            return Err(Error::InvalidInput("β, γ and λ must be positive".into()));
        }
        let n = beta.len();
        Ok(CaseParams {
            case,
            beta,
            gamma,
            lambda,
            n,
        })
    }

    pub fn case(&self) -> ConvexityCase {
        self.case
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `n²λ²`
    pub fn reg_scale(&self) -> f64 {
        let nl = self.n as f64 * self.lambda;
        nl * nl
    }

    /// `v_iγ + n²λ²β_i`
    fn weight(&self, v: f64, i: usize) -> f64 {
        v * self.gamma + self.reg_scale() * self.beta[i]
    }
}

/// Optimal distribution: `p_i ∝ √(v_iγ + n²λ²β_i)·|κ_i|` on the
/// support, exactly zero elsewhere.
pub fn optimal_probabilities(kappa: &ResidueVector, cp: &CaseParams, v: &[f64]) -> Result<Vec<f64>> {
    if kappa.is_zero() {
        return Err(Error::EmptySupport);
    }
    let mut p = vec![0.0; kappa.len()];
    let mut total = 0.0;
    for &i in kappa.support() {
        let s = cp.weight(v[i], i).sqrt() * kappa.values[i].abs();
        p[i] = s;
        total += s;
    }
    for &i in kappa.support() {
        p[i] /= total;
    }
    Ok(p)
}

/// Largest step parameter for which the one-step contraction certificate is
/// nonpositive:
/// `Θ = n²λ² Σ β_iκ_i² / Σ (n²λ²β_i + v_iγ) κ_i² / p_i` over the support.
pub fn theta_of(kappa: &ResidueVector, p: &[f64], cp: &CaseParams, v: &[f64]) -> Result<f64> {
    if kappa.is_zero() {
        return Err(Error::EmptySupport);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in kappa.support() {
        let k2 = kappa.values[i] * kappa.values[i];
        if !(p[i] > 0.0) {
            return Err(Error::Incoherent(i));
        }
        num += cp.beta[i] * k2;
        den += cp.weight(v[i], i) * k2 / p[i];
    }
    Ok(cp.reg_scale() * num / den)
}

/// Mini-batch bound `b·Θ(κ, p)` where `p` holds per-coordinate marginals
/// divided by `b` and `v` are ESO constants.
pub fn theta_of_batch(kappa: &ResidueVector, p: &[f64], cp: &CaseParams, v: &[f64], batch: usize) -> Result<f64> {
    Ok(batch as f64 * theta_of(kappa, p, cp, v)?)
}

/// Closed form of `Θ(κ, p*)`: `n²λ² Σβ_iκ_i² / (Σ √(v_iγ + n²λ²β_i)|κ_i|)²`.
pub fn optimal_theta(kappa: &ResidueVector, cp: &CaseParams, v: &[f64]) -> Result<f64> {
    if kappa.is_zero() {
        return Err(Error::EmptySupport);
    }
    let mut num = 0.0;
    let mut s = 0.0;
    for &i in kappa.support() {
        let k = kappa.values[i];
        num += cp.beta[i] * k * k;
        s += cp.weight(v[i], i).sqrt() * k.abs();
    }
    Ok(cp.reg_scale() * num / (s * s))
}

/// Instance-wide lower bound `θ̲ = b·n²λ² / Σ(v_iγ/β_i + n²λ²)`, capped at 1.
pub fn theta_lower_bound(cp: &CaseParams, v: &[f64], batch: usize) -> f64 {
    let r = cp.reg_scale();
    let den: f64 = v
        .iter()
        .zip(&cp.beta)
        .map(|(&vi, &b)| vi * cp.gamma / b + r)
        .sum();
    (batch as f64 * r / den).min(1.0)
}

/// Right-hand side of the per-iteration contraction inequality,
/// `Σ_i (−θβ_i(1 − θ/(b p_i)) + θ²v_iγ/(n²λ² b p_i)) κ_i²`.
/// Nonpositive exactly when `θ ≤ b·Θ(κ, p)`.
pub fn contraction_certificate(
    kappa: &ResidueVector,
    p: &[f64],
    cp: &CaseParams,
    v: &[f64],
    theta: f64,
    batch: usize,
) -> f64 {
    let b = batch as f64;
    let r = cp.reg_scale();
    kappa
        .support()
        .iter()
        .map(|&i| {
            let k2 = kappa.values[i] * kappa.values[i];
            let bp = b * p[i];
            (-theta * cp.beta[i] * (1.0 - theta / bp) + theta * theta * v[i] * cp.gamma / (r * bp)) * k2
        })
        .sum()
}

/// How the sparsity bound `ω` of the ESO constants is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EsoMode {
    /// Maximum number of nonzeros in one example.
    #[default]
    ExampleNnz,
    /// Maximum number of examples sharing a feature.
    FeatureDegree,
}

impl FromStr for EsoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example_nnz" | "example-nnz" => Ok(EsoMode::ExampleNnz),
            "feature_degree" | "feature-degree" => Ok(EsoMode::FeatureDegree),
            other => Err(Error::Config(format!("unknown ESO mode '{other}'"))),
        }
    }
}

impl fmt::Display for EsoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EsoMode::ExampleNnz => "example_nnz",
            EsoMode::FeatureDegree => "feature_degree",
        })
    }
}

/// Per-coordinate ESO constants `v_i = min{b, ω}·‖x_i‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct EsoParams {
    pub v: Vec<f64>,
    pub batch: usize,
    pub omega: usize,
}

pub fn eso_v(ds: &Dataset, batch: usize, mode: EsoMode) -> Result<EsoParams> {
    if batch < 1 || batch > ds.n() {
        return Err(Error::InvalidInput(format!(
            "batch size {batch} outside [1, {}]",
            ds.n()
        )));
    }
    let omega = match mode {
        EsoMode::ExampleNnz => ds.max_example_nnz(),
        EsoMode::FeatureDegree => ds.max_feature_degree(),
    };
    let factor = batch.min(omega).max(1) as f64;
    let v = ds.sq_norms().iter().map(|&x| factor * x).collect();
    Ok(EsoParams { v, batch, omega })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp_uniform(n: usize, lambda: f64) -> CaseParams {
        CaseParams::from_raw(ConvexityCase::AllConvex, vec![1.0; n], n as f64 * lambda, lambda).unwrap()
    }

    #[test]
    fn fixed_point_has_empty_support() {
        let k = ResidueVector::from_parts(&[0.5, -0.25], &[-0.5, 0.25]);
        assert!(k.is_zero());
        assert!(matches!(optimal_probabilities(&k, &cp_uniform(2, 1.0), &[1.0, 1.0]), Err(Error::EmptySupport)));
    }

    #[test]
    fn zero_state_quadratic_residue_is_minus_label() {
        let ds = Dataset::from_rows(vec![vec![(0, 1.0)], vec![(1, 2.0)]], vec![1.0, -1.0], None).unwrap();
        let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
        let k = compute_residues(&[0.0, 0.0], &[0.0, 0.0], &ds, &loss).unwrap();
        assert_eq!(k.values(), &[-1.0, 1.0]);
        assert!(compute_residues(&[0.0], &[0.0, 0.0], &ds, &loss).is_err());
    }

    #[test]
    fn single_support_gives_unit_vector() {
        let k = ResidueVector::from_parts(&[0.0, 0.3, 0.0], &[0.0, 0.0, 0.0]);
        let p = optimal_probabilities(&k, &cp_uniform(3, 0.1), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn symmetric_residues_give_uniform() {
        let k = ResidueVector::from_parts(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]);
        let p = optimal_probabilities(&k, &cp_uniform(4, 0.3), &[2.0; 4]).unwrap();
        for x in p {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn theta_single_term() {
        let lambda = 0.5;
        let cp = cp_uniform(1, lambda);
        let k = ResidueVector::from_parts(&[1.0], &[0.0]);
        let v = [3.0];
        let th = theta_of(&k, &[1.0], &cp, &v).unwrap();
        let expected = lambda * lambda / (lambda * lambda + v[0] * lambda);
        assert!((th - expected).abs() < 1e-15);
    }

    #[test]
    fn theta_rejects_incoherent_p() {
        let k = ResidueVector::from_parts(&[1.0, 1.0], &[0.0, 0.0]);
        assert!(matches!(theta_of(&k, &[1.0, 0.0], &cp_uniform(2, 1.0), &[1.0, 1.0]), Err(Error::Incoherent(1))));
    }

    #[test]
    fn lower_bound_case_one_identity() {
        // quadratic, unit rows: θ̲ = 1/(n + 1/λ)
        for &(n, lambda) in &[(10usize, 0.1), (500, 1.0 / 500f64.sqrt()), (3, 2.0)] {
            let cp = cp_uniform(n, lambda);
            let th = theta_lower_bound(&cp, &vec![1.0; n], 1);
            assert!((th - 1.0 / (n as f64 + 1.0 / lambda)).abs() < 1e-15);
        }
    }

    #[test]
    fn lower_bound_is_linear_in_batch_until_one() {
        let cp = cp_uniform(100, 0.01);
        let v = vec![1.0; 100];
        let t1 = theta_lower_bound(&cp, &v, 1);
        assert!((theta_lower_bound(&cp, &v, 2) - 2.0 * t1).abs() < 1e-15);
        let tiny = cp_uniform(2, 100.0);
        assert_eq!(theta_lower_bound(&tiny, &[1e-6, 1e-6], 4), 1.0);
    }

    #[test]
    fn certificate_vanishes_at_theta() {
        let k = ResidueVector::from_parts(&[0.3, -1.2, 0.7], &[0.0; 3]);
        let cp = cp_uniform(3, 0.2);
        let v = [1.0, 0.5, 2.0];
        let p = [0.2, 0.5, 0.3];
        let th = theta_of(&k, &p, &cp, &v).unwrap();
        let c = contraction_certificate(&k, &p, &cp, &v, th, 1);
        assert!(c.abs() < 1e-14, "{c}");
        assert!(contraction_certificate(&k, &p, &cp, &v, 0.5 * th, 1) < 0.0);
        assert!(contraction_certificate(&k, &p, &cp, &v, 1.5 * th, 1) > 0.0);
    }

    #[test]
    fn eso_constants() {
        let diag = Dataset::from_rows(
            vec![vec![(0, 1.0)], vec![(1, 2.0)], vec![(2, 3.0)]],
            vec![1.0; 3],
            None,
        )
        .unwrap();
        for mode in [EsoMode::ExampleNnz, EsoMode::FeatureDegree] {
            let e = eso_v(&diag, 2, mode).unwrap();
            assert_eq!(e.omega, 1);
            assert_eq!(e.v, vec![1.0, 4.0, 9.0]);
            assert_eq!(eso_v(&diag, 1, mode).unwrap().v, diag.sq_norms());
        }
        assert!(eso_v(&diag, 0, EsoMode::ExampleNnz).is_err());
    }

    #[test]
    fn average_convex_constants() {
        let ds = Dataset::from_rows(vec![vec![(0, 1.0)], vec![(0, 2.0)]], vec![1.0, -1.0], None).unwrap();
        let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
        let cp = CaseParams::new(ConvexityCase::AverageConvex, &loss, 0.1).unwrap();
        assert_eq!(cp.beta(), &[2.5, 0.625]);
        assert_eq!(cp.gamma(), 2.0 * 2.5 * 2.5);
    }

    #[test]
    fn quantile_interpolates() {
        let k = ResidueVector::from_parts(&[1.0, -2.0, 3.0, -4.0, 5.0], &[0.0; 5]);
        assert_eq!(k.abs_quantile(0.5), 3.0);
        assert!((k.abs_quantile(0.9) - 4.6).abs() < 1e-12);
        assert_eq!(k.max_abs(), 5.0);
    }
}
