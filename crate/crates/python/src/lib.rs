//! Python bindings for the adfsdca solvers.

use std::path::PathBuf;
use std::str::FromStr;

use adfsdca::probability::{optimal_probabilities as core_optimal, theta_lower_bound as core_lower};
use adfsdca::sampler::rng_from_seed;
use adfsdca::solver::{run_reference, ThetaPolicy, TraceRecord};
use adfsdca::{
    CaseParams, ConvexityCase, LossKind, LossModel, ResidueVector, Scaling, Solver, SolverConfig, Variant,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: adfsdca::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: FromStr>(what: &str, s: &str) -> PyResult<T> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown {what} '{s}'")))
}

/// Sparse labelled examples.
#[pyclass(frozen)]
struct Dataset {
    inner: adfsdca::Dataset,
}

#[pymethods]
impl Dataset {
    /// Build from rows of `(feature, value)` pairs.
    #[new]
    #[pyo3(signature = (rows, labels, dim=None))]
    fn new(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, dim: Option<usize>) -> PyResult<Self> {
        let inner = adfsdca::Dataset::from_rows(rows, labels, dim).map_err(err)?;
        Ok(Dataset { inner })
    }

    /// Read a LIBSVM file, gzipped or plain.
    #[staticmethod]
    #[pyo3(signature = (path, dim=None))]
    fn load(path: PathBuf, dim: Option<usize>) -> PyResult<Self> {
        let inner = adfsdca::data::load_libsvm(&path, dim).map_err(err)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    fn synthetic(n: usize, d: usize, density: f64, seed: u64) -> PyResult<Self> {
        let inner = adfsdca::data::synthetic(n, d, density, seed).map_err(err)?;
        Ok(Dataset { inner })
    }

    /// `"none"` or `"unit_norm"`.
    fn scaled(&self, mode: &str) -> PyResult<Self> {
        let mode: Scaling = parse("scaling", mode)?;
        Ok(Dataset {
            inner: self.inner.scale(mode),
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn sq_norms(&self) -> Vec<f64> {
        self.inner.sq_norms().to_vec()
    }

    fn margins(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        if w.len() != self.inner.d() {
            return Err(PyValueError::new_err(format!("w has length {}, expected {}", w.len(), self.inner.d())));
        }
        Ok(self.inner.margins(&w))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d={}, nnz={})", self.inner.n(), self.inner.d(), self.inner.nnz())
    }
}

/// Fixed-size subsets with prescribed inclusion probabilities.
#[pyclass(frozen)]
struct SamplingPlan {
    inner: adfsdca::SamplingPlan,
}

#[pymethods]
impl SamplingPlan {
    #[new]
    fn new(q: Vec<f64>, batch: usize) -> PyResult<Self> {
        let inner = adfsdca::SamplingPlan::build(&q, batch).map_err(err)?;
        Ok(SamplingPlan { inner })
    }

    /// `(t, i, j)` per level, 1-based over the descending order.
    fn levels(&self) -> Vec<(f64, usize, usize)> {
        self.inner
            .levels()
            .iter()
            .map(|l| (l.mass, l.first_free_1based(), l.last_free_1based()))
            .collect()
    }

    fn marginals(&self) -> Vec<f64> {
        self.inner.marginals()
    }

    fn subset_probability(&self, subset: Vec<usize>) -> f64 {
        self.inner.subset_probability(&subset)
    }

    /// `count` sorted subsets drawn with the given seed.
    #[pyo3(signature = (count, seed=0))]
    fn draw(&self, count: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut rng = rng_from_seed(seed);
        (0..count).map(|_| self.inner.draw(&mut rng)).collect()
    }
}

/// Constant-time draws from a fixed distribution.
#[pyclass(frozen)]
struct AliasTable {
    inner: adfsdca::AliasTable,
}

#[pymethods]
impl AliasTable {
    #[new]
    fn new(p: Vec<f64>) -> PyResult<Self> {
        let inner = adfsdca::AliasTable::new(&p).map_err(err)?;
        Ok(AliasTable { inner })
    }

    #[pyo3(signature = (count, seed=0))]
    fn draw(&self, count: usize, seed: u64) -> Vec<usize> {
        let mut rng = rng_from_seed(seed);
        (0..count).map(|_| self.inner.draw(&mut rng)).collect()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.reconstructed()
    }
}

#[pyfunction]
fn loss_value(loss: &str, a: f64, y: f64) -> PyResult<f64> {
    Ok(parse::<LossKind>("loss", loss)?.value(a, y))
}

#[pyfunction]
fn loss_derivative(loss: &str, a: f64, y: f64) -> PyResult<f64> {
    Ok(parse::<LossKind>("loss", loss)?.derivative(a, y))
}

fn default_lambda(ds: &adfsdca::Dataset, lam: Option<f64>) -> f64 {
    lam.unwrap_or_else(|| 1.0 / (ds.n() as f64).sqrt())
}

/// High-accuracy solution: dict with `w`, `alpha`, `primal`, `grad_norm`.
#[pyfunction]
#[pyo3(signature = (data, loss="quadratic", lam=None))]
fn reference<'py>(py: Python<'py>, data: &Dataset, loss: &str, lam: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let ds = &data.inner;
    let model = LossModel::new(parse("loss", loss)?, ds).map_err(err)?;
    let r = run_reference(ds, &model, default_lambda(ds, lam)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("w", r.w)?;
    out.set_item("alpha", r.alpha)?;
    out.set_item("primal", r.primal)?;
    out.set_item("grad_norm", r.grad_norm)?;
    out.set_item("approximate", r.approximate)?;
    Ok(out)
}

fn trace_dict<'py>(py: Python<'py>, r: &TraceRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("epoch", r.epoch)?;
    d.set_item("iter", r.iter)?;
    d.set_item("primal", r.primal)?;
    d.set_item("subopt", r.subopt)?;
    d.set_item("gap", r.gap)?;
    d.set_item("residue_norm", r.residue_norm)?;
    d.set_item("residue_p90", r.residue_p90)?;
    d.set_item("theta", r.theta)?;
    Ok(d)
}

/// Runs one solver variant. Returns a dict with `trace` (list of dicts),
/// `alpha`, `w`, `status` and `theta_lower`.
#[pyfunction]
#[pyo3(signature = (
    data, variant="adfsdca", loss="quadratic", lam=None, epochs=20, seed=0,
    shrink=10.0, batch=1, theta="adaptive", case="all_convex", trace_every=None, with_reference=true
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    data: &Dataset,
    variant: &str,
    loss: &str,
    lam: Option<f64>,
    epochs: usize,
    seed: u64,
    shrink: f64,
    batch: usize,
    theta: &str,
    case: &str,
    trace_every: Option<usize>,
    with_reference: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let ds = &data.inner;
    let model = LossModel::new(parse("loss", loss)?, ds).map_err(err)?;
    let lambda = default_lambda(ds, lam);
    let mut cfg = SolverConfig::new(parse::<Variant>("variant", variant)?, lambda);
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.shrink = shrink;
    cfg.batch = batch;
    cfg.theta = parse::<ThetaPolicy>("theta policy", theta)?;
    cfg.case = parse::<ConvexityCase>("convexity case", case)?;
    cfg.trace_every = trace_every;
    cfg.timing = false;
    let reference = if with_reference {
        Some(run_reference(ds, &model, lambda).map_err(err)?)
    } else {
        None
    };
    let mut solver = Solver::new(ds, &model, cfg).map_err(err)?;
    if let Some(r) = &reference {
        solver = solver.with_reference(r);
    }
    let res = py.detach(|| solver.run()).map_err(err)?;
    let out = PyDict::new(py);
    let trace = res.trace.iter().map(|r| trace_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    out.set_item("trace", trace)?;
    out.set_item("alpha", res.state.alpha)?;
    out.set_item("w", res.state.w)?;
    out.set_item("status", format!("{:?}", res.status))?;
    out.set_item("theta_lower", res.theta_lower)?;
    Ok(out)
}

/// Optimal sampling probabilities `p_i ∝ √(v_iγ + n²λ²β_i)|κ_i|`.
#[pyfunction]
fn optimal_probabilities(kappa: Vec<f64>, v: Vec<f64>, beta: Vec<f64>, gamma: f64, lam: f64) -> PyResult<Vec<f64>> {
    if kappa.len() != v.len() || kappa.len() != beta.len() {
        return Err(PyValueError::new_err("kappa, v and beta must have equal length"));
    }
    let cp = CaseParams::from_raw(ConvexityCase::AllConvex, beta, gamma, lam).map_err(err)?;
    let k = ResidueVector::from_parts(&kappa, &vec![0.0; kappa.len()]);
    core_optimal(&k, &cp, &v).map_err(err)
}

/// Instance-wide step lower bound `θ̲`.
#[pyfunction]
#[pyo3(signature = (v, beta, gamma, lam, batch=1))]
fn theta_lower_bound(v: Vec<f64>, beta: Vec<f64>, gamma: f64, lam: f64, batch: usize) -> PyResult<f64> {
    if v.len() != beta.len() {
        return Err(PyValueError::new_err("v and beta must have equal length"));
    }
    let cp = CaseParams::from_raw(ConvexityCase::AllConvex, beta, gamma, lam).map_err(err)?;
    Ok(core_lower(&cp, &v, batch))
}

#[pymodule]
fn adfsdca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<SamplingPlan>()?;
    m.add_class::<AliasTable>()?;
    m.add_function(wrap_pyfunction!(loss_value, m)?)?;
    m.add_function(wrap_pyfunction!(loss_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(reference, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(theta_lower_bound, m)?)?;
    Ok(())
}
