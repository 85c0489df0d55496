//! Command-line driver.
//!
//! `train` runs every (variant, seed) pair against one reference solution,
//! `residue-density` dumps `|κ|` histograms for uniform and adaptive
//! sampling, `sample-test` checks the samplers empirically and `reference`
//! writes the high-accuracy solution.

pub mod config;

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Scaling;
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossModel};
use crate::probability::{ConvexityCase, EsoMode, ResidueVector};
use crate::sampler::{cdf_draw, rng_from_seed, AliasTable, SamplingPlan, TreeSampler};
use crate::solver::{
    epochs_to_target, run_reference_with, write_trace, Histogram, Observer, Reference, ReferenceOptions, Solver,
    SolverConfig, SolverState, ThetaPolicy, Variant,
};

pub use config::{DataConfig, DataSource, ExperimentConfig, KeyValues, SyntheticSpec, VariantSpec};

#[derive(Debug, Parser)]
#[command(name = "adfsdca", version, about = "Dual-free SDCA with adaptive sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train each variant for each seed and write traces plus a summary.
    Train(TrainArgs),
    /// Histograms of |κ| for dfsdca and adfsdca at the given epochs.
    ResidueDensity(DensityArgs),
    /// Build a mini-batch plan and check every sampler empirically.
    SampleTest(SampleArgs),
    /// Solve to high accuracy and write w*, α* and P*.
    Reference(ReferenceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// LIBSVM file, optionally gzipped.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generated dataset: n,d,density,seed.
    #[arg(long, conflicts_with = "data")]
    pub synthetic: Option<String>,
    /// Feature dimension override.
    #[arg(long)]
    pub dim: Option<usize>,
    /// none or unit_norm.
    #[arg(long)]
    pub scale: Option<Scaling>,
    /// quadratic or logistic.
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Regularization; defaults to 1/√n.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// key=value file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma list, e.g. dfsdca,adfsdca,adfsdca+:s=10,minibatch:b=4.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub shrink: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// example_nnz or feature_degree.
    #[arg(long)]
    pub eso_mode: Option<EsoMode>,
    /// adaptive or fixed.
    #[arg(long)]
    pub theta: Option<ThetaPolicy>,
    /// all_convex or average_convex.
    #[arg(long)]
    pub case: Option<ConvexityCase>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Comma list of seeds.
    #[arg(long)]
    pub seed: Option<String>,
    /// Coordinate updates between trace rows; defaults to n.
    #[arg(long)]
    pub trace_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the trace `seconds` column with wall time.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma list of epochs; may be empty.
    #[arg(long, allow_hyphen_values = true)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// toy, uniform:N, random:N:SEED or an explicit comma list of marginals.
    #[arg(long, default_value = "toy")]
    pub dist: String,
    /// Subset size; defaults to the rounded sum of the marginals.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_epochs: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Infeasible { .. } => 2,
        _ => 1,
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(&train_config(a)?).map(|_| ()),
        Command::ResidueDensity(a) => {
            let (data, epochs, seed, bins, out) = density_config(a)?;
            cmd_residue_density(&data, &epochs, seed, bins, &out).map(|_| ())
        }
        Command::SampleTest(a) => cmd_sample_test(a).map(|_| ()),
        Command::Reference(a) => {
            let kv = load_kv(&a.data)?;
            let data = data_config(&a.data, &kv)?;
            cmd_reference(&data, a.tol, a.max_epochs, &a.out).map(|_| ())
        }
    }
}

fn load_kv(a: &DataArgs) -> Result<KeyValues> {
    match &a.config {
        Some(p) => KeyValues::load(p),
        None => Ok(KeyValues::default()),
    }
}

fn data_config(a: &DataArgs, kv: &KeyValues) -> Result<DataConfig> {
    let synthetic: Option<String> = kv.pick(a.synthetic.clone(), "synthetic")?;
    let path: Option<PathBuf> = match &a.data {
        Some(p) => Some(p.clone()),
        None if a.synthetic.is_some() => None,
        None => kv.get("data").map(PathBuf::from),
    };
    let source = match (path, synthetic) {
        (Some(p), _) => DataSource::File(p),
        (None, Some(s)) => DataSource::Synthetic(s.parse()?),
        (None, None) => return Err(Error::Config("one of --data or --synthetic is required".into())),
    };
    Ok(DataConfig {
        source,
        dim: kv.pick(a.dim, "dim")?,
        scale: kv.pick(a.scale, "scale")?.unwrap_or(Scaling::None),
        loss: kv.pick(a.loss, "loss")?.unwrap_or(LossKind::Quadratic),
        lambda: kv.pick(a.lambda, "lambda")?,
    })
}

/// Merges flags over the `--config` file.
pub fn train_config(a: &TrainArgs) -> Result<ExperimentConfig> {
    let kv = load_kv(&a.data)?;
    let data = data_config(&a.data, &kv)?;
    let variants = match a.variant.as_deref().or(kv.get("variant")) {
        Some(s) => config::parse_list::<VariantSpec>(s)?,
        None => Variant::ALL[..3].iter().map(|&v| VariantSpec::new(v)).collect(),
    };
    let seeds = match a.seed.as_deref().or(kv.get("seed")) {
        Some(s) => config::parse_list::<u64>(s)?,
        None => vec![0],
    };
    let timing = a.timing || kv.pick::<bool>(None, "timing")?.unwrap_or(false);
    Ok(ExperimentConfig {
        data,
        variants,
        epochs: kv.pick(a.epochs, "epochs")?.unwrap_or(20),
        seeds,
        out: kv.pick(a.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from(".")),
        shrink: kv.pick(a.shrink, "shrink")?.unwrap_or(10.0),
        batch: kv.pick(a.batch, "batch")?.unwrap_or(1),
        eso_mode: kv.pick(a.eso_mode, "eso_mode")?.unwrap_or_default(),
        theta: kv.pick(a.theta, "theta")?.unwrap_or_default(),
        case: kv.pick(a.case, "case")?.unwrap_or_default(),
        trace_every: kv.pick(a.trace_every, "trace_every")?,
        timing,
    })
}

fn density_config(a: &DensityArgs) -> Result<(DataConfig, Vec<usize>, u64, usize, PathBuf)> {
    let kv = load_kv(&a.data)?;
    let data = data_config(&a.data, &kv)?;
    let epochs = match a.epochs.as_deref().or(kv.get("epochs")) {
        Some(s) => config::parse_list::<usize>(s)?,
        None => vec![0, 1, 2],
    };
    let seed = kv.pick(a.seed, "seed")?.unwrap_or(0);
    let bins = kv.pick(a.bins, "bins")?.unwrap_or(50);
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    let out = kv.pick(a.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from("."));
    Ok((data, epochs, seed, bins, out))
}

/// Writes through a sibling temporary file and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub seed: u64,
    pub epochs_1e4: Option<f64>,
    pub epochs_1e6: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub reference: Reference,
    pub rows: Vec<SummaryRow>,
}

pub fn trace_file_name(spec: &VariantSpec, seed: u64) -> String {
    format!("trace_{}_seed{seed}.csv", spec.label())
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    let ds = cfg.data.load()?;
    cfg.validate(ds.n())?;
    let lambda = cfg.data.lambda_for(ds.n());
    let loss = LossModel::new(cfg.data.loss, &ds)?;
    fs::create_dir_all(&cfg.out)?;

    let started = Instant::now();
    let reference = run_reference_with(&ds, &loss, lambda, &ReferenceOptions::default())?;
    let reference_seconds = started.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    for spec in &cfg.variants {
        for &seed in &cfg.seeds {
            let sc = cfg.solver_config(spec, lambda, seed);
            let t0 = Instant::now();
            let res = Solver::new(&ds, &loss, sc)?.with_reference(&reference).run()?;
            let seconds = t0.elapsed().as_secs_f64();
            let mut f = create(&cfg.out.join(trace_file_name(spec, seed)))?;
            write_trace(&res.trace, &mut f)?;
            f.flush()?;
            log::info!("{spec} seed {seed}: {:?} after {} iterations", res.status, res.state.iteration);
            rows.push(SummaryRow {
                label: spec.to_string(),
                seed,
                epochs_1e4: epochs_to_target(&res.trace, 1e-4),
                epochs_1e6: epochs_to_target(&res.trace, 1e-6),
                seconds,
            });
        }
    }

    let mut summary = String::from("variant,seed,epochs_to_1e-4,epochs_to_1e-6,wall_seconds\n");
    for r in &rows {
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label,
            r.seed,
            fmt_opt(r.epochs_1e4),
            fmt_opt(r.epochs_1e6),
            r.seconds
        ));
    }
    write_atomic(&cfg.out.join("summary.csv"), summary.as_bytes())?;

    let mut meta: Vec<(String, String)> = vec![
        ("data".into(), cfg.data.source.to_string()),
        ("n".into(), ds.n().to_string()),
        ("d".into(), ds.d().to_string()),
        ("loss".into(), cfg.data.loss.to_string()),
        ("lambda".into(), lambda.to_string()),
        ("epochs".into(), cfg.epochs.to_string()),
        ("reference_primal".into(), reference.primal.to_string()),
        ("reference_grad_norm".into(), reference.grad_norm.to_string()),
        ("reference_approximate".into(), reference.approximate.to_string()),
        ("reference_seconds".into(), reference_seconds.to_string()),
    ];
    for r in &rows {
        meta.push((format!("seconds:{}:seed{}", r.label, r.seed), r.seconds.to_string()));
    }
    let mut text = String::from("key,value\n");
    for (k, v) in meta {
        text.push_str(&format!("{k},{v}\n"));
    }
    write_atomic(&cfg.out.join("metadata.csv"), text.as_bytes())?;
    Ok(TrainReport { reference, rows })
}

/// Collects `|κ|` at the requested epoch boundaries.
struct ResidueSnapshots {
    n: usize,
    wanted: Vec<usize>,
    taken: BTreeMap<usize, Vec<f64>>,
    last: Vec<f64>,
}

impl Observer for ResidueSnapshots {
    fn checkpoint(&mut self, state: &SolverState, residues: &ResidueVector) {
        let abs: Vec<f64> = residues.values().iter().map(|k| k.abs()).collect();
        if state.updates.is_multiple_of(self.n) {
            let e = state.updates / self.n;
            if self.wanted.contains(&e) {
                self.taken.insert(e, abs.clone());
            }
        }
        self.last = abs;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub epoch: usize,
    pub p90_dfsdca: f64,
    pub p90_adfsdca: f64,
}

pub fn density_file_name(variant: Variant, epoch: usize) -> String {
    format!("residue_{variant}_epoch{epoch}.csv")
}

fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[k]
}

pub fn cmd_residue_density(data: &DataConfig, epochs: &[usize], seed: u64, bins: usize, out: &Path) -> Result<Vec<DensityRow>> {
    if epochs.is_empty() {
        return Ok(Vec::new());
    }
    let ds = data.load()?;
    let lambda = data.lambda_for(ds.n());
    let loss = LossModel::new(data.loss, &ds)?;
    let max_epoch = *epochs.iter().max().unwrap_or(&0);

    let mut snaps = Vec::new();
    for variant in [Variant::Dfsdca, Variant::Adfsdca] {
        let mut cfg = SolverConfig::new(variant, lambda);
        cfg.epochs = max_epoch.max(1);
        cfg.seed = seed;
        cfg.timing = false;
        let mut obs = ResidueSnapshots {
            n: ds.n(),
            wanted: epochs.to_vec(),
            taken: BTreeMap::new(),
            last: Vec::new(),
        };
        Solver::new(&ds, &loss, cfg)?.run_observed(&mut obs)?;
        let ResidueSnapshots { taken, last, .. } = obs;
        let per_epoch: Vec<Vec<f64>> = epochs
            .iter()
            .map(|e| taken.get(e).cloned().unwrap_or_else(|| last.clone()))
            .collect();
        snaps.push(per_epoch);
    }

    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for (k, &epoch) in epochs.iter().enumerate() {
        let (uni, ada) = (&snaps[0][k], &snaps[1][k]);
        let hi = uni.iter().chain(ada.iter()).fold(0.0f64, |m, &x| m.max(x));
        for (variant, values) in [(Variant::Dfsdca, uni), (Variant::Adfsdca, ada)] {
            let mut f = create(&out.join(density_file_name(variant, epoch)))?;
            Histogram::new(values, bins, 0.0, hi).write_csv(&mut f)?;
            f.flush()?;
        }
        rows.push(DensityRow {
            epoch,
            p90_dfsdca: quantile(uni, 0.9),
            p90_adfsdca: quantile(ada, 0.9),
        });
    }
    let mut text = String::from("epoch,p90_dfsdca,p90_adfsdca\n");
    for r in &rows {
        text.push_str(&format!("{},{},{}\n", r.epoch, r.p90_dfsdca, r.p90_adfsdca));
    }
    write_atomic(&out.join("residue_p90.csv"), text.as_bytes())?;
    Ok(rows)
}

/// Marginals named by a `--dist` spec.
pub fn parse_distribution(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("unknown distribution '{spec}'"));
    match parts.as_slice() {
        ["toy"] => Ok(vec![0.8, 0.6, 0.4, 0.2]),
        ["uniform", n] => {
            let n: usize = n.parse().map_err(|_| bad())?;
            Ok(vec![0.5; n])
        }
        ["random", n, seed] => {
            let n: usize = n.parse().map_err(|_| bad())?;
            let seed: u64 = seed.parse().map_err(|_| bad())?;
            let mut rng = rng_from_seed(seed);
            Ok((0..n).map(|_| rng.random_range(0.05..0.95)).collect())
        }
        _ => config::parse_list::<f64>(spec),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerCheck {
    pub name: &'static str,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct SampleReport {
    pub q: Vec<f64>,
    pub batch: usize,
    pub plan: SamplingPlan,
    pub exact: Vec<f64>,
    pub empirical: Vec<f64>,
    /// Pearson statistic over drawn subsets, or over per-coordinate
    /// inclusion counts when there are too many subsets to fill.
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub samplers: Vec<SamplerCheck>,
}

fn chi2_sf(stat: f64, dof: usize) -> f64 {
    match ChiSquared::new(dof.max(1) as f64) {
        Ok(d) => d.sf(stat),
        Err(_) => f64::NAN,
    }
}

fn multinomial_check(name: &'static str, counts: &[u64], p: &[f64], draws: usize) -> SamplerCheck {
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (&c, &pi) in counts.iter().zip(p) {
        if pi > 0.0 {
            let e = pi * draws as f64;
            chi2 += (c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    let dof = cells.max(2) - 1;
    SamplerCheck {
        name,
        chi2,
        dof,
        p_value: chi2_sf(chi2, dof),
    }
}

fn subset_chi2(plan: &SamplingPlan, counts: &HashMap<Vec<usize>, u64>, draws: f64) -> (f64, usize) {
    let mut chi2 = 0.0;
    let mut seen = 0.0;
    let mut cells = 0;
    for (set, &c) in counts {
        let p = plan.subset_probability(set);
        if p <= 0.0 {
            return (f64::INFINITY, counts.len());
        }
        let e = p * draws;
        chi2 += (c as f64 - e).powi(2) / e;
        seen += p;
        cells += 1;
    }
    let unseen = (1.0 - seen) * draws;
    if unseen > 1e-9 {
        chi2 += unseen;
        cells += 1;
    }
    (chi2, cells.max(2) - 1)
}

fn marginal_chi2(hits: &[u64], exact: &[f64], draws: f64) -> (f64, usize) {
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (&h, &m) in hits.iter().zip(exact) {
        let var = draws * m * (1.0 - m);
        if var > 0.0 {
            chi2 += (h as f64 - draws * m).powi(2) / var;
            cells += 1;
        }
    }
    (chi2, cells.max(2) - 1)
}

/// Rescales marginals to sum to `b`.
fn rescale(q: &[f64], b: usize) -> Vec<f64> {
    let s: f64 = q.iter().sum();
    q.iter().map(|x| x * b as f64 / s).collect()
}

pub fn run_sample_test(q_in: &[f64], batch: Option<usize>, draws: usize, seed: u64) -> Result<SampleReport> {
    if q_in.is_empty() {
        return Err(Error::InvalidInput("empty marginal vector".into()));
    }
    if draws == 0 {
        return Err(Error::Config("draws must be at least 1".into()));
    }
    let total: f64 = q_in.iter().sum();
    let b = batch.unwrap_or_else(|| total.round().max(1.0) as usize);
    let q = if batch.is_some() && (total - b as f64).abs() > 1e-9 {
        rescale(q_in, b)
    } else {
        q_in.to_vec()
    };
    let plan = SamplingPlan::build(&q, b)?;
    let exact = plan.marginals();

    let n = q.len();
    let mut rng = rng_from_seed(seed);
    let mut hits = vec![0u64; n];
    let mut subsets: HashMap<Vec<usize>, u64> = HashMap::new();
    let by_subset = plan.widest_level_subsets() * 20.0 <= draws as f64;
    for _ in 0..draws {
        let set = plan.draw(&mut rng);
        for &i in &set {
            hits[i] += 1;
        }
        if by_subset {
            *subsets.entry(set).or_insert(0) += 1;
        }
    }
    let d = draws as f64;
    let empirical: Vec<f64> = hits.iter().map(|&h| h as f64 / d).collect();
    let (chi2, dof) = if by_subset {
        subset_chi2(&plan, &subsets, d)
    } else {
        marginal_chi2(&hits, &exact, d)
    };
    let p_value = chi2_sf(chi2, dof);

    let p: Vec<f64> = q.iter().map(|x| x / b as f64).collect();
    let alias = AliasTable::new(&p)?;
    let tree = TreeSampler::new(&p)?;
    let mut counts = [vec![0u64; n], vec![0u64; n], vec![0u64; n]];
    for _ in 0..draws {
        counts[0][cdf_draw(&p, &mut rng)] += 1;
        counts[1][alias.draw(&mut rng)] += 1;
        counts[2][tree.draw(&mut rng)?.0] += 1;
    }
    let samplers = vec![
        multinomial_check("cdf", &counts[0], &p, draws),
        multinomial_check("alias", &counts[1], &p, draws),
        multinomial_check("tree", &counts[2], &p, draws),
    ];
    Ok(SampleReport {
        q,
        batch: b,
        plan,
        exact,
        empirical,
        chi2,
        dof,
        p_value,
        samplers,
    })
}

pub fn cmd_sample_test(a: &SampleArgs) -> Result<SampleReport> {
    let q = parse_distribution(&a.dist)?;
    let report = run_sample_test(&q, a.batch, a.draws, a.seed)?;
    fs::create_dir_all(&a.out)?;

    let mut levels = String::from("level,t,i,j\n");
    for (k, l) in report.plan.levels().iter().enumerate() {
        levels.push_str(&format!("{},{},{},{}\n", k + 1, l.mass, l.first_free_1based(), l.last_free_1based()));
    }
    write_atomic(&a.out.join("levels.csv"), levels.as_bytes())?;

    let mut marg = String::from("coord,q,exact,empirical\n");
    for i in 0..report.q.len() {
        marg.push_str(&format!("{},{},{},{}\n", i, report.q[i], report.exact[i], report.empirical[i]));
    }
    write_atomic(&a.out.join("marginals.csv"), marg.as_bytes())?;

    let mut stats = String::from("sampler,chi2,dof,p_value\n");
    stats.push_str(&format!("minibatch,{},{},{}\n", report.chi2, report.dof, report.p_value));
    for s in &report.samplers {
        stats.push_str(&format!("{},{},{},{}\n", s.name, s.chi2, s.dof, s.p_value));
    }
    write_atomic(&a.out.join("chi2.csv"), stats.as_bytes())?;
    print!("{stats}");
    Ok(report)
}

pub fn cmd_reference(data: &DataConfig, tol: f64, max_epochs: usize, out: &Path) -> Result<Reference> {
    let ds = data.load()?;
    let lambda = data.lambda_for(ds.n());
    let loss = LossModel::new(data.loss, &ds)?;
    let opts = ReferenceOptions {
        tol,
        max_epochs,
        seed: 0,
    };
    let r = run_reference_with(&ds, &loss, lambda, &opts)?;
    fs::create_dir_all(out)?;
    let mut text = String::from("vector,index,value\n");
    for (i, x) in r.w.iter().enumerate() {
        text.push_str(&format!("w,{i},{x}\n"));
    }
    for (i, x) in r.alpha.iter().enumerate() {
        text.push_str(&format!("alpha,{i},{x}\n"));
    }
    write_atomic(&out.join("reference.csv"), text.as_bytes())?;
    let summary = format!(
        "key,value\nprimal,{}\ngrad_norm,{}\napproximate,{}\niterations,{}\nlambda,{lambda}\n",
        r.primal, r.grad_norm, r.approximate, r.iterations
    );
    write_atomic(&out.join("reference_summary.csv"), summary.as_bytes())?;
    print!("{summary}");
    Ok(r)
}
