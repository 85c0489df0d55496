use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{load_libsvm, synthetic, Dataset, Scaling};
use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::probability::{ConvexityCase, EsoMode};
use crate::solver::{SolverConfig, ThetaPolicy, Variant};

/// Flat `key = value` settings; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: k + 1,
                msg: format!("expected key=value, got '{line}'"),
            })?;
            map.insert(normalize_key(key), value.trim().to_string());
        }
        Ok(KeyValues(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.0.insert(normalize_key(key), value.to_string());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// `flag` if given, else the parsed config entry.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("bad value '{v}' for '{key}': {e}")))
            })
            .transpose()
    }
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_").to_ascii_lowercase()
}

/// `n,d,density,seed`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub density: f64,
    pub seed: u64,
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("synthetic spec '{s}' must be n,d,density,seed"));
        if parts.len() != 4 {
            return Err(bad());
        }
        Ok(SyntheticSpec {
            n: parts[0].parse().map_err(|_| bad())?,
            d: parts[1].parse().map_err(|_| bad())?,
            density: parts[2].parse().map_err(|_| bad())?,
            seed: parts[3].parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.n, self.d, self.density, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::File(p) => write!(f, "{}", p.display()),
            DataSource::Synthetic(s) => write!(f, "synthetic:{s}"),
        }
    }
}

/// Where the data comes from and how it is prepared.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub dim: Option<usize>,
    pub scale: Scaling,
    pub loss: LossKind,
    pub lambda: Option<f64>,
}

impl DataConfig {
    pub fn load(&self) -> Result<Dataset> {
        let ds = match &self.source {
            DataSource::File(p) => load_libsvm(p, self.dim)?,
            DataSource::Synthetic(s) => synthetic(s.n, s.d, s.density, s.seed)?,
        };
        Ok(ds.scale(self.scale))
    }

    /// `λ`, defaulting to `1/√n`.
    pub fn lambda_for(&self, n: usize) -> f64 {
        self.lambda.unwrap_or(1.0 / (n as f64).sqrt())
    }
}

/// One entry of the variant list, e.g. `adfsdca+:s=10` or
/// `minibatch:b=4:eso=feature_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    pub variant: Variant,
    pub shrink: Option<f64>,
    pub batch: Option<usize>,
    pub eso: Option<EsoMode>,
    pub theta: Option<ThetaPolicy>,
}

impl VariantSpec {
    pub fn new(variant: Variant) -> Self {
        VariantSpec {
            variant,
            shrink: None,
            batch: None,
            eso: None,
            theta: None,
        }
    }

    /// File-name friendly label.
    pub fn label(&self) -> String {
        let mut s = self.variant.to_string();
        if let Some(x) = self.shrink {
            s.push_str(&format!("_s{x}"));
        }
        if let Some(b) = self.batch {
            s.push_str(&format!("_b{b}"));
        }
        if let Some(e) = self.eso {
            s.push_str(&format!("_{e}"));
        }
        if let Some(t) = self.theta {
            s.push_str(&format!("_{t}"));
        }
        s
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or("");
        let mut spec = VariantSpec::new(name.parse()?);
        for opt in parts {
            let (k, v) = opt
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("variant option '{opt}' must be key=value")))?;
            let bad = || Error::Config(format!("bad variant option '{opt}'"));
            match k {
                "s" | "shrink" => spec.shrink = Some(v.parse().map_err(|_| bad())?),
                "b" | "batch" => spec.batch = Some(v.parse().map_err(|_| bad())?),
                "eso" | "eso_mode" => spec.eso = Some(v.parse()?),
                "theta" => spec.theta = Some(v.parse()?),
                _ => return Err(bad()),
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.variant)?;
        if let Some(x) = self.shrink {
            write!(f, ":s={x}")?;
        }
        if let Some(b) = self.batch {
            write!(f, ":b={b}")?;
        }
        if let Some(e) = self.eso {
            write!(f, ":eso={e}")?;
        }
        if let Some(t) = self.theta {
            write!(f, ":theta={t}")?;
        }
        Ok(())
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| Error::Config(format!("bad list entry '{x}': {e}"))))
        .collect()
}

/// Everything `train` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub variants: Vec<VariantSpec>,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub shrink: f64,
    pub batch: usize,
    pub eso_mode: EsoMode,
    pub theta: ThetaPolicy,
    pub case: ConvexityCase,
    pub trace_every: Option<usize>,
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let lambda = self.data.lambda_for(n);
        for spec in &self.variants {
            self.solver_config(spec, lambda, 0).validate(n)?;
        }
        Ok(())
    }

    /// Per-variant options override the experiment-wide ones.
    pub fn solver_config(&self, spec: &VariantSpec, lambda: f64, seed: u64) -> SolverConfig {
        let mut cfg = SolverConfig::new(spec.variant, lambda);
        cfg.case = self.case;
        cfg.theta = spec.theta.unwrap_or(self.theta);
        cfg.shrink = spec.shrink.unwrap_or(self.shrink);
        cfg.batch = spec.batch.unwrap_or(self.batch);
        cfg.eso_mode = spec.eso.unwrap_or(self.eso_mode);
        cfg.epochs = self.epochs;
        cfg.seed = seed;
        cfg.trace_every = self.trace_every;
        cfg.timing = self.timing;
        cfg
    }
}
