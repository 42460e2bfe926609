//! Experiment description files.
//!
//! ```text
//! # comment
//! sizes = 2x3x4, 2        # lattice dimensions; a single number L means LxLxL
//! methods = gcs, product, sa
//! iterations = 1000       # schedule points (gcs, product) or sweeps (sa); list allowed
//! instances = 100
//! seed = 0                # instance k uses seed + k
//! ```
//!
//! Optional keys: `name`, `boundary`, `exact` (`auto` | `off`),
//! `learning_rate`, `adam_beta1`, `adam_beta2`, `adam_eps`, `init_scale`,
//! `sparse_m`, `rescale`, `sa_beta_start`, `sa_beta_end`, `sa_schedule`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::anneal::{AnnealConfig, Mode};
use crate::error::{Error, Result};
use crate::qubo::Boundary;
use crate::sa::{BetaSchedule, SaConfig};

/// Largest total spin count accepted in a spec.
pub const MAX_SPEC_SPINS: usize = 1 << 16;
/// Largest instance count accepted in a spec.
pub const MAX_SPEC_INSTANCES: usize = 1 << 20;
/// Largest iteration count accepted in a spec.
pub const MAX_SPEC_ITERATIONS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Gcs,
    Product,
    Sa,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Gcs => "gcs",
            Method::Product => "product",
            Method::Sa => "sa",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcs" => Ok(Method::Gcs),
            "product" => Ok(Method::Product),
            "sa" => Ok(Method::Sa),
            other => Err(Error::Validation(format!(
                "unknown method '{other}' (expected gcs, product or sa)"
            ))),
        }
    }
}

/// Lattice dimensions `lx x ly x lz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn n(self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.0;
        write!(f, "{a}x{b}x{c}")
    }
}

impl FromStr for Dims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('x').collect();
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Validation(format!("bad lattice size '{s}'")))
        };
        let d = match parts.as_slice() {
            [l] => {
                let l = parse(l)?;
                [l, l, l]
            }
            [a, b, c] => [parse(a)?, parse(b)?, parse(c)?],
            _ => return Err(Error::Validation(format!("bad lattice size '{s}'"))),
        };
        if d.iter().any(|&v| v < 2) {
            return Err(Error::Validation(format!(
                "lattice sides must be at least 2 in '{s}'"
            )));
        }
        let n = d.iter().try_fold(1usize, |acc, &v| acc.checked_mul(v));
        match n {
            Some(n) if n <= MAX_SPEC_SPINS => Ok(Dims(d)),
            _ => Err(Error::Validation(format!(
                "lattice '{s}' exceeds {MAX_SPEC_SPINS} spins"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub sizes: Vec<Dims>,
    pub boundary: Boundary,
    pub methods: Vec<Method>,
    pub iterations: Vec<usize>,
    pub instances: usize,
    pub seed: u64,
    /// Compute exact minima where feasible.
    pub exact: bool,
    /// Annealer settings; `n_t`, `mode` and `seed` are set per run.
    pub anneal: AnnealConfig,
    /// SA settings; `sweeps` and `seed` are set per run.
    pub sa: SaConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            sizes: Vec::new(),
            boundary: Boundary::Periodic,
            methods: Vec::new(),
            iterations: vec![1000],
            instances: 0,
            seed: 0,
            exact: true,
            anneal: AnnealConfig::default(),
            sa: SaConfig::default(),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|t| !t.is_empty())
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(line, "expected 'key = value'"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::parse(line, "empty key"));
            }
            if seen.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(Error::parse(line, format!("duplicate key '{k}'")));
            }
        }

        let mut spec = ExperimentSpec::default();
        for (k, (line, v)) in &seen {
            let line = *line;
            let err = |msg: String| Error::parse(line, msg);
            let num = |what: &str| -> Result<f64> {
                let x: f64 = v.parse().map_err(|_| err(format!("bad {what} '{v}'")))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(err(format!("non-finite {what}")))
                }
            };
            let flag = || parse_bool(v).ok_or_else(|| err(format!("bad boolean '{v}' for {k}")));
            match k.as_str() {
                "name" => {
                    if v.is_empty() || v.contains(',') {
                        return Err(err("name must be nonempty and comma-free".into()));
                    }
                    spec.name = v.clone();
                }
                "sizes" => {
                    spec.sizes = list(v)
                        .map(|t| t.parse::<Dims>().map_err(|e| err(e.to_string())))
                        .collect::<Result<_>>()?;
                }
                "boundary" => {
                    spec.boundary = v.parse().map_err(|e: Error| err(e.to_string()))?;
                    if spec.boundary == Boundary::None {
                        return Err(err("lattice boundary must be open or periodic".into()));
                    }
                }
                "methods" => {
                    spec.methods = list(v)
                        .map(|t| t.parse::<Method>().map_err(|e| err(e.to_string())))
                        .collect::<Result<_>>()?;
                }
                "iterations" => {
                    spec.iterations = list(v)
                        .map(|t| match t.parse::<usize>() {
                            Ok(n) if (2..=MAX_SPEC_ITERATIONS).contains(&n) => Ok(n),
                            _ => Err(err(format!(
                                "iteration count '{t}' must be an integer in [2, {MAX_SPEC_ITERATIONS}]"
                            ))),
                        })
                        .collect::<Result<_>>()?;
                }
                "instances" => {
                    spec.instances = match v.parse::<usize>() {
                        Ok(n) if n <= MAX_SPEC_INSTANCES => n,
                        _ => return Err(err(format!("bad instance count '{v}'"))),
                    };
                }
                "seed" => spec.seed = v.parse().map_err(|_| err(format!("bad seed '{v}'")))?,
                "exact" => {
                    spec.exact = match v.as_str() {
                        "auto" => true,
                        "off" => false,
                        _ => return Err(err(format!("exact must be auto or off, got '{v}'"))),
                    }
                }
                "learning_rate" => spec.anneal.learning_rate = num("learning rate")?,
                "adam_beta1" => spec.anneal.adam_beta1 = num("beta1")?,
                "adam_beta2" => spec.anneal.adam_beta2 = num("beta2")?,
                "adam_eps" => spec.anneal.adam_eps = num("epsilon")?,
                "init_scale" => spec.anneal.init_scale = num("init scale")?,
                "sparse_m" => spec.anneal.sparse_m = flag()?,
                "rescale" => spec.anneal.rescale = flag()?,
                "sa_beta_start" => spec.sa.beta_start = num("beta")?,
                "sa_beta_end" => spec.sa.beta_end = num("beta")?,
                "sa_schedule" => {
                    spec.sa.schedule = match v.as_str() {
                        "geometric" => BetaSchedule::Geometric,
                        "linear" => BetaSchedule::Linear,
                        _ => return Err(err(format!("unknown SA schedule '{v}'"))),
                    }
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        if spec.sizes.is_empty() {
            return Err(Error::parse(0, "missing 'sizes'"));
        }
        if spec.methods.is_empty() {
            return Err(Error::parse(0, "missing 'methods'"));
        }
        if spec.iterations.is_empty() {
            return Err(Error::parse(0, "empty 'iterations'"));
        }
        dedup_sorted(&mut spec.sizes);
        dedup_sorted(&mut spec.methods);
        dedup_sorted(&mut spec.iterations);
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let probe = AnnealConfig {
            n_t: 2,
            mode: Mode::Gcs,
            ..self.anneal.clone()
        };
        probe.validate()?;
        SaConfig {
            sweeps: 1,
            ..self.sa.clone()
        }
        .validate()
    }

    /// Annealer configuration for one run.
    pub fn anneal_config(&self, method: Method, iterations: usize, seed: u64) -> AnnealConfig {
        AnnealConfig {
            n_t: iterations,
            mode: if method == Method::Product {
                Mode::Product
            } else {
                Mode::Gcs
            },
            seed,
            ..self.anneal.clone()
        }
    }

    pub fn sa_config(&self, sweeps: usize, seed: u64) -> SaConfig {
        SaConfig {
            sweeps,
            seed,
            ..self.sa.clone()
        }
    }

    /// Canonical text form; equal specs render identically.
    pub fn render(&self) -> String {
        let join = |items: Vec<String>| items.join(", ");
        let a = &self.anneal;
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(
            out,
            "sizes = {}",
            join(self.sizes.iter().map(Dims::to_string).collect())
        );
        let _ = writeln!(out, "boundary = {}", self.boundary);
        let _ = writeln!(
            out,
            "methods = {}",
            join(self.methods.iter().map(Method::to_string).collect())
        );
        let _ = writeln!(
            out,
            "iterations = {}",
            join(self.iterations.iter().map(usize::to_string).collect())
        );
        let _ = writeln!(out, "instances = {}", self.instances);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "exact = {}", if self.exact { "auto" } else { "off" });
        let _ = writeln!(out, "learning_rate = {:?}", a.learning_rate);
        let _ = writeln!(out, "adam_beta1 = {:?}", a.adam_beta1);
        let _ = writeln!(out, "adam_beta2 = {:?}", a.adam_beta2);
        let _ = writeln!(out, "adam_eps = {:?}", a.adam_eps);
        let _ = writeln!(out, "init_scale = {:?}", a.init_scale);
        let _ = writeln!(out, "sparse_m = {}", a.sparse_m);
        let _ = writeln!(out, "rescale = {}", a.rescale);
        let _ = writeln!(out, "sa_beta_start = {:?}", self.sa.beta_start);
        let _ = writeln!(out, "sa_beta_end = {:?}", self.sa.beta_end);
        let _ = writeln!(
            out,
            "sa_schedule = {}",
            match self.sa.schedule {
                BetaSchedule::Geometric => "geometric",
                BetaSchedule::Linear => "linear",
            }
        );
        out
    }

    /// SHA-256 of [`render`](Self::render), hex encoded.
    pub fn digest(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }

    /// Digest of the settings that affect one method's results.
    pub fn method_digest(&self, method: Method) -> String {
        let text = match method {
            Method::Sa => format!("{:?}", self.sa_config(0, 0)),
            _ => format!("{:?}", self.anneal_config(method, 0, 0)),
        };
        sha256_hex(format!("{method} {text}").as_bytes())[..16].to_string()
    }
}

fn dedup_sorted<T: Ord>(v: &mut Vec<T>) {
    v.sort();
    v.dedup();
}

/// SHA-256 of `bytes` as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}
