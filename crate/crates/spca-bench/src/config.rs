//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. List values are
//! comma separated; integer lists also accept inclusive ranges `a..b`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use irpg_core::driver::Variant;

use crate::error::{BenchError, Result};

pub type KeyValues = BTreeMap<String, String>;

pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| BenchError::Config(format!("line {}: expected key = value", i + 1)))?;
        let key = key.trim().to_string();
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(BenchError::Config(format!("line {}: duplicate key {key:?}", i + 1)));
        }
    }
    Ok(out)
}

fn take<T: FromStr>(kv: &mut KeyValues, key: &str) -> Result<Option<T>> {
    match kv.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| BenchError::Config(format!("{key}: cannot parse {v:?}"))),
    }
}

fn require<T: FromStr>(kv: &mut KeyValues, key: &str) -> Result<T> {
    take(kv, key)?.ok_or_else(|| BenchError::Config(format!("missing key {key:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| BenchError::Config(format!("{key}: cannot parse {s:?}"))))
        .collect()
}

fn parse_int_list<T: FromStr + TryFrom<u64>>(key: &str, value: &str) -> Result<Vec<T>> {
    let bad = |s: &str| BenchError::Config(format!("{key}: cannot parse {s:?}"));
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad(item))?;
            let b: u64 = b.trim().parse().map_err(|_| bad(item))?;
            for v in a..=b {
                out.push(T::try_from(v).map_err(|_| bad(item))?);
            }
        } else {
            out.push(item.parse().map_err(|_| bad(item))?);
        }
    }
    Ok(out)
}

fn reject_unknown(kv: KeyValues) -> Result<()> {
    match kv.keys().next() {
        Some(k) => Err(BenchError::Config(format!("unknown key {k:?}"))),
        None => Ok(()),
    }
}

/// Initial proximal parameter: a number, or `2*sigma_max(A)^2` computed from
/// the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LTilde0 {
    FromData,
    Value(f64),
}

impl FromStr for LTilde0 {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact == "2*sigma_max(A)^2" || compact.eq_ignore_ascii_case("auto") {
            return Ok(LTilde0::FromData);
        }
        match compact.parse::<f64>() {
            Ok(v) if v > 0.0 => Ok(LTilde0::Value(v)),
            _ => Err(BenchError::Config(format!("L_tilde_0: cannot parse {s:?}"))),
        }
    }
}

/// One solver run on generated data.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub lambda: f64,
    pub seed: u64,
    pub l_tilde_0: LTilde0,
    pub max_outer: usize,
    pub stop_factor: f64,
    /// Objective target for the residual variants; without it they use the
    /// stationarity rule.
    pub target: Option<f64>,
}

impl RunConfig {
    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let cfg = Self {
            variant: require(&mut kv, "variant")?,
            n: require(&mut kv, "n")?,
            p: require(&mut kv, "p")?,
            m: require(&mut kv, "m")?,
            lambda: require(&mut kv, "lambda")?,
            seed: require(&mut kv, "seed")?,
            l_tilde_0: take(&mut kv, "L_tilde_0")?.unwrap_or(LTilde0::FromData),
            max_outer: take(&mut kv, "max_outer")?.unwrap_or(5000),
            stop_factor: take(&mut kv, "stop_factor")?.unwrap_or(1e-3),
            target: take(&mut kv, "target")?,
        };
        reject_unknown(kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(parse_key_values(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.m < 2 || self.p > self.n {
            return Err(BenchError::Config(format!(
                "need n, p >= 1, m >= 2 and p <= n (n={}, p={}, m={})",
                self.n, self.p, self.m
            )));
        }
        if !(self.lambda >= 0.0) || !(self.stop_factor > 0.0) || self.max_outer == 0 {
            return Err(BenchError::Config("lambda >= 0, stop_factor > 0 and max_outer >= 1 required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentGrid {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub m: Vec<usize>,
    pub lambda: Vec<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub max_outer: usize,
    pub stop_factor: f64,
    pub out: Option<PathBuf>,
}

/// One `(n, p, m, lambda, seed)` combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl ExperimentGrid {
    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let mut list = |key: &str| kv.remove(key).ok_or_else(|| BenchError::Config(format!("missing key {key:?}")));
        let n = parse_int_list("n", &list("n")?)?;
        let p = parse_int_list("p", &list("p")?)?;
        let m = parse_int_list("m", &list("m")?)?;
        let lambda = parse_list("lambda", &list("lambda")?)?;
        let seeds = parse_int_list("seeds", &list("seeds")?)?;
        let variants = match kv.remove("variants") {
            Some(v) => parse_list("variants", &v)?,
            None => Variant::ALL.to_vec(),
        };
        let grid = Self {
            n,
            p,
            m,
            lambda,
            seeds,
            variants,
            max_outer: take(&mut kv, "max_outer")?.unwrap_or(5000),
            stop_factor: take(&mut kv, "stop_factor")?.unwrap_or(1e-3),
            out: take(&mut kv, "out")?,
        };
        reject_unknown(kv)?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(parse_key_values(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let lists_nonempty = !(self.n.is_empty()
            || self.p.is_empty()
            || self.m.is_empty()
            || self.lambda.is_empty()
            || self.seeds.is_empty()
            || self.variants.is_empty());
        if !lists_nonempty {
            return Err(BenchError::Config("every grid list needs at least one entry".into()));
        }
        let positive = self.n.iter().chain(&self.p).all(|&v| v > 0)
            && self.m.iter().all(|&v| v >= 2)
            && self.lambda.iter().all(|&v| v > 0.0)
            && self.max_outer > 0
            && self.stop_factor > 0.0;
        if !positive {
            return Err(BenchError::Config("grid values must be positive and m >= 2".into()));
        }
        let max_p = *self.p.iter().max().unwrap();
        let min_n = *self.n.iter().min().unwrap();
        if max_p > min_n {
            return Err(BenchError::Config(format!("p = {max_p} exceeds n = {min_n}")));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &p in &self.p {
                for &m in &self.m {
                    for &lambda in &self.lambda {
                        for &seed in &self.seeds {
                            out.push(Cell { n, p, m, lambda, seed });
                        }
                    }
                }
            }
        }
        out
    }
}
