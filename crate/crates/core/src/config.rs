//! Run configuration: flat `key = value` files plus `--key=value` overrides.
//!
//! Fields and bounds are chosen from a small registry of named expressions
//! instead of a general expression language:
//!
//! | name | meaning |
//! |------|---------|
//! | `benchmark` (alias `paper-sec7`) | `10(1 − x₁ − x₂)` |
//! | `benchmark-z0` | `ν⁻¹(−Δ)⁻¹ y_D`, the control-problem load at `y = 0` |
//! | `zero` | `0` |
//! | a number, `inf`, `-inf` | that constant |

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveObstacle,
    SolveControl,
    Table1,
    SubspaceVerify,
    MeshInfo,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::SolveObstacle,
        Command::SolveControl,
        Command::Table1,
        Command::SubspaceVerify,
        Command::MeshInfo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SolveObstacle => "solve-obstacle",
            Command::SolveControl => "solve-control",
            Command::Table1 => "table1",
            Command::SubspaceVerify => "subspace-verify",
            Command::MeshInfo => "mesh-info",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Command::SolveObstacle => &[
                "domain", "n", "load", "lower", "upper", "nu", "yd", "tol", "max_iter", "c_pdas",
                "mass", "out",
            ],
            Command::SolveControl => &[
                "n", "nu", "yd", "lower", "upper", "tol", "max_iter", "c_pdas", "mass", "out",
            ],
            Command::Table1 => &[
                "h", "nu", "yd", "lower", "upper", "tol", "max_iter", "c_pdas", "mass", "out",
            ],
            Command::SubspaceVerify => &["seed", "trials", "dim", "out"],
            Command::MeshInfo => &["n"],
        }
    }
}

/// Named scalar field or constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expr {
    Const(f64),
    /// `10(1 − x₁ − x₂)`
    Benchmark,
    /// `ν⁻¹ A⁻¹ M y_D`
    BenchmarkZ0,
}

impl Expr {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "benchmark" | "paper-sec7" => Ok(Expr::Benchmark),
            "benchmark-z0" => Ok(Expr::BenchmarkZ0),
            "zero" => Ok(Expr::Const(0.0)),
            "inf" | "+inf" => Ok(Expr::Const(f64::INFINITY)),
            "-inf" => Ok(Expr::Const(f64::NEG_INFINITY)),
            _ => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Config(format!("'{s}' is neither a number nor a registry entry")))?;
                if !v.is_finite() {
                    return Err(Error::Config(format!("'{s}': write infinite bounds as inf or -inf")));
                }
                Ok(Expr::Const(v))
            }
        }
    }

    /// Pointwise value; `None` for [`Expr::BenchmarkZ0`], which needs a solve.
    pub fn eval(self, x1: f64, x2: f64) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(c),
            Expr::Benchmark => Some(crate::control::benchmark_target(x1, x2)),
            Expr::BenchmarkZ0 => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Friedrichs–Keller mesh of the unit square.
    Square,
    /// Uniform 1D grid on (0, 1) with `n` interior nodes.
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassVariant {
    Consistent,
    Lumped,
}

impl MassVariant {
    pub fn lumped(self) -> bool {
        self == MassVariant::Lumped
    }

    pub fn name(self) -> &'static str {
        match self {
            MassVariant::Consistent => "consistent",
            MassVariant::Lumped => "lumped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub domain: Domain,
    /// Subdivisions per side (square) or interior nodes (chain).
    pub n: usize,
    /// Subdivisions per side of each mesh in a sweep.
    pub h_list: Vec<usize>,
    pub nu: f64,
    pub yd: Expr,
    pub load: Expr,
    pub lower: Expr,
    pub upper: Expr,
    pub tol: f64,
    pub max_iter: usize,
    pub c_pdas: f64,
    pub mass: MassVariant,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub trials: usize,
    pub dim: usize,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let obstacle = command == Command::SolveObstacle;
        Self {
            command,
            domain: Domain::Square,
            n: 32,
            h_list: vec![32, 64, 128, 256],
            nu: 1e-5,
            yd: Expr::Benchmark,
            load: Expr::BenchmarkZ0,
            lower: Expr::Const(-5.0),
            upper: Expr::Const(5.0),
            tol: if obstacle { 1e-10 } else { 1e-12 },
            max_iter: if obstacle { 500 } else { 30 },
            c_pdas: 1.0,
            mass: MassVariant::Consistent,
            out: None,
            seed: 0,
            trials: 100,
            dim: 40,
        }
    }

    /// Applies `pairs` on top of the defaults; unknown keys are errors.
    pub fn from_pairs(command: Command, pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::defaults(command);
        for (key, value) in pairs {
            if !command.keys().contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "key '{key}' is not accepted by {} (accepted: {})",
                    command.name(),
                    command.keys().join(", ")
                )));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key} = '{value}': {what}"));
        match key {
            "domain" => {
                self.domain = match value {
                    "square" => Domain::Square,
                    "chain" => Domain::Chain,
                    _ => return Err(bad("expected square or chain")),
                }
            }
            "n" => self.n = value.parse().map_err(|_| bad("expected an integer"))?,
            "h" => {
                self.h_list = value
                    .split(',')
                    .map(|s| parse_width(s.trim()).map_err(|m| bad(&m)))
                    .collect::<Result<_>>()?
            }
            "nu" => self.nu = parse_float(value).map_err(|m| bad(&m))?,
            "tol" => self.tol = parse_float(value).map_err(|m| bad(&m))?,
            "c_pdas" => self.c_pdas = parse_float(value).map_err(|m| bad(&m))?,
            "max_iter" => self.max_iter = value.parse().map_err(|_| bad("expected an integer"))?,
            "yd" => self.yd = Expr::parse(value)?,
            "load" => self.load = Expr::parse(value)?,
            "lower" => self.lower = Expr::parse(value)?,
            "upper" => self.upper = Expr::parse(value)?,
            "mass" => {
                self.mass = match value {
                    "consistent" => MassVariant::Consistent,
                    "lumped" => MassVariant::Lumped,
                    _ => return Err(bad("expected consistent or lumped")),
                }
            }
            "out" => {
                if value.is_empty() {
                    return Err(bad("empty path"));
                }
                self.out = Some(PathBuf::from(value))
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
            "trials" => self.trials = value.parse().map_err(|_| bad("expected an integer"))?,
            "dim" => self.dim = value.parse().map_err(|_| bad("expected an integer"))?,
            _ => unreachable!("keys are checked against the command"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let min_n = if self.domain == Domain::Chain { 1 } else { 2 };
        if self.n < min_n || self.n > 4096 {
            return fail(format!("n = {} outside [{min_n}, 4096]", self.n));
        }
        if self.h_list.is_empty() {
            return fail("empty h list".into());
        }
        if !(self.nu > 0.0) {
            return fail(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.tol > 0.0) {
            return fail(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.c_pdas > 0.0) {
            return fail(format!("c_pdas must be positive, got {}", self.c_pdas));
        }
        if self.max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if !(2..=40).contains(&self.dim) {
            return fail(format!("dim = {} outside [2, 40]", self.dim));
        }
        if self.trials > 1_000_000 {
            return fail(format!("trials = {} is unreasonably large", self.trials));
        }
        if matches!(self.yd, Expr::BenchmarkZ0) {
            return fail("yd cannot be benchmark-z0".into());
        }
        for (name, e) in [("lower", self.lower), ("upper", self.upper)] {
            if !matches!(e, Expr::Const(_)) {
                return fail(format!("{name} must be a constant or ±inf"));
            }
        }
        let (Expr::Const(lo), Expr::Const(up)) = (self.lower, self.upper) else {
            unreachable!()
        };
        if lo == f64::INFINITY || up == f64::NEG_INFINITY || lo >= up {
            return fail(format!("bounds [{lo}, {up}] are infeasible"));
        }
        let uses_control_bounds = matches!(self.command, Command::SolveControl | Command::Table1);
        if uses_control_bounds && (lo.is_infinite() || up.is_infinite()) {
            return fail("control bounds must be finite".into());
        }
        if let Expr::Const(c) = self.load {
            if !c.is_finite() {
                return fail("load must be finite".into());
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> (f64, f64) {
        match (self.lower, self.upper) {
            (Expr::Const(lo), Expr::Const(up)) => (lo, up),
            _ => unreachable!("validated"),
        }
    }
}

fn parse_float(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "expected a number".to_string())?;
    if !v.is_finite() {
        return Err("expected a finite number".into());
    }
    Ok(v)
}

/// Mesh width `1/n` or `n` itself, returned as `n`.
fn parse_width(s: &str) -> std::result::Result<usize, String> {
    let n = if let Some(den) = s.strip_prefix("1/") {
        den.trim().parse::<usize>().map_err(|_| format!("bad width '{s}'"))?
    } else if let Ok(n) = s.parse::<usize>() {
        n
    } else {
        let h = parse_float(s)?;
        if !(h > 0.0 && h <= 0.5) {
            return Err(format!("width {h} outside (0, 1/2]"));
        }
        let n = (1.0 / h).round();
        if ((1.0 / n) - h).abs() > 1e-12 * h {
            return Err(format!("width {h} is not the reciprocal of an integer"));
        }
        n as usize
    };
    if !(2..=4096).contains(&n) {
        return Err(format!("subdivisions {n} outside [2, 4096]"));
    }
    Ok(n)
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// ignored, repeated keys are errors.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("invalid key '{key}'"),
            });
        }
        if let Some(prev) = seen.insert(key.to_string(), line_no) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("key '{key}' already set on line {prev}"),
            });
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config_file: Option<PathBuf>,
    /// `--key=value` overrides in order.
    pub overrides: Vec<(String, String)>,
}

/// Parses `<command> [--config FILE] [--key=value ...]` (program name
/// excluded).
pub fn parse_args<S: AsRef<str>>(args: &[S]) -> Result<Invocation> {
    let mut it = args.iter().map(AsRef::as_ref);
    let command = Command::parse(it.next().ok_or_else(|| Error::Config("missing command".into()))?)?;
    let mut config_file = None;
    let mut overrides = Vec::new();
    while let Some(arg) = it.next() {
        let body = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("unexpected argument '{arg}'")))?;
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v)),
            None => (body, None),
        };
        if key == "config" {
            let path = match value {
                Some(v) => v.to_string(),
                None => it
                    .next()
                    .ok_or_else(|| Error::Config("--config needs a file".into()))?
                    .to_string(),
            };
            if config_file.replace(PathBuf::from(path)).is_some() {
                return Err(Error::Config("--config given twice".into()));
            }
            continue;
        }
        let value = value.ok_or_else(|| Error::Config(format!("expected --{key}=value")))?;
        if key.is_empty() {
            return Err(Error::Config(format!("empty key in '{arg}'")));
        }
        overrides.push((key.replace('-', "_"), value.to_string()));
    }
    Ok(Invocation {
        command,
        config_file,
        overrides,
    })
}

/// File settings first, then command-line overrides.
pub fn resolve(inv: &Invocation, file_text: Option<&str>) -> Result<RunConfig> {
    let mut merged: Vec<(String, String)> = match file_text {
        Some(text) => parse_config_text(text).map_err(|e| Error::Config(format!("config file: {e}")))?,
        None => Vec::new(),
    };
    for (k, v) in &inv.overrides {
        merged.retain(|(key, _)| key != k);
        merged.push((k.clone(), v.clone()));
    }
    RunConfig::from_pairs(inv.command, &merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn text_format() {
        let text = "# comment\nnu = 1e-5  # trailing\n\n yd=benchmark\n";
        assert_eq!(parse_config_text(text).unwrap(), pairs(&[("nu", "1e-5"), ("yd", "benchmark")]));
        assert!(matches!(parse_config_text("nu 1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config_text("a=1\na=2"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_config_text("bad key = 1").is_err());
    }

    #[test]
    fn args() {
        let inv = parse_args(&["table1", "--config", "x.cfg", "--nu=1e-4", "--max-iter=5"]).unwrap();
        assert_eq!(inv.command, Command::Table1);
        assert_eq!(inv.config_file, Some(PathBuf::from("x.cfg")));
        assert_eq!(inv.overrides, pairs(&[("nu", "1e-4"), ("max_iter", "5")]));
        assert!(parse_args::<&str>(&[]).is_err());
        assert!(parse_args(&["frobnicate"]).is_err());
        assert!(parse_args(&["table1", "nu=1"]).is_err());
        assert!(parse_args(&["table1", "--nu"]).is_err());
        assert!(parse_args(&["table1", "--config"]).is_err());
    }

    #[test]
    fn overrides_win() {
        let inv = parse_args(&["solve-control", "--n=8"]).unwrap();
        let cfg = resolve(&inv, Some("n = 16\nnu = 1e-3\n")).unwrap();
        assert_eq!(cfg.n, 8);
        assert_eq!(cfg.nu, 1e-3);
    }

    #[test]
    fn validation() {
        let ok = RunConfig::from_pairs(Command::Table1, &pairs(&[("h", "1/32, 0.015625,128")])).unwrap();
        assert_eq!(ok.h_list, vec![32, 64, 128]);
        for (cmd, k, v) in [
            (Command::Table1, "h", "0.3"),
            (Command::Table1, "nu", "-1"),
            (Command::Table1, "nu", "nan"),
            (Command::SolveControl, "n", "1"),
            (Command::SolveControl, "lower", "7"),
            (Command::SolveControl, "upper", "inf"),
            (Command::SolveControl, "seed", "1"),
            (Command::SolveControl, "colour", "red"),
            (Command::SolveObstacle, "lower", "inf"),
            (Command::SolveObstacle, "mass", "heavy"),
            (Command::SubspaceVerify, "dim", "41"),
        ] {
            let r = RunConfig::from_pairs(cmd, &pairs(&[(k, v)]));
            assert!(matches!(r, Err(Error::Config(_))), "{k}={v}: {r:?}");
        }
        let cfg = RunConfig::from_pairs(Command::SolveObstacle, &pairs(&[("lower", "-inf")])).unwrap();
        assert_eq!(cfg.bounds(), (f64::NEG_INFINITY, 5.0));
    }

    #[test]
    fn registry() {
        assert_eq!(Expr::parse("paper-sec7").unwrap(), Expr::Benchmark);
        assert_eq!(Expr::parse("zero").unwrap().eval(0.3, 0.3), Some(0.0));
        assert_eq!(Expr::Benchmark.eval(0.5, 0.5), Some(0.0));
        assert_eq!(Expr::BenchmarkZ0.eval(0.5, 0.5), None);
        assert!(Expr::parse("1e400").is_err());
        assert!(Expr::parse("sin(x)").is_err());
    }
}
