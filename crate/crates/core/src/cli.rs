//! The `mec` command line.
//!
//! Problem files are either JSON, `{"marginals": [[...], ...]}`, or CSV with
//! one marginal per row. Output is pretty JSON with sorted keys, floats
//! rounded to 12 significant digits, and 1-based state indices.
//!
//! Exit codes: 0 success, 2 input error, 3 certification failure, 4 size
//! cap exceeded, 1 internal error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{bound_report, special_family, BoundReport};
use crate::causality::{infer_direction, JointObservation};
use crate::certify::certify_local_optimum;
use crate::dist::{random_instance, Marginal};
use crate::greedy::{GreedyTrace, Solver, TraceStep};
use crate::oracle::{enumerate_vertices, DEFAULT_N_CAP};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mec", version, about = "Greedy minimum entropy coupling toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Alg {
    /// Plain greedy.
    #[value(name = "1")]
    One,
    /// Two-phase greedy.
    #[value(name = "2")]
    Two,
}

impl Alg {
    fn solver(self) -> Solver {
        match self {
            Alg::One => Solver::Greedy,
            Alg::Two => Solver::TwoPhase,
        }
    }

    fn number(self) -> u8 {
        match self {
            Alg::One => 1,
            Alg::Two => 2,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Couple the marginals of a problem file.
    Couple {
        /// Problem file (JSON or CSV), `-` for stdin.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "1")]
        alg: Alg,
        /// Include the full step trace.
        #[arg(long)]
        trace: bool,
    },
    /// Couple, then certify the result is a KKT point.
    Certify {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "1")]
        alg: Alg,
        /// Certify against this trace (as written by `couple --trace`)
        /// instead of the solver's own.
        #[arg(long)]
        trace_in: Option<PathBuf>,
    },
    /// Approximation bound report for the chosen solver.
    Bound {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "2")]
        alg: Alg,
        /// Add the exact optimum (two marginals, at most 5 states).
        #[arg(long)]
        oracle: bool,
    },
    /// Infer the causal direction between X (rows) and Y (columns).
    Infer {
        /// CSV joint probability matrix, or `x,y` sample pairs with `--samples`.
        input: PathBuf,
        /// Bits by which the winning score must beat the other.
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
        /// Read one `x,y` label pair per line (no header, `#` comments)
        /// and estimate the joint by counting.
        #[arg(long)]
        samples: bool,
        #[arg(long, value_enum, default_value = "2")]
        alg: Alg,
    },
    /// Write problem files.
    #[command(subcommand)]
    Generate(Generate),
}

#[derive(Debug, Subcommand)]
pub enum Generate {
    /// Uniform marginal against a two-level one, with closed-form predictions.
    Family {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: f64,
    },
    /// Independent symmetric-Dirichlet marginals.
    Random {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
    },
}

/// What a successful dispatch prints, and the exit status to use.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_) | Error::Dimension(_) | Error::Parse(_) | Error::Io(_) => 2,
        Error::Certification { .. } => 3,
        Error::SizeCap { .. } => 4,
        Error::Invariant(_) => 1,
    }
}

fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(num) if num.is_f64() => {
            if let Some(r) = num.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *num = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serializes with sorted keys and 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Invariant(e.to_string()))?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Invariant(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        return std::io::read_to_string(std::io::stdin()).map_err(Error::from);
    }
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProblemFile {
    pub marginals: Vec<Vec<f64>>,
}

fn csv_rows(text: &str) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn numeric_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    csv_rows(text)?
        .into_iter()
        .enumerate()
        .map(|(r, row)| {
            row.iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: `{f}` is not a number", r + 1))))
                .collect()
        })
        .collect()
}

/// Parses a problem file body: JSON if it starts with `{`, CSV otherwise.
pub fn parse_problem(text: &str) -> Result<Vec<Marginal>> {
    let rows = if text.trim_start().starts_with('{') {
        serde_json::from_str::<ProblemFile>(text).map_err(|e| Error::Parse(e.to_string()))?.marginals
    } else {
        numeric_rows(text)?
    };
    if rows.is_empty() {
        return Err(Error::Parse("no marginals".into()));
    }
    let n = rows[0].len();
    if let Some((j, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Dimension(format!("marginal {} has {} states, marginal 1 has {n}", j + 1, r.len())));
    }
    rows.into_iter().map(Marginal::new).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepJson {
    pub iteration: usize,
    pub indices: Vec<usize>,
    pub mass: f64,
    /// `[axis, state]` pairs, both 1-based.
    pub saturated: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceJson {
    pub steps: Vec<StepJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_boundary: Option<usize>,
}

impl From<&GreedyTrace> for TraceJson {
    fn from(t: &GreedyTrace) -> Self {
        TraceJson {
            steps: t
                .steps
                .iter()
                .map(|s| StepJson {
                    iteration: s.iteration,
                    indices: s.cell.iter().map(|i| i + 1).collect(),
                    mass: s.mass,
                    saturated: s.saturated.iter().map(|&(a, i)| [a + 1, i + 1]).collect(),
                })
                .collect(),
            phase_boundary: t.phase_boundary,
        }
    }
}

impl TryFrom<TraceJson> for GreedyTrace {
    type Error = Error;

    fn try_from(t: TraceJson) -> Result<Self> {
        let zero_based = |v: usize| {
            v.checked_sub(1).ok_or_else(|| Error::Parse("trace indices are 1-based; found 0".into()))
        };
        let steps = t
            .steps
            .into_iter()
            .map(|s| {
                Ok(TraceStep {
                    iteration: s.iteration,
                    cell: s.indices.into_iter().map(zero_based).collect::<Result<_>>()?,
                    mass: s.mass,
                    saturated: s
                        .saturated
                        .into_iter()
                        .map(|[a, i]| Ok((zero_based(a)?, zero_based(i)?)))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(GreedyTrace { steps, phase_boundary: t.phase_boundary })
    }
}

/// Reads a trace from either a bare trace object or `couple --trace` output.
pub fn parse_trace(text: &str) -> Result<GreedyTrace> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(inner) = v.get_mut("trace") {
        v = inner.take();
    }
    let t: TraceJson = serde_json::from_value(v).map_err(|e| Error::Parse(format!("trace: {e}")))?;
    t.try_into()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntryJson {
    pub indices: Vec<usize>,
    pub mass: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CoupleJson {
    pub algorithm: u8,
    pub entries: Vec<EntryJson>,
    pub entropy_bits: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_boundary: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceJson>,
}

#[derive(Debug, Serialize)]
struct CertifyJson {
    algorithm: u8,
    local_optimum_certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    u: Option<Vec<Vec<f64>>>,
    residual_norm: Option<f64>,
    max_reconstruction_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

#[derive(Debug, Serialize)]
struct BoundJson {
    algorithm: u8,
    #[serde(flatten)]
    report: BoundReport,
}

fn cmd_couple(input: &Path, alg: Alg, trace: bool) -> Result<Outcome> {
    let marginals = parse_problem(&read_text(input)?)?;
    let (coupling, tr) = alg.solver().run(&marginals)?;
    let out = CoupleJson {
        algorithm: alg.number(),
        entries: coupling
            .assignment_order()
            .iter()
            .map(|(cell, mass)| EntryJson { indices: cell.iter().map(|i| i + 1).collect(), mass: *mass })
            .collect(),
        entropy_bits: coupling.entropy(),
        steps: tr.steps.len(),
        phase_boundary: tr.phase_boundary,
        trace: trace.then(|| TraceJson::from(&tr)),
    };
    Ok(Outcome { stdout: to_json(&out)?, code: 0 })
}

fn cmd_certify(input: &Path, alg: Alg, trace_in: Option<&Path>) -> Result<Outcome> {
    let marginals = parse_problem(&read_text(input)?)?;
    let (coupling, own_trace) = alg.solver().run(&marginals)?;
    let trace = match trace_in {
        Some(path) => parse_trace(&read_text(path)?)?,
        None => own_trace,
    };
    let out = match certify_local_optimum(&coupling, &trace) {
        Ok(cert) => CertifyJson {
            algorithm: alg.number(),
            local_optimum_certified: true,
            u: Some(cert.u),
            residual_norm: Some(cert.residual_norm),
            max_reconstruction_error: Some(cert.max_reconstruction_error),
            reason: None,
        },
        Err(Error::Certification { reason, residual_norm, max_reconstruction_error }) => {
            let out = CertifyJson {
                algorithm: alg.number(),
                local_optimum_certified: false,
                u: None,
                residual_norm: Some(residual_norm),
                max_reconstruction_error: Some(max_reconstruction_error),
                reason: Some(reason),
            };
            return Ok(Outcome { stdout: to_json(&out)?, code: 3 });
        }
        Err(e @ (Error::Domain(_) | Error::Dimension(_))) => {
            let out = CertifyJson {
                algorithm: alg.number(),
                local_optimum_certified: false,
                u: None,
                residual_norm: None,
                max_reconstruction_error: None,
                reason: Some(e.to_string()),
            };
            return Ok(Outcome { stdout: to_json(&out)?, code: 3 });
        }
        Err(e) => return Err(e),
    };
    Ok(Outcome { stdout: to_json(&out)?, code: 0 })
}

fn cmd_bound(input: &Path, alg: Alg, oracle: bool) -> Result<Outcome> {
    let marginals = parse_problem(&read_text(input)?)?;
    let (coupling, _) = alg.solver().run(&marginals)?;
    let mut report = bound_report(&marginals, Some(coupling.entropy()))?;
    if oracle {
        if marginals.len() != 2 {
            return Err(Error::Dimension(format!(
                "the exact oracle needs exactly 2 marginals, got {}",
                marginals.len()
            )));
        }
        let set = enumerate_vertices(&marginals[0], &marginals[1], DEFAULT_N_CAP)?;
        report = report.with_optimum(set.best_entropy);
    }
    Ok(Outcome { stdout: to_json(&BoundJson { algorithm: alg.number(), report })?, code: 0 })
}

fn cmd_infer(input: &Path, margin: f64, samples: bool, alg: Alg) -> Result<Outcome> {
    let text = read_text(input)?;
    let obs = if samples {
        let pairs = csv_rows(&text)?
            .into_iter()
            .enumerate()
            .map(|(r, row)| match row.as_slice() {
                [x, y] => Ok((x.clone(), y.clone())),
                _ => Err(Error::Parse(format!("sample row {} has {} fields, expected 2", r + 1, row.len()))),
            })
            .collect::<Result<Vec<_>>>()?;
        JointObservation::from_samples(&pairs)?
    } else {
        JointObservation::from_matrix(numeric_rows(&text)?)?
    };
    let report = infer_direction(&obs, margin, alg.solver())?;
    Ok(Outcome { stdout: to_json(&report)?, code: 0 })
}

#[derive(Debug, Serialize)]
struct FamilyJson {
    marginals: Vec<Vec<f64>>,
    family: crate::bounds::SpecialFamily,
}

fn cmd_generate(kind: &Generate) -> Result<Outcome> {
    let stdout = match *kind {
        Generate::Family { n, alpha } => {
            let family = special_family(n, alpha)?;
            to_json(&FamilyJson {
                marginals: vec![family.uniform.probs().to_vec(), family.skewed.probs().to_vec()],
                family,
            })?
        }
        Generate::Random { m, n, seed, concentration } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let marginals = random_instance(&mut rng, m, n, concentration)?;
            to_json(&ProblemFile { marginals: marginals.into_iter().map(Marginal::into_vec).collect() })?
        }
    };
    Ok(Outcome { stdout, code: 0 })
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Couple { input, alg, trace } => cmd_couple(input, *alg, *trace),
        Command::Certify { input, alg, trace_in } => cmd_certify(input, *alg, trace_in.as_deref()),
        Command::Bound { input, alg, oracle } => cmd_bound(input, *alg, *oracle),
        Command::Infer { input, margin, samples, alg } => cmd_infer(input, *margin, *samples, *alg),
        Command::Generate(kind) => cmd_generate(kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_twelve_digits() {
        assert_eq!(round_sig(1.360964047443681), 1.36096404744);
        assert_eq!(round_sig(0.1), 0.1);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(-2.3219280948873626), -2.32192809489);
        let s = to_json(&serde_json::json!({"b": 0.30000000000000004, "a": [1.0, 2.5e-13]})).unwrap();
        assert_eq!(s, "{\n  \"a\": [\n    1.0,\n    2.5e-13\n  ],\n  \"b\": 0.3\n}\n");
    }

    #[test]
    fn parses_json_and_csv_problems() {
        let j = parse_problem(r#"{"marginals": [[0.6, 0.4], [0.5, 0.5]]}"#).unwrap();
        let c = parse_problem("# comment\n0.6, 0.4\n\n0.5,0.5\n").unwrap();
        assert_eq!(j, c);
        assert!(matches!(parse_problem("0.5,0.5\n1.0\n"), Err(Error::Dimension(_))));
        assert!(matches!(parse_problem("0.5,abc\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_problem("{\"marginals\": 3}"), Err(Error::Parse(_))));
        assert!(matches!(parse_problem(""), Err(Error::Parse(_))));
        assert!(matches!(parse_problem("0.5,0.6\n"), Err(Error::Domain(_))));
    }

    #[test]
    fn trace_json_round_trip() {
        let m = parse_problem("0.25,0.25,0.5\n0.5,0.3,0.2\n").unwrap();
        let (_, trace) = Solver::TwoPhase.run(&m).unwrap();
        let json = serde_json::to_string(&TraceJson::from(&trace)).unwrap();
        assert_eq!(parse_trace(&json).unwrap(), trace);
        let wrapped = format!("{{\"trace\": {json}, \"steps\": 3}}");
        assert_eq!(parse_trace(&wrapped).unwrap(), trace);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Dimension(String::new())), 2);
        assert_eq!(exit_code(&Error::SizeCap { n: 6, cap: 5 }), 4);
        assert_eq!(
            exit_code(&Error::Certification {
                reason: String::new(),
                residual_norm: 0.0,
                max_reconstruction_error: 0.0
            }),
            3
        );
    }
}
