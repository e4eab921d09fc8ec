//! Command implementations behind the `tnet` binary.
//!
//! Each command returns an [`Outcome`]: the text to print and the process
//! exit status. Validation failures surface as [`CliError`] (exit 1).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::circuits::{induction_mass, induction_run, pattern_csv, pattern_pgm};
use crate::decomp::{cp_als, svd, truncated_svd, tucker, CpOptions};
use crate::einsum::{execute, naive_contract, EinsumSpec};
use crate::error::Error;
use crate::path::{auto_path, greedy_path, optimal_path, ContractionPath, CostReport};
use crate::tensor::{delta, Tensor};
use crate::tt::{tt_decompose, tt_to_dense};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_ORACLE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Relative tolerance for `contract --oracle`.
pub const ORACLE_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("spec file line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_INVALID
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSource {
    pub seed: u64,
    /// Draw from `[-1, 1)` instead of `[0, 1)`.
    #[serde(default)]
    pub signed: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Option<Vec<f64>>,
    pub random: Option<RandomSource>,
    /// `identity`, `delta`, `ones` or `ghz`.
    pub constructor: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecOptions {
    pub path: Option<String>,
    pub tol: Option<f64>,
    pub max_bond: Option<usize>,
}

/// A network description: tensors in declaration order plus an expression
/// whose inputs refer to them positionally.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpecFile {
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub einsum: Option<String>,
    #[serde(default)]
    pub options: SpecOptions,
    #[serde(skip)]
    source: String,
}

impl NetworkSpecFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut spec: NetworkSpecFile =
            serde_json::from_str(text).map_err(|e| CliError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        spec.source = text.to_string();
        let mut seen = HashSet::new();
        for t in &spec.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(CliError::Invalid(format!(
                    "duplicate tensor name '{}'",
                    t.name
                )));
            }
        }
        Ok(spec)
    }

    /// Materialize every declared tensor.
    pub fn build_tensors(&self) -> CliResult<Vec<Tensor>> {
        self.tensors.iter().map(build_tensor).collect()
    }

    /// Parse the expression, reporting errors at their file position.
    pub fn expression(&self) -> CliResult<EinsumSpec> {
        let expr = self
            .einsum
            .as_deref()
            .ok_or_else(|| CliError::Invalid("spec file has no \"einsum\" expression".into()))?;
        EinsumSpec::parse(expr).map_err(|e| match e {
            Error::Parse { column, message } => {
                let (line, col) = self.locate_in_source(expr, column);
                CliError::Syntax {
                    line,
                    column: col,
                    message: format!("einsum: {message}"),
                }
            }
            other => other.into(),
        })
    }

    /// Map a 1-based column inside the expression string to file line/column.
    fn locate_in_source(&self, expr: &str, column: usize) -> (usize, usize) {
        let quoted = serde_json::to_string(expr).unwrap_or_default();
        let Some(start) = self.source.find(&quoted) else {
            return (1, column);
        };
        // only exact when the literal has no escapes, which is the common case
        let before = &self.source[..start];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        let col = self.source[line_start..start].chars().count() + 1 + column;
        (line, col)
    }
}

fn build_tensor(e: &TensorEntry) -> CliResult<Tensor> {
    let sources = [
        e.data.is_some(),
        e.random.is_some(),
        e.constructor.is_some(),
    ];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(CliError::Invalid(format!(
            "tensor '{}' needs exactly one of data, random, constructor",
            e.name
        )));
    }
    let wrap = |r: crate::Result<Tensor>| {
        r.map_err(|err| CliError::Invalid(format!("tensor '{}': {err}", e.name)))
    };
    if let Some(data) = &e.data {
        return wrap(Tensor::new(e.shape.clone(), data.clone()));
    }
    if let Some(r) = &e.random {
        if e.shape.contains(&0) {
            return wrap(Err(Error::ZeroDim(e.shape.clone())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
        return Ok(if r.signed {
            Tensor::random_signed(&e.shape, &mut rng)
        } else {
            Tensor::random(&e.shape, &mut rng)
        });
    }
    let kind = e.constructor.as_deref().unwrap_or_default();
    let uniform_dim = |want: Option<usize>| -> CliResult<usize> {
        let d = *e.shape.first().ok_or_else(|| {
            CliError::Invalid(format!(
                "tensor '{}': {kind} needs a nonempty shape",
                e.name
            ))
        })?;
        if e.shape.iter().any(|&x| x != d) || want.is_some_and(|w| w != d) {
            return Err(CliError::Invalid(format!(
                "tensor '{}': {kind} needs equal dims{}, got {:?}",
                e.name,
                want.map(|w| format!(" of {w}")).unwrap_or_default(),
                e.shape
            )));
        }
        Ok(d)
    };
    match kind {
        "ones" => {
            if e.shape.contains(&0) {
                return wrap(Err(Error::ZeroDim(e.shape.clone())));
            }
            Ok(Tensor::ones(&e.shape))
        }
        "identity" => {
            if e.shape.len() != 2 {
                return Err(CliError::Invalid(format!(
                    "tensor '{}': identity needs a 2-leg shape",
                    e.name
                )));
            }
            Ok(Tensor::identity(uniform_dim(None)?))
        }
        "delta" => wrap(delta(e.shape.len(), uniform_dim(None)?)),
        "ghz" => wrap(delta(e.shape.len(), uniform_dim(Some(2))?)),
        other => Err(CliError::Invalid(format!(
            "tensor '{}': unknown constructor '{other}' (identity, delta, ones, ghz)",
            e.name
        ))),
    }
}

fn csv(values: impl IntoIterator<Item = impl std::fmt::Display>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathChoice {
    Auto,
    Optimal,
    Greedy,
}

impl std::str::FromStr for PathChoice {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "auto" => Ok(PathChoice::Auto),
            "optimal" => Ok(PathChoice::Optimal),
            "greedy" => Ok(PathChoice::Greedy),
            other => Err(CliError::Invalid(format!(
                "unknown path strategy '{other}' (auto, optimal, greedy)"
            ))),
        }
    }
}

/// Contract the file's network and print shape, data, path and cost.
pub fn run_contract(file: &Path, path: Option<PathChoice>, oracle: bool) -> CliResult<Outcome> {
    let spec_file = NetworkSpecFile::load(file)?;
    let spec = spec_file.expression()?;
    let tensors = spec_file.build_tensors()?;
    if tensors.len() != spec.num_inputs() {
        return Err(CliError::Invalid(format!(
            "expression has {} inputs but {} tensors are declared",
            spec.num_inputs(),
            tensors.len()
        )));
    }
    let choice = match path {
        Some(c) => c,
        None => spec_file
            .options
            .path
            .as_deref()
            .unwrap_or("auto")
            .parse()?,
    };
    let shapes: Vec<&[usize]> = tensors.iter().map(Tensor::shape).collect();
    let (plan, cost): (ContractionPath, CostReport) = match choice {
        PathChoice::Auto => auto_path(&spec, &shapes)?,
        PathChoice::Optimal => optimal_path(&spec, &shapes)?,
        PathChoice::Greedy => greedy_path(&spec, &shapes)?,
    };
    let result = execute(&spec, &tensors, &plan)?;
    let mut text = String::new();
    writeln!(text, "shape={}", csv(result.shape())).unwrap();
    writeln!(text, "data={}", csv(result.data())).unwrap();
    writeln!(text, "path={plan}").unwrap();
    text.push_str(&cost.to_kv());
    let mut code = EXIT_OK;
    if oracle {
        let reference = naive_contract(&spec, &tensors)?;
        let scale = reference.max_abs();
        let diff = result.max_abs_diff(&reference)?;
        let rel = if scale > 0.0 { diff / scale } else { diff };
        writeln!(text, "oracle_rel_error={rel:e}").unwrap();
        if rel > ORACLE_TOL {
            code = EXIT_ORACLE;
        }
    }
    Ok(Outcome { text, code })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Svd,
    Cp,
    Tucker,
    Tt,
}

impl std::str::FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "svd" => Ok(Method::Svd),
            "cp" => Ok(Method::Cp),
            "tucker" => Ok(Method::Tucker),
            "tt" => Ok(Method::Tt),
            other => Err(CliError::Invalid(format!(
                "unknown method '{other}' (svd, cp, tucker, tt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DecomposeArgs {
    pub rank: Option<usize>,
    pub ranks: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub max_bond: Option<usize>,
    pub left_legs: Option<Vec<usize>>,
    pub hooi_iters: Option<usize>,
}

fn block(text: &mut String, label: &str, value: String) {
    writeln!(text, "{label}\n{value}").unwrap();
}

/// Decompose the file's single tensor and print labeled CSV blocks.
pub fn run_decompose(file: &Path, method: Method, args: &DecomposeArgs) -> CliResult<Outcome> {
    let spec_file = NetworkSpecFile::load(file)?;
    let mut tensors = spec_file.build_tensors()?;
    if tensors.len() != 1 {
        return Err(CliError::Invalid(format!(
            "decompose needs exactly one tensor, found {}",
            tensors.len()
        )));
    }
    let t = tensors.pop().expect("one tensor");
    let tol_default = spec_file.options.tol;
    let need_seed = || {
        args.seed
            .ok_or_else(|| CliError::Invalid("--seed is required for cp and tucker".into()))
    };
    let mut text = String::new();
    let mut code = EXIT_OK;
    match method {
        Method::Svd => {
            let m = match &args.left_legs {
                Some(left) => {
                    let right: Vec<usize> = (0..t.order()).filter(|l| !left.contains(l)).collect();
                    t.group_legs(&[left.clone(), right])?
                }
                None if t.order() == 2 => t.clone(),
                None => {
                    return Err(CliError::Invalid(format!(
                        "svd of an order-{} tensor needs --left-legs",
                        t.order()
                    )))
                }
            };
            let s = svd(&m)?.s;
            let err = truncated_svd(&m, args.rank.unwrap_or(s.len()))?.1;
            let k = args.rank.unwrap_or(s.len());
            block(&mut text, "spectrum", csv(&s));
            block(&mut text, "rank", k.to_string());
            block(&mut text, "truncation_error", err.to_string());
        }
        Method::Cp => {
            let rank = args
                .rank
                .ok_or_else(|| CliError::Invalid("--rank is required for cp".into()))?;
            let fit = cp_als(
                &t,
                CpOptions {
                    rank,
                    max_iter: args.max_iter.unwrap_or(500),
                    tol: args.tol.or(tol_default).unwrap_or(1e-12),
                    seed: need_seed()?,
                },
            )?;
            block(
                &mut text,
                "relative_error",
                fit.relative_error().to_string(),
            );
            block(&mut text, "iterations", fit.iterations().to_string());
            block(&mut text, "converged", fit.converged.to_string());
            block(&mut text, "regularized", fit.regularized.to_string());
            block(&mut text, "weights", csv(&fit.form.weights));
            block(&mut text, "errors", csv(&fit.errors));
            if !fit.converged {
                code = EXIT_NOT_CONVERGED;
            }
        }
        Method::Tucker => {
            let ranks = args
                .ranks
                .clone()
                .ok_or_else(|| CliError::Invalid("--ranks is required for tucker".into()))?;
            let fit = tucker(&t, &ranks, args.hooi_iters.unwrap_or(10), need_seed()?)?;
            block(
                &mut text,
                "relative_error",
                fit.relative_error().to_string(),
            );
            block(&mut text, "core_shape", csv(fit.form.core.shape()));
            block(&mut text, "errors", csv(&fit.errors));
        }
        Method::Tt => {
            let max_bond = args
                .max_bond
                .or(spec_file.options.max_bond)
                .unwrap_or(usize::MAX);
            let tol = args.tol.or(tol_default).unwrap_or(1e-12);
            let tt = tt_decompose(&t, max_bond, tol)?;
            let dense = tt_to_dense(&tt)?;
            let norm = t.frobenius_norm();
            let err = dense.distance(&t)? / if norm > 0.0 { norm } else { 1.0 };
            block(&mut text, "bond_dims", csv(tt.bond_dims()));
            block(&mut text, "relative_error", err.to_string());
        }
    }
    Ok(Outcome { text, code })
}

#[derive(Debug, Clone)]
pub struct InductionArgs {
    pub pattern_len: usize,
    pub repeats: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for InductionArgs {
    fn default() -> Self {
        InductionArgs {
            pattern_len: 6,
            repeats: 3,
            hidden: 768,
            seed: 0,
        }
    }
}

/// Run the toy induction head, write `attention.csv` and `attention.pgm`
/// into `out`, and report per-query argmax keys.
pub fn run_induction(args: &InductionArgs, out: &Path) -> CliResult<Outcome> {
    let run = induction_run(args.pattern_len, args.repeats, args.hidden, args.seed)?;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    for (name, bytes) in [
        ("attention.csv", pattern_csv(&run.pattern).into_bytes()),
        ("attention.pgm", pattern_pgm(&run.pattern)),
    ] {
        let p = out.join(name);
        std::fs::write(&p, bytes).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        })?;
    }
    let mut text = String::new();
    writeln!(text, "seq_len={}", run.pattern.rows()).unwrap();
    writeln!(text, "query,argmax_key,induction_mass").unwrap();
    for (q, k) in run.argmax_keys().into_iter().enumerate() {
        writeln!(
            text,
            "{q},{k},{:.6}",
            induction_mass(&run.pattern, q, run.pattern_len)
        )
        .unwrap();
    }
    Ok(Outcome {
        text,
        code: EXIT_OK,
    })
}
