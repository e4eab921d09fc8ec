//! Einsum expressions and tensor-network contraction.
//!
//! Expressions are written as whitespace-separated index labels per input,
//! inputs separated by commas, and a mandatory `->` before the output labels:
//! `"i j, j k -> i k"`. Labels are unicode words, so `"i α β, β -> i α"` is
//! valid. A label repeated inside one input takes that input's diagonal.

mod contract;
mod parse;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use contract::{contract_pair, einsum, environment, execute, naive_contract, NAIVE_LIMIT};

use crate::error::{Error, Result};

/// A parsed contraction expression.
///
/// Labels are interned: `inputs` and `output` hold indices into `labels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EinsumSpec {
    labels: Vec<String>,
    inputs: Vec<Vec<usize>>,
    output: Vec<usize>,
}

impl EinsumSpec {
    pub fn parse(text: &str) -> Result<Self> {
        parse::parse(text)
    }

    /// Build a spec from label lists directly.
    pub fn from_labels<S: AsRef<str>>(inputs: &[Vec<S>], output: &[S]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument(
                "einsum needs at least one input".into(),
            ));
        }
        let mut labels: Vec<String> = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut interned = Vec::with_capacity(inputs.len());
        for inp in inputs {
            let mut row = Vec::with_capacity(inp.len());
            for l in inp.iter().map(AsRef::as_ref) {
                let id = *ids.entry(l.to_string()).or_insert_with(|| {
                    labels.push(l.to_string());
                    labels.len() - 1
                });
                row.push(id);
            }
            interned.push(row);
        }
        let inputs = interned;
        let mut out_ids = Vec::with_capacity(output.len());
        for l in output.iter().map(AsRef::as_ref) {
            let Some(&id) = ids.get(l) else {
                return Err(Error::InvalidArgument(format!(
                    "output label '{l}' does not appear in any input"
                )));
            };
            if out_ids.contains(&id) {
                return Err(Error::InvalidArgument(format!(
                    "output label '{l}' repeated"
                )));
            }
            out_ids.push(id);
        }
        let output = out_ids;
        Ok(Self {
            labels,
            inputs,
            output,
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_name(&self, id: usize) -> &str {
        &self.labels[id]
    }

    /// Interned label ids of input `k`.
    pub fn input_ids(&self, k: usize) -> &[usize] {
        &self.inputs[k]
    }

    pub fn output_ids(&self) -> &[usize] {
        &self.output
    }

    pub fn input_labels(&self) -> Vec<Vec<&str>> {
        self.inputs
            .iter()
            .map(|inp| inp.iter().map(|&i| self.labels[i].as_str()).collect())
            .collect()
    }

    pub fn output_labels(&self) -> Vec<&str> {
        self.output
            .iter()
            .map(|&i| self.labels[i].as_str())
            .collect()
    }

    /// Resolve label dimensions against concrete input shapes.
    pub fn bind(&self, shapes: &[&[usize]]) -> Result<Vec<usize>> {
        if shapes.len() != self.inputs.len() {
            return Err(Error::ArityMismatch {
                expected: self.inputs.len(),
                got: shapes.len(),
            });
        }
        let mut dims = vec![0usize; self.labels.len()];
        for (k, (ids, shape)) in self.inputs.iter().zip(shapes).enumerate() {
            if ids.len() != shape.len() {
                return Err(Error::ShapeMismatch(format!(
                    "input {k} has {} labels but order {}",
                    ids.len(),
                    shape.len()
                )));
            }
            for (&id, &d) in ids.iter().zip(shape.iter()) {
                if dims[id] == 0 {
                    dims[id] = d;
                } else if dims[id] != d {
                    return Err(Error::ShapeMismatch(format!(
                        "label '{}' bound to both {} and {}",
                        self.labels[id], dims[id], d
                    )));
                }
            }
        }
        Ok(dims)
    }

    /// Spec for the same network with input `k` removed and its labels as output.
    ///
    /// Only labels of `k` that still occur in some other input are kept, once each.
    pub(crate) fn without_input(&self, k: usize) -> Self {
        let inputs: Vec<Vec<usize>> = self
            .inputs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, v)| v.clone())
            .collect();
        let mut output = Vec::new();
        for &id in &self.inputs[k] {
            if !output.contains(&id) && inputs.iter().any(|inp| inp.contains(&id)) {
                output.push(id);
            }
        }
        Self {
            labels: self.labels.clone(),
            inputs,
            output,
        }
    }
}

impl FromStr for EinsumSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for EinsumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |ids: &[usize]| {
            ids.iter()
                .map(|&i| self.labels[i].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let inputs: Vec<String> = self.inputs.iter().map(|i| join(i)).collect();
        write!(f, "{} ->", inputs.join(", "))?;
        if !self.output.is_empty() {
            write!(f, " {}", join(&self.output))?;
        }
        Ok(())
    }
}
