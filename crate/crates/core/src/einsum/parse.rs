use std::collections::HashMap;

use super::EinsumSpec;
use crate::error::{Error, Result};

fn err(column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        column,
        message: message.into(),
    }
}

fn is_label_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Split a segment into labels, returning each label with its 1-based column.
fn labels_of(chars: &[(usize, char)]) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    for &(col, c) in chars {
        if c.is_whitespace() {
            if !cur.is_empty() {
                out.push((std::mem::take(&mut cur), start));
            }
        } else if is_label_char(c) {
            if cur.is_empty() {
                start = col;
            }
            cur.push(c);
        } else {
            return Err(err(col, format!("unexpected character '{c}'")));
        }
    }
    if !cur.is_empty() {
        out.push((cur, start));
    }
    Ok(out)
}

pub(super) fn parse(text: &str) -> Result<EinsumSpec> {
    let chars: Vec<(usize, char)> = text.chars().enumerate().map(|(i, c)| (i + 1, c)).collect();
    let arrows: Vec<usize> = chars
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].1 == '-' && w[1].1 == '>')
        .map(|(i, _)| i)
        .collect();
    let arrow = match arrows.as_slice() {
        [] => return Err(err(chars.len() + 1, "missing '->'")),
        [a] => *a,
        [_, b, ..] => return Err(err(chars[*b].0, "more than one '->'")),
    };
    let lhs = &chars[..arrow];
    let rhs = &chars[arrow + 2..];

    if lhs.iter().all(|(_, c)| c.is_whitespace()) {
        return Err(err(1, "empty input list"));
    }

    let mut inputs: Vec<Vec<String>> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for segment in lhs.split(|&(_, c)| c == ',') {
        let labels = labels_of(segment)?;
        for (l, col) in &labels {
            seen.entry(l.clone()).or_insert(*col);
        }
        inputs.push(labels.into_iter().map(|(l, _)| l).collect());
    }

    if let Some(&(col, _)) = rhs.iter().find(|(_, c)| *c == ',') {
        return Err(err(col, "',' in output"));
    }
    let out = labels_of(rhs)?;
    let mut output: Vec<String> = Vec::with_capacity(out.len());
    for (l, col) in out {
        if !seen.contains_key(&l) {
            return Err(err(
                col,
                format!("output label '{l}' does not appear in any input"),
            ));
        }
        if output.contains(&l) {
            return Err(err(col, format!("output label '{l}' repeated")));
        }
        output.push(l);
    }
    EinsumSpec::from_labels(&inputs, &output)
}
