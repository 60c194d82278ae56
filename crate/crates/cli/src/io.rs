//! Plain-text problem files.
//!
//! ```text
//! DCOP 1
//! name fixture
//! agents 3
//! domain 0 2
//! domain 1 2
//! domain 2 2
//! constraint 0 1
//! 0 5
//! 5 0
//! ```
//!
//! Every `constraint i j` line is followed by one row per value of `i`, each
//! holding one cost per value of `j`. Text after `#` is ignored.

use std::fmt::Write as _;

use dcop_core::{CostTable, Problem, VariableId};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unsupported format version {found} (expected {FORMAT_VERSION})")]
    Version { line: usize, found: String },
    #[error("line {line}: negative cost {value}")]
    NegativeCost { line: usize, value: i64 },
    #[error("unexpected end of file: {0}")]
    Truncated(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
}

pub fn write_problem(p: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "DCOP {FORMAT_VERSION}");
    if !p.name.is_empty() {
        let _ = writeln!(out, "name {}", p.name);
    }
    let _ = writeln!(out, "agents {}", p.n());
    for (i, d) in p.domains.iter().enumerate() {
        let _ = writeln!(out, "domain {i} {d}");
    }
    for c in &p.constraints {
        let _ = writeln!(out, "constraint {} {}", c.i, c.j);
        for row in c.costs.chunks(c.cols) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
    }
    out
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn number<T: std::str::FromStr>(
    line: usize,
    tok: Option<&str>,
    what: &str,
) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| syntax(line, format!("bad {what} `{tok}`")))
}

pub fn read_problem(text: &str) -> Result<Problem, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (no, header) = lines
        .next()
        .ok_or_else(|| ParseError::Truncated("missing header".into()))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("DCOP") {
        return Err(syntax(no, "expected `DCOP <version>` header"));
    }
    let version = toks.next().unwrap_or("");
    if version != FORMAT_VERSION.to_string() {
        return Err(ParseError::Version {
            line: no,
            found: version.to_string(),
        });
    }

    let mut name = String::new();
    let mut domains: Option<Vec<usize>> = None;
    let mut constraints = Vec::new();
    while let Some((no, line)) = lines.next() {
        let mut toks = line.split_whitespace();
        match toks.next().unwrap() {
            "name" => name = toks.collect::<Vec<_>>().join(" "),
            "agents" => {
                let n: usize = number(no, toks.next(), "agent count")?;
                domains = Some(vec![0; n]);
            }
            "domain" => {
                let ds = domains
                    .as_mut()
                    .ok_or_else(|| syntax(no, "`domain` before `agents`"))?;
                let i: usize = number(no, toks.next(), "agent index")?;
                let d: usize = number(no, toks.next(), "domain size")?;
                let slot = ds
                    .get_mut(i)
                    .ok_or_else(|| syntax(no, format!("agent {i} out of range")))?;
                *slot = d;
            }
            "constraint" => {
                let ds = domains
                    .as_ref()
                    .ok_or_else(|| syntax(no, "`constraint` before `agents`"))?;
                let i: usize = number(no, toks.next(), "agent index")?;
                let j: usize = number(no, toks.next(), "agent index")?;
                let (rows, cols) = match (ds.get(i), ds.get(j)) {
                    (Some(&r), Some(&c)) => (r, c),
                    _ => {
                        return Err(syntax(
                            no,
                            format!("constraint {i} {j} references an unknown agent"),
                        ))
                    }
                };
                let mut costs = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let (rno, row) = lines.next().ok_or_else(|| {
                        ParseError::Truncated(format!(
                            "constraint {i} {j} needs {rows} rows, found {r}"
                        ))
                    })?;
                    let cells: Vec<&str> = row.split_whitespace().collect();
                    if cells.len() != cols {
                        return Err(syntax(
                            rno,
                            format!("expected {cols} costs, found {}", cells.len()),
                        ));
                    }
                    for cell in cells {
                        let v: i64 = number(rno, Some(cell), "cost")?;
                        if v < 0 {
                            return Err(ParseError::NegativeCost {
                                line: rno,
                                value: v,
                            });
                        }
                        costs.push(v as u64);
                    }
                }
                constraints.push(CostTable::new(
                    VariableId(i),
                    VariableId(j),
                    rows,
                    cols,
                    costs,
                ));
            }
            other => return Err(syntax(no, format!("unknown directive `{other}`"))),
        }
    }
    let domains = domains.ok_or_else(|| ParseError::Truncated("missing `agents` line".into()))?;
    let p = Problem::new(name, domains, constraints);
    p.validate().map_err(|errs| {
        let msgs: Vec<String> = errs.iter().map(ToString::to_string).collect();
        ParseError::Invalid(msgs.join("; "))
    })?;
    Ok(p)
}
