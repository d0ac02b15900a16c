//! Line-oriented text formats for tensors, factor sets and factor histories,
//! plus the JSON-lines convergence trace.
//!
//! Values are written with 17 significant digits so that a write-then-read
//! round trip reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cpcp::solvers::{ConvergenceTrace, IterationRecord};
use cpcp::{FactorSet, Mat, Tensor3};
use serde::Serialize;

use crate::error::{CliError, Result};

fn push_value(out: &mut String, v: f64) {
    // `{:.16e}` keeps 17 significant digits.
    write!(out, "{v:.16e}").unwrap();
}

pub fn format_tensor(t: &Tensor3) -> String {
    let [i, j, k] = t.dims();
    let mut out = format!("tensor3 {i} {j} {k}\n");
    // One line per frontal slice, i fastest.
    for slice in t.data().chunks(i * j) {
        for (n, v) in slice.iter().enumerate() {
            if n > 0 {
                out.push(' ');
            }
            push_value(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

fn push_matrix(out: &mut String, m: &Mat) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            push_value(out, m[(r, c)]);
        }
        out.push('\n');
    }
}

pub fn format_factors(f: &FactorSet) -> String {
    let [i, j, k] = f.dims();
    let mut out = format!("factors {i} {j} {k} {}\n", f.rank());
    push_matrix(&mut out, &f.a);
    out.push('\n');
    push_matrix(&mut out, &f.b);
    out.push('\n');
    push_matrix(&mut out, &f.c);
    out
}

/// Factor iterates, one factor block per iterate separated by blank lines.
pub fn format_history(history: &[FactorSet]) -> String {
    let mut out = String::new();
    for (n, f) in history.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        out.push_str(&format_factors(f));
    }
    out
}

/// Tokenizer that remembers line numbers for error messages.
struct Tokens<'a> {
    path: &'a str,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    pending: std::vec::IntoIter<&'a str>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn new(path: &'a str, text: &'a str) -> Self {
        Self {
            path,
            lines: text.lines().enumerate().peekable(),
            pending: Vec::new().into_iter(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        loop {
            if let Some(tok) = self.pending.next() {
                return Some(tok);
            }
            let (n, line) = self.lines.next()?;
            self.line = n + 1;
            let line = line.split('#').next().unwrap_or("");
            self.pending = line.split_whitespace().collect::<Vec<_>>().into_iter();
        }
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        self.next().ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.expect(what)?;
        tok.parse().map_err(|_| self.err(format!("invalid {what} `{tok}`")))
    }

    fn f64(&mut self) -> Result<f64> {
        let tok = self.expect("a value")?;
        let v: f64 = tok.parse().map_err(|_| self.err(format!("invalid number `{tok}`")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite value `{tok}`")));
        }
        Ok(v)
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let tok = self.expect(word)?;
        if tok != word {
            return Err(self.err(format!("expected `{word}`, found `{tok}`")));
        }
        Ok(())
    }

    fn at_end(&mut self) -> bool {
        if self.pending.len() > 0 {
            return false;
        }
        while let Some((_, line)) = self.lines.peek() {
            if line.split('#').next().unwrap_or("").trim().is_empty() {
                self.lines.next();
            } else {
                return false;
            }
        }
        true
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Mat> {
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = self.f64()?;
            }
        }
        Ok(m)
    }

    fn factors(&mut self) -> Result<FactorSet> {
        self.keyword("factors")?;
        let i = self.usize("I")?;
        let j = self.usize("J")?;
        let k = self.usize("K")?;
        let r = self.usize("R")?;
        let a = self.matrix(i, r)?;
        let b = self.matrix(j, r)?;
        let c = self.matrix(k, r)?;
        Ok(FactorSet::new(a, b, c)?)
    }
}

pub fn parse_tensor(path: &str, text: &str) -> Result<Tensor3> {
    let mut tok = Tokens::new(path, text);
    tok.keyword("tensor3")?;
    let dims = [tok.usize("I")?, tok.usize("J")?, tok.usize("K")?];
    let n = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(tok.f64()?);
    }
    if !tok.at_end() {
        return Err(tok.err("trailing data after the last tensor entry"));
    }
    Ok(Tensor3::new(dims, data)?)
}

pub fn parse_factors(path: &str, text: &str) -> Result<FactorSet> {
    let mut tok = Tokens::new(path, text);
    let f = tok.factors()?;
    if !tok.at_end() {
        return Err(tok.err("trailing data after the factor blocks"));
    }
    Ok(f)
}

pub fn parse_history(path: &str, text: &str) -> Result<Vec<FactorSet>> {
    let mut tok = Tokens::new(path, text);
    let mut out = Vec::new();
    while !tok.at_end() {
        out.push(tok.factors()?);
    }
    if out.is_empty() {
        return Err(tok.err("history holds no iterates"));
    }
    Ok(out)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    parse_tensor(&path.display().to_string(), &read_text(path)?)
}

pub fn read_factors(path: &Path) -> Result<FactorSet> {
    parse_factors(&path.display().to_string(), &read_text(path)?)
}

pub fn read_history(path: &Path) -> Result<Vec<FactorSet>> {
    parse_history(&path.display().to_string(), &read_text(path)?)
}

#[derive(Debug, Serialize)]
struct TraceFlags {
    alpha: Option<f64>,
    step: Option<f64>,
    degenerate: bool,
}

#[derive(Debug, Serialize)]
struct TraceLine {
    iter: usize,
    objective: f64,
    jred: f64,
    sigma_min: [f64; 3],
    wall_ms: Option<f64>,
    flags: TraceFlags,
}

impl TraceLine {
    fn new(rec: &IterationRecord, timing: bool) -> Self {
        Self {
            iter: rec.iter,
            objective: rec.objective,
            jred: rec.jred,
            sigma_min: rec.sigma_min(),
            wall_ms: timing.then_some(rec.wall_ms),
            flags: TraceFlags {
                alpha: rec.alpha,
                step: rec.step,
                degenerate: rec.degenerate,
            },
        }
    }
}

/// One JSON object per iteration. Wall-clock times are omitted (written as
/// `null`) unless `timing` is set, so identical runs give identical files.
pub fn format_trace(trace: &ConvergenceTrace, timing: bool) -> String {
    let mut out = String::new();
    for rec in &trace.records {
        out.push_str(&serde_json::to_string(&TraceLine::new(rec, timing)).expect("trace record serializes"));
        out.push('\n');
    }
    out
}

/// Reads the objective column of a trace file, checking iteration order.
pub fn parse_trace_objectives(path: &str, text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| CliError::Parse {
            path: path.to_string(),
            line: n + 1,
            msg,
        };
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let iter = v["iter"].as_u64().ok_or_else(|| err("missing `iter`".into()))?;
        if iter as usize != out.len() + 1 {
            return Err(err(format!("iteration {iter} out of order")));
        }
        let obj = v["objective"].as_f64().ok_or_else(|| err("missing `objective`".into()))?;
        out.push(obj);
    }
    Ok(out)
}
