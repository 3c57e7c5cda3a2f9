//! Plain-text model files.
//!
//! ```text
//! GMAP 1
//! VARS 2 2
//! FACTORS 1
//! 2 0 1
//! 1 2 4 3
//! STATS 1 ADD
//! 1
//! 1 0
//! 0 1
//! H
//! mode slack
//! eta identity
//! ```
//!
//! Each energy factor is a scope line (`size ids...`) followed by its table in
//! row-major order. Statistic factors list all `n · P` integers on one line.
//! The optional `H` block holds `key value` pairs up to the end of the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Accumulation, AccumulationSpec, EnergyFactor, Model, StatisticFactor};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub h: BTreeMap<String, String>,
}

struct Lines<'a> {
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(i, raw)| {
                let body = raw.split('#').next().unwrap_or("");
                let toks: Vec<&str> = body.split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect();
        Lines { lines, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let l = self.lines.get(self.pos).cloned().ok_or_else(|| {
            perr(
                self.last_line(),
                format!("unexpected end of file, expected {what}"),
            )
        })?;
        self.pos += 1;
        Ok(l)
    }

    fn peek_keyword(&self) -> Option<&'a str> {
        self.lines.get(self.pos).map(|l| l.1[0])
    }
}

fn num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| perr(line, format!("invalid {what} '{tok}'")))
}

fn keyword(line: usize, toks: &[&str], kw: &str) -> Result<()> {
    if toks[0] != kw {
        return Err(perr(line, format!("expected '{kw}', found '{}'", toks[0])));
    }
    Ok(())
}

fn scope_line(line: usize, toks: &[&str], m: usize, what: &str) -> Result<Vec<usize>> {
    let k: usize = num(line, toks[0], "scope size")?;
    if toks.len() != k + 1 {
        return Err(perr(
            line,
            format!("{what}: scope size {k} but {} ids", toks.len() - 1),
        ));
    }
    let scope: Vec<usize> = toks[1..]
        .iter()
        .map(|t| num(line, t, "variable id"))
        .collect::<Result<_>>()?;
    if let Some(&v) = scope.iter().find(|&&v| v >= m) {
        return Err(perr(line, format!("{what}: variable {v} out of range")));
    }
    Ok(scope)
}

fn parse_energy_value(line: usize, tok: &str) -> Result<f64> {
    let v: f64 = num(line, tok, "energy value")?;
    if v.is_nan() || v == f64::INFINITY {
        return Err(perr(line, format!("energy value '{tok}' is not allowed")));
    }
    Ok(v)
}

pub fn parse_model_str(text: &str) -> Result<ModelFile> {
    let mut lines = Lines::new(text);

    let (ln, toks) = lines.next("header")?;
    if toks != ["GMAP", "1"] {
        return Err(perr(ln, "expected header 'GMAP 1'"));
    }

    let (ln, toks) = lines.next("VARS")?;
    keyword(ln, &toks, "VARS")?;
    let cards: Vec<usize> = toks[1..]
        .iter()
        .map(|t| num(ln, t, "cardinality"))
        .collect::<Result<_>>()?;
    let m = cards.len();

    let (ln, toks) = lines.next("FACTORS")?;
    keyword(ln, &toks, "FACTORS")?;
    if toks.len() != 2 {
        return Err(perr(ln, "expected 'FACTORS <count>'"));
    }
    let count: usize = num(ln, toks[1], "factor count")?;
    let mut energy = Vec::with_capacity(count);
    for i in 0..count {
        let what = format!("factor {i}");
        let (ln, toks) = lines.next(&format!("scope of {what}"))?;
        let scope = scope_line(ln, &toks, m, &what)?;
        let size: usize = scope.iter().map(|&v| cards[v]).product();
        let (ln, toks) = lines.next(&format!("table of {what}"))?;
        if toks.len() != size {
            return Err(perr(
                ln,
                format!("{what}: expected {size} values, got {}", toks.len()),
            ));
        }
        let values = toks
            .iter()
            .map(|t| parse_energy_value(ln, t))
            .collect::<Result<_>>()?;
        energy.push(EnergyFactor::new(scope, values));
    }

    let mut stats = Vec::new();
    let mut acc = AccumulationSpec::default();
    if lines.peek_keyword() == Some("STATS") {
        let (ln, toks) = lines.next("STATS")?;
        let p: usize = num(
            ln,
            toks.get(1).copied().unwrap_or(""),
            "statistic dimension",
        )?;
        if toks.len() != p + 2 {
            return Err(perr(ln, format!("expected {p} accumulation ops")));
        }
        let ops = toks[2..]
            .iter()
            .map(|t| match *t {
                "ADD" => Ok(Accumulation::Add),
                "MAX" => Ok(Accumulation::Max),
                other => Err(perr(ln, format!("unknown accumulation '{other}'"))),
            })
            .collect::<Result<_>>()?;
        acc = AccumulationSpec(ops);
        let (ln, toks) = lines.next("statistic factor count")?;
        if toks.len() != 1 {
            return Err(perr(ln, "expected statistic factor count"));
        }
        let count: usize = num(ln, toks[0], "statistic factor count")?;
        for i in 0..count {
            let what = format!("statistic factor {i}");
            let (ln, toks) = lines.next(&format!("scope of {what}"))?;
            let scope = scope_line(ln, &toks, m, &what)?;
            let size = scope.iter().map(|&v| cards[v]).product::<usize>() * p;
            if size == 0 {
                // Zero-dimensional statistics have no entries line.
                stats.push(StatisticFactor::from_flat(scope, p, vec![]));
                continue;
            }
            let (ln, toks) = lines.next(&format!("entries of {what}"))?;
            if toks.len() != size {
                return Err(perr(
                    ln,
                    format!("{what}: expected {size} integers, got {}", toks.len()),
                ));
            }
            let values = toks
                .iter()
                .map(|t| num(ln, t, "statistic entry"))
                .collect::<Result<_>>()?;
            stats.push(StatisticFactor::from_flat(scope, p, values));
        }
    }

    let mut h = BTreeMap::new();
    if lines.peek_keyword() == Some("H") {
        let (ln, toks) = lines.next("H")?;
        if toks.len() != 1 {
            return Err(perr(ln, "unexpected tokens after 'H'"));
        }
        while let Some(kw) = lines.peek_keyword() {
            let (ln, toks) = lines.next(kw)?;
            if toks.len() < 2 {
                return Err(perr(ln, format!("'{kw}' needs a value")));
            }
            if h.insert(kw.to_string(), toks[1..].join(" ")).is_some() {
                return Err(perr(ln, format!("duplicate key '{kw}'")));
            }
        }
    }

    if let Some(kw) = lines.peek_keyword() {
        let ln = lines.lines[lines.pos].0;
        return Err(perr(ln, format!("trailing content starting with '{kw}'")));
    }

    let model = Model::new(cards, energy, stats, acc)?;
    Ok(ModelFile { model, h })
}

pub fn parse_model(path: &Path) -> Result<ModelFile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_model_str(&text)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_model(model: &Model, h: &BTreeMap<String, String>) -> String {
    let mut out = String::from("GMAP 1\n");
    let _ = writeln!(out, "VARS {}", join(model.cardinalities()));
    let _ = writeln!(out, "FACTORS {}", model.energy_factors().len());
    for f in model.energy_factors() {
        let _ = writeln!(out, "{} {}", f.scope.len(), join(&f.scope));
        let _ = writeln!(out, "{}", join(&f.values));
    }
    if model.stat_dim() > 0 || !model.statistic_factors().is_empty() {
        let _ = write!(out, "STATS {}", model.stat_dim());
        for op in model.accumulation().ops() {
            let _ = write!(out, " {op}");
        }
        out.push('\n');
        let _ = writeln!(out, "{}", model.statistic_factors().len());
        for g in model.statistic_factors() {
            let _ = writeln!(out, "{} {}", g.scope.len(), join(&g.scope));
            if !g.values.is_empty() {
                let _ = writeln!(out, "{}", join(&g.values));
            }
        }
    }
    if !h.is_empty() {
        out.push_str("H\n");
        for (k, v) in h {
            let _ = writeln!(out, "{k} {v}");
        }
    }
    out
}
