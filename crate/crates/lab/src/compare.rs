//! Checks a `results.csv` against a reference table.
//!
//! Reference files have the columns
//! `table,method,I,k,beta,outer_iters,LS_total,provenance`; `beta` is empty
//! for problems without one. A reference row passes when a result with the
//! same `(method, I, k, beta)` exists, its outer count is within
//! `outer_tol` and its LS total within the relative `ls_tol`.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{LabError, Result};
use crate::experiment::RESULTS_HEADER;

pub const REFERENCE_HEADER: [&str; 8] = ["table", "method", "I", "k", "beta", "outer_iters", "LS_total", "provenance"];

/// Reference tables shipped with the crate.
pub const SHIPPED_REFERENCE: &str = include_str!("../data/reference_tables.csv");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub outer: usize,
    /// Relative, `0.15` for ±15%.
    pub ls: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { outer: 1, ls: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub table: String,
    pub method: String,
    pub subdomains: usize,
    pub overlap: usize,
    pub beta: Option<f64>,
    pub outer_iters: usize,
    pub ls_total: usize,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub method: String,
    pub subdomains: usize,
    pub overlap: usize,
    pub beta: Option<f64>,
    pub outer_iters: usize,
    pub ls_total: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// No result row for this reference entry.
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub reference: ReferenceRow,
    pub result: Option<ResultRecord>,
    pub outer_ok: bool,
    pub ls_ok: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub cells: Vec<Cell>,
    pub tolerances: Tolerances,
}

impl Report {
    pub fn count(&self, v: Verdict) -> usize {
        self.cells.iter().filter(|c| c.verdict == v).count()
    }

    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.verdict == Verdict::Pass)
    }

    /// Only the compared cells; reference rows without a result are dropped.
    pub fn compared(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.verdict != Verdict::Missing)
    }

    /// Plain-text pass/fail matrix.
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<24} {:<8} {:>4} {:>3} {:>5}  {:>9}  {:>11}  verdict",
            "table", "method", "I", "k", "beta", "outer", "LS"
        )
        .unwrap();
        for c in &self.cells {
            let r = &c.reference;
            let beta = r.beta.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
            let (outer, ls) = match &c.result {
                Some(x) => (
                    format!("{}/{}", x.outer_iters, r.outer_iters),
                    format!("{}/{}", x.ls_total, r.ls_total),
                ),
                None => (format!("-/{}", r.outer_iters), format!("-/{}", r.ls_total)),
            };
            let verdict = match c.verdict {
                Verdict::Pass => "pass".to_string(),
                Verdict::Missing => "missing".to_string(),
                Verdict::Fail => {
                    let mut why = Vec::new();
                    if !c.outer_ok {
                        why.push("outer");
                    }
                    if !c.ls_ok {
                        why.push("LS");
                    }
                    if c.result.as_ref().is_some_and(|x| !x.converged) {
                        why.push("not converged");
                    }
                    format!("FAIL ({})", why.join(", "))
                }
            };
            writeln!(
                s,
                "{:<24} {:<8} {:>4} {:>3} {:>5}  {:>9}  {:>11}  {verdict}",
                r.table, r.method, r.subdomains, r.overlap, beta, outer, ls
            )
            .unwrap();
        }
        writeln!(
            s,
            "{} pass, {} fail, {} missing (outer ±{}, LS ±{}%)",
            self.count(Verdict::Pass),
            self.count(Verdict::Fail),
            self.count(Verdict::Missing),
            self.tolerances.outer,
            self.tolerances.ls * 100.0
        )
        .unwrap();
        s
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str], what: &str) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(LabError::Schema(format!(
            "{what} columns are `{}`, expected `{}`",
            got.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let v = rec.get(i).unwrap_or("");
    v.parse()
        .map_err(|_| LabError::Schema(format!("line {line}: cannot parse `{v}` in column {}", i + 1)))
}

fn beta_field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<f64>> {
    match rec.get(i).unwrap_or("") {
        "" => Ok(None),
        _ => field(rec, i, line).map(Some),
    }
}

pub fn parse_reference(text: &str) -> Result<Vec<ReferenceRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut rdr, &REFERENCE_HEADER, "reference")?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        out.push(ReferenceRow {
            table: rec[0].to_string(),
            method: rec[1].to_string(),
            subdomains: field(&rec, 2, line)?,
            overlap: field(&rec, 3, line)?,
            beta: beta_field(&rec, 4, line)?,
            outer_iters: field(&rec, 5, line)?,
            ls_total: field(&rec, 6, line)?,
            provenance: rec[7].to_string(),
        });
    }
    Ok(out)
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut rdr, &RESULTS_HEADER, "results")?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        out.push(ResultRecord {
            method: rec[0].to_string(),
            subdomains: field(&rec, 1, line)?,
            overlap: field(&rec, 2, line)?,
            beta: beta_field(&rec, 3, line)?,
            outer_iters: field(&rec, 4, line)?,
            ls_total: field(&rec, 5, line)?,
            converged: field(&rec, 6, line)?,
        });
    }
    Ok(out)
}

pub fn compare(results: &[ResultRecord], reference: &[ReferenceRow], tol: Tolerances) -> Report {
    let cells = reference
        .iter()
        .map(|r| {
            let hit = results.iter().find(|x| {
                x.method == r.method && x.subdomains == r.subdomains && x.overlap == r.overlap && x.beta == r.beta
            });
            match hit {
                None => Cell {
                    reference: r.clone(),
                    result: None,
                    outer_ok: false,
                    ls_ok: false,
                    verdict: Verdict::Missing,
                },
                Some(x) => {
                    let outer_ok = x.outer_iters.abs_diff(r.outer_iters) <= tol.outer;
                    let ls_ok = (x.ls_total as f64 - r.ls_total as f64).abs() <= tol.ls * r.ls_total as f64;
                    let pass = outer_ok && ls_ok && x.converged;
                    Cell {
                        reference: r.clone(),
                        result: Some(x.clone()),
                        outer_ok,
                        ls_ok,
                        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
                    }
                }
            }
        })
        .collect();
    Report { cells, tolerances: tol }
}

pub fn compare_files(results: &Path, reference: &Path, tol: Tolerances) -> Result<Report> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| LabError::io(p, e));
    let res = parse_results(&read(results)?)?;
    let refs = parse_reference(&read(reference)?)?;
    Ok(compare(&res, &refs, tol))
}
