//! Plain-text formats: data matrices, condition labels, edge constraints,
//! GMT pathway files, weighted edge lists and result tables.
//!
//! Every numeric field is written with 17 significant digits, which
//! round-trips `f64` exactly.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{all_pairs, EdgeConstraints, NodePair};
use crate::linalg::SymMatrix;
use crate::mlm::{Pathway, PathwayTestResult};

/// Formats a number with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        if l.trim().is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l.split('\t').collect()))
        }
    })
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(parse_err(line, format!("non-finite value '{field}'"))),
        Err(_) => Err(parse_err(line, format!("not a number: '{field}'"))),
    }
}

fn check_unique(names: &[String], line: usize, what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(parse_err(line, format!("duplicate {what} '{n}'")));
        }
    }
    Ok(())
}

/// Samples in rows, variables in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub samples: Vec<String>,
    pub variables: Vec<String>,
    pub values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(samples: Vec<String>, variables: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != (samples.len(), variables.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} samples and {} variables for a {}x{} matrix",
                samples.len(),
                variables.len(),
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(DataMatrix { samples, variables, values })
    }

    pub fn variable_index(&self) -> HashMap<&str, usize> {
        self.variables.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }
}

/// Reads a TSV matrix whose first row holds column names and first column
/// row names. With `transpose`, rows are variables and columns samples.
pub fn parse_data_matrix(text: &str, transpose: bool) -> Result<DataMatrix> {
    let mut rows = records(text);
    let (header_line, header) = rows.next().ok_or_else(|| parse_err(1, "empty data matrix"))?;
    if header.len() < 2 {
        return Err(parse_err(header_line, "header needs a corner cell and at least one column name"));
    }
    let columns: Vec<String> = header[1..].iter().map(|s| s.trim().to_string()).collect();
    check_unique(&columns, header_line, if transpose { "sample" } else { "variable" })?;
    let mut row_names = Vec::new();
    let mut values = Vec::new();
    let mut name_line = Vec::new();
    for (line, fields) in rows {
        if fields.len() != columns.len() + 1 {
            return Err(parse_err(line, format!("expected {} fields, found {}", columns.len() + 1, fields.len())));
        }
        row_names.push(fields[0].trim().to_string());
        name_line.push(line);
        for f in &fields[1..] {
            values.push(parse_value(f, line)?);
        }
    }
    if row_names.is_empty() {
        return Err(parse_err(header_line, "data matrix has no rows"));
    }
    if let Some(pos) = (1..row_names.len()).find(|&i| row_names[..i].contains(&row_names[i])) {
        return Err(parse_err(name_line[pos], format!("duplicate row name '{}'", row_names[pos])));
    }
    let m = DMatrix::from_row_slice(row_names.len(), columns.len(), &values);
    if transpose {
        DataMatrix::new(columns, row_names, m.transpose())
    } else {
        DataMatrix::new(row_names, columns, m)
    }
}

/// Writes samples in rows.
pub fn format_data_matrix(d: &DataMatrix) -> String {
    let mut out = String::from("sample");
    for v in &d.variables {
        out.push('\t');
        out.push_str(v);
    }
    out.push('\n');
    for (i, s) in d.samples.iter().enumerate() {
        out.push_str(s);
        for j in 0..d.variables.len() {
            out.push('\t');
            out.push_str(&fmt_num(d.values[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// `sample_id<TAB>condition` with condition 1 or 2; a header row
/// `sample_id<TAB>condition` is optional.
pub fn parse_labels(text: &str) -> Result<Vec<(String, u8)>> {
    let mut out: Vec<(String, u8)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, (line, fields)) in records(text).enumerate() {
        if n == 0 && fields.first().map(|s| s.trim()) == Some("sample_id") {
            continue;
        }
        if fields.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", fields.len())));
        }
        let id = fields[0].trim().to_string();
        let cond = match fields[1].trim() {
            "1" => 1,
            "2" => 2,
            other => return Err(parse_err(line, format!("condition must be 1 or 2, found '{other}'"))),
        };
        if !seen.insert(id.clone()) {
            return Err(parse_err(line, format!("duplicate sample '{id}'")));
        }
        out.push((id, cond));
    }
    Ok(out)
}

pub fn format_labels(labels: &[(String, u8)]) -> String {
    let mut out = String::from("sample_id\tcondition\n");
    for (id, c) in labels {
        out.push_str(&format!("{id}\t{c}\n"));
    }
    out
}

fn resolve(index: &HashMap<&str, usize>, name: &str, line: usize) -> Result<usize> {
    index.get(name).copied().ok_or_else(|| parse_err(line, format!("unknown node '{name}'")))
}

/// Reads `node_a<TAB>node_b<TAB>status` rows (status 1 = known edge,
/// 0 = known non-edge) against the node names. A header row starting with
/// `node_a` is optional.
pub fn parse_constraints(text: &str, names: &[String]) -> Result<EdgeConstraints> {
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut status: HashMap<NodePair, (bool, usize)> = HashMap::new();
    for (n, (line, fields)) in records(text).enumerate() {
        if n == 0 && fields.first().map(|s| s.trim()) == Some("node_a") {
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", fields.len())));
        }
        let a = resolve(&index, fields[0].trim(), line)?;
        let b = resolve(&index, fields[1].trim(), line)?;
        let pair = NodePair::new(a, b).ok_or_else(|| parse_err(line, format!("self pair '{}'", fields[0].trim())))?;
        let edge = match fields[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("status must be 0 or 1, found '{other}'"))),
        };
        if let Some(&(prev, prev_line)) = status.get(&pair) {
            if prev != edge {
                return Err(parse_err(line, format!("pair conflicts with line {prev_line}")));
            }
        }
        status.insert(pair, (edge, line));
    }
    let e1 = status.iter().filter(|(_, s)| s.0).map(|(&e, _)| e);
    let e0 = status.iter().filter(|(_, s)| !s.0).map(|(&e, _)| e);
    EdgeConstraints::new(names.len(), e1, e0)
}

pub fn format_constraints(c: &EdgeConstraints, names: &[String]) -> String {
    let mut rows: Vec<(NodePair, u8)> = c.known_edges().iter().map(|&e| (e, 1)).collect();
    rows.extend(c.known_non_edges().iter().map(|&e| (e, 0)));
    rows.sort();
    let mut out = String::from("node_a\tnode_b\tstatus\n");
    for (e, s) in rows {
        out.push_str(&format!("{}\t{}\t{s}\n", names[e.first()], names[e.second()]));
    }
    out
}

/// Pathways read from a GMT file, plus warnings about dropped members and
/// skipped pathways.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwaySet {
    pub pathways: Vec<Pathway>,
    pub warnings: Vec<String>,
}

/// Reads `name<TAB>description<TAB>member…` lines. Unknown members are
/// dropped and pathways with fewer than `min_size` mapped members skipped,
/// both with a warning. Fails when nothing is left.
pub fn parse_gmt(text: &str, names: &[String], min_size: usize) -> Result<PathwaySet> {
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut pathways = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    let mut last_line = 0;
    for (line, fields) in records(text) {
        last_line = line;
        let name = fields[0].trim();
        if name.is_empty() {
            return Err(parse_err(line, "empty pathway name"));
        }
        if fields.len() < 2 {
            return Err(parse_err(line, format!("pathway '{name}' has no description field")));
        }
        if !seen.insert(name.to_string()) {
            return Err(parse_err(line, format!("duplicate pathway '{name}'")));
        }
        let mut members = BTreeSet::new();
        let mut unknown = Vec::new();
        for m in fields[2..].iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
            match index.get(m) {
                Some(&i) => {
                    members.insert(i);
                }
                None => unknown.push(m),
            }
        }
        if !unknown.is_empty() {
            warnings.push(format!("line {line}: pathway '{name}': dropped unknown members {}", unknown.join(", ")));
        }
        if members.len() < min_size {
            warnings.push(format!(
                "line {line}: pathway '{name}' skipped: {} mapped members, at least {min_size} required",
                members.len()
            ));
            continue;
        }
        pathways.push(Pathway::from_indices(name, names.len(), members)?);
    }
    if pathways.is_empty() {
        return Err(parse_err(last_line.max(1), "no pathway has enough members matching the data"));
    }
    Ok(PathwaySet { pathways, warnings })
}

pub fn format_gmt(pathways: &[Pathway], names: &[String]) -> String {
    let mut out = String::new();
    for pw in pathways {
        out.push_str(&pw.name);
        out.push_str("\t-");
        for (i, _) in pw.members.iter().enumerate().filter(|(_, &b)| b) {
            out.push('\t');
            out.push_str(&names[i]);
        }
        out.push('\n');
    }
    out
}

/// Nonzero off-diagonal entries as `node_a<TAB>node_b<TAB>weight`.
pub fn format_edge_list(a: &DMatrix<f64>, names: &[String]) -> String {
    let mut out = String::from("node_a\tnode_b\tweight\n");
    for e in all_pairs(a.nrows()) {
        let w = a[(e.first(), e.second())];
        if w != 0.0 {
            out.push_str(&format!("{}\t{}\t{}\n", names[e.first()], names[e.second()], fmt_num(w)));
        }
    }
    out
}

/// Square matrix with node names on both margins.
pub fn format_square_matrix(a: &DMatrix<f64>, names: &[String]) -> String {
    let d = DataMatrix { samples: names.to_vec(), variables: names.to_vec(), values: a.clone() };
    format_data_matrix(&d).replacen("sample", "node", 1)
}

/// Reads a square matrix written by [`format_square_matrix`] and reorders
/// it to `names`.
pub fn parse_square_matrix(text: &str, names: &[String]) -> Result<DMatrix<f64>> {
    let d = parse_data_matrix(text, false)?;
    if d.samples != d.variables {
        return Err(parse_err(1, "row and column names of a square matrix must agree"));
    }
    let index = d.variable_index();
    let p = names.len();
    if d.variables.len() != p {
        return Err(Error::DimensionMismatch(format!("matrix has {} nodes, data has {p}", d.variables.len())));
    }
    let pos: Vec<usize> = names
        .iter()
        .map(|n| index.get(n.as_str()).copied().ok_or_else(|| parse_err(1, format!("node '{n}' missing from matrix"))))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(p, p, |i, j| d.values[(pos[i], pos[j])]))
}

/// Reads a symmetric positive definite matrix (e.g. a precision estimate).
pub fn parse_precision(text: &str, names: &[String]) -> Result<SymMatrix> {
    let a = parse_square_matrix(text, names)?;
    SymMatrix::new(a)
}

pub fn format_results(results: &[PathwayTestResult]) -> String {
    let mut out = String::from("pathway\tTS\tdf\tpval\tqval\treject\n");
    for r in results {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.pathway,
            fmt_num(r.statistic),
            fmt_num(r.df),
            fmt_num(r.p_value),
            fmt_num(r.q_value),
            u8::from(r.reject)
        ));
    }
    out
}
