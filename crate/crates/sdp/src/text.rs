//! Plain-text dumps of matrices and SDP instances.
//!
//! A matrix is written as a header line `@ <label> <rows> <cols>` followed by
//! one line per row of whitespace-separated values. An instance file starts
//! with `sdp-text 1` and `blocks <n1> <n2> ...`, then the objective blocks
//! (`objective/<b>`) and, for every constraint, a line
//! `constraint <k> <sense> <rhs>` followed by its blocks (`constraint/<k>/<b>`).
//! Blocks that are entirely zero are omitted. Lines starting with `#` are
//! comments. Values use the shortest representation that reads back exactly.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::instance::{dense_entries, SdpInstance, Sense};
use crate::SdpError;

pub fn write_matrix(out: &mut String, label: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "@ {label} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn write_instance(inst: &SdpInstance) -> String {
    let mut out = String::from("sdp-text 1\n");
    let sizes: Vec<String> = inst.block_sizes.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(out, "blocks {}", sizes.join(" "));
    for b in 0..inst.block_sizes.len() {
        let m = inst.block_matrix(&inst.objective, b);
        if m.iter().any(|v| *v != 0.0) {
            write_matrix(&mut out, &format!("objective/{b}"), &m);
        }
    }
    for (k, con) in inst.constraints.iter().enumerate() {
        let _ = writeln!(out, "constraint {k} {} {:e}", con.sense.as_str(), con.rhs);
        for b in 0..inst.block_sizes.len() {
            if !con.entries.iter().any(|e| e.block == b) {
                continue;
            }
            let m = inst.block_matrix(&con.entries, b);
            if m.iter().any(|v| *v != 0.0) {
                write_matrix(&mut out, &format!("constraint/{k}/{b}"), &m);
            }
        }
    }
    out
}

fn err(line: usize, message: impl Into<String>) -> SdpError {
    SdpError::Parse {
        line,
        message: message.into(),
    }
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate().peekable(),
        }
    }

    /// Next non-blank, non-comment line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i + 1, t));
            }
        }
        None
    }
}

fn read_matrix_body(
    lines: &mut Lines<'_>,
    header_line: usize,
    rows: usize,
    cols: usize,
) -> Result<DMatrix<f64>, SdpError> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(header_line, format!("matrix ends after {r} of {rows} rows")))?;
        let vals: Vec<&str> = l.split_whitespace().collect();
        if vals.len() != cols {
            return Err(err(ln, format!("expected {cols} values, found {}", vals.len())));
        }
        for (c, v) in vals.iter().enumerate() {
            m[(r, c)] = v
                .parse::<f64>()
                .map_err(|e| err(ln, format!("bad number {v:?}: {e}")))?;
        }
    }
    Ok(m)
}

fn parse_header(ln: usize, l: &str) -> Result<(String, usize, usize), SdpError> {
    let parts: Vec<&str> = l.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "@" {
        return Err(err(ln, "expected `@ <label> <rows> <cols>`"));
    }
    let rows = parts[2].parse().map_err(|_| err(ln, "bad row count"))?;
    let cols = parts[3].parse().map_err(|_| err(ln, "bad column count"))?;
    Ok((parts[1].to_string(), rows, cols))
}

/// Reads a sequence of labelled matrices.
pub fn parse_matrices(text: &str) -> Result<Vec<(String, DMatrix<f64>)>, SdpError> {
    let mut lines = Lines::new(text);
    let mut out = Vec::new();
    while let Some((ln, l)) = lines.next() {
        let (label, rows, cols) = parse_header(ln, l)?;
        out.push((label, read_matrix_body(&mut lines, ln, rows, cols)?));
    }
    Ok(out)
}

pub fn parse_instance(text: &str) -> Result<SdpInstance, SdpError> {
    let mut lines = Lines::new(text);
    let (ln, l) = lines.next().ok_or_else(|| err(1, "empty input"))?;
    if l != "sdp-text 1" {
        return Err(err(ln, "expected `sdp-text 1`"));
    }
    let (ln, l) = lines.next().ok_or_else(|| err(ln + 1, "missing blocks line"))?;
    let mut parts = l.split_whitespace();
    if parts.next() != Some("blocks") {
        return Err(err(ln, "expected `blocks <sizes>`"));
    }
    let sizes = parts
        .map(|s| s.parse::<usize>().map_err(|_| err(ln, format!("bad block size {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut inst = SdpInstance::new(sizes);
    let sizes = inst.block_sizes.clone();
    let nb = sizes.len();

    let block_of = |ln: usize, s: &str, rows: usize, cols: usize| -> Result<usize, SdpError> {
        let b: usize = s.parse().map_err(|_| err(ln, format!("bad block index {s:?}")))?;
        if b >= nb {
            return Err(err(ln, format!("block {b} out of range")));
        }
        let n = sizes[b];
        if rows != n || cols != n {
            return Err(err(ln, format!("block {b} must be {n}x{n}")));
        }
        Ok(b)
    };

    while let Some((ln, l)) = lines.next() {
        if let Some(rest) = l.strip_prefix("constraint ") {
            let p: Vec<&str> = rest.split_whitespace().collect();
            if p.len() != 3 {
                return Err(err(ln, "expected `constraint <k> <sense> <rhs>`"));
            }
            let k: usize = p[0].parse().map_err(|_| err(ln, "bad constraint index"))?;
            if k != inst.constraints.len() {
                return Err(err(ln, format!("constraint {k} out of order")));
            }
            let sense = Sense::parse(p[1]).ok_or_else(|| err(ln, format!("bad sense {:?}", p[1])))?;
            let rhs: f64 = p[2].parse().map_err(|_| err(ln, "bad right-hand side"))?;
            inst.add_constraint(Vec::new(), sense, rhs);
            continue;
        }
        let (label, rows, cols) = parse_header(ln, l)?;
        let m = read_matrix_body(&mut lines, ln, rows, cols)?;
        if m != m.transpose() {
            return Err(err(ln, format!("{label} is not symmetric")));
        }
        let parts: Vec<&str> = label.split('/').collect();
        match parts.as_slice() {
            ["objective", b] => {
                let b = block_of(ln, b, rows, cols)?;
                inst.set_dense_objective(b, &m);
            }
            ["constraint", k, b] => {
                let b = block_of(ln, b, rows, cols)?;
                let k: usize = k.parse().map_err(|_| err(ln, "bad constraint index"))?;
                let last = inst.constraints.len().checked_sub(1);
                if last != Some(k) {
                    return Err(err(ln, format!("{label} does not follow its constraint line")));
                }
                inst.constraints[k].entries.extend(dense_entries(b, &m));
            }
            _ => return Err(err(ln, format!("unknown label {label:?}"))),
        }
    }
    inst.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Entry;

    fn sample() -> SdpInstance {
        let mut inst = SdpInstance::new(vec![2, 1]);
        inst.add_objective(0, 0, 1, -1.0);
        inst.add_objective(1, 0, 0, 0.1);
        inst.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], Sense::Eq, 1.0);
        inst.add_constraint(
            vec![Entry::new(0, 1, 1, 1.0), Entry::new(1, 0, 0, 1.0 / 3.0)],
            Sense::Le,
            2.5e9,
        );
        inst
    }

    #[test]
    fn instance_round_trip_is_exact() {
        let inst = sample();
        let text = write_instance(&inst);
        let back = parse_instance(&text).unwrap();
        assert_eq!(write_instance(&back), text);
        for b in 0..2 {
            assert_eq!(
                back.block_matrix(&back.objective, b),
                inst.block_matrix(&inst.objective, b)
            );
            for k in 0..2 {
                assert_eq!(
                    back.block_matrix(&back.constraints[k].entries, b),
                    inst.block_matrix(&inst.constraints[k].entries, b)
                );
            }
        }
    }

    #[test]
    fn matrices_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 1e-300, 3.0, 0.0, 7.25e12]);
        let mut s = String::from("# comment\n");
        write_matrix(&mut s, "qcqp/0/objective", &m);
        let got = parse_matrices(&s).unwrap();
        assert_eq!(got, vec![("qcqp/0/objective".to_string(), m)]);
    }

    #[test]
    fn reports_line_of_bad_value() {
        let text = "sdp-text 1\nblocks 1\n@ objective/0 1 1\nabc\n";
        match parse_instance(text) {
            Err(SdpError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
