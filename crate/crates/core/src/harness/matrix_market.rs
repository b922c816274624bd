//! Matrix Market exchange format (real, general or symmetric; coordinate or
//! array layout).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::objectives::DesignMatrix;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_header(path: &Path, line: &str) -> Result<(Layout, Symmetry)> {
    let fields: Vec<String> = line.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" {
        return Err(Error::parse(path, 1, "expected '%%MatrixMarket matrix <layout> <field> <symmetry>'"));
    }
    if fields[1] != "matrix" {
        return Err(Error::parse(path, 1, format!("unsupported object '{}'", fields[1])));
    }
    let layout = match fields[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(Error::parse(path, 1, format!("unknown layout '{other}'"))),
    };
    match fields[3].as_str() {
        "real" | "integer" | "double" => {}
        other => {
            return Err(Error::parse(
                path,
                1,
                format!("unsupported field type '{other}' (only real and integer are read)"),
            ))
        }
    }
    let symmetry = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::parse(path, 1, format!("unsupported symmetry '{other}'"))),
    };
    Ok((layout, symmetry))
}

fn parse_usize(path: &Path, line: usize, tok: &str, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} '{tok}'")))
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid value '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value '{tok}'")));
    }
    Ok(v)
}

/// Parses Matrix Market text; `path` is only used in error messages.
pub fn parse_matrix_market(path: &Path, text: &str) -> Result<DesignMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let (layout, symmetry) = parse_header(path, header)?;
    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data
        .next()
        .ok_or_else(|| Error::parse(path, 2, "missing size line"))?;
    let toks: Vec<&str> = size.split_whitespace().collect();
    let expected_toks = if layout == Layout::Coordinate { 3 } else { 2 };
    if toks.len() != expected_toks {
        return Err(Error::parse(
            path,
            size_line,
            format!("size line needs {expected_toks} integers"),
        ));
    }
    let rows = parse_usize(path, size_line, toks[0], "row count")?;
    let cols = parse_usize(path, size_line, toks[1], "column count")?;
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(Error::parse(path, size_line, "symmetric matrix must be square"));
    }
    match layout {
        Layout::Coordinate => {
            let nnz = parse_usize(path, size_line, toks[2], "entry count")?;
            let mut triplets = Vec::with_capacity(nnz * if symmetry == Symmetry::Symmetric { 2 } else { 1 });
            let mut seen = 0usize;
            for (ln, l) in data {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(Error::parse(path, ln, "coordinate entry needs 'row col value'"));
                }
                let i = parse_usize(path, ln, t[0], "row index")?;
                let j = parse_usize(path, ln, t[1], "column index")?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::parse(
                        path,
                        ln,
                        format!("index ({i}, {j}) outside {rows} x {cols}"),
                    ));
                }
                let v = parse_f64(path, ln, t[2])?;
                if symmetry == Symmetry::Symmetric && j > i {
                    return Err(Error::parse(path, ln, "symmetric storage must list the lower triangle"));
                }
                seen += 1;
                if seen > nnz {
                    return Err(Error::parse(path, ln, format!("more than {nnz} entries")));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetry == Symmetry::Symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
            if seen != nnz {
                return Err(Error::parse(
                    path,
                    text.lines().count(),
                    format!("expected {nnz} entries, found {seen}"),
                ));
            }
            Ok(DesignMatrix::Sparse(CsrMatrix::from_triplets(rows, cols, &triplets)?))
        }
        Layout::Array => {
            let mut m = DMatrix::zeros(rows, cols);
            // Column-major; symmetric storage lists the lower triangle only.
            let positions: Vec<(usize, usize)> = (0..cols)
                .flat_map(|j| {
                    let start = if symmetry == Symmetry::Symmetric { j } else { 0 };
                    (start..rows).map(move |i| (i, j))
                })
                .collect();
            let mut k = 0usize;
            for (ln, l) in data {
                for tok in l.split_whitespace() {
                    let Some(&(i, j)) = positions.get(k) else {
                        return Err(Error::parse(path, ln, "more values than the declared size"));
                    };
                    let v = parse_f64(path, ln, tok)?;
                    m[(i, j)] = v;
                    if symmetry == Symmetry::Symmetric {
                        m[(j, i)] = v;
                    }
                    k += 1;
                }
            }
            if k != positions.len() {
                return Err(Error::parse(
                    path,
                    text.lines().count(),
                    format!("expected {} values, found {k}", positions.len()),
                ));
            }
            Ok(DesignMatrix::Dense(m))
        }
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<DesignMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(path, &text)
}

/// Renders a matrix in general storage: coordinate layout for sparse
/// matrices, array layout for dense ones. Values use shortest round-trip
/// formatting.
pub fn format_matrix_market(m: &DesignMatrix) -> String {
    let mut out = String::new();
    match m {
        DesignMatrix::Sparse(s) => {
            out.push_str("%%MatrixMarket matrix coordinate real general\n");
            out.push_str(&format!("{} {} {}\n", s.nrows(), s.ncols(), s.nnz()));
            for (i, j, v) in s.triplets() {
                out.push_str(&format!("{} {} {:?}\n", i + 1, j + 1, v));
            }
        }
        DesignMatrix::Dense(d) => {
            out.push_str("%%MatrixMarket matrix array real general\n");
            out.push_str(&format!("{} {}\n", d.nrows(), d.ncols()));
            for v in d.iter() {
                out.push_str(&format!("{v:?}\n"));
            }
        }
    }
    out
}

pub fn write_matrix_market(path: impl AsRef<Path>, m: &DesignMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(format_matrix_market(m).as_bytes())
        .map_err(|e| Error::io(path, e))
}
