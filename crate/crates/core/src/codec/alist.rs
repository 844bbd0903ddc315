//! MacKay alist reader and writer.
//!
//! Layout: `n_cols n_rows`, `max_col_deg max_row_deg`, the column degrees,
//! the row degrees, one line of 1-based row indices per column, then one
//! line of 1-based column indices per row. Trailing zeros on an index line
//! are padding.

use std::fmt::Write as _;

use super::ParityCheckMatrix;
use crate::error::{Error, Result};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-blank line as (1-based line number, parsed integers).
    fn next_ints(&mut self, what: &str) -> Result<(usize, Vec<usize>)> {
        for (idx, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let ints = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>().map_err(|_| Error::Alist {
                        line: idx + 1,
                        msg: format!("bad integer `{t}` in {what}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok((idx + 1, ints));
        }
        Err(Error::Alist {
            line: 0,
            msg: format!("truncated file: missing {what}"),
        })
    }
}

fn exact<const N: usize>(line: usize, v: &[usize], what: &str) -> Result<[usize; N]> {
    v.try_into().map_err(|_| Error::Alist {
        line,
        msg: format!("{what}: expected {N} values, found {}", v.len()),
    })
}

fn index_lists(
    lines: &mut Lines<'_>,
    count: usize,
    degrees: &[usize],
    bound: usize,
    what: &str,
) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let (line, ints) = lines.next_ints(what)?;
        let deg = degrees[i];
        if ints.len() < deg {
            return Err(Error::Alist {
                line,
                msg: format!(
                    "{what} {}: expected {deg} indices, found {}",
                    i + 1,
                    ints.len()
                ),
            });
        }
        let mut idx = Vec::with_capacity(deg);
        for (pos, &v) in ints.iter().enumerate() {
            if pos >= deg {
                if v != 0 {
                    return Err(Error::Alist {
                        line,
                        msg: format!("{what} {}: more than {deg} non-padding indices", i + 1),
                    });
                }
                continue;
            }
            if v == 0 || v > bound {
                return Err(Error::Alist {
                    line,
                    msg: format!(
                        "{what} {}: index {v} at position {} out of range 1..={bound}",
                        i + 1,
                        pos + 1
                    ),
                });
            }
            idx.push(v - 1);
        }
        out.push(idx);
    }
    Ok(out)
}

pub fn parse_alist(text: &str) -> Result<ParityCheckMatrix> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (l, v) = lines.next_ints("header dimensions")?;
    let [n_cols, n_rows] = exact::<2>(l, &v, "header dimensions")?;
    if n_cols == 0 || n_rows == 0 {
        return Err(Error::Alist {
            line: l,
            msg: "dimensions must be positive".into(),
        });
    }
    let (l, v) = lines.next_ints("max degrees")?;
    let [max_col, max_row] = exact::<2>(l, &v, "max degrees")?;

    let (l, col_deg) = lines.next_ints("column degrees")?;
    if col_deg.len() != n_cols {
        return Err(Error::Alist {
            line: l,
            msg: format!("expected {n_cols} column degrees, found {}", col_deg.len()),
        });
    }
    if col_deg.iter().any(|&d| d > max_col) {
        return Err(Error::Alist {
            line: l,
            msg: format!("column degree exceeds declared maximum {max_col}"),
        });
    }
    let (l, row_deg) = lines.next_ints("row degrees")?;
    if row_deg.len() != n_rows {
        return Err(Error::Alist {
            line: l,
            msg: format!("expected {n_rows} row degrees, found {}", row_deg.len()),
        });
    }
    if row_deg.iter().any(|&d| d > max_row) {
        return Err(Error::Alist {
            line: l,
            msg: format!("row degree exceeds declared maximum {max_row}"),
        });
    }

    let cols = index_lists(&mut lines, n_cols, &col_deg, n_rows, "column")?;
    let rows = index_lists(&mut lines, n_rows, &row_deg, n_cols, "row")?;

    let h = ParityCheckMatrix::from_rows(n_cols, rows).map_err(|e| Error::Alist {
        line: 0,
        msg: e.to_string(),
    })?;
    for (c, list) in cols.iter().enumerate() {
        let mut sorted = list.clone();
        sorted.sort_unstable();
        if sorted != h.cols()[c] {
            return Err(Error::Alist {
                line: 0,
                msg: format!("column {} list disagrees with row lists", c + 1),
            });
        }
    }
    Ok(h)
}

pub fn write_alist(h: &ParityCheckMatrix) -> String {
    let max_col = h.cols().iter().map(Vec::len).max().unwrap_or(0);
    let max_row = h.rows().iter().map(Vec::len).max().unwrap_or(0);
    let mut s = String::new();
    let join =
        |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "{} {}", h.n_cols(), h.n_rows());
    let _ = writeln!(s, "{max_col} {max_row}");
    let _ = writeln!(s, "{}", join(&mut h.cols().iter().map(Vec::len)));
    let _ = writeln!(s, "{}", join(&mut h.rows().iter().map(Vec::len)));
    for list in h.cols() {
        let mut v: Vec<usize> = list.iter().map(|&r| r + 1).collect();
        v.resize(max_col, 0);
        let _ = writeln!(s, "{}", join(&mut v.into_iter()));
    }
    for list in h.rows() {
        let mut v: Vec<usize> = list.iter().map(|&c| c + 1).collect();
        v.resize(max_row, 0);
        let _ = writeln!(s, "{}", join(&mut v.into_iter()));
    }
    s
}
