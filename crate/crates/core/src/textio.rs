//! Line-oriented helpers shared by the model and checkpoint formats.
//!
//! Floats are written in shortest round-trip exponent form, so parsing a
//! written file reproduces every value bit for bit.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub(crate) fn write_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v:e}").unwrap();
    }
    out.push('\n');
}

pub(crate) fn write_matrix(out: &mut String, name: &str, m: &Array2<f64>) {
    writeln!(out, "{name} {} {}", m.nrows(), m.ncols()).unwrap();
    for row in m.rows() {
        write_row(out, row.iter().copied());
    }
}

pub(crate) fn write_vector(out: &mut String, name: &str, v: &Array1<f64>) {
    writeln!(out, "{name} {}", v.len()).unwrap();
    write_row(out, v.iter().copied());
}

/// Cursor over the lines of a text document, tracking 1-based line numbers.
pub(crate) struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    pub(crate) fn line_no(&self) -> usize {
        self.last
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last = n + 1;
                Ok(l)
            }
            None => Err(Error::parse(self.last + 1, "unexpected end of file")),
        }
    }

    pub(crate) fn peek_is_end(&self) -> bool {
        self.inner.clone().next().is_none()
    }

    /// Reads `key value` and returns the value.
    pub(crate) fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::parse(self.last, format!("expected `{key} <value>`")))?;
        Ok(rest)
    }

    pub(crate) fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| Error::parse(self.last, format!("bad value for `{key}`: {v}")))
    }

    fn row(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let vals = line
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(self.last, format!("bad float `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != expected {
            return Err(Error::parse(
                self.last,
                format!("expected {expected} values, got {}", vals.len()),
            ));
        }
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(self.last, format!("non-finite value {v}")));
        }
        Ok(vals)
    }

    pub(crate) fn matrix(&mut self, name: &str) -> Result<Array2<f64>> {
        let header = self.field(name)?;
        let dims: Vec<usize> = header
            .split(' ')
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse(self.last, "bad matrix shape"))
            })
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(Error::parse(
                self.last,
                "matrix header needs two dimensions",
            ));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.row(cols)?);
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
    }

    pub(crate) fn vector(&mut self, name: &str) -> Result<Array1<f64>> {
        let len: usize = self.parsed(name)?;
        Ok(Array1::from(self.row(len)?))
    }
}
