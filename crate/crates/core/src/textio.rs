//! Line-oriented helpers shared by the text file formats.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Yields non-blank, non-`#` lines together with their 1-based line numbers.
pub(crate) struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    pub(crate) fn new(r: R) -> Self {
        Lines {
            inner: r.lines(),
            line: 0,
        }
    }

    /// Line number of the most recently returned line.
    pub(crate) fn line(&self) -> usize {
        self.line
    }

    pub(crate) fn next_line(&mut self, what: &str) -> Result<(usize, String)> {
        self.try_next()?.ok_or_else(|| {
            Error::parse(
                self.line + 1,
                format!("unexpected end of file, expected {what}"),
            )
        })
    }

    pub(crate) fn try_next(&mut self) -> Result<Option<(usize, String)>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(Some((self.line, t.to_string())));
        }
        Ok(None)
    }

    /// Reads a line of the form `<key> <values...>` and returns the values.
    pub(crate) fn keyed(&mut self, key: &str) -> Result<(usize, Vec<String>)> {
        let (n, l) = self.next_line(&format!("`{key}` line"))?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::parse(n, format!("expected `{key} ...`")));
        }
        Ok((n, parts.map(str::to_string).collect()))
    }

    /// Reads `<key> <f64>...` with exactly `width` values.
    pub(crate) fn keyed_values(&mut self, key: &str, width: usize) -> Result<Vec<f64>> {
        let (n, parts) = self.keyed(key)?;
        if parts.len() != width {
            return Err(Error::parse(
                n,
                format!("`{key}`: expected {width} values, got {}", parts.len()),
            ));
        }
        parts.iter().map(|t| parse_num(t, n)).collect()
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(t: &str, line: usize) -> Result<T> {
    t.parse()
        .map_err(|_| Error::parse(line, format!("bad number `{t}`")))
}

/// Space-separated values in shortest round-trip form.
pub(crate) fn join_values(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v}").expect("writing to a String");
    }
    s
}
