//! Text stream files.
//!
//! Coordinates are 1-based on disk and 0-based in memory. Blank lines and
//! lines starting with `#` are skipped.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::tensor::StreamUpdate;

fn parse_index(tok: &str, line: usize, dim: Option<usize>) -> Result<usize> {
    let i: usize = tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a positive index, got `{tok}`"),
    })?;
    if i == 0 || dim.is_some_and(|d| i > d) {
        let range = dim.map_or("1..".to_string(), |d| format!("1..={d}"));
        return Err(Error::Parse {
            line,
            msg: format!("index {i} outside {range}"),
        });
    }
    Ok(i - 1)
}

fn parse_delta(tok: &str, line: usize) -> Result<i64> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a signed integer delta, got `{tok}`"),
    })
}

fn content_lines<R: BufRead>(r: R) -> impl Iterator<Item = Result<(usize, String)>> {
    r.lines().enumerate().filter_map(|(k, l)| match l {
        Err(e) => Some(Err(e.into())),
        Ok(l) => {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#')).then(|| Ok((k + 1, t.to_string())))
        }
    })
}

/// Reads `i delta` lines into 0-based `(index, delta)` pairs.
pub fn read_vector_stream<R: BufRead>(r: R, n: Option<usize>) -> Result<Vec<(usize, i64)>> {
    let mut out = Vec::new();
    for item in content_lines(r) {
        let (line, text) = item?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected `index delta`, got {} fields", toks.len()),
            });
        }
        out.push((parse_index(toks[0], line, n)?, parse_delta(toks[1], line)?));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Reads `i1 .. iq` (delta 1) or `i1 .. iq delta` lines.
pub fn read_tuple_stream<R: BufRead>(r: R, q: usize, d: usize) -> Result<Vec<StreamUpdate>> {
    let mut out = Vec::new();
    for item in content_lines(r) {
        let (line, text) = item?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        let delta = match toks.len() {
            k if k == q => 1,
            k if k == q + 1 => parse_delta(toks[q], line)?,
            k => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {q} indices and an optional delta, got {k} fields"),
                })
            }
        };
        let indices = toks[..q].iter().map(|t| parse_index(t, line, Some(d))).collect::<Result<Vec<_>>>()?;
        out.push(StreamUpdate::new(indices, delta));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_lines() {
        let s = read_vector_stream("# header\n3 -2\n\n1 5\n".as_bytes(), Some(3)).unwrap();
        assert_eq!(s, vec![(2, -2), (0, 5)]);
    }

    #[test]
    fn tuple_lines_both_forms() {
        let s = read_tuple_stream("1 1\n2 2 -3\n".as_bytes(), 2, 2).unwrap();
        assert_eq!(s[0].indices, vec![0, 0]);
        assert_eq!(s[0].delta, 1);
        assert_eq!(s[1].indices, vec![1, 1]);
        assert_eq!(s[1].delta, -3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match read_tuple_stream("1 1\n\n1 x\n".as_bytes(), 2, 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match read_tuple_stream("1 3\n".as_bytes(), 2, 2) {
            Err(Error::Parse { line: 1, msg }) => assert!(msg.contains("outside")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_vector_stream("0 1\n".as_bytes(), None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_vector_stream("1 2 3\n".as_bytes(), None), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(read_vector_stream("# only\n\n".as_bytes(), None), Err(Error::EmptyInput)));
        assert!(matches!(read_tuple_stream("".as_bytes(), 2, 2), Err(Error::EmptyInput)));
    }
}
