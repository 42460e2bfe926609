//! Line-oriented instance file format.
//!
//! ```text
//! # comment
//! qubo <N> <nnz> <boundary> <offset>
//! c <i> <value>          one line per nonzero bias
//! w <i> <j> <value>      one line per unordered pair, 0-based
//! ```
//!
//! Writers emit `i < j` and 17 significant digits. Readers accept either
//! orientation; a pair listed twice must carry the same value. `nnz` counts
//! distinct pairs. Text after `#` is ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{Boundary, QuboInstance};
use crate::error::{Error, Result};

/// Largest spin count accepted from a file header.
pub const MAX_FILE_SPINS: usize = 1 << 24;

pub fn render_instance(inst: &QuboInstance, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(
        out,
        "qubo {} {} {} {:.16e}",
        inst.n(),
        inst.bonds().len(),
        inst.boundary(),
        inst.offset()
    );
    for (i, &v) in inst.bias().iter().enumerate() {
        if v != 0.0 {
            let _ = writeln!(out, "c {i} {v:.16e}");
        }
    }
    for b in inst.bonds() {
        let _ = writeln!(out, "w {} {} {:.16e}", b.i, b.j, b.w);
    }
    out
}

pub fn write_instance(
    inst: &QuboInstance,
    path: impl AsRef<Path>,
    comments: &[String],
) -> Result<()> {
    std::fs::write(path, render_instance(inst, comments))?;
    Ok(())
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<QuboInstance> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text)
}

fn field<'a>(it: &mut impl Iterator<Item = &'a str>, line: usize, what: &str) -> Result<&'a str> {
    it.next()
        .ok_or_else(|| Error::parse(line, format!("missing {what}")))
}

fn parse_index(tok: &str, n: usize, line: usize) -> Result<usize> {
    let i: usize = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("bad index '{tok}'")))?;
    if i >= n {
        return Err(Error::parse(
            line,
            format!("index {i} out of range for {n} spins"),
        ));
    }
    Ok(i)
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("bad value '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value '{tok}'")));
    }
    Ok(v)
}

pub fn parse_instance(text: &str) -> Result<QuboInstance> {
    let mut header: Option<(usize, usize, Boundary, f64)> = None;
    let mut bias: Vec<f64> = Vec::new();
    let mut seen_bias: Vec<bool> = Vec::new();
    let mut couplings = std::collections::BTreeMap::<(usize, usize), f64>::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let tag = toks.next().unwrap_or_default();
        match (tag, header) {
            ("qubo", None) => {
                let n: usize = field(&mut toks, line_no, "spin count")?
                    .parse()
                    .map_err(|_| Error::parse(line_no, "bad spin count"))?;
                if n == 0 || n > MAX_FILE_SPINS {
                    return Err(Error::parse(
                        line_no,
                        format!("spin count {n} out of range"),
                    ));
                }
                let nnz: usize = field(&mut toks, line_no, "nnz")?
                    .parse()
                    .map_err(|_| Error::parse(line_no, "bad nnz"))?;
                let boundary: Boundary = field(&mut toks, line_no, "boundary tag")?
                    .parse()
                    .map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
                let offset = parse_value(field(&mut toks, line_no, "offset")?, line_no)?;
                header = Some((n, nnz, boundary, offset));
                bias = vec![0.0; n];
                seen_bias = vec![false; n];
            }
            ("qubo", Some(_)) => return Err(Error::parse(line_no, "duplicate header")),
            (_, None) => return Err(Error::parse(line_no, "expected 'qubo' header")),
            ("c", Some((n, ..))) => {
                let i = parse_index(field(&mut toks, line_no, "index")?, n, line_no)?;
                let v = parse_value(field(&mut toks, line_no, "value")?, line_no)?;
                if seen_bias[i] {
                    return Err(Error::parse(
                        line_no,
                        format!("duplicate bias for spin {i}"),
                    ));
                }
                seen_bias[i] = true;
                bias[i] = v;
            }
            ("w", Some((n, ..))) => {
                let i = parse_index(field(&mut toks, line_no, "index")?, n, line_no)?;
                let j = parse_index(field(&mut toks, line_no, "index")?, n, line_no)?;
                let v = parse_value(field(&mut toks, line_no, "value")?, line_no)?;
                if i == j {
                    return Err(Error::parse(
                        line_no,
                        "diagonal coupling (fold it into the offset)",
                    ));
                }
                let key = (i.min(j), i.max(j));
                if let Some(prev) = couplings.insert(key, v) {
                    if prev != v {
                        return Err(Error::parse(
                            line_no,
                            format!("asymmetric duplicate entry for ({}, {})", key.0, key.1),
                        ));
                    }
                }
            }
            (other, Some(_)) => {
                return Err(Error::parse(line_no, format!("unknown record '{other}'")));
            }
        }
        if toks.next().is_some() {
            return Err(Error::parse(line_no, "trailing fields"));
        }
    }

    let (n, nnz, boundary, offset) = header.ok_or_else(|| Error::parse(0, "missing header"))?;
    if couplings.len() != nnz {
        return Err(Error::parse(
            0,
            format!("header declares {nnz} couplings, found {}", couplings.len()),
        ));
    }
    QuboInstance::new(
        n,
        couplings.into_iter().map(|((i, j), w)| (i, j, w)),
        bias,
        offset,
        boundary,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::gen_ea3d;

    #[test]
    fn round_trip_is_exact() {
        let inst = gen_ea3d(3, 11, Boundary::Periodic).unwrap();
        let biased = QuboInstance::new(
            inst.n(),
            inst.bonds().iter().map(|b| (b.i, b.j, b.w)),
            (0..inst.n()).map(|i| (i as f64).sin() / 3.0).collect(),
            -0.1,
            Boundary::Periodic,
        )
        .unwrap();
        let text = render_instance(&biased, &["generated for a test".into()]);
        assert_eq!(parse_instance(&text).unwrap(), biased);
    }

    #[test]
    fn single_entry_is_stored_symmetrically() {
        let inst = parse_instance("qubo 3 1 none 0\nw 2 0 1.5\n").unwrap();
        assert_eq!(inst.neighbors(0), &[(2, 1.5)]);
        assert_eq!(inst.neighbors(2), &[(0, 1.5)]);
        assert_eq!(inst.bonds()[0].i, 0);
    }

    #[test]
    fn symmetric_duplicate_is_accepted() {
        let inst = parse_instance("qubo 2 1 none 0\nw 0 1 2\nw 1 0 2\n").unwrap();
        assert_eq!(inst.bonds().len(), 1);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# hello\n\nqubo 2 1 open 0.5 # trailing\n# mid\nc 1 -1\nw 0 1 2\n";
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.bias(), &[0.0, -1.0]);
        assert_eq!(inst.offset(), 0.5);
        assert_eq!(inst.boundary(), Boundary::Open);
    }

    #[test]
    fn rejects_malformed_input() {
        let cases = [
            "",
            "w 0 1 1\n",
            "qubo 2 1 none\n",
            "qubo 0 0 none 0\n",
            "qubo 2 0 sideways 0\n",
            "qubo 2 1 none 0\nw 0 2 1\n",
            "qubo 2 1 none 0\nw 0 1 1\nw 1 0 2\n",
            "qubo 2 1 none 0\nw 1 1 1\n",
            "qubo 2 2 none 0\nw 0 1 1\n",
            "qubo 2 0 none 0\nc 0 1\nc 0 2\n",
            "qubo 2 0 none 0\nc 0 nan\n",
            "qubo 2 0 none 0\nx 0 1\n",
            "qubo 2 0 none 0\nqubo 2 0 none 0\n",
            "qubo 2 0 none 0 extra\n",
            "qubo 99999999999 0 none 0\n",
        ];
        for case in cases {
            assert!(parse_instance(case).is_err(), "accepted: {case:?}");
        }
    }

    #[test]
    fn out_of_range_index_reports_line() {
        match parse_instance("qubo 2 1 none 0\n\nw 0 5 1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.qubo");
        let inst = gen_ea3d(2, 3, Boundary::Open).unwrap();
        write_instance(&inst, &path, &[]).unwrap();
        assert_eq!(read_instance(&path).unwrap(), inst);
    }

    proptest::proptest! {
        #[test]
        fn parser_never_panics(text in "(qubo|w|c|#| |[0-9]|\\.|-|e|\n){0,80}") {
            let _ = parse_instance(&text);
        }

        #[test]
        fn writer_output_always_parses(seed in 0u64..500, l in 2usize..4) {
            let inst = gen_ea3d(l, seed, Boundary::Periodic).unwrap();
            proptest::prop_assert_eq!(parse_instance(&render_instance(&inst, &[])).unwrap(), inst);
        }
    }
}
