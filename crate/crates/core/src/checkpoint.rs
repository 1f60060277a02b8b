//! Plain-text checkpoint blocks.
//!
//! A checkpoint is a header line followed by named blocks:
//!
//! ```text
//! pelv1 d=64 h=32 tau=0.25
//! W_s 32 64
//! 0.0123 -0.5 ...
//! ...
//! ```
//!
//! Each matrix block is `<name> <rows> <cols>` then one line per row of decimal floats.
//! A `vocab <n>` block holds `n` lines of tokens.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    out.push_str(&format!("{name} {} {}\n", m.nrows(), m.ncols()));
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn write_vocab(out: &mut String, words: &[String]) {
    out.push_str(&format!("vocab {}\n", words.len()));
    for w in words {
        out.push_str(w);
        out.push('\n');
    }
}

/// Parsed `key=value` header fields plus all blocks.
#[derive(Debug, Default)]
pub struct Checkpoint {
    pub magic: String,
    pub fields: BTreeMap<String, String>,
    pub matrices: BTreeMap<String, Matrix>,
    pub vocab: Option<Vec<String>>,
    /// Lines following an `end` marker, for nested sections.
    pub rest: Vec<String>,
}

impl Checkpoint {
    pub fn field<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .fields
            .get(key)
            .ok_or_else(|| Error::parse(format!("{} header", self.magic), format!("missing field {key}")))?;
        raw.parse()
            .map_err(|_| Error::parse(format!("{} header", self.magic), format!("bad value for {key}: {raw:?}")))
    }

    pub fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let m = self
            .matrices
            .get(name)
            .ok_or_else(|| Error::parse(format!("{} checkpoint", self.magic), format!("missing block {name}")))?;
        if m.dim() != (rows, cols) {
            return Err(Error::Dimension(format!(
                "block {name} is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m.clone())
    }
}

pub fn parse(text: &str, origin: &str) -> Result<Checkpoint> {
    let lines: Vec<&str> = text.lines().collect();
    let header = lines.first().ok_or_else(|| Error::parse(format!("{origin} line 1"), "empty checkpoint"))?;
    let mut parts = header.split_whitespace();
    let mut ck = Checkpoint { magic: parts.next().unwrap_or_default().to_string(), ..Default::default() };
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("{origin} line 1"), format!("expected key=value, got {kv:?}")))?;
        ck.fields.insert(k.to_string(), v.to_string());
    }
    let mut i = 1;
    while i < lines.len() {
        let line = lines[i].trim();
        let loc = || format!("{origin} line {}", i + 1);
        if line.is_empty() {
            i += 1;
            continue;
        }
        if line == "end" {
            ck.rest = lines[i + 1..].iter().map(|s| s.to_string()).collect();
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["vocab", n] => {
                let n: usize = n.parse().map_err(|_| Error::parse(loc(), "bad vocab size"))?;
                if i + 1 + n > lines.len() {
                    return Err(Error::parse(loc(), "truncated vocab block"));
                }
                ck.vocab = Some(lines[i + 1..i + 1 + n].iter().map(|s| s.to_string()).collect());
                i += 1 + n;
            }
            [name, rows, cols] => {
                let rows: usize = rows.parse().map_err(|_| Error::parse(loc(), "bad row count"))?;
                let cols: usize = cols.parse().map_err(|_| Error::parse(loc(), "bad column count"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let row_line = lines
                        .get(i + 1 + r)
                        .ok_or_else(|| Error::parse(loc(), format!("block {name} truncated")))?;
                    let before = data.len();
                    for tok in row_line.split_whitespace() {
                        let x: f64 = tok.parse().map_err(|_| {
                            Error::parse(format!("{origin} line {}", i + 2 + r), format!("bad float {tok:?}"))
                        })?;
                        data.push(x);
                    }
                    if data.len() - before != cols {
                        return Err(Error::parse(
                            format!("{origin} line {}", i + 2 + r),
                            format!("block {name}: expected {cols} values"),
                        ));
                    }
                }
                let m = Array2::from_shape_vec((rows, cols), data).expect("shape checked");
                ck.matrices.insert(name.to_string(), m);
                i += 1 + rows;
            }
            _ => return Err(Error::parse(loc(), format!("unexpected line {line:?}"))),
        }
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrices_round_trip_exactly() {
        let m = array![[0.1, -2.5e-7, 3.0], [1.0 / 3.0, f64::MIN_POSITIVE, -0.0]];
        let mut s = String::from("testv1 d=3\n");
        write_matrix(&mut s, "W", &m);
        write_vocab(&mut s, &["<unk>".into(), "cars".into()]);
        let ck = parse(&s, "mem").unwrap();
        assert_eq!(ck.field::<usize>("d").unwrap(), 3);
        let back = ck.matrix("W", 2, 3).unwrap();
        assert!(back.iter().zip(m.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(ck.vocab.unwrap(), vec!["<unk>", "cars"]);
        assert!(matches!(parse(&s, "mem").unwrap().matrix("W", 3, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn bad_float_names_line() {
        let err = parse("x d=1\nW 1 2\n1.0 zz\n", "f.ckpt").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
