//! File formats: PGM (P2/P5, 8- and 16-bit), a lossless text float grid,
//! and a text dictionary format.
//!
//! Float grid:
//! ```text
//! rows cols
//! v00 v01 ...
//! v10 v11 ...
//! ```
//! Dictionary: header `d n`, then `d` lines of `n` values (row-major) at 17
//! significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::Dictionary;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads either a PGM (by magic number) or a float grid.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(&bytes, path)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| parse_err(path, 1, "not a PGM and not UTF-8 text"))?;
        decode_float_grid(&text, path)
    }
}

/// Writes a PGM when the extension is `.pgm`, a float grid otherwise.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm {
        encode_pgm(img)?
    } else {
        encode_float_grid(img).into_bytes()
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Tokenizer over a netpbm header that skips `#` comments and tracks lines.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            None
        } else {
            std::str::from_utf8(&self.bytes[start..self.pos]).ok()
        }
    }

    fn number(&mut self, path: &Path, what: &str) -> Result<u32> {
        let line = self.line;
        let tok = self
            .token()
            .ok_or_else(|| parse_err(path, line, format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| parse_err(path, self.line, format!("bad {what} {tok:?}")))
    }
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut cur = HeaderCursor {
        bytes,
        pos: 0,
        line: 1,
    };
    let magic = cur.token().unwrap_or_default();
    let binary = match magic {
        "P2" => false,
        "P5" => true,
        other => return Err(parse_err(path, 1, format!("unsupported magic {other:?}"))),
    };
    let cols = cur.number(path, "width")? as usize;
    let rows = cur.number(path, "height")? as usize;
    let maxval = cur.number(path, "maxval")?;
    if rows == 0 || cols == 0 {
        return Err(parse_err(path, cur.line, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(path, cur.line, format!("maxval {maxval} out of range")));
    }
    let n = rows * cols;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = cur.pos + 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let raster = bytes
            .get(start..start + need)
            .ok_or_else(|| parse_err(path, cur.line, format!("raster truncated, need {need} bytes")))?;
        if wide {
            data.extend(
                raster
                    .chunks_exact(2)
                    .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]]))),
            );
        } else {
            data.extend(raster.iter().map(|&b| f64::from(b)));
        }
    } else {
        for _ in 0..n {
            let v = cur.number(path, "pixel")?;
            if v > maxval {
                return Err(parse_err(path, cur.line, format!("pixel {v} exceeds maxval {maxval}")));
            }
            data.push(f64::from(v));
        }
    }
    Image::from_vec(rows, cols, data)
}

/// Binary PGM; 8-bit when every rounded value fits, 16-bit otherwise.
pub fn encode_pgm(img: &Image) -> Result<Vec<u8>> {
    let vals: Vec<u32> = img.pixels().iter().map(|v| v.round() as u32).collect();
    let max = vals.iter().copied().max().unwrap_or(0);
    if max > 65535 {
        return Err(Error::arg(format!(
            "pixel value {max} does not fit in a 16-bit PGM"
        )));
    }
    let maxval = if max <= 255 { 255 } else { 65535 };
    let mut out = format!("P5\n{} {}\n{}\n", img.cols(), img.rows(), maxval).into_bytes();
    if maxval == 255 {
        out.extend(vals.iter().map(|&v| v as u8));
    } else {
        for v in vals {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    }
    Ok(out)
}

/// Plain-text PGM (P2).
pub fn encode_pgm_ascii(img: &Image) -> Result<String> {
    let vals: Vec<u32> = img.pixels().iter().map(|v| v.round() as u32).collect();
    let max = vals.iter().copied().max().unwrap_or(0);
    if max > 65535 {
        return Err(Error::arg(format!("pixel value {max} does not fit in a PGM")));
    }
    let maxval = if max <= 255 { 255 } else { 65535 };
    let mut out = format!("P2\n{} {}\n{}\n", img.cols(), img.rows(), maxval);
    for row in vals.chunks(img.cols()) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn encode_float_grid(img: &Image) -> String {
    let mut out = format!("{} {}\n", img.rows(), img.cols());
    for row in img.pixels().rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            // Display for f64 prints the shortest representation that round-trips.
            write!(out, "{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn decode_float_grid(text: &str, path: &Path) -> Result<Image> {
    let (rows, cols, vals) = decode_table(text, path, "rows", "cols")?;
    Image::from_vec(rows, cols, vals)
        .map_err(|e| parse_err(path, 1, e.to_string()))
}

fn decode_table(
    text: &str,
    path: &Path,
    first: &str,
    second: &str,
) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(path, hline + 1, format!("expected `{first} {second}` header")));
    }
    let parse_dim = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(path, hline + 1, format!("bad {what} {s:?}")))
    };
    let rows = parse_dim(dims[0], first)?;
    let cols = parse_dim(dims[1], second)?;
    let mut vals = Vec::with_capacity(rows * cols);
    let mut last_line = hline + 1;
    for (ln, line) in lines {
        last_line = ln + 1;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad number {tok:?}")))?;
            vals.push(v);
        }
    }
    if vals.len() != rows * cols {
        return Err(parse_err(
            path,
            last_line,
            format!("expected {} values, found {}", rows * cols, vals.len()),
        ));
    }
    Ok((rows, cols, vals))
}

pub fn encode_dictionary(dict: &Dictionary) -> String {
    let atoms = dict.atoms();
    let (d, n) = atoms.dim();
    let mut out = format!("{d} {n}\n");
    for row in atoms.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn decode_dictionary(text: &str, path: &Path) -> Result<Dictionary> {
    let (d, n, vals) = decode_table(text, path, "d", "n")?;
    let rows = Array2::from_shape_vec((d, n), vals).map_err(|e| parse_err(path, 1, e.to_string()))?;
    let mut atoms = Array2::zeros((d, n).f());
    atoms.assign(&rows);
    Dictionary::new(atoms).map_err(|e| parse_err(path, 1, e.to_string()))
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_dictionary(&text, path)
}

pub fn write_dictionary(path: impl AsRef<Path>, dict: &Dictionary) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dictionary(dict)).map_err(|e| Error::io(path, e))
}
