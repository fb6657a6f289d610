//! Line-oriented `key value...` parsing shared by the checkpoint and wire
//! formats. Callers wrap [`ParseFailure`] in their own error types so
//! diagnostics keep their file or message context.

use crate::determinism::hexfloat_decode;
use std::iter::Peekable;

/// A parse error before it is attributed to a format: the 1-based line
/// number (0 when no line applies) and what went wrong there.
#[derive(Debug, Clone)]
pub(crate) struct ParseFailure {
    pub line: usize,
    pub message: String,
}

pub(crate) fn failure(line: usize, message: impl Into<String>) -> ParseFailure {
    ParseFailure {
        line,
        message: message.into(),
    }
}

pub(crate) fn take_line<'a, I>(lines: &mut Peekable<I>) -> Result<(usize, &'a str), ParseFailure>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    lines
        .next()
        .ok_or_else(|| failure(0, "unexpected end of input"))
}

/// Reads `key v1 v2 ...` accepting any number of values. Returns the
/// 1-based line number with the values.
pub(crate) fn field_values_variable<'a, I>(
    lines: &mut Peekable<I>,
    key: &str,
) -> Result<(usize, Vec<String>), ParseFailure>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (idx, line) = take_line(lines)?;
    let line_no = idx + 1;
    let mut fields = line.split(' ');
    if fields.next() != Some(key) {
        return Err(failure(line_no, format!("expected `{key}`")));
    }
    Ok((line_no, fields.map(str::to_string).collect()))
}

/// Reads `key v1 v2 ...` with an exact value count.
pub(crate) fn field_values<'a, I>(
    lines: &mut Peekable<I>,
    key: &str,
    count: usize,
) -> Result<(usize, Vec<String>), ParseFailure>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (line_no, values) = field_values_variable(lines, key)?;
    if values.len() != count {
        return Err(failure(
            line_no,
            format!("`{key}` takes {count} values, found {}", values.len()),
        ));
    }
    Ok((line_no, values))
}

pub(crate) fn field_u64<'a, I>(lines: &mut Peekable<I>, key: &str) -> Result<u64, ParseFailure>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (line, values) = field_values(lines, key, 1)?;
    parse_u64(&values[0], line)
}

pub(crate) fn parse_u64(token: &str, line: usize) -> Result<u64, ParseFailure> {
    token
        .parse()
        .map_err(|_| failure(line, format!("`{token}` is not an unsigned integer")))
}

pub(crate) fn parse_hex(token: &str, line: usize) -> Result<f64, ParseFailure> {
    hexfloat_decode(token).map_err(|e| failure(line, e.to_string()))
}
