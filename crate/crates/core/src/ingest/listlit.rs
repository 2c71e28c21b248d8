//! Tokenizer for bracketed, quoted list literals such as
//! `['tomato', "cook's choice", 'salt, to taste']`.

use std::iter::Peekable;
use std::str::Chars;

fn skip_ws(chars: &mut Peekable<Chars<'_>>) {
    while chars.peek().is_some_and(|c| c.is_whitespace()) {
        chars.next();
    }
}

fn hex_escape(chars: &mut Peekable<Chars<'_>>, digits: usize) -> Result<char, String> {
    let mut code = 0u32;
    for _ in 0..digits {
        let d = chars
            .next()
            .and_then(|c| c.to_digit(16))
            .ok_or_else(|| format!("bad \\x/\\u escape (expected {digits} hex digits)"))?;
        code = code * 16 + d;
    }
    char::from_u32(code).ok_or_else(|| format!("escape U+{code:X} is not a character"))
}

fn quoted(chars: &mut Peekable<Chars<'_>>, quote: char) -> Result<String, String> {
    let mut out = String::new();
    loop {
        match chars.next() {
            None => return Err("unterminated string".into()),
            Some(c) if c == quote => return Ok(out),
            Some('\\') => match chars.next() {
                None => return Err("dangling backslash".into()),
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some(c @ ('\\' | '\'' | '"')) => out.push(c),
                Some('x') => out.push(hex_escape(chars, 2)?),
                Some('u') => out.push(hex_escape(chars, 4)?),
                Some('U') => out.push(hex_escape(chars, 8)?),
                // unknown escapes are kept verbatim
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
            },
            Some(c) => out.push(c),
        }
    }
}

/// Parses a list literal of quoted strings. Commas inside quotes are data.
pub fn parse_list_literal(text: &str) -> Result<Vec<String>, String> {
    let mut chars = text.chars().peekable();
    skip_ws(&mut chars);
    if chars.next() != Some('[') {
        return Err("expected `[`".into());
    }
    let mut items = Vec::new();
    loop {
        skip_ws(&mut chars);
        match chars.next() {
            Some(']') => break,
            Some(q @ ('\'' | '"')) => {
                items.push(quoted(&mut chars, q)?);
                skip_ws(&mut chars);
                match chars.next() {
                    Some(',') => continue,
                    Some(']') => break,
                    Some(c) => return Err(format!("unexpected `{c}` after list element")),
                    None => return Err("unterminated list".into()),
                }
            }
            Some(c) => return Err(format!("unexpected `{c}` in list")),
            None => return Err("unterminated list".into()),
        }
    }
    skip_ws(&mut chars);
    match chars.next() {
        None => Ok(items),
        Some(c) => Err(format!("trailing `{c}` after list")),
    }
}
