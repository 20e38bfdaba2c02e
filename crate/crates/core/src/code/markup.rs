//! A small HTML tokenizer, strict enough to reject broken markup and
//! lenient enough for what models usually emit.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Doctype { offset: usize },
    StartTag { name: String, attrs: Vec<Attribute>, self_closing: bool, offset: usize },
    EndTag { name: String, offset: usize },
    Text { text: String, offset: usize },
    Comment { offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    /// Entity-decoded value; `None` for bare attributes.
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkupError {
    pub message: String,
    pub offset: usize,
}

impl fmt::Display for MarkupError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

pub const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr",
];

/// Elements whose content runs verbatim to the matching end tag.
const RAW_TEXT_ELEMENTS: &[&str] = &["script", "style", "textarea", "title"];

pub fn is_void(name: &str) -> bool {
    VOID_ELEMENTS.contains(&name)
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, MarkupError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut text_start = 0;

    let flush = |tokens: &mut Vec<Token>, from: usize, to: usize| {
        if to > from {
            tokens.push(Token::Text { text: src[from..to].to_string(), offset: from });
        }
    };

    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let rest = &src[i..];
        if let Some(body) = rest.strip_prefix("<!--") {
            flush(&mut tokens, text_start, i);
            let end = body.find("-->").ok_or_else(|| err("unterminated comment", i))?;
            tokens.push(Token::Comment { offset: i });
            i += 4 + end + 3;
            text_start = i;
        } else if rest.len() >= 9 && rest[..9].eq_ignore_ascii_case("<!doctype") {
            flush(&mut tokens, text_start, i);
            let end = rest.find('>').ok_or_else(|| err("unterminated doctype", i))?;
            tokens.push(Token::Doctype { offset: i });
            i += end + 1;
            text_start = i;
        } else if rest.starts_with("<!") || rest.starts_with("<?") {
            flush(&mut tokens, text_start, i);
            let end = rest.find('>').ok_or_else(|| err("unterminated markup declaration", i))?;
            tokens.push(Token::Comment { offset: i });
            i += end + 1;
            text_start = i;
        } else if rest.starts_with("</") && bytes.get(i + 2).is_some_and(u8::is_ascii_alphabetic) {
            flush(&mut tokens, text_start, i);
            let (name, after) = read_name(src, i + 2);
            let close = src[after..].find('>').ok_or_else(|| err("unterminated end tag", i))?;
            if !src[after..after + close].trim().is_empty() {
                return Err(err(&format!("unexpected content in </{name}>"), i));
            }
            tokens.push(Token::EndTag { name, offset: i });
            i = after + close + 1;
            text_start = i;
        } else if bytes.get(i + 1).is_some_and(u8::is_ascii_alphabetic) {
            flush(&mut tokens, text_start, i);
            let (name, attrs, self_closing, end) = read_start_tag(src, i)?;
            let raw = RAW_TEXT_ELEMENTS.contains(&name.as_str()) && !self_closing;
            tokens.push(Token::StartTag { name: name.clone(), attrs, self_closing, offset: i });
            i = end;
            text_start = i;
            if raw {
                let close = find_ci(&src[i..], &format!("</{name}"))
                    .ok_or_else(|| err(&format!("unterminated <{name}> element"), i))?;
                flush(&mut tokens, i, i + close);
                i += close;
                text_start = i;
            }
        } else {
            // A lone '<' is text.
            i += 1;
        }
    }
    flush(&mut tokens, text_start, bytes.len());
    Ok(tokens)
}

fn err(message: &str, offset: usize) -> MarkupError {
    MarkupError { message: message.to_string(), offset }
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    (0..h.len().saturating_sub(n.len() - 1)).find(|&k| h[k..k + n.len()].eq_ignore_ascii_case(n))
}

fn read_name(src: &str, start: usize) -> (String, usize) {
    let bytes = src.as_bytes();
    let mut j = start;
    while j < bytes.len() && !bytes[j].is_ascii_whitespace() && bytes[j] != b'>' && bytes[j] != b'/' {
        j += 1;
    }
    (src[start..j].to_ascii_lowercase(), j)
}

type StartTag = (String, Vec<Attribute>, bool, usize);

fn read_start_tag(src: &str, start: usize) -> Result<StartTag, MarkupError> {
    let bytes = src.as_bytes();
    let (name, mut j) = read_name(src, start + 1);
    let mut attrs = Vec::new();
    loop {
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        match bytes.get(j) {
            None => return Err(err(&format!("unterminated <{name}> tag"), start)),
            Some(b'>') => return Ok((name, attrs, false, j + 1)),
            Some(b'/') if bytes.get(j + 1) == Some(&b'>') => return Ok((name, attrs, true, j + 2)),
            Some(b'/') => {
                j += 1;
                continue;
            }
            Some(b'<') => return Err(err(&format!("'<' inside <{name}> tag"), j)),
            _ => {}
        }
        let name_start = j;
        while j < bytes.len() && !bytes[j].is_ascii_whitespace() && !matches!(bytes[j], b'=' | b'>' | b'/' | b'<') {
            j += 1;
        }
        let attr_name = src[name_start..j].to_ascii_lowercase();
        if attr_name.is_empty() {
            return Err(err(&format!("malformed attribute in <{name}>"), j));
        }
        let mut k = j;
        while k < bytes.len() && bytes[k].is_ascii_whitespace() {
            k += 1;
        }
        if bytes.get(k) != Some(&b'=') {
            attrs.push(Attribute { name: attr_name, value: None });
            continue;
        }
        k += 1;
        while k < bytes.len() && bytes[k].is_ascii_whitespace() {
            k += 1;
        }
        let value = match bytes.get(k) {
            Some(&q @ (b'"' | b'\'')) => {
                let close = src[k + 1..]
                    .find(q as char)
                    .ok_or_else(|| err(&format!("unterminated attribute value in <{name}>"), k))?;
                let v = &src[k + 1..k + 1 + close];
                j = k + 1 + close + 1;
                v
            }
            Some(_) => {
                let vs = k;
                while k < bytes.len() && !bytes[k].is_ascii_whitespace() && bytes[k] != b'>' {
                    k += 1;
                }
                j = k;
                &src[vs..k]
            }
            None => return Err(err(&format!("unterminated <{name}> tag"), start)),
        };
        attrs.push(Attribute { name: attr_name, value: Some(decode_entities(value)) });
    }
}

/// Decode the character references that matter for URL comparison.
pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest.find(';').filter(|&semi| semi <= 10).and_then(|semi| {
            let entity = &rest[1..semi];
            let ch = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                _ => entity
                    .strip_prefix("#x")
                    .or_else(|| entity.strip_prefix("#X"))
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .or_else(|| entity.strip_prefix('#').and_then(|d| d.parse().ok()))
                    .and_then(char::from_u32),
            }?;
            Some((ch, semi + 1))
        });
        match decoded {
            Some((ch, len)) => {
                out.push(ch);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// 1-based line and column (in chars) of a byte offset.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}
