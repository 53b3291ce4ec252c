//! Tokenizer for the protocol document format.

use super::ProtocolError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    /// Identifiers may contain interior hyphens (`accept-proposal`), but a
    /// hyphen that starts `->` always ends the identifier.
    Ident(String),
    Int(i64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Comma,
    Arrow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, ProtocolError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let err = |line, column, message: String| ProtocolError::Syntax {
        line,
        column,
        message,
    };

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let bump = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                bump(1, &mut i, &mut col);
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            _ => {}
        }

        let tok = match c {
            '{' => {
                bump(1, &mut i, &mut col);
                Tok::LBrace
            }
            '}' => {
                bump(1, &mut i, &mut col);
                Tok::RBrace
            }
            '(' => {
                bump(1, &mut i, &mut col);
                Tok::LParen
            }
            ')' => {
                bump(1, &mut i, &mut col);
                Tok::RParen
            }
            ':' => {
                bump(1, &mut i, &mut col);
                Tok::Colon
            }
            ',' => {
                bump(1, &mut i, &mut col);
                Tok::Comma
            }
            '=' => {
                // accept `==` as a spelling of `=`
                let n = if chars.get(i + 1) == Some(&'=') { 2 } else { 1 };
                bump(n, &mut i, &mut col);
                Tok::Eq
            }
            '≠' => {
                bump(1, &mut i, &mut col);
                Tok::Ne
            }
            '≤' => {
                bump(1, &mut i, &mut col);
                Tok::Le
            }
            '≥' => {
                bump(1, &mut i, &mut col);
                Tok::Ge
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                bump(2, &mut i, &mut col);
                Tok::Ne
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    bump(2, &mut i, &mut col);
                    Tok::Le
                } else {
                    bump(1, &mut i, &mut col);
                    Tok::Lt
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    bump(2, &mut i, &mut col);
                    Tok::Ge
                } else {
                    bump(1, &mut i, &mut col);
                    Tok::Gt
                }
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                bump(2, &mut i, &mut col);
                Tok::Arrow
            }
            '→' => {
                bump(1, &mut i, &mut col);
                Tok::Arrow
            }
            '-' | '0'..='9' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let text: String = chars[i..j].iter().collect();
                if text == "-" {
                    return Err(err(start_line, start_col, "unexpected `-`".into()));
                }
                let value = text.parse::<i64>().map_err(|_| {
                    err(
                        start_line,
                        start_col,
                        format!("integer `{text}` out of range"),
                    )
                })?;
                bump(j - i, &mut i, &mut col);
                Tok::Int(value)
            }
            '"' => {
                let mut j = i + 1;
                let mut s = String::new();
                loop {
                    match chars.get(j) {
                        None | Some('\n') => {
                            return Err(err(
                                start_line,
                                start_col,
                                "unterminated string literal".into(),
                            ))
                        }
                        Some('"') => break,
                        Some('\\') => {
                            let esc = match chars.get(j + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                other => {
                                    return Err(err(
                                        line,
                                        col + (j - i),
                                        format!(
                                            "unknown escape `\\{}`",
                                            other.copied().unwrap_or(' ')
                                        ),
                                    ))
                                }
                            };
                            s.push(esc);
                            j += 2;
                        }
                        Some(&c) => {
                            s.push(c);
                            j += 1;
                        }
                    }
                }
                bump(j + 1 - i, &mut i, &mut col);
                Tok::Str(s)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < chars.len() {
                    let d = chars[j];
                    if d.is_ascii_alphanumeric() || d == '_' {
                        j += 1;
                    } else if d == '-'
                        && chars
                            .get(j + 1)
                            .is_some_and(|n| n.is_ascii_alphanumeric() || *n == '_')
                    {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                bump(j - i, &mut i, &mut col);
                Tok::Ident(text)
            }
            other => {
                return Err(err(
                    start_line,
                    start_col,
                    format!("unexpected character `{other}`"),
                ))
            }
        };
        out.push(Spanned {
            tok,
            line: start_line,
            column: start_col,
        });
    }
    Ok(out)
}
