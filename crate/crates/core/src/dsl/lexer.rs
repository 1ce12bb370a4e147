use crate::model::Span;

use super::Diagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Digits with an optional fractional part, kept verbatim.
    Number(String),
    Punct(char),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const PUNCT: &str = "{}();:,.=@*+-/?";

pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            // A dot is part of the number only when a digit follows, so `go 3.tick` still lexes.
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let text: String = chars[start..j].iter().collect();
                return Err(Diagnostic::error(
                    "E103",
                    span,
                    format!("malformed number literal `{text}`"),
                ));
            }
            out.push(Token {
                tok: Tok::Number(chars[start..i].iter().collect()),
                span,
            });
        } else if PUNCT.contains(c) {
            i += 1;
            out.push(Token {
                tok: Tok::Punct(c),
                span,
            });
        } else {
            return Err(Diagnostic::error(
                "E102",
                span,
                format!("unexpected character `{c}`"),
            ));
        }
        col += (i - start) as u32;
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_prefix_dots() {
        assert_eq!(
            toks("go 3.tick"),
            vec![
                Tok::Ident("go".into()),
                Tok::Number("3".into()),
                Tok::Punct('.'),
                Tok::Ident("tick".into()),
                Tok::Eof
            ]
        );
        assert_eq!(toks("0.25")[0], Tok::Number("0.25".into()));
    }

    #[test]
    fn comments_and_positions() {
        let ts = lex("# header\n  tick").unwrap();
        assert_eq!(ts[0].span.line, 2);
        assert_eq!(ts[0].span.col, 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(lex("1e3").unwrap_err().code, "E103");
        assert_eq!(lex("tick $").unwrap_err().code, "E102");
    }
}
