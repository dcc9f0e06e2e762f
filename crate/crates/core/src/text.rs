//! Shared tokenizer for the expression, action and formula mini-languages.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Ident(String),
    Int(i64),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Assign,  // <-
    Implies, // ->
    Eq,      // =
    Lt,
    Le,
    Gt,
    Ge,
    And, // &
    Or,  // |
    Not, // !
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "{s}"),
            Token::Int(v) => write!(f, "{v}"),
            Token::Plus => write!(f, "+"),
            Token::Minus => write!(f, "-"),
            Token::Star => write!(f, "*"),
            Token::Slash => write!(f, "/"),
            Token::LParen => write!(f, "("),
            Token::RParen => write!(f, ")"),
            Token::LBracket => write!(f, "["),
            Token::RBracket => write!(f, "]"),
            Token::Comma => write!(f, ","),
            Token::Dot => write!(f, "."),
            Token::Assign => write!(f, "<-"),
            Token::Implies => write!(f, "->"),
            Token::Eq => write!(f, "="),
            Token::Lt => write!(f, "<"),
            Token::Le => write!(f, "<="),
            Token::Gt => write!(f, ">"),
            Token::Ge => write!(f, ">="),
            Token::And => write!(f, "&"),
            Token::Or => write!(f, "|"),
            Token::Not => write!(f, "!"),
        }
    }
}

/// A token plus its byte offset in the source, for error positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub token: Token,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at byte {pos}: {msg}")]
pub struct LexError {
    pub pos: usize,
    pub msg: String,
}

pub fn lex(input: &str) -> Result<Vec<Spanned>, LexError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        let token = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => {
                i += 1;
                Token::Plus
            }
            '*' => {
                i += 1;
                Token::Star
            }
            '/' => {
                i += 1;
                Token::Slash
            }
            '(' => {
                i += 1;
                Token::LParen
            }
            ')' => {
                i += 1;
                Token::RParen
            }
            '[' => {
                i += 1;
                Token::LBracket
            }
            ']' => {
                i += 1;
                Token::RBracket
            }
            ',' => {
                i += 1;
                Token::Comma
            }
            '.' => {
                i += 1;
                Token::Dot
            }
            '&' => {
                i += 1;
                Token::And
            }
            '|' => {
                i += 1;
                Token::Or
            }
            '!' => {
                i += 1;
                Token::Not
            }
            '=' => {
                i += 1;
                Token::Eq
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'-') {
                    i += 2;
                    Token::Assign
                } else if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Token::Le
                } else {
                    i += 1;
                    Token::Lt
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Token::Ge
                } else {
                    i += 1;
                    Token::Gt
                }
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    i += 2;
                    Token::Implies
                } else {
                    i += 1;
                    Token::Minus
                }
            }
            '0'..='9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let value: i64 = input[i..j].parse().map_err(|_| LexError {
                    pos: i,
                    msg: format!("integer literal `{}` out of range", &input[i..j]),
                })?;
                i = j;
                Token::Int(value)
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let ident = input[i..j].to_string();
                i = j;
                Token::Ident(ident)
            }
            other => {
                return Err(LexError {
                    pos: i,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push(Spanned { token, pos: start });
    }
    Ok(out)
}

/// Cursor over a token stream used by the recursive-descent parsers.
pub struct Cursor<'a> {
    tokens: &'a [Spanned],
    pub index: usize,
    input_len: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(tokens: &'a [Spanned], input_len: usize) -> Self {
        Cursor {
            tokens,
            index: 0,
            input_len,
        }
    }

    pub fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.index).map(|s| &s.token)
    }

    pub fn pos(&self) -> usize {
        self.tokens
            .get(self.index)
            .map(|s| s.pos)
            .unwrap_or(self.input_len)
    }

    pub fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.index).map(|s| s.token.clone());
        if t.is_some() {
            self.index += 1;
        }
        t
    }

    pub fn eat(&mut self, expected: &Token) -> bool {
        if self.peek() == Some(expected) {
            self.index += 1;
            true
        } else {
            false
        }
    }

    pub fn at_end(&self) -> bool {
        self.index == self.tokens.len()
    }
}
