//! Error-tolerant Python tokenizer with exact byte spans.
//!
//! The lexer never fails on valid UTF-8 input. Anything it does not recognize
//! becomes a one-character [`TokenKind::Operator`] token, unterminated strings
//! run to the end of their line (or to the end of input for triple-quoted
//! strings), and inconsistent dedents are resolved against the nearest
//! enclosing indentation level.
//!
//! `INDENT` / `DEDENT` markers are synthesized from leading whitespace with a
//! stack, the same way CPython does it. They are zero-width and carry a
//! placeholder text (`<INDENT>` / `<DEDENT>`) so they can be fed to
//! embeddings like any other token.
//!
//! Comments and blank lines are skipped unless [`LexOptions::keep_comments`]
//! is set, in which case comments are emitted as [`TokenKind::Comment`].

use std::fmt;

use serde::{Deserialize, Serialize};

/// Half-open byte range `[start, end)` into a source buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u64; 2]", into = "[u64; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// True if the two ranges share at least one byte, or if `self` is
    /// zero-width and sits inside `other`.
    pub fn intersects(&self, other: &Span) -> bool {
        if self.is_empty() {
            return other.start <= self.start && self.start < other.end;
        }
        self.start < other.end && other.start < self.end
    }
}

impl From<[u64; 2]> for Span {
    fn from(v: [u64; 2]) -> Self {
        Span::new(v[0] as usize, v[1] as usize)
    }
}

impl From<Span> for [u64; 2] {
    fn from(s: Span) -> Self {
        [s.start as u64, s.end as u64]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    NumberLiteral,
    StringLiteral,
    Operator,
    Punctuation,
    Newline,
    Indent,
    Dedent,
    /// Only produced with [`LexOptions::keep_comments`].
    Comment,
}

impl TokenKind {
    /// Synthetic tokens have no source text behind them.
    pub fn is_synthetic(self) -> bool {
        matches!(self, TokenKind::Indent | TokenKind::Dedent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    pub source_len: usize,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spans(&self) -> Vec<Span> {
        self.tokens.iter().map(|t| t.span).collect()
    }

    pub fn texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LexOptions {
    pub keep_comments: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid UTF-8 at byte offset {offset}")]
pub struct EncodingError {
    pub offset: usize,
}

pub const INDENT_TEXT: &str = "<INDENT>";
pub const DEDENT_TEXT: &str = "<DEDENT>";

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

const OPS3: &[&str] = &["**=", "//=", ">>=", "<<=", "..."];
const OPS2: &[&str] = &[
    "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "->", ":=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=",
];
const PUNCT1: &[u8] = b"()[]{},:;.";
const OPS1: &[u8] = b"+-*/%&|^~<>=@!";

/// Tokenize raw bytes, failing only if they are not valid UTF-8.
pub fn tokenize(source: &[u8]) -> Result<TokenStream, EncodingError> {
    tokenize_with(source, LexOptions::default())
}

pub fn tokenize_with(source: &[u8], opts: LexOptions) -> Result<TokenStream, EncodingError> {
    let text = std::str::from_utf8(source).map_err(|e| EncodingError {
        offset: e.valid_up_to(),
    })?;
    Ok(tokenize_str_with(text, opts))
}

pub fn tokenize_str(source: &str) -> TokenStream {
    tokenize_str_with(source, LexOptions::default())
}

pub fn tokenize_str_with(source: &str, opts: LexOptions) -> TokenStream {
    Lexer::new(source, opts).run()
}

/// Byte span of every line, newline bytes included. Line `n` (1-based) is
/// element `n - 1`. A final line without a terminator still counts.
pub fn line_spans(source: &str) -> Vec<Span> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\n' {
            out.push(Span::new(start, i + 1));
            start = i + 1;
        }
    }
    if start < bytes.len() {
        out.push(Span::new(start, bytes.len()));
    }
    out
}

/// Byte-checked variant of [`line_spans`].
pub fn line_spans_bytes(source: &[u8]) -> Result<Vec<Span>, EncodingError> {
    let text = std::str::from_utf8(source).map_err(|e| EncodingError {
        offset: e.valid_up_to(),
    })?;
    Ok(line_spans(text))
}

/// Maps byte offsets back to 1-based line numbers.
#[derive(Debug, Clone)]
pub struct LineIndex {
    lines: Vec<Span>,
}

impl LineIndex {
    pub fn new(source: &str) -> Self {
        LineIndex {
            lines: line_spans(source),
        }
    }

    pub fn from_spans(lines: Vec<Span>) -> Self {
        LineIndex { lines }
    }

    pub fn spans(&self) -> &[Span] {
        &self.lines
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// 1-based line containing `offset`; offsets at or past the end map to
    /// the last line.
    pub fn line_of(&self, offset: usize) -> usize {
        if self.lines.is_empty() {
            return 1;
        }
        let idx = self.lines.partition_point(|l| l.end <= offset);
        idx.min(self.lines.len() - 1) + 1
    }

    /// First and last line (inclusive) touched by `span`.
    pub fn line_range(&self, span: Span) -> (usize, usize) {
        let first = self.line_of(span.start);
        let last = if span.is_empty() {
            first
        } else {
            self.line_of(span.end - 1)
        };
        (first, last)
    }
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    opts: LexOptions,
    indents: Vec<usize>,
    depth: usize,
    at_line_start: bool,
    out: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, opts: LexOptions) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            opts,
            indents: vec![0],
            depth: 0,
            at_line_start: true,
            out: Vec::new(),
        }
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn push(&mut self, kind: TokenKind, start: usize, end: usize) {
        self.out.push(Token {
            text: self.src[start..end].to_string(),
            kind,
            span: Span::new(start, end),
        });
    }

    fn push_marker(&mut self, kind: TokenKind, at: usize) {
        let text = match kind {
            TokenKind::Indent => INDENT_TEXT,
            _ => DEDENT_TEXT,
        };
        self.out.push(Token {
            text: text.to_string(),
            kind,
            span: Span::new(at, at),
        });
    }

    fn run(mut self) -> TokenStream {
        while self.pos < self.bytes.len() {
            if self.at_line_start && self.depth == 0 && !self.line_start() {
                continue;
            }
            self.next_token();
        }
        let end = self.bytes.len();
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push_marker(TokenKind::Dedent, end);
        }
        TokenStream {
            tokens: self.out,
            source_len: end,
        }
    }

    /// Measures indentation at the start of a logical line. Returns false if
    /// the line was blank or comment-only and has been consumed.
    fn line_start(&mut self) -> bool {
        let mut col = 0usize;
        while let Some(b) = self.peek(0) {
            match b {
                b' ' => col += 1,
                b'\t' => col = (col / 8 + 1) * 8,
                b'\x0c' => col = 0,
                _ => break,
            }
            self.pos += 1;
        }
        match self.peek(0) {
            None => return false,
            Some(b'\n') | Some(b'\r') => {
                self.skip_newline();
                return false;
            }
            Some(b'#') => {
                self.comment();
                self.skip_newline();
                return false;
            }
            Some(b'\\') if matches!(self.peek(1), Some(b'\n') | Some(b'\r')) => {
                // Continuation at the start of a line: the logical line goes on.
                self.pos += 1;
                self.skip_newline();
                return false;
            }
            _ => {}
        }
        self.at_line_start = false;
        let top = *self.indents.last().unwrap_or(&0);
        if col > top {
            self.indents.push(col);
            self.push_marker(TokenKind::Indent, self.pos);
        } else if col < top {
            while self.indents.len() > 1 && *self.indents.last().unwrap() > col {
                self.indents.pop();
                self.push_marker(TokenKind::Dedent, self.pos);
            }
            // Dedent to a column that matches no enclosing level.
            if *self.indents.last().unwrap() < col {
                self.indents.push(col);
                self.push_marker(TokenKind::Indent, self.pos);
            }
        }
        true
    }

    fn skip_newline(&mut self) {
        match self.peek(0) {
            Some(b'\r') if self.peek(1) == Some(b'\n') => self.pos += 2,
            Some(b'\r') | Some(b'\n') => self.pos += 1,
            _ => {}
        }
    }

    fn comment(&mut self) {
        let start = self.pos;
        while let Some(b) = self.peek(0) {
            if b == b'\n' || b == b'\r' {
                break;
            }
            self.pos += 1;
        }
        if self.opts.keep_comments {
            self.push(TokenKind::Comment, start, self.pos);
        }
    }

    fn next_token(&mut self) {
        let start = self.pos;
        let b = self.bytes[self.pos];
        match b {
            b' ' | b'\t' | b'\x0c' => self.pos += 1,
            b'\n' | b'\r' => {
                self.skip_newline();
                if self.depth == 0 {
                    self.push(TokenKind::Newline, start, self.pos);
                    self.at_line_start = true;
                }
            }
            b'#' => self.comment(),
            b'\\' if matches!(self.peek(1), Some(b'\n') | Some(b'\r')) => {
                self.pos += 1;
                self.skip_newline();
            }
            b'"' | b'\'' => self.string(start),
            b'0'..=b'9' => self.number(start),
            b'.' if matches!(self.peek(1), Some(b'0'..=b'9')) => self.number(start),
            _ if is_ident_start(self.char_at(self.pos)) => self.word(start),
            _ => self.operator(start),
        }
    }

    fn char_at(&self, pos: usize) -> char {
        self.src[pos..].chars().next().unwrap_or('\0')
    }

    fn word(&mut self, start: usize) {
        while self.pos < self.bytes.len() {
            let c = self.char_at(self.pos);
            if !is_ident_continue(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        let text = &self.src[start..self.pos];
        if matches!(self.peek(0), Some(b'"') | Some(b'\'')) && is_string_prefix(text) {
            self.string(start);
            return;
        }
        let kind = if KEYWORDS.contains(&text) {
            TokenKind::Keyword
        } else {
            TokenKind::Identifier
        };
        self.push(kind, start, self.pos);
    }

    /// `self.pos` sits on the opening quote; `start` may precede it by a prefix.
    fn string(&mut self, start: usize) {
        let quote = self.bytes[self.pos];
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        if triple {
            self.pos += 3;
            loop {
                match self.peek(0) {
                    None => break,
                    Some(b'\\') => self.pos = (self.pos + 2).min(self.bytes.len()),
                    Some(q) if q == quote && self.peek(1) == Some(quote) && self.peek(2) == Some(quote) => {
                        self.pos += 3;
                        break;
                    }
                    Some(_) => self.pos += 1,
                }
            }
        } else {
            self.pos += 1;
            loop {
                match self.peek(0) {
                    None | Some(b'\n') | Some(b'\r') => break,
                    Some(b'\\') => {
                        self.pos += 1;
                        if self.peek(0) == Some(b'\r') && self.peek(1) == Some(b'\n') {
                            self.pos += 2;
                        } else if self.pos < self.bytes.len() {
                            self.pos += 1;
                        }
                    }
                    Some(q) if q == quote => {
                        self.pos += 1;
                        break;
                    }
                    Some(_) => self.pos += 1,
                }
            }
        }
        // Escapes may have stepped into a multi-byte character.
        while !self.src.is_char_boundary(self.pos) {
            self.pos += 1;
        }
        self.push(TokenKind::StringLiteral, start, self.pos);
    }

    fn number(&mut self, start: usize) {
        let radix_prefix =
            self.peek(0) == Some(b'0') && matches!(self.peek(1), Some(b'x' | b'X' | b'o' | b'O' | b'b' | b'B'));
        if radix_prefix {
            self.pos += 2;
            while matches!(self.peek(0), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                self.pos += 1;
            }
        } else {
            self.digits();
            if self.peek(0) == Some(b'.') {
                self.pos += 1;
                self.digits();
            }
            if matches!(self.peek(0), Some(b'e' | b'E')) {
                let sign = usize::from(matches!(self.peek(1), Some(b'+' | b'-')));
                if matches!(self.peek(1 + sign), Some(b'0'..=b'9')) {
                    self.pos += 1 + sign;
                    self.digits();
                }
            }
            if matches!(self.peek(0), Some(b'j' | b'J')) {
                self.pos += 1;
            }
        }
        self.push(TokenKind::NumberLiteral, start, self.pos);
    }

    fn digits(&mut self) {
        while matches!(self.peek(0), Some(c) if c.is_ascii_digit() || c == b'_') {
            self.pos += 1;
        }
    }

    fn operator(&mut self, start: usize) {
        let rest = &self.src[start..];
        if let Some(op) = OPS3.iter().find(|op| rest.starts_with(**op)) {
            self.pos += 3;
            let kind = if *op == "..." {
                TokenKind::Punctuation
            } else {
                TokenKind::Operator
            };
            self.push(kind, start, self.pos);
            return;
        }
        if OPS2.iter().any(|op| rest.starts_with(*op)) {
            self.pos += 2;
            self.push(TokenKind::Operator, start, self.pos);
            return;
        }
        let b = self.bytes[start];
        if PUNCT1.contains(&b) {
            match b {
                b'(' | b'[' | b'{' => self.depth += 1,
                b')' | b']' | b'}' => self.depth = self.depth.saturating_sub(1),
                _ => {}
            }
            self.pos += 1;
            self.push(TokenKind::Punctuation, start, self.pos);
            return;
        }
        if OPS1.contains(&b) {
            self.pos += 1;
            self.push(TokenKind::Operator, start, self.pos);
            return;
        }
        // Unknown: one whole character so the text stays valid UTF-8.
        self.pos += self.char_at(start).len_utf8();
        self.push(TokenKind::Operator, start, self.pos);
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_ascii_alphabetic() || (!c.is_ascii() && c.is_alphabetic())
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_ascii_alphanumeric() || (!c.is_ascii() && c.is_alphanumeric())
}

fn is_string_prefix(word: &str) -> bool {
    if word.is_empty() || word.len() > 2 {
        return false;
    }
    let lower = word.to_ascii_lowercase();
    matches!(
        lower.as_str(),
        "r" | "u" | "b" | "f" | "t" | "br" | "rb" | "fr" | "rf" | "tr" | "rt"
    )
}
