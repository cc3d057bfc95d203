//! Extraction of action mappings from free-form model output.
//!
//! Models asked for a bare dictionary regularly answer with something else:
//! fenced code, reasoning around (or inside) the dictionary, too few or too
//! many keys, invented action names, or a script that would build the
//! dictionary instead of the dictionary itself. The parser locates the last
//! dictionary literal in the text and validates it against the taxonomy.
//!
//! Under [`Policy::Strict`] any key or value defect rejects the response.
//! Under [`Policy::Lenient`] unknown keys are dropped, missing keys become 0
//! and the exact tokens `"0"`, `"1"`, `true`, `false` are coerced; anything
//! else is still rejected. Lenient never sets a bit that the text did not
//! explicitly set to 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{ActionTaxonomy, ActionVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Strict,
    Lenient,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Strict => "strict",
            Policy::Lenient => "lenient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticCode {
    CodeFence,
    NonMappingPayload,
    UnknownAction,
    MissingAction,
    NonBinaryValue,
    WrongLength,
    ProseInterleaved,
    ScriptInsteadOfLiteral,
}

impl DiagnosticCode {
    /// Codes describing a defect that Lenient may repair and Strict rejects.
    pub fn is_repair(self) -> bool {
        matches!(
            self,
            DiagnosticCode::UnknownAction
                | DiagnosticCode::MissingAction
                | DiagnosticCode::NonBinaryValue
                | DiagnosticCode::WrongLength
        )
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
}

impl Diagnostic {
    fn new(code: DiagnosticCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseStatus {
    Parsed,
    Repaired,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    pub vector: Option<ActionVector>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutcome {
    fn rejected(diagnostics: Vec<Diagnostic>) -> Self {
        Self {
            status: ParseStatus::Rejected,
            vector: None,
            diagnostics,
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.vector.is_some()
    }

    pub fn count(&self, code: DiagnosticCode) -> usize {
        self.diagnostics.iter().filter(|d| d.code == code).count()
    }

    pub fn has(&self, code: DiagnosticCode) -> bool {
        self.count(code) > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Float(String),
    Str(String),
    Word(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Float(s) | Value::Word(s) => f.write_str(s),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug)]
struct Literal {
    start: usize,
    end: usize,
    entries: Vec<(String, Value)>,
    has_comments: bool,
}

fn closing_quote(c: char) -> Option<char> {
    match c {
        '"' => Some('"'),
        '\'' => Some('\''),
        '\u{201C}' | '\u{201D}' => Some('\u{201D}'),
        '\u{2018}' | '\u{2019}' => Some('\u{2019}'),
        _ => None,
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    has_comments: bool,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    /// Skips whitespace, `#`/`//` comments and `...` ellipses.
    fn skip_trivia(&mut self) {
        loop {
            let rest = self.rest();
            if let Some(c) = self.peek().filter(|c| c.is_whitespace()) {
                self.pos += c.len_utf8();
            } else if rest.starts_with('#') || rest.starts_with("//") {
                self.has_comments = true;
                self.pos += rest.find('\n').unwrap_or(rest.len());
            } else if rest.starts_with("...") {
                self.pos += 3;
            } else if rest.starts_with('\u{2026}') {
                self.pos += '\u{2026}'.len_utf8();
            } else {
                return;
            }
        }
    }

    fn string(&mut self) -> Option<String> {
        let close = closing_quote(self.bump()?)?;
        let mut out = String::new();
        loop {
            match self.bump()? {
                '\n' => return None,
                '\\' => out.push(self.bump()?),
                c if c == close => return Some(out),
                // a straight double quote may close a curly-opened key
                '"' if close == '\u{201D}' => return Some(out),
                c => out.push(c),
            }
        }
    }

    fn value(&mut self) -> Option<Value> {
        let c = self.peek()?;
        if closing_quote(c).is_some() {
            return self.string().map(Value::Str);
        }
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '.' | '-' | '+' | '_') {
                self.bump();
            } else {
                break;
            }
        }
        let tok = &self.src[start..self.pos];
        if tok.is_empty() {
            return None;
        }
        if let Ok(n) = tok.parse::<i64>() {
            Some(Value::Int(n))
        } else if tok.parse::<f64>().is_ok() {
            Some(Value::Float(tok.to_string()))
        } else if tok.chars().all(|c| c.is_alphanumeric() || c == '_') {
            Some(Value::Word(tok.to_string()))
        } else {
            None
        }
    }
}

/// Parses a flat `{ "key": value, ... }` literal starting at `start`.
fn literal_at(src: &str, start: usize) -> Option<Literal> {
    let mut cur = Cursor {
        src,
        pos: start,
        has_comments: false,
    };
    if cur.bump()? != '{' {
        return None;
    }
    let mut entries = Vec::new();
    loop {
        cur.skip_trivia();
        match cur.peek()? {
            '}' => {
                cur.bump();
                break;
            }
            ',' if !entries.is_empty() => {
                cur.bump();
                continue;
            }
            _ => {}
        }
        let key = cur.string()?;
        cur.skip_trivia();
        if cur.bump()? != ':' {
            return None;
        }
        cur.skip_trivia();
        let value = cur.value()?;
        entries.push((key, value));
        cur.skip_trivia();
        match cur.peek()? {
            ',' => {
                cur.bump();
            }
            '}' => {}
            _ => return None,
        }
    }
    if entries.is_empty() {
        return None;
    }
    Some(Literal {
        start,
        end: cur.pos,
        entries,
        has_comments: cur.has_comments,
    })
}

fn last_literal(src: &str) -> Option<Literal> {
    src.char_indices()
        .filter(|(_, c)| *c == '{')
        .filter_map(|(i, _)| literal_at(src, i))
        .next_back()
}

fn normalize_key(key: &str) -> String {
    key.trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '\u{201C}' | '\u{201D}' | '\u{2018}' | '\u{2019}'))
        .trim()
        .to_string()
}

fn looks_like_script(text: &str) -> bool {
    text.lines().map(str::trim).any(|line| {
        let block_header = ["def ", "for ", "if ", "with ", "while "]
            .iter()
            .any(|k| line.starts_with(k))
            && line.ends_with(':');
        let import = line.starts_with("import ") || (line.starts_with("from ") && line.contains(" import "));
        let call = ["print(", "console.log(", ".append(", "json.dumps("]
            .iter()
            .any(|k| line.contains(k));
        let comprehension = line.contains(" for ") && line.contains(" in ") && (line.contains('{') || line.contains('['));
        block_header || import || call || comprehension
    })
}

/// `name["key"] = value` style mutation of a mapping.
fn has_subscript_assignment(text: &str) -> bool {
    text.lines().any(|line| {
        let line = line.trim();
        let Some(open) = line.find("[\"").or_else(|| line.find("['")) else {
            return false;
        };
        let head = &line[..open];
        if head.is_empty() || !head.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
            return false;
        }
        line[open..]
            .find(']')
            .map(|close| line[open + close + 1..].trim_start())
            .is_some_and(|tail| tail.starts_with('=') && !tail.starts_with("=="))
    })
}

/// Bare `[0, 1, ...]` arrays of at least two binary digits.
fn bit_arrays(text: &str) -> Vec<usize> {
    let mut lens = Vec::new();
    for (i, _) in text.match_indices('[') {
        let Some(close) = text[i..].find(']') else {
            continue;
        };
        let inner = &text[i + 1..i + close];
        let items: Vec<&str> = inner.split(',').map(str::trim).collect();
        if items.len() >= 2 && items.iter().all(|t| *t == "0" || *t == "1") {
            lens.push(items.len());
        }
    }
    lens
}

fn is_fence_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("```") || t.starts_with("~~~")
}

/// True when the text outside the literal carries words other than fence
/// markers, a variable binding, or a trailing `print(...)`.
fn has_prose(raw: &str, lit: &Literal) -> bool {
    let before = &raw[..lit.start];
    let after = &raw[lit.end..];
    let before = before.trim_end();
    let before = before.strip_suffix('=').map_or(before, |b| {
        let b = b.trim_end();
        b.trim_end_matches(|c: char| c.is_alphanumeric() || c == '_')
    });
    let outside = format!("{before}\n{after}");
    outside
        .lines()
        .filter(|l| !is_fence_line(l))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .filter(|l| !(l.starts_with("print(") && l.ends_with(')')))
        .any(|l| l.chars().any(char::is_alphanumeric))
}

enum Bit {
    Exact(u8),
    Coerced(u8),
    Invalid,
}

fn classify(v: &Value) -> Bit {
    match v {
        Value::Int(0) => Bit::Exact(0),
        Value::Int(1) => Bit::Exact(1),
        Value::Str(s) if s == "0" => Bit::Coerced(0),
        Value::Str(s) if s == "1" => Bit::Coerced(1),
        Value::Word(w) if w == "true" || w == "True" => Bit::Coerced(1),
        Value::Word(w) if w == "false" || w == "False" => Bit::Coerced(0),
        _ => Bit::Invalid,
    }
}

/// Extracts and validates an action mapping from raw model text.
pub fn parse_action_response(raw: &str, taxonomy: &ActionTaxonomy, policy: Policy) -> ParseOutcome {
    use DiagnosticCode::*;

    let mut diags = Vec::new();
    if raw.lines().any(is_fence_line) {
        diags.push(Diagnostic::new(CodeFence, "response wrapped in fenced markup"));
    }

    let Some(lit) = last_literal(raw) else {
        if looks_like_script(raw) || has_subscript_assignment(raw) {
            diags.push(Diagnostic::new(
                ScriptInsteadOfLiteral,
                "response contains code that builds the mapping, not the mapping itself",
            ));
        } else {
            diags.push(Diagnostic::new(NonMappingPayload, "no mapping literal found"));
            for len in bit_arrays(raw) {
                if len != taxonomy.len() {
                    diags.push(Diagnostic::new(
                        WrongLength,
                        format!("array of {len} values, expected {}", taxonomy.len()),
                    ));
                }
            }
        }
        return ParseOutcome::rejected(diags);
    };

    let outside = format!("{}\n{}", &raw[..lit.start], &raw[lit.end..]);
    if has_subscript_assignment(&outside) {
        diags.push(Diagnostic::new(
            ScriptInsteadOfLiteral,
            "mapping literal is modified by code after its definition",
        ));
        return ParseOutcome::rejected(diags);
    }
    if lit.has_comments || has_prose(raw, &lit) {
        diags.push(Diagnostic::new(ProseInterleaved, "reasoning mixed with the mapping"));
    }

    let n = taxonomy.len();
    let mut bits: Vec<Option<u8>> = vec![None; n];
    let mut fatal = false;
    for (key, value) in &lit.entries {
        let key = normalize_key(key);
        let Some(i) = taxonomy.index_of(&key) else {
            diags.push(Diagnostic::new(UnknownAction, format!("unknown action {key:?}")));
            continue;
        };
        match classify(value) {
            Bit::Exact(b) => bits[i] = Some(b),
            Bit::Coerced(b) => {
                diags.push(Diagnostic::new(
                    NonBinaryValue,
                    format!("{key:?}: {value} read as {b}"),
                ));
                bits[i] = Some(b);
            }
            Bit::Invalid => {
                diags.push(Diagnostic::new(
                    NonBinaryValue,
                    format!("{key:?}: {value} is not a binary value"),
                ));
                fatal = true;
            }
        }
    }
    for (i, b) in bits.iter().enumerate() {
        if b.is_none() && !fatal {
            diags.push(Diagnostic::new(
                MissingAction,
                format!("missing action {:?}", taxonomy.actions()[i]),
            ));
        }
    }
    if lit.entries.len() != n {
        diags.push(Diagnostic::new(
            WrongLength,
            format!("mapping has {} entries, expected {n}", lit.entries.len()),
        ));
    }

    let needs_repair = diags.iter().any(|d| d.code.is_repair());
    if fatal || (needs_repair && policy == Policy::Strict) {
        return ParseOutcome::rejected(diags);
    }
    let bits: Vec<u8> = bits.into_iter().map(|b| b.unwrap_or(0)).collect();
    let vector = taxonomy
        .vector_from_bits(bits)
        .expect("bits are binary and sized to the taxonomy");
    ParseOutcome {
        status: if needs_repair {
            ParseStatus::Repaired
        } else {
            ParseStatus::Parsed
        },
        vector: Some(vector),
        diagnostics: diags,
    }
}

fn opening_quote_len(s: &str) -> usize {
    if s.starts_with("``") {
        2
    } else if s.starts_with('"') || s.starts_with('\u{201C}') {
        s.chars().next().map_or(0, char::len_utf8)
    } else {
        0
    }
}

fn strip_quotes(item: &str) -> String {
    let mut s = item.trim();
    loop {
        let before = s;
        for open in ["``", "\"", "\u{201C}", "\u{201D}"] {
            s = s.strip_prefix(open).unwrap_or(s);
        }
        for close in ["''", "\"", "\u{201D}", "\u{201C}"] {
            s = s.strip_suffix(close).unwrap_or(s);
        }
        s = s.trim();
        if s == before {
            break;
        }
    }
    s.strip_suffix(',').unwrap_or(s).trim().to_string()
}

/// Splits a characteristics response into its quoted fragments.
///
/// Splits on commas outside quotes (straight, curly, or ``LaTeX''), and also
/// between adjacent quoted spans; trims whitespace and quote marks and drops
/// empty items.
pub fn parse_characteristics(raw: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut close: Option<&str> = None;
    let mut i = 0;
    while i < raw.len() {
        let rest = &raw[i..];
        if let Some(c) = close {
            if let Some(after) = rest.strip_prefix(c) {
                current.push_str(c);
                i += c.len();
                close = None;
                // adjacent quoted spans without a comma between them
                let next = after.trim_start();
                if opening_quote_len(next) > 0 {
                    items.push(std::mem::take(&mut current));
                }
                continue;
            }
        } else {
            let open = opening_quote_len(rest);
            if open > 0 {
                close = Some(if rest.starts_with("``") {
                    "''"
                } else if rest.starts_with('"') {
                    "\""
                } else {
                    "\u{201D}"
                });
                current.push_str(&rest[..open]);
                i += open;
                continue;
            }
            if rest.starts_with(',') {
                items.push(std::mem::take(&mut current));
                i += 1;
                continue;
            }
        }
        let c = rest.chars().next().expect("in bounds");
        current.push(c);
        i += c.len_utf8();
    }
    items.push(current);
    items
        .iter()
        .map(|s| strip_quotes(s))
        .filter(|s| !s.is_empty())
        .collect()
}
