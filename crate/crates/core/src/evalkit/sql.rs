//! Tokenizer and recursive-descent reader for the gold-query subset:
//! `SELECT .. FROM t [AS a] (, t | JOIN t [ON ..])* [WHERE ..] [GROUP BY ..]
//! [HAVING ..] [ORDER BY ..] [LIMIT ..]`. Equality and `IN` predicates inside
//! the top-level conjunction become value constraints; anything else in the
//! WHERE clause is skipped.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported SQL at {start}..{end}: {reason}")]
pub struct UnsupportedSql {
    pub reason: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnConstraint {
    /// Base table the column belongs to, when it can be told from the query.
    pub table: Option<String>,
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldQuerySpec {
    pub question: String,
    pub gold_sql: String,
    pub base_tables: BTreeSet<String>,
    /// FROM and JOIN items in query order, duplicates kept.
    pub from_tables: Vec<TableRef>,
    pub value_constraints: Vec<ColumnConstraint>,
}

impl GoldQuerySpec {
    /// `FROM a AS x, b` for the harvested table list.
    pub fn render_from(&self) -> String {
        let items: Vec<String> = self
            .from_tables
            .iter()
            .map(|t| match &t.alias {
                Some(a) => format!("{} AS {a}", t.name),
                None => t.name.clone(),
            })
            .collect();
        format!("FROM {}", items.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    /// Double-quoted, backticked or bracketed name. Double-quoted text in a
    /// literal position is read as a string.
    Quoted(String),
    Str(String),
    Num(String),
    Sym(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

fn unsupported(reason: impl Into<String>, start: usize, end: usize) -> UnsupportedSql {
    UnsupportedSql {
        reason: reason.into(),
        start,
        end,
    }
}

fn tokenize(sql: &str) -> Result<Vec<Token>, UnsupportedSql> {
    let b = sql.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < b.len() {
        let c = b[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && b.get(i + 1) == Some(&b'-') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && b.get(i + 1) == Some(&b'*') {
            let rest = &sql[i + 2..];
            let close = rest
                .find("*/")
                .ok_or_else(|| unsupported("unterminated comment", start, b.len()))?;
            i += close + 4;
            continue;
        }
        let tok = match c {
            '\'' | '"' | '`' | '[' => {
                let close = match c {
                    '[' => b']',
                    other => other as u8,
                };
                let mut s = String::new();
                i += 1;
                loop {
                    let Some(&ch) = b.get(i) else {
                        return Err(unsupported("unterminated quoted text", start, b.len()));
                    };
                    if ch == close {
                        if close != b']' && b.get(i + 1) == Some(&close) {
                            s.push(close as char);
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    let ch_len = sql[i..].chars().next().map_or(1, char::len_utf8);
                    s.push_str(&sql[i..i + ch_len]);
                    i += ch_len;
                }
                if c == '\'' {
                    Tok::Str(s)
                } else {
                    Tok::Quoted(s)
                }
            }
            c if c.is_ascii_digit()
                || (c == '.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) =>
            {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'.') {
                    i += 1;
                }
                Tok::Num(sql[start..i].to_string())
            }
            c if c.is_ascii_alphabetic() || c == '_' || !c.is_ascii() => {
                while i < b.len()
                    && (b[i].is_ascii_alphanumeric()
                        || b[i] == b'_'
                        || b[i] == b'$'
                        || b[i] >= 0x80)
                {
                    i += 1;
                }
                Tok::Ident(sql[start..i].to_string())
            }
            _ => {
                let two = sql.get(i..i + 2).unwrap_or("");
                if ["<=", ">=", "<>", "!=", "||", "=="].contains(&two) {
                    i += 2;
                    Tok::Sym(two.to_string())
                } else {
                    i += 1;
                    Tok::Sym(c.to_string())
                }
            }
        };
        out.push(Token { tok, start, end: i });
    }
    Ok(out)
}

const CLAUSE_END: &[&str] = &[
    "WHERE", "GROUP", "HAVING", "ORDER", "LIMIT", "OFFSET", "WINDOW",
];
const JOIN_WORDS: &[&str] = &[
    "JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "OUTER",
];
const SET_OPS: &[&str] = &["UNION", "INTERSECT", "EXCEPT", "MINUS"];

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&'a Token> {
        self.toks.get(self.pos + off)
    }

    fn is_kw(t: Option<&Token>, kw: &str) -> bool {
        matches!(t, Some(Token { tok: Tok::Ident(s), .. }) if s.eq_ignore_ascii_case(kw))
    }

    fn is_any_kw(t: Option<&Token>, kws: &[&str]) -> bool {
        kws.iter().any(|k| Self::is_kw(t, k))
    }

    fn is_sym(t: Option<&Token>, s: &str) -> bool {
        matches!(t, Some(Token { tok: Tok::Sym(x), .. }) if x == s)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if Self::is_kw(self.peek(), kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err_here(&self, reason: impl Into<String>) -> UnsupportedSql {
        match self.peek() {
            Some(t) => unsupported(reason, t.start, t.end),
            None => unsupported(reason, self.len, self.len),
        }
    }

    fn name(&mut self) -> Option<String> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Ident(s)) | Some(Tok::Quoted(s)) => {
                self.pos += 1;
                Some(s.clone())
            }
            _ => None,
        }
    }

    /// Skips tokens until a depth-0 token satisfying `stop`, tracking parens.
    fn skip_until(&mut self, stop: impl Fn(&Parser<'a>) -> bool) -> Result<(), UnsupportedSql> {
        let mut depth = 0i32;
        while let Some(t) = self.peek() {
            if depth == 0 && stop(self) {
                return Ok(());
            }
            if Self::is_sym(Some(t), "(") {
                depth += 1;
            } else if Self::is_sym(Some(t), ")") {
                depth -= 1;
                if depth < 0 {
                    return Err(self.err_here("unbalanced parenthesis"));
                }
            }
            self.pos += 1;
        }
        if depth != 0 {
            return Err(unsupported("unbalanced parenthesis", self.len, self.len));
        }
        Ok(())
    }

    fn table_ref(&mut self) -> Result<TableRef, UnsupportedSql> {
        if Self::is_sym(self.peek(), "(") {
            return Err(self.err_here("derived table in FROM"));
        }
        let mut name = self
            .name()
            .ok_or_else(|| self.err_here("expected a table name"))?;
        while Self::is_sym(self.peek(), ".") {
            self.pos += 1;
            name = self
                .name()
                .ok_or_else(|| self.err_here("expected a table name after `.`"))?;
        }
        let alias = if self.eat_kw("AS") {
            Some(
                self.name()
                    .ok_or_else(|| self.err_here("expected an alias"))?,
            )
        } else {
            match self.peek() {
                Some(
                    t @ Token {
                        tok: Tok::Ident(_) | Tok::Quoted(_),
                        ..
                    },
                ) if !Self::is_any_kw(Some(t), CLAUSE_END)
                    && !Self::is_any_kw(Some(t), JOIN_WORDS)
                    && !Self::is_any_kw(Some(t), SET_OPS)
                    && !Self::is_any_kw(Some(t), &["ON", "USING"]) =>
                {
                    self.name()
                }
                _ => None,
            }
        };
        Ok(TableRef { name, alias })
    }

    fn at_join(&self) -> bool {
        Self::is_any_kw(self.peek(), JOIN_WORDS)
    }

    fn eat_join(&mut self) -> Result<(), UnsupportedSql> {
        while Self::is_any_kw(
            self.peek(),
            &[
                "NATURAL", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "OUTER",
            ],
        ) {
            self.pos += 1;
        }
        if !self.eat_kw("JOIN") {
            return Err(self.err_here("expected JOIN"));
        }
        Ok(())
    }

    fn table_list(&mut self) -> Result<Vec<TableRef>, UnsupportedSql> {
        let mut tables = vec![self.table_ref()?];
        loop {
            if Self::is_sym(self.peek(), ",") {
                self.pos += 1;
                tables.push(self.table_ref()?);
            } else if self.at_join() {
                self.eat_join()?;
                tables.push(self.table_ref()?);
                if self.eat_kw("ON") || self.eat_kw("USING") {
                    self.skip_until(|p| {
                        p.at_join()
                            || Self::is_sym(p.peek(), ",")
                            || Self::is_sym(p.peek(), ";")
                            || Self::is_any_kw(p.peek(), CLAUSE_END)
                            || Self::is_any_kw(p.peek(), SET_OPS)
                    })?;
                }
            } else {
                return Ok(tables);
            }
        }
    }
}

/// Splits `toks` at depth-0 occurrences of keyword `kw`. An `AND` that closes
/// a `BETWEEN` is not a split point.
fn split_top<'a>(toks: &'a [Token], kw: &str) -> Vec<&'a [Token]> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let mut pending_between = false;
    for (i, t) in toks.iter().enumerate() {
        match &t.tok {
            Tok::Sym(s) if s == "(" => depth += 1,
            Tok::Sym(s) if s == ")" => depth -= 1,
            Tok::Ident(s) if depth == 0 && s.eq_ignore_ascii_case("BETWEEN") => {
                pending_between = true
            }
            Tok::Ident(s) if depth == 0 && s.eq_ignore_ascii_case(kw) => {
                if kw.eq_ignore_ascii_case("AND") && pending_between {
                    pending_between = false;
                } else {
                    parts.push(&toks[start..i]);
                    start = i + 1;
                }
            }
            _ => {}
        }
    }
    parts.push(&toks[start..]);
    parts
}

fn strip_parens(mut toks: &[Token]) -> &[Token] {
    loop {
        let wrapped = toks.len() >= 2
            && Parser::is_sym(toks.first(), "(")
            && Parser::is_sym(toks.last(), ")")
            && {
                let mut depth = 0;
                toks.iter().enumerate().all(|(i, t)| {
                    if Parser::is_sym(Some(t), "(") {
                        depth += 1;
                    } else if Parser::is_sym(Some(t), ")") {
                        depth -= 1;
                    }
                    depth > 0 || i == toks.len() - 1
                })
            };
        if !wrapped {
            return toks;
        }
        toks = &toks[1..toks.len() - 1];
    }
}

/// `name` or `qualifier.name`.
fn column_ref(toks: &[Token]) -> Option<(Option<String>, String)> {
    let name = |t: &Token| match &t.tok {
        Tok::Ident(s) | Tok::Quoted(s) => Some(s.clone()),
        _ => None,
    };
    match toks {
        [c] => Some((None, name(c)?)),
        [q, dot, c] if Parser::is_sym(Some(dot), ".") => Some((Some(name(q)?), name(c)?)),
        _ => None,
    }
}

fn literal(toks: &[Token]) -> Option<String> {
    match toks {
        [Token {
            tok: Tok::Str(s) | Tok::Quoted(s),
            ..
        }] => Some(s.clone()),
        [Token {
            tok: Tok::Num(n), ..
        }] => Some(n.clone()),
        [Token {
            tok: Tok::Sym(m), ..
        }, Token {
            tok: Tok::Num(n), ..
        }] if m == "-" => Some(format!("-{n}")),
        _ => None,
    }
}

type RawConstraint = (Option<String>, String, String);

/// Constraints stated by a predicate that must hold for every result row.
fn predicate_constraints(toks: &[Token]) -> Vec<RawConstraint> {
    let toks = strip_parens(toks);
    let conj = split_top(toks, "AND");
    if conj.len() > 1 {
        return conj.into_iter().flat_map(predicate_constraints).collect();
    }
    let disj = split_top(toks, "OR");
    if disj.len() > 1 {
        // `c = x OR c = y` on one column reads as `c IN (x, y)`.
        let each: Vec<Vec<RawConstraint>> = disj.into_iter().map(predicate_constraints).collect();
        let first = each
            .first()
            .and_then(|v| v.first())
            .map(|(q, c, _)| (q.clone(), c.to_lowercase()));
        let same = each.iter().all(|v| {
            v.len() == 1
                && first
                    .as_ref()
                    .is_some_and(|(q, c)| v[0].0 == *q && v[0].1.to_lowercase() == *c)
        });
        return if same {
            each.into_iter().flatten().collect()
        } else {
            Vec::new()
        };
    }
    if let Some(eq) = toks
        .iter()
        .position(|t| Parser::is_sym(Some(t), "=") || Parser::is_sym(Some(t), "=="))
    {
        let (lhs, rhs) = (&toks[..eq], &toks[eq + 1..]);
        if let (Some((q, c)), Some(v)) = (column_ref(lhs), literal(rhs)) {
            return vec![(q, c, v)];
        }
        if let (Some(v), Some((q, c))) = (literal(lhs), column_ref(rhs)) {
            return vec![(q, c, v)];
        }
        return Vec::new();
    }
    if let Some(pos) = toks.iter().position(|t| Parser::is_kw(Some(t), "IN")) {
        if pos > 0 && Parser::is_kw(toks.get(pos - 1), "NOT") {
            return Vec::new();
        }
        let (lhs, rest) = (&toks[..pos], &toks[pos + 1..]);
        let Some((q, c)) = column_ref(lhs) else {
            return Vec::new();
        };
        if !(Parser::is_sym(rest.first(), "(") && Parser::is_sym(rest.last(), ")")) {
            return Vec::new();
        }
        let inner = &rest[1..rest.len() - 1];
        let mut out = Vec::new();
        for item in inner.split(|t| Parser::is_sym(Some(t), ",")) {
            match literal(item) {
                Some(v) => out.push((q.clone(), c.clone(), v)),
                None => return Vec::new(),
            }
        }
        return out;
    }
    Vec::new()
}

/// Parses a gold query of the supported subset.
pub fn parse_gold_sql(question: &str, sql: &str) -> Result<GoldQuerySpec, UnsupportedSql> {
    let toks = tokenize(sql)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        len: sql.len(),
    };
    if Parser::is_kw(p.peek(), "WITH") {
        return Err(p.err_here("common table expression"));
    }
    for (i, t) in toks.iter().enumerate() {
        if Parser::is_kw(Some(t), "SELECT") && i > 0 && Parser::is_sym(toks.get(i - 1), "(") {
            return Err(unsupported("subquery", t.start, t.end));
        }
        if Parser::is_any_kw(Some(t), SET_OPS) {
            return Err(unsupported("set operation", t.start, t.end));
        }
    }
    if !p.eat_kw("SELECT") {
        return Err(p.err_here("query must start with SELECT"));
    }
    p.skip_until(|p| Parser::is_kw(p.peek(), "FROM") || Parser::is_sym(p.peek(), ";"))?;
    let from_tables = if p.eat_kw("FROM") {
        p.table_list()?
    } else {
        Vec::new()
    };

    let mut where_toks: &[Token] = &[];
    if p.eat_kw("WHERE") {
        let start = p.pos;
        p.skip_until(|p| {
            Parser::is_sym(p.peek(), ";")
                || (Parser::is_any_kw(p.peek(), &["GROUP", "ORDER"])
                    && Parser::is_kw(p.peek_at(1), "BY"))
                || Parser::is_any_kw(p.peek(), &["HAVING", "LIMIT", "OFFSET", "WINDOW"])
        })?;
        where_toks = &toks[start..p.pos];
    }
    p.skip_until(|p| Parser::is_sym(p.peek(), ";"))?;
    while Parser::is_sym(p.peek(), ";") {
        p.pos += 1;
    }
    if p.peek().is_some() {
        return Err(p.err_here("more than one statement"));
    }

    let resolve = |q: &Option<String>| -> Option<String> {
        match q {
            Some(q) => from_tables
                .iter()
                .find(|t| {
                    t.alias
                        .as_deref()
                        .is_some_and(|a| a.eq_ignore_ascii_case(q))
                })
                .or_else(|| from_tables.iter().find(|t| t.name.eq_ignore_ascii_case(q)))
                .map(|t| t.name.clone())
                .or_else(|| Some(q.clone())),
            None => {
                let names: BTreeSet<&str> = from_tables.iter().map(|t| t.name.as_str()).collect();
                (names.len() == 1).then(|| names.into_iter().next().unwrap_or_default().to_string())
            }
        }
    };
    let mut value_constraints = Vec::new();
    if !where_toks.is_empty() {
        for (q, column, value) in predicate_constraints(where_toks) {
            let c = ColumnConstraint {
                table: resolve(&q),
                column,
                value,
            };
            if !value_constraints.contains(&c) {
                value_constraints.push(c);
            }
        }
    }
    Ok(GoldQuerySpec {
        question: question.to_string(),
        gold_sql: sql.to_string(),
        base_tables: from_tables.iter().map(|t| t.name.clone()).collect(),
        from_tables,
        value_constraints,
    })
}
